#pragma once
// Labeled sentence datasets and balanced sampling. Sentences arrive as JSONL
// (one record per line: id, text, label, source, domain); dataset-side label
// spellings are resolved against the scheme's alias table at load time.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gprobe/concepts.hpp"

namespace gprobe {

struct CorpusError : std::runtime_error {
    explicit CorpusError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Sentence {
    std::string id;
    std::string text;
    std::string gold_label;  // scheme label, aliases already resolved
    std::string source;
    std::string domain;
};

struct AnnotationItem {
    std::string id;
    std::string text;
    // Annotator name -> up to two labels; an empty list means no concept.
    std::map<std::string, std::vector<std::string>> annotators;
};

std::vector<Sentence> load_sentences(const std::filesystem::path& path, const ConceptScheme& scheme);
void save_sentences(const std::filesystem::path& path, std::span<const Sentence> sentences);

// Exactly per_class sentences per scheme label, sampled uniformly without
// replacement and shuffled, all deterministic given the seed. Errors name the
// label and shortfall when a class is too small.
std::vector<Sentence> balanced_sample(std::span<const Sentence> sentences,
                                      const ConceptScheme& scheme, std::size_t per_class,
                                      std::uint64_t seed);

std::vector<AnnotationItem> load_annotations(const std::filesystem::path& path);

}  // namespace gprobe
