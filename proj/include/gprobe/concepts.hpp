#pragma once
// Concept schemes: the label sets and definition sets that guidelines are
// derived from. A scheme ships as a JSON file (see assets/schemes/) and is
// immutable after loading, so it can be shared freely across threads.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gprobe {

// Raised by loaders when a file is missing or structurally invalid. The
// message names the offending field.
struct SchemeError : std::runtime_error {
    explicit SchemeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConceptScheme {
    std::string domain_name;
    // Inserted before "Concept:" in the task prompt ("Scientific" or "").
    std::string domain_prompt_token;
    // Optional text for the {instruction} slot of the falcon-chat wrapper.
    std::string falcon_instruction;
    std::vector<std::string> labels;
    // Set name (e.g. "model-generated", "human") -> definitions aligned
    // index-wise with labels.
    std::map<std::string, std::vector<std::string>> definition_sets;
    // Dataset-side label spellings -> scheme label (e.g. "Objective" ->
    // "Motivation" for the scientific scheme).
    std::map<std::string, std::string> label_aliases;

    const std::vector<std::string>& definitions(const std::string& set_name) const;
    bool has_definition_set(const std::string& set_name) const;

    // Index of a label, matched case-insensitively after normalization.
    std::optional<std::size_t> label_index(std::string_view label) const;

    // Maps a dataset label to its scheme label via exact label match or the
    // alias table. Returns nullopt for unknown labels.
    std::optional<std::string> resolve_label(std::string_view dataset_label) const;
};

// Lowercase + trim + collapse internal whitespace. Used for matching only;
// prompt rendering always uses the original strings.
std::string normalize_label(std::string_view s);

ConceptScheme load_scheme(const std::filesystem::path& path);
ConceptScheme scheme_from_json_text(const std::string& text, const std::string& origin);

// Returns one entry per invariant violation; empty means the scheme is valid.
std::vector<std::string> validate_scheme(const ConceptScheme& scheme);

}  // namespace gprobe
