#include "gprobe/assets.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gprobe/backends.hpp"
#include "gprobe/concepts.hpp"
#include "gprobe/corpus.hpp"
#include "gprobe/extraction.hpp"
#include "gprobe/guidelines.hpp"
#include "gprobe/prompts.hpp"

namespace gprobe {

namespace {

namespace fs = std::filesystem;

std::optional<std::string> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void check_fixture(const fs::path& path, const ConceptScheme& scheme, std::size_t min_per_label,
                   std::vector<std::string>& violations) {
    std::vector<Sentence> sentences;
    try {
        sentences = load_sentences(path, scheme);
    } catch (const std::exception& e) {
        violations.push_back(std::string("fixture: ") + e.what());
        return;
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& s : sentences) counts[s.gold_label] += 1;
    for (const auto& label : scheme.labels) {
        if (counts[label] < min_per_label) {
            violations.push_back("fixture " + path.filename().string() + ": label '" + label +
                                 "' has " + std::to_string(counts[label]) + " sentences, want >= " +
                                 std::to_string(min_per_label));
        }
    }
}

}  // namespace

std::vector<std::string> load_ood_words(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("OOD word list not found: " + path.string());
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        words.push_back(line.substr(first, line.find_last_not_of(" \t") - first + 1));
    }
    return words;
}

std::vector<std::string> verify_assets(const fs::path& root) {
    std::vector<std::string> violations;

    // Schemes.
    std::map<std::string, ConceptScheme> schemes;
    for (const char* name : {"scientific", "financial", "financial_human"}) {
        const fs::path path = root / "schemes" / (std::string(name) + ".json");
        try {
            ConceptScheme scheme = load_scheme(path);
            for (const auto& v : validate_scheme(scheme)) {
                violations.push_back(std::string(name) + ": " + v);
            }
            if (!scheme.has_definition_set("model-generated")) {
                violations.push_back(std::string(name) + ": missing 'model-generated' definition set");
            }
            if (scheme.labels.size() != 5 && scheme.labels.size() != 6) {
                violations.push_back(std::string(name) + ": unexpected label count " +
                                     std::to_string(scheme.labels.size()));
            }
            for (const auto& [set_name, defs] : scheme.definition_sets) {
                for (std::size_t i = 0; i < defs.size() && i < scheme.labels.size(); ++i) {
                    if (defs[i].empty()) {
                        violations.push_back(std::string(name) + ": empty definition for label '" +
                                             scheme.labels[i] + "' in set '" + set_name + "'");
                    }
                }
            }
            schemes.emplace(name, std::move(scheme));
        } catch (const std::exception& e) {
            violations.push_back(std::string(name) + ": " + e.what());
        }
    }

    // OOD words: exactly 10, unique, disjoint from all scheme labels.
    std::vector<std::string> words;
    try {
        words = load_ood_words(root / "ood_words.txt");
        if (words.size() != 10) {
            violations.push_back("ood_words.txt: expected 10 words, found " +
                                 std::to_string(words.size()));
        }
        std::set<std::string> seen;
        for (const auto& w : words) {
            if (!seen.insert(normalize_label(w)).second) {
                violations.push_back("ood_words.txt: duplicate word '" + w + "'");
            }
        }
        for (const auto& [name, scheme] : schemes) {
            for (const auto& label : scheme.labels) {
                if (seen.count(normalize_label(label))) {
                    violations.push_back("ood_words.txt: word collides with " + name + " label '" +
                                         label + "'");
                }
            }
        }
    } catch (const std::exception& e) {
        violations.push_back(std::string("ood_words.txt: ") + e.what());
    }

    // Refusal phrases must catch the refuser mock's output.
    try {
        const auto phrases = load_refusal_phrases(root / "refusal_phrases.txt");
        if (phrases.empty()) {
            violations.push_back("refusal_phrases.txt: no phrases");
        } else if (!detect_refusal(kRefuserOutput, phrases)) {
            violations.push_back("refusal_phrases.txt: no phrase matches the refuser output");
        }
    } catch (const std::exception& e) {
        violations.push_back(std::string("refusal_phrases.txt: ") + e.what());
    }

    // Fixture corpora: label-balanced with at least 20 sentences per label.
    if (schemes.count("scientific")) {
        check_fixture(root / "fixtures" / "scientific_sentences.jsonl", schemes.at("scientific"), 20,
                      violations);
    }
    if (schemes.count("financial")) {
        check_fixture(root / "fixtures" / "financial_sentences.jsonl", schemes.at("financial"), 20,
                      violations);
    }
    try {
        load_annotations(root / "fixtures" / "annotations.jsonl");
    } catch (const std::exception& e) {
        violations.push_back(std::string("annotations fixture: ") + e.what());
    }

    // Golden prompts regenerate byte-identically.
    if (schemes.count("scientific")) {
        const ConceptScheme& sci = schemes.at("scientific");
        try {
            const Guideline factual = factual_guideline(sci, "model-generated");
            std::map<std::string, Guideline> variants;
            variants.emplace("factual", factual);
            variants.emplace("factual_empty", empty_definitions(factual));
            variants.emplace("counterfactual",
                             counterfactual_guideline(sci, "model-generated",
                                                      kGoldenCounterfactualAssignment));
            for (Family family : {Family::llama2_chat, Family::falcon_chat, Family::chat_api}) {
                for (const auto& [tag, g] : variants) {
                    const fs::path file =
                        root / "golden" / (to_string(family) + "_" + tag + ".txt");
                    const auto expected = read_file(file);
                    if (!expected) {
                        violations.push_back("golden: missing file " + file.filename().string());
                        continue;
                    }
                    const PromptBundle bundle = build_prompt(g, sci, kGoldenSentence, family);
                    if (bundle.wrapped != *expected) {
                        violations.push_back("golden: " + file.filename().string() +
                                             " does not match the rendered payload");
                    }
                }
            }
        } catch (const std::exception& e) {
            violations.push_back(std::string("golden: ") + e.what());
        }
    }

    return violations;
}

}  // namespace gprobe
