#pragma once
// Shipped data: concept schemes, the OOD word list, refusal phrases, fixture
// corpora, and golden prompt files. verify_assets() cross-checks the whole
// bundle and reports violations instead of failing.

#include <filesystem>
#include <string>
#include <vector>

namespace gprobe {

// Sentence used by the golden prompt fixtures under assets/golden/.
constexpr const char* kGoldenSentence =
    "The catalyst retained 92% of its activity after ten reaction cycles.";

// Counterfactual assignment used by the golden fixtures: swaps the
// definitions of the last two scientific concepts (Result and Conclusion).
inline const std::vector<std::size_t> kGoldenCounterfactualAssignment = {0, 1, 2, 4, 3};

std::vector<std::string> load_ood_words(const std::filesystem::path& path);

// Checks every bundle invariant: schemes load and validate, the
// model-generated definition set exists, the OOD list has 10 unique words
// disjoint from scheme labels, refusal phrases catch the refuser output,
// fixtures are balanced, and golden prompts regenerate byte-identically.
std::vector<std::string> verify_assets(const std::filesystem::path& assets_root);

}  // namespace gprobe
