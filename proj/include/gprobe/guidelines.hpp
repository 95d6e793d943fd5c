#pragma once
// Guideline algebra: factual, empty-definition, out-of-dictionary, and
// counterfactual guidelines over a concept scheme, plus enumeration and
// sampling of label-definition permutations by degree of counterfactuality.
//
// A guideline pairs the display label at position i with the definition at
// index assignment[i]. The degree is the number of positions whose assigned
// definition is not their own; for a bijection it is 0 or in {2..|C|}.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gprobe/concepts.hpp"

namespace gprobe {

struct GuidelineError : std::runtime_error {
    explicit GuidelineError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Variant { factual, factual_empty, ood, ood_empty, counterfactual };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

using Permutation = std::vector<std::size_t>;

// Number of non-fixed points. Throws if perm is not a bijection of 0..n-1.
std::size_t degree_of(const Permutation& perm);

struct Guideline {
    std::string scheme_name;
    std::string def_set;
    Variant variant = Variant::factual;
    std::size_t degree = 0;
    // Labels as shown in the prompt, in display order (OOD words for the ood
    // variants, scheme labels otherwise).
    std::vector<std::string> display_labels;
    // Scheme labels in the same positions; equals display_labels unless an
    // OOD substitution was applied.
    std::vector<std::string> factual_labels;
    // Position i in the prompt is paired with definition assignment[i].
    Permutation assignment;
    // Sampling seed, recorded for reproducibility when the guideline was drawn.
    std::optional<std::uint64_t> seed;

    bool is_empty_variant() const { return variant == Variant::factual_empty || variant == Variant::ood_empty; }
    bool is_ood_variant() const { return variant == Variant::ood || variant == Variant::ood_empty; }

    // Stable content hash over scheme, def_set, variant, labels, and
    // assignment. Equal guidelines hash equal; any field change changes it.
    std::string id() const;

    // Position of a factual (scheme) label. Throws GuidelineError if unknown.
    std::size_t factual_index(const std::string& factual_label) const;
};

// delta(c_i) = d_i for all i: identity assignment, degree 0.
Guideline factual_guideline(const ConceptScheme& scheme, const std::string& def_set);

// Replaces every rendered definition with the empty string. Only factual and
// ood guidelines can be emptied; the counterfactual signal lives in the
// definitions, so emptying a counterfactual guideline is rejected.
Guideline empty_definitions(const Guideline& g);

// Replaces the real labels of a factual guideline with out-of-dictionary
// words, first |C| words in list order. An ood_seed deterministically
// permutes the word-to-label assignment for robustness studies.
Guideline substitute_ood(const Guideline& g, const std::vector<std::string>& ood_words,
                         std::optional<std::uint64_t> ood_seed = std::nullopt);

// Builds a counterfactual guideline from a permutation with >=2 non-fixed
// points (one non-fixed point is impossible for a bijection; the identity is
// not counterfactual).
Guideline counterfactual_guideline(const ConceptScheme& scheme, const std::string& def_set,
                                   const Permutation& perm);

// All permutations of n_labels elements with exactly k non-fixed points, in
// lexicographic order. k = 0 yields the identity; k = 1 and k > n are errors.
std::vector<Permutation> enumerate_by_degree(std::size_t n_labels, std::size_t k);

// min(n, population) distinct counterfactual guidelines of degree k, sampled
// uniformly without replacement; deterministic given the seed. When
// balance_moved is set, sampling greedily balances how often each concept is
// a non-fixed point across the sample.
std::vector<Guideline> sample_by_degree(const ConceptScheme& scheme, const std::string& def_set,
                                        std::size_t k, std::size_t n, std::uint64_t seed,
                                        bool balance_moved = false);

// One uniformly seeded full derangement (degree = |C|).
Guideline sample_full_derangement(const ConceptScheme& scheme, const std::string& def_set,
                                  std::uint64_t seed);

// The display label whose assigned definition is the gold label's factual
// definition: display_labels[assignment^-1(index(factual_gold))]. This is the
// guideline-consistent answer used by adherence scoring and mock backends.
std::string guideline_gold(const Guideline& g, const std::string& factual_gold);

// Undoes the OOD substitution only; the counterfactual assignment is not
// undone (accuracy compares the literal predicted label to the factual gold).
// Throws if the predicted label is not one of the guideline's display labels.
std::string remap_prediction(const Guideline& g, const std::string& predicted_display);

void save_guidelines(const std::filesystem::path& path, std::span<const Guideline> guidelines);
std::vector<Guideline> load_guidelines(const std::filesystem::path& path);

}  // namespace gprobe
