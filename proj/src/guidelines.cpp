#include "gprobe/guidelines.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gprobe/hashing.hpp"

namespace gprobe {

namespace {

using ordered_json = nlohmann::ordered_json;

void check_permutation(const Permutation& perm) {
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t v : perm) {
        if (v >= perm.size() || seen[v]) {
            throw GuidelineError("assignment is not a bijection over 0.." +
                                 std::to_string(perm.size() ? perm.size() - 1 : 0));
        }
        seen[v] = true;
    }
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::factual: return "factual";
        case Variant::factual_empty: return "factual_empty";
        case Variant::ood: return "ood";
        case Variant::ood_empty: return "ood_empty";
        case Variant::counterfactual: return "counterfactual";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "factual") return Variant::factual;
    if (s == "factual_empty") return Variant::factual_empty;
    if (s == "ood") return Variant::ood;
    if (s == "ood_empty") return Variant::ood_empty;
    if (s == "counterfactual") return Variant::counterfactual;
    throw GuidelineError("unknown guideline variant '" + s + "'");
}

std::size_t degree_of(const Permutation& perm) {
    check_permutation(perm);
    std::size_t moved = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] != i) ++moved;
    }
    return moved;
}

std::string Guideline::id() const {
    std::string canon = scheme_name;
    canon += '\x1f';
    canon += def_set;
    canon += '\x1f';
    canon += to_string(variant);
    for (const auto& l : display_labels) {
        canon += '\x1f';
        canon += l;
    }
    for (const auto& l : factual_labels) {
        canon += '\x1f';
        canon += l;
    }
    for (std::size_t v : assignment) {
        canon += '\x1f';
        canon += std::to_string(v);
    }
    return to_hex64(fnv1a64(canon));
}

std::size_t Guideline::factual_index(const std::string& factual_label) const {
    const std::string norm = normalize_label(factual_label);
    for (std::size_t i = 0; i < factual_labels.size(); ++i) {
        if (normalize_label(factual_labels[i]) == norm) return i;
    }
    throw GuidelineError("label '" + factual_label + "' is not in guideline for scheme '" +
                         scheme_name + "'");
}

Guideline factual_guideline(const ConceptScheme& scheme, const std::string& def_set) {
    scheme.definitions(def_set);  // throws on unknown set
    Guideline g;
    g.scheme_name = scheme.domain_name;
    g.def_set = def_set;
    g.variant = Variant::factual;
    g.degree = 0;
    g.display_labels = scheme.labels;
    g.factual_labels = scheme.labels;
    g.assignment.resize(scheme.labels.size());
    std::iota(g.assignment.begin(), g.assignment.end(), 0);
    return g;
}

Guideline empty_definitions(const Guideline& g) {
    if (g.variant == Variant::factual) {
        Guideline out = g;
        out.variant = Variant::factual_empty;
        return out;
    }
    if (g.variant == Variant::ood) {
        Guideline out = g;
        out.variant = Variant::ood_empty;
        return out;
    }
    throw GuidelineError("empty_definitions requires a factual or ood guideline, got " +
                         to_string(g.variant));
}

Guideline substitute_ood(const Guideline& g, const std::vector<std::string>& ood_words,
                         std::optional<std::uint64_t> ood_seed) {
    if (g.variant != Variant::factual) {
        throw GuidelineError("substitute_ood requires a factual guideline, got " + to_string(g.variant));
    }
    const std::size_t n = g.display_labels.size();
    if (ood_words.size() < n) {
        throw GuidelineError("need at least " + std::to_string(n) + " OOD words, got " +
                             std::to_string(ood_words.size()));
    }

    std::vector<std::string> words(ood_words.begin(), ood_words.end());
    if (ood_seed) {
        std::mt19937_64 rng(*ood_seed);
        for (std::size_t i = words.size() - 1; i > 0; --i) {
            std::uniform_int_distribution<std::size_t> dist(0, i);
            std::swap(words[i], words[dist(rng)]);
        }
    }
    words.resize(n);

    std::set<std::string> seen;
    for (const auto& w : words) {
        if (!seen.insert(normalize_label(w)).second) {
            throw GuidelineError("duplicate OOD word '" + w + "'");
        }
        for (const auto& label : g.factual_labels) {
            if (normalize_label(w) == normalize_label(label)) {
                throw GuidelineError("OOD word '" + w + "' collides with real label '" + label + "'");
            }
        }
    }

    Guideline out = g;
    out.variant = Variant::ood;
    out.display_labels = std::move(words);
    return out;
}

Guideline counterfactual_guideline(const ConceptScheme& scheme, const std::string& def_set,
                                   const Permutation& perm) {
    scheme.definitions(def_set);
    if (perm.size() != scheme.labels.size()) {
        throw GuidelineError("permutation size " + std::to_string(perm.size()) +
                             " does not match label count " + std::to_string(scheme.labels.size()));
    }
    const std::size_t k = degree_of(perm);
    if (k == 0) throw GuidelineError("not counterfactual: permutation is the identity");
    // degree_of already guarantees a bijection, so k == 1 cannot occur; keep
    // the explicit check as the contract for hand-built inputs.
    if (k == 1) throw GuidelineError("degree 1 is impossible for a bijective assignment");

    Guideline g;
    g.scheme_name = scheme.domain_name;
    g.def_set = def_set;
    g.variant = Variant::counterfactual;
    g.degree = k;
    g.display_labels = scheme.labels;
    g.factual_labels = scheme.labels;
    g.assignment = perm;
    return g;
}

std::vector<Permutation> enumerate_by_degree(std::size_t n_labels, std::size_t k) {
    if (n_labels < 2) throw GuidelineError("enumeration needs >=2 labels");
    if (k == 1) throw GuidelineError("no bijection moves exactly one point");
    if (k > n_labels) {
        throw GuidelineError("degree " + std::to_string(k) + " exceeds label count " +
                             std::to_string(n_labels));
    }

    Permutation perm(n_labels);
    std::iota(perm.begin(), perm.end(), 0);
    if (k == 0) return {perm};

    // std::next_permutation walks lexicographically from the identity.
    std::vector<Permutation> out;
    do {
        std::size_t moved = 0;
        for (std::size_t i = 0; i < n_labels; ++i) {
            if (perm[i] != i) ++moved;
        }
        if (moved == k) out.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

namespace {

std::vector<Permutation> sample_permutations(std::vector<Permutation> pool, std::size_t n,
                                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t take = std::min(n, pool.size());
    // Partial Fisher-Yates: positions 0..take-1 end up as a uniform sample
    // without replacement.
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> dist(i, pool.size() - 1);
        std::swap(pool[i], pool[dist(rng)]);
    }
    pool.resize(take);
    return pool;
}

std::vector<Permutation> sample_balanced(std::vector<Permutation> pool, std::size_t n_labels,
                                         std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t take = std::min(n, pool.size());
    std::vector<std::size_t> moved_count(n_labels, 0);
    std::vector<Permutation> out;
    out.reserve(take);

    for (std::size_t step = 0; step < take; ++step) {
        // Score a candidate by how lopsided the moved-concept counts would
        // become; pick uniformly among the least lopsided.
        std::size_t best_score = std::numeric_limits<std::size_t>::max();
        std::vector<std::size_t> best;
        for (std::size_t idx = 0; idx < pool.size(); ++idx) {
            std::size_t score = 0;
            for (std::size_t i = 0; i < n_labels; ++i) {
                if (pool[idx][i] != i) score += moved_count[i];
            }
            if (score < best_score) {
                best_score = score;
                best.clear();
            }
            if (score == best_score) best.push_back(idx);
        }
        std::uniform_int_distribution<std::size_t> dist(0, best.size() - 1);
        const std::size_t chosen = best[dist(rng)];
        for (std::size_t i = 0; i < n_labels; ++i) {
            if (pool[chosen][i] != i) ++moved_count[i];
        }
        out.push_back(pool[chosen]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen));
    }
    return out;
}

}  // namespace

std::vector<Guideline> sample_by_degree(const ConceptScheme& scheme, const std::string& def_set,
                                        std::size_t k, std::size_t n, std::uint64_t seed,
                                        bool balance_moved) {
    if (n == 0) throw GuidelineError("sample size must be >= 1");
    if (k < 2) throw GuidelineError("counterfactual degree must be >= 2");
    auto pool = enumerate_by_degree(scheme.labels.size(), k);
    auto picks = balance_moved ? sample_balanced(std::move(pool), scheme.labels.size(), n, seed)
                               : sample_permutations(std::move(pool), n, seed);
    std::vector<Guideline> out;
    out.reserve(picks.size());
    for (const auto& perm : picks) {
        Guideline g = counterfactual_guideline(scheme, def_set, perm);
        g.seed = seed;
        out.push_back(std::move(g));
    }
    return out;
}

Guideline sample_full_derangement(const ConceptScheme& scheme, const std::string& def_set,
                                  std::uint64_t seed) {
    auto pool = enumerate_by_degree(scheme.labels.size(), scheme.labels.size());
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
    Guideline g = counterfactual_guideline(scheme, def_set, pool[dist(rng)]);
    g.seed = seed;
    return g;
}

std::string guideline_gold(const Guideline& g, const std::string& factual_gold) {
    const std::size_t gold_idx = g.factual_index(factual_gold);
    for (std::size_t pos = 0; pos < g.assignment.size(); ++pos) {
        if (g.assignment[pos] == gold_idx) return g.display_labels[pos];
    }
    throw GuidelineError("assignment has no position for definition index " +
                         std::to_string(gold_idx));
}

std::string remap_prediction(const Guideline& g, const std::string& predicted_display) {
    const std::string norm = normalize_label(predicted_display);
    for (std::size_t pos = 0; pos < g.display_labels.size(); ++pos) {
        if (normalize_label(g.display_labels[pos]) == norm) return g.factual_labels[pos];
    }
    throw GuidelineError("predicted label '" + predicted_display + "' is not in the guideline");
}

void save_guidelines(const std::filesystem::path& path, std::span<const Guideline> guidelines) {
    ordered_json arr = ordered_json::array();
    for (const auto& g : guidelines) {
        ordered_json j;
        j["guideline_id"] = g.id();
        j["scheme"] = g.scheme_name;
        j["def_set"] = g.def_set;
        j["variant"] = to_string(g.variant);
        j["degree"] = g.degree;
        j["display_labels"] = g.display_labels;
        j["assignment"] = g.assignment;
        if (g.is_ood_variant()) {
            ordered_json subst = ordered_json::object();
            for (std::size_t i = 0; i < g.factual_labels.size(); ++i) {
                subst[g.factual_labels[i]] = g.display_labels[i];
            }
            j["label_substitution"] = subst;
        } else {
            j["label_substitution"] = nullptr;
        }
        if (g.seed) {
            j["seed"] = *g.seed;
        } else {
            j["seed"] = nullptr;
        }
        arr.push_back(std::move(j));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw GuidelineError("cannot write guidelines file: " + path.string());
    out << arr.dump(2) << "\n";
}

std::vector<Guideline> load_guidelines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GuidelineError("guidelines file not found: " + path.string());
    nlohmann::json arr;
    try {
        in >> arr;
    } catch (const nlohmann::json::exception& e) {
        throw GuidelineError(path.string() + ": malformed JSON: " + e.what());
    }
    if (!arr.is_array()) throw GuidelineError(path.string() + ": top level must be an array");

    std::vector<Guideline> out;
    for (const auto& j : arr) {
        Guideline g;
        g.scheme_name = j.at("scheme").get<std::string>();
        g.def_set = j.at("def_set").get<std::string>();
        g.variant = variant_from_string(j.at("variant").get<std::string>());
        g.degree = j.at("degree").get<std::size_t>();
        g.display_labels = j.at("display_labels").get<std::vector<std::string>>();
        g.assignment = j.at("assignment").get<Permutation>();
        if (j.contains("seed") && !j["seed"].is_null()) g.seed = j["seed"].get<std::uint64_t>();

        if (j.contains("label_substitution") && !j["label_substitution"].is_null()) {
            // Recover scheme-order factual labels by inverting the
            // substitution against the display positions.
            g.factual_labels.assign(g.display_labels.size(), "");
            for (const auto& [factual, word] : j["label_substitution"].items()) {
                bool placed = false;
                for (std::size_t pos = 0; pos < g.display_labels.size(); ++pos) {
                    if (g.display_labels[pos] == word.get<std::string>()) {
                        g.factual_labels[pos] = factual;
                        placed = true;
                        break;
                    }
                }
                if (!placed) {
                    throw GuidelineError(path.string() + ": substitution word '" +
                                         word.get<std::string>() + "' missing from display_labels");
                }
            }
            for (const auto& l : g.factual_labels) {
                if (l.empty()) {
                    throw GuidelineError(path.string() + ": label_substitution does not cover all positions");
                }
            }
        } else {
            g.factual_labels = g.display_labels;
        }

        if (degree_of(g.assignment) != g.degree) {
            throw GuidelineError(path.string() + ": stored degree does not match assignment for guideline " +
                                 g.id());
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace gprobe
