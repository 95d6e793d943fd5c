#pragma once
// Quantitative outputs: accuracy with Wilson 95% intervals, degree curves,
// Pearson correlation, adherence matrices, refusal/unparsed rates, majority
// voting, and (weighted) Cohen's kappa for annotator agreement.
//
// Undefined statistics (constant inputs, zero expected disagreement) are
// reported as std::nullopt, never as a silent 0.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gprobe/extraction.hpp"
#include "gprobe/guidelines.hpp"

namespace gprobe {

struct MetricsError : std::runtime_error {
    explicit MetricsError(const std::string& msg) : std::runtime_error(msg) {}
};

// One sentence x one guideline x one model response, scored.
struct EvalRecord {
    std::string sentence_id;
    std::string guideline_id;
    Variant variant = Variant::factual;
    std::size_t degree = 0;
    std::string factual_gold;
    Outcome outcome = Outcome::unparsed;
    std::string predicted_display;  // set when outcome == label
    std::string predicted_factual;  // OOD substitution undone; set when outcome == label
    std::string raw_text;
    bool from_cache = false;
};

void append_record(std::ostream& out, const EvalRecord& r);
std::vector<EvalRecord> load_records(const std::filesystem::path& path);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Wilson score interval; z defaults to the 97.5% normal quantile (95% CI).
Interval wilson_interval(std::size_t correct, std::size_t n, double z = 1.959963984540054);

struct AccuracyEstimate {
    double point = 0.0;
    Interval ci95;
    std::size_t n_correct = 0;
    std::size_t n = 0;
};

// Correct iff predicted_factual equals factual_gold; refusals and unparsed
// outputs count as incorrect. Throws on empty input.
AccuracyEstimate accuracy(std::span<const EvalRecord> records);

struct DegreePoint {
    std::size_t degree = 0;
    double mean = 0.0;
    double stddev = 0.0;  // population stddev over per-guideline accuracies
    std::size_t n_guidelines = 0;
};

// Per degree: mean and stddev of per-guideline accuracies, over factual and
// counterfactual guidelines (the degree-0 point is the factual baseline).
std::vector<DegreePoint> degree_curve(std::span<const EvalRecord> records);

std::optional<double> pearson(std::span<const std::pair<double, double>> points);

struct AdherenceCell {
    std::size_t adherent = 0;
    std::size_t support = 0;
    double value() const { return support ? static_cast<double>(adherent) / static_cast<double>(support) : 0.0; }
};

// A[i][j]: fraction of predictions that follow the guideline when the
// definition of factual label i was assigned to the display position of
// label j. Rows/columns are scheme labels in scheme order.
struct AdherenceMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<AdherenceCell>> cells;
};

AdherenceMatrix adherence_matrix(std::span<const EvalRecord> records,
                                 const std::map<std::string, Guideline>& guidelines_by_id);

double refusal_rate(std::span<const EvalRecord> records);
double unparsed_rate(std::span<const EvalRecord> records);

// --- annotator agreement -------------------------------------------------

using LabelSet = std::set<std::string>;

// Symmetric difference |(A u B) \ (A n B)| between two annotators' label sets.
std::size_t disagreement_weight(const LabelSet& a, const LabelSet& b);

// kappa_w = 1 - D_o/D_e with D_o the mean observed disagreement and D_e the
// expected disagreement under each annotator's own empirical distribution of
// label sets. Returns nullopt when D_e == 0.
std::optional<double> weighted_kappa(std::span<const std::pair<LabelSet, LabelSet>> items);

// Plain Cohen's kappa over single labels; nullopt when p_e == 1.
std::optional<double> cohen_kappa(std::span<const std::pair<std::string, std::string>> items);

struct VoteResult {
    std::optional<std::string> winner;
    std::vector<std::string> tied;  // populated when tie is set
    bool tie = false;
};

// One vote per label per annotator; strict plurality wins, ties are flagged
// for adjudication. All-empty input yields no winner with the flag set.
VoteResult majority_vote(std::span<const LabelSet> annotator_sets);

// --- aggregate report ----------------------------------------------------

struct ScoreReport {
    AccuracyEstimate overall;
    std::map<std::string, AccuracyEstimate> per_variant;
    std::vector<DegreePoint> curve;
    std::optional<double> pearson_r;  // over (degree, mean accuracy) points
    AdherenceMatrix adherence;
    double refusal_rate = 0.0;
    double unparsed_rate = 0.0;
    double random_baseline = 0.0;  // 1/|C|
    std::size_t n_records = 0;
};

ScoreReport build_score_report(std::span<const EvalRecord> records,
                               const std::map<std::string, Guideline>& guidelines_by_id);

}  // namespace gprobe
