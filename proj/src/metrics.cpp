#include "gprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

namespace gprobe {

namespace {
using ordered_json = nlohmann::ordered_json;
}

void append_record(std::ostream& out, const EvalRecord& r) {
    ordered_json j;
    j["sentence_id"] = r.sentence_id;
    j["guideline_id"] = r.guideline_id;
    j["variant"] = to_string(r.variant);
    j["degree"] = r.degree;
    j["factual_gold"] = r.factual_gold;
    j["outcome"] = to_string(r.outcome);
    if (r.outcome == Outcome::label) {
        j["predicted_display"] = r.predicted_display;
        j["predicted_factual"] = r.predicted_factual;
    } else {
        j["predicted_display"] = nullptr;
        j["predicted_factual"] = nullptr;
    }
    j["raw_text"] = r.raw_text;
    j["from_cache"] = r.from_cache;
    out << j.dump() << "\n";
}

std::vector<EvalRecord> load_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MetricsError("records file not found: " + path.string());
    std::vector<EvalRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw MetricsError(path.string() + ":" + std::to_string(line_no) +
                               ": malformed record: " + e.what());
        }
        EvalRecord r;
        r.sentence_id = j.at("sentence_id").get<std::string>();
        r.guideline_id = j.at("guideline_id").get<std::string>();
        r.variant = variant_from_string(j.at("variant").get<std::string>());
        r.degree = j.at("degree").get<std::size_t>();
        r.factual_gold = j.at("factual_gold").get<std::string>();
        r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
        if (j.contains("predicted_display") && !j["predicted_display"].is_null()) {
            r.predicted_display = j["predicted_display"].get<std::string>();
        }
        if (j.contains("predicted_factual") && !j["predicted_factual"].is_null()) {
            r.predicted_factual = j["predicted_factual"].get<std::string>();
        }
        r.raw_text = j.value("raw_text", std::string{});
        r.from_cache = j.value("from_cache", false);
        out.push_back(std::move(r));
    }
    return out;
}

Interval wilson_interval(std::size_t correct, std::size_t n, double z) {
    if (n == 0) throw MetricsError("Wilson interval needs n >= 1");
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(correct) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {center - half, center + half};
}

namespace {

bool record_correct(const EvalRecord& r) {
    return r.outcome == Outcome::label && r.predicted_factual == r.factual_gold;
}

}  // namespace

AccuracyEstimate accuracy(std::span<const EvalRecord> records) {
    if (records.empty()) throw MetricsError("accuracy needs at least one record");
    AccuracyEstimate est;
    est.n = records.size();
    for (const auto& r : records) {
        if (record_correct(r)) ++est.n_correct;
    }
    est.point = static_cast<double>(est.n_correct) / static_cast<double>(est.n);
    est.ci95 = wilson_interval(est.n_correct, est.n);
    return est;
}

std::vector<DegreePoint> degree_curve(std::span<const EvalRecord> records) {
    // guideline_id -> (degree, correct, total); only factual and
    // counterfactual guidelines form the curve.
    struct Tally {
        std::size_t degree = 0;
        std::size_t correct = 0;
        std::size_t total = 0;
    };
    std::map<std::string, Tally> per_guideline;
    for (const auto& r : records) {
        if (r.variant != Variant::factual && r.variant != Variant::counterfactual) continue;
        auto& t = per_guideline[r.guideline_id];
        t.degree = r.degree;
        t.total += 1;
        if (record_correct(r)) t.correct += 1;
    }

    std::map<std::size_t, std::vector<double>> by_degree;
    for (const auto& [id, t] : per_guideline) {
        by_degree[t.degree].push_back(static_cast<double>(t.correct) / static_cast<double>(t.total));
    }

    std::vector<DegreePoint> curve;
    for (const auto& [degree, accs] : by_degree) {
        DegreePoint p;
        p.degree = degree;
        p.n_guidelines = accs.size();
        double sum = 0.0;
        for (double a : accs) sum += a;
        p.mean = sum / static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - p.mean) * (a - p.mean);
        p.stddev = std::sqrt(var / static_cast<double>(accs.size()));
        curve.push_back(p);
    }
    return curve;  // std::map iteration keeps degrees ascending
}

std::optional<double> pearson(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2) return std::nullopt;
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : points) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (const auto& [x, y] : points) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;  // constant x or y
    return sxy / std::sqrt(sxx * syy);
}

AdherenceMatrix adherence_matrix(std::span<const EvalRecord> records,
                                 const std::map<std::string, Guideline>& guidelines_by_id) {
    AdherenceMatrix m;
    for (const auto& r : records) {
        auto it = guidelines_by_id.find(r.guideline_id);
        if (it == guidelines_by_id.end()) {
            throw MetricsError("record references unknown guideline '" + r.guideline_id + "'");
        }
        const Guideline& g = it->second;
        if (m.labels.empty()) {
            m.labels = g.factual_labels;
            m.cells.assign(m.labels.size(), std::vector<AdherenceCell>(m.labels.size()));
        }

        const std::size_t i = g.factual_index(r.factual_gold);
        // Position whose display label carries the gold label's definition.
        std::size_t j = i;
        for (std::size_t pos = 0; pos < g.assignment.size(); ++pos) {
            if (g.assignment[pos] == i) {
                j = pos;
                break;
            }
        }
        auto& cell = m.cells[i][j];
        cell.support += 1;
        if (r.outcome == Outcome::label && r.predicted_display == g.display_labels[j]) {
            cell.adherent += 1;
        }
    }
    return m;
}

double refusal_rate(std::span<const EvalRecord> records) {
    if (records.empty()) throw MetricsError("refusal_rate needs at least one record");
    std::size_t refused = 0;
    for (const auto& r : records) {
        if (r.outcome == Outcome::refusal) ++refused;
    }
    return static_cast<double>(refused) / static_cast<double>(records.size());
}

double unparsed_rate(std::span<const EvalRecord> records) {
    if (records.empty()) throw MetricsError("unparsed_rate needs at least one record");
    std::size_t unparsed = 0;
    for (const auto& r : records) {
        if (r.outcome == Outcome::unparsed) ++unparsed;
    }
    return static_cast<double>(unparsed) / static_cast<double>(records.size());
}

std::size_t disagreement_weight(const LabelSet& a, const LabelSet& b) {
    std::size_t sym_diff = 0;
    for (const auto& l : a) {
        if (!b.count(l)) ++sym_diff;
    }
    for (const auto& l : b) {
        if (!a.count(l)) ++sym_diff;
    }
    return sym_diff;
}

std::optional<double> weighted_kappa(std::span<const std::pair<LabelSet, LabelSet>> items) {
    if (items.size() < 2) throw MetricsError("weighted kappa needs at least two items");
    const double n = static_cast<double>(items.size());

    double observed = 0.0;
    std::map<LabelSet, std::size_t> counts_a, counts_b;
    for (const auto& [a, b] : items) {
        observed += static_cast<double>(disagreement_weight(a, b));
        counts_a[a] += 1;
        counts_b[b] += 1;
    }
    const double d_o = observed / n;

    // Expected disagreement under independent draws from each annotator's
    // own distribution of observed label sets (Cohen-style marginals).
    double d_e = 0.0;
    for (const auto& [set_a, cnt_a] : counts_a) {
        for (const auto& [set_b, cnt_b] : counts_b) {
            d_e += (static_cast<double>(cnt_a) / n) * (static_cast<double>(cnt_b) / n) *
                   static_cast<double>(disagreement_weight(set_a, set_b));
        }
    }
    if (d_e == 0.0) return std::nullopt;
    return 1.0 - d_o / d_e;
}

std::optional<double> cohen_kappa(std::span<const std::pair<std::string, std::string>> items) {
    if (items.size() < 2) throw MetricsError("Cohen's kappa needs at least two items");
    const double n = static_cast<double>(items.size());

    std::size_t agree = 0;
    std::map<std::string, std::size_t> counts_a, counts_b;
    for (const auto& [a, b] : items) {
        if (a == b) ++agree;
        counts_a[a] += 1;
        counts_b[b] += 1;
    }
    const double p_o = static_cast<double>(agree) / n;
    double p_e = 0.0;
    for (const auto& [label, cnt_a] : counts_a) {
        auto it = counts_b.find(label);
        if (it == counts_b.end()) continue;
        p_e += (static_cast<double>(cnt_a) / n) * (static_cast<double>(it->second) / n);
    }
    if (p_e == 1.0) return std::nullopt;
    return (p_o - p_e) / (1.0 - p_e);
}

VoteResult majority_vote(std::span<const LabelSet> annotator_sets) {
    if (annotator_sets.size() < 2) throw MetricsError("majority vote needs at least two annotators");
    std::map<std::string, std::size_t> votes;
    for (const auto& set : annotator_sets) {
        for (const auto& label : set) votes[label] += 1;
    }

    VoteResult result;
    if (votes.empty()) {
        result.tie = true;  // nothing to adjudicate from; flag for review
        return result;
    }
    std::size_t best = 0;
    for (const auto& [label, count] : votes) best = std::max(best, count);
    std::vector<std::string> top;
    for (const auto& [label, count] : votes) {
        if (count == best) top.push_back(label);
    }
    if (top.size() == 1) {
        result.winner = top.front();
    } else {
        result.tie = true;
        result.tied = std::move(top);
    }
    return result;
}

ScoreReport build_score_report(std::span<const EvalRecord> records,
                               const std::map<std::string, Guideline>& guidelines_by_id) {
    if (records.empty()) throw MetricsError("cannot score an empty record set");

    ScoreReport report;
    report.n_records = records.size();
    report.overall = accuracy(records);

    std::map<std::string, std::vector<EvalRecord>> by_variant;
    for (const auto& r : records) by_variant[to_string(r.variant)].push_back(r);
    for (const auto& [variant, recs] : by_variant) report.per_variant[variant] = accuracy(recs);

    report.curve = degree_curve(records);
    std::vector<std::pair<double, double>> points;
    for (const auto& p : report.curve) {
        points.emplace_back(static_cast<double>(p.degree), p.mean);
    }
    report.pearson_r = pearson(points);

    report.adherence = adherence_matrix(records, guidelines_by_id);
    report.refusal_rate = refusal_rate(records);
    report.unparsed_rate = unparsed_rate(records);
    if (!report.adherence.labels.empty()) {
        report.random_baseline = 1.0 / static_cast<double>(report.adherence.labels.size());
    }
    return report;
}

}  // namespace gprobe
