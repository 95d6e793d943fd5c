#pragma once
// Experiment orchestration: planning a (scheme x guidelines x sentences)
// grid into a run directory, executing it against a backend with bounded
// parallelism and resume-on-restart, scoring record files, and computing
// model/human agreement.
//
// A run directory is self-contained after plan(): it snapshots the scheme,
// the sampled sentences, the generated guidelines, and the refusal phrase
// list, so later stages never depend on files outside it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gprobe/backends.hpp"
#include "gprobe/corpus.hpp"
#include "gprobe/guidelines.hpp"
#include "gprobe/metrics.hpp"

namespace gprobe {

struct OrchestratorError : std::runtime_error {
    explicit OrchestratorError(const std::string& msg) : std::runtime_error(msg) {}
};

// Guideline variants an experiment can request.
constexpr const char* kVariantFactual = "factual";
constexpr const char* kVariantFactualEmpty = "factual-empty";
constexpr const char* kVariantOod = "ood";
constexpr const char* kVariantOodEmpty = "ood-empty";
constexpr const char* kVariantCounterfactualFull = "counterfactual-full";
constexpr const char* kVariantDegreeSweep = "degree-sweep";

struct SweepSpec {
    std::vector<std::size_t> levels;   // subset of {2..|C|}
    std::size_t per_level = 10;
    bool balanced = false;             // balance which concepts move
};

struct ExperimentConfig {
    std::string scheme_path;
    std::string def_set = "model-generated";
    std::string dataset_path;
    std::size_t per_class = 0;         // 0 = use the full dataset
    std::uint64_t seed = 0;
    std::vector<std::string> variants;
    SweepSpec sweep;
    std::string ood_words_path;
    std::optional<std::uint64_t> ood_seed;
    std::string refusal_phrases_path;
    std::string out_dir;
};

struct TaskRef {
    std::string sentence_id;
    std::string guideline_id;
    std::string status;  // pending | done | failed
};

struct RunManifest {
    std::string config_hash;
    std::string created_at;
    std::string updated_at;
    nlohmann::ordered_json config;
    std::vector<TaskRef> tasks;
};

// File names inside a run directory.
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kGuidelinesFile = "guidelines.json";
constexpr const char* kSampleFile = "sample.jsonl";
constexpr const char* kSchemeSnapshotFile = "scheme.json";
constexpr const char* kRefusalSnapshotFile = "refusal_phrases.txt";
constexpr const char* kRecordsFile = "records.jsonl";
constexpr const char* kReportFile = "report.json";
constexpr const char* kCurvesFile = "curves.csv";
constexpr const char* kAdherenceFile = "adherence.csv";

// Enumerates guidelines and tasks for the config and writes the run
// directory. Deterministic: the same config yields the same manifest.
RunManifest plan(const ExperimentConfig& config);

RunManifest load_manifest(const std::filesystem::path& out_dir);

struct RunSummary {
    std::size_t total_tasks = 0;
    std::size_t already_done = 0;  // resumed from records
    std::size_t executed = 0;
    std::size_t failed = 0;
    std::vector<std::string> failures;  // "sentence_id x guideline_id: error"
};

// Executes pending tasks with bounded parallelism, appending one record line
// per completed task in task order. `resume` continues from an existing
// records file (a torn final line is discarded); `limit` stops after that
// many newly executed tasks, which makes interruption testable.
RunSummary run(const std::filesystem::path& out_dir, const BackendConfig& backend,
               bool resume = false, std::size_t limit = 0);

// Scores a records file against its guidelines file and writes report.json,
// curves.csv, and adherence.csv under out_dir.
ScoreReport score_files(const std::filesystem::path& records_path,
                        const std::filesystem::path& guidelines_path,
                        const std::filesystem::path& out_dir);

struct AgreeReport {
    // Annotator name -> kappa of model vs that annotator's primary label.
    std::map<std::string, std::optional<double>> per_annotator;
    std::map<std::string, std::size_t> per_annotator_items;
    std::optional<double> average;
    // "A1|A2" -> weighted kappa between the two annotators' label sets.
    std::map<std::string, std::optional<double>> pairwise_weighted;
    std::size_t n_items = 0;  // items where any annotator assigned a concept
};

// Model-vs-human agreement over overlapping item ids. Model labels are taken
// from factual-guideline records; items where no annotator assigned any
// concept are dropped. Two-label annotations reduce to their first-listed
// (primary) label for the non-weighted kappa.
AgreeReport agree(const std::filesystem::path& records_path,
                  const std::filesystem::path& annotations_path, bool include_weighted = true);

// Renders every planned prompt to {out_dir}/{guideline_id}/{sentence_id}.txt.
void dump_prompts(const ExperimentConfig& config, Family family,
                  const std::filesystem::path& dump_dir);

}  // namespace gprobe
