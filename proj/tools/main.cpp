// guideline-probe: plan, run, and score zero-shot concept-classification
// experiments driven by factual and counterfactual annotation guidelines.
//
// Subcommands: guidelines, plan, run, score, agree, dump-prompts,
// verify-assets. Exit codes: 0 success, 1 validation error, 2 partial
// failure (some tasks failed).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gprobe/assets.hpp"
#include "gprobe/backends.hpp"
#include "gprobe/orchestrator.hpp"

namespace {

using namespace gprobe;
using ordered_json = nlohmann::ordered_json;

struct PlanFlags {
    ExperimentConfig config;
    std::string variants_csv = "factual";
    std::string levels_csv;
    std::int64_t ood_seed = -1;

    void attach(CLI::App* cmd, bool needs_out_dir) {
        cmd->add_option("--scheme", config.scheme_path, "Concept scheme JSON file")->required();
        cmd->add_option("--def-set", config.def_set, "Definition set name (default model-generated)");
        cmd->add_option("--dataset", config.dataset_path, "Sentence JSONL file")->required();
        cmd->add_option("--per-class", config.per_class,
                        "Balanced sample size per label (0 = whole dataset)");
        cmd->add_option("--seed", config.seed, "Experiment seed");
        cmd->add_option("--variants", variants_csv,
                        "Comma list: factual,factual-empty,ood,ood-empty,"
                        "counterfactual-full,degree-sweep");
        cmd->add_option("--sweep-levels", levels_csv, "Comma list of counterfactuality degrees");
        cmd->add_option("--sweep-per-level", config.sweep.per_level, "Guidelines sampled per degree");
        cmd->add_flag("--sweep-balanced", config.sweep.balanced,
                      "Balance which concepts move across sampled guidelines");
        cmd->add_option("--ood-words", config.ood_words_path, "OOD word list file");
        cmd->add_option("--ood-seed", ood_seed, "Permute the OOD word assignment (>= 0)");
        cmd->add_option("--refusal-phrases", config.refusal_phrases_path, "Refusal phrase file");
        if (needs_out_dir) {
            cmd->add_option("--out-dir", config.out_dir, "Run directory")->required();
        }
    }

    ExperimentConfig resolve() {
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            if (a == std::string::npos) return std::string{};
            return s.substr(a, s.find_last_not_of(" \t") - a + 1);
        };
        std::stringstream vs(variants_csv);
        std::string token;
        config.variants.clear();
        while (std::getline(vs, token, ',')) {
            if (!trim(token).empty()) config.variants.push_back(trim(token));
        }
        if (!levels_csv.empty()) {
            std::stringstream ls(levels_csv);
            config.sweep.levels.clear();
            while (std::getline(ls, token, ',')) {
                if (!trim(token).empty()) config.sweep.levels.push_back(std::stoul(trim(token)));
            }
        }
        if (ood_seed >= 0) config.ood_seed = static_cast<std::uint64_t>(ood_seed);
        return config;
    }
};

struct BackendFlags {
    std::string backend = "mock:guideline_follower";
    std::string model = "mock";
    std::string base_url;
    std::string family = "chat-api";
    int parallelism = 1;
    std::string cache_dir;
    std::uint64_t mock_seed = 0;
    bool greedy = false;
    int retry_attempts = 3;
    int retry_backoff_ms = 1000;

    void attach(CLI::App* cmd) {
        cmd->add_option("--backend", backend,
                        "chat-endpoint | text-endpoint | mock:<policy> (policies: "
                        "guideline_follower, prior_biased, refuser, uniform_random)");
        cmd->add_option("--model", model, "Model name sent to the endpoint");
        cmd->add_option("--base-url", base_url, "Endpoint base URL, e.g. http://localhost:8000");
        cmd->add_option("--family", family, "Prompt family: llama2-chat | falcon-chat | chat-api");
        cmd->add_option("--parallelism", parallelism, "Max in-flight requests");
        cmd->add_option("--cache-dir", cache_dir, "Response cache directory");
        cmd->add_option("--mock-seed", mock_seed, "Seed for the uniform_random mock");
        cmd->add_flag("--greedy", greedy, "Temperature 0 for deterministic live runs");
        cmd->add_option("--retry-attempts", retry_attempts, "Max attempts per request");
        cmd->add_option("--retry-backoff-ms", retry_backoff_ms, "Initial retry backoff");
    }

    BackendConfig resolve() const {
        BackendConfig cfg;
        cfg.family = family_from_string(family);
        cfg.params = default_params(cfg.family);
        if (backend == "chat-endpoint") {
            cfg.kind = BackendKind::chat_endpoint;
        } else if (backend == "text-endpoint") {
            cfg.kind = BackendKind::text_endpoint;
        } else if (backend.rfind("mock:", 0) == 0) {
            cfg.kind = BackendKind::mock;
            cfg.mock_policy = mock_policy_from_string(backend.substr(5));
        } else {
            throw BackendError("config", "unknown backend '" + backend + "'");
        }
        if (cfg.kind != BackendKind::mock && base_url.empty()) {
            throw BackendError("config", "endpoint backends need --base-url");
        }
        cfg.base_url = base_url;
        cfg.model_name = model;
        cfg.parallelism = parallelism;
        cfg.cache_dir = cache_dir;
        cfg.mock_seed = mock_seed;
        cfg.retry.max_attempts = retry_attempts;
        cfg.retry.initial_backoff_ms = retry_backoff_ms;
        if (greedy) cfg.params.temperature = 0.0;
        return cfg;
    }
};

ordered_json agree_to_json(const AgreeReport& report) {
    ordered_json j;
    ordered_json per = ordered_json::object();
    for (const auto& [name, kappa] : report.per_annotator) {
        ordered_json entry;
        if (kappa) {
            entry["kappa"] = *kappa;
        } else {
            entry["kappa"] = nullptr;
        }
        entry["n_items"] = report.per_annotator_items.at(name);
        per[name] = std::move(entry);
    }
    j["per_annotator"] = std::move(per);
    if (report.average) {
        j["average"] = *report.average;
    } else {
        j["average"] = nullptr;
    }
    ordered_json pw = ordered_json::object();
    for (const auto& [pair, kappa] : report.pairwise_weighted) {
        if (kappa) {
            pw[pair] = *kappa;
        } else {
            pw[pair] = nullptr;
        }
    }
    j["pairwise_weighted"] = std::move(pw);
    j["n_items"] = report.n_items;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Factual/counterfactual concept-guideline evaluation for chat models"};
    app.require_subcommand(1);

    // --- guidelines ---
    auto* cmd_guidelines = app.add_subcommand("guidelines", "Generate or enumerate guidelines");
    std::string g_scheme, g_def_set = "model-generated", g_variant = "factual";
    std::string g_ood_words, g_out;
    std::size_t g_degree = 0, g_count = 0;
    std::uint64_t g_seed = 0;
    std::int64_t g_ood_seed = -1;
    bool g_balanced = false;
    cmd_guidelines->add_option("--scheme", g_scheme)->required();
    cmd_guidelines->add_option("--def-set", g_def_set);
    cmd_guidelines->add_option("--variant", g_variant,
                               "factual | factual-empty | ood | ood-empty | counterfactual");
    cmd_guidelines->add_option("--degree", g_degree, "Counterfactuality degree");
    cmd_guidelines->add_option("--count", g_count, "Sample size (0 = enumerate all at the degree)");
    cmd_guidelines->add_option("--seed", g_seed);
    cmd_guidelines->add_option("--ood-words", g_ood_words);
    cmd_guidelines->add_option("--ood-seed", g_ood_seed);
    cmd_guidelines->add_flag("--balanced", g_balanced, "Balance moved concepts when sampling");
    cmd_guidelines->add_option("--out", g_out, "Output guidelines JSON")->required();

    // --- plan ---
    auto* cmd_plan = app.add_subcommand("plan", "Write a run directory for an experiment");
    PlanFlags plan_flags;
    plan_flags.attach(cmd_plan, /*needs_out_dir=*/true);

    // --- run ---
    auto* cmd_run = app.add_subcommand("run", "Execute pending tasks of a planned run");
    std::string run_dir;
    bool run_resume = false;
    std::size_t run_limit = 0;
    BackendFlags backend_flags;
    cmd_run->add_option("--plan", run_dir, "Run directory written by plan")->required();
    cmd_run->add_flag("--resume", run_resume, "Continue from existing records");
    cmd_run->add_option("--limit", run_limit, "Stop after N newly executed tasks (testing)");
    backend_flags.attach(cmd_run);

    // --- score ---
    auto* cmd_score = app.add_subcommand("score", "Score a records file");
    std::string score_records, score_guidelines, score_out;
    cmd_score->add_option("--records", score_records)->required();
    cmd_score->add_option("--guidelines", score_guidelines)->required();
    cmd_score->add_option("--out-dir", score_out)->required();

    // --- agree ---
    auto* cmd_agree = app.add_subcommand("agree", "Model vs human annotator agreement");
    std::string agree_records, agree_annotations, agree_out;
    bool agree_weighted = false;
    cmd_agree->add_option("--records", agree_records)->required();
    cmd_agree->add_option("--annotations", agree_annotations)->required();
    cmd_agree->add_flag("--weighted", agree_weighted, "Include pairwise human weighted kappa");
    cmd_agree->add_option("--out", agree_out, "Write the report here instead of stdout");

    // --- dump-prompts ---
    auto* cmd_dump = app.add_subcommand("dump-prompts", "Write every wrapped payload to files");
    PlanFlags dump_flags;
    std::string dump_family = "chat-api", dump_dir;
    dump_flags.attach(cmd_dump, /*needs_out_dir=*/false);
    cmd_dump->add_option("--family", dump_family);
    cmd_dump->add_option("--dump-prompts", dump_dir, "Output directory")->required();

    // --- verify-assets ---
    auto* cmd_verify = app.add_subcommand("verify-assets", "Check the shipped data bundle");
    std::string assets_dir = "assets";
    cmd_verify->add_option("--assets", assets_dir, "Assets directory (default: assets)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_guidelines->parsed()) {
            const ConceptScheme scheme = load_scheme(g_scheme);
            std::vector<Guideline> out;
            const Guideline factual = factual_guideline(scheme, g_def_set);
            if (g_variant == "factual") {
                out.push_back(factual);
            } else if (g_variant == "factual-empty") {
                out.push_back(empty_definitions(factual));
            } else if (g_variant == "ood" || g_variant == "ood-empty") {
                if (g_ood_words.empty()) throw GuidelineError("--ood-words is required for OOD variants");
                const auto words = load_ood_words(g_ood_words);
                std::optional<std::uint64_t> seed;
                if (g_ood_seed >= 0) seed = static_cast<std::uint64_t>(g_ood_seed);
                Guideline ood = substitute_ood(factual, words, seed);
                out.push_back(g_variant == "ood" ? ood : empty_definitions(ood));
            } else if (g_variant == "counterfactual") {
                if (g_degree < 2) throw GuidelineError("--degree >= 2 is required for counterfactual");
                if (g_count == 0) {
                    for (const auto& perm : enumerate_by_degree(scheme.labels.size(), g_degree)) {
                        out.push_back(counterfactual_guideline(scheme, g_def_set, perm));
                    }
                } else {
                    out = sample_by_degree(scheme, g_def_set, g_degree, g_count, g_seed, g_balanced);
                }
            } else {
                throw GuidelineError("unknown variant '" + g_variant + "'");
            }
            save_guidelines(g_out, out);
            std::cout << "wrote " << out.size() << " guideline(s) to " << g_out << "\n";
        } else if (cmd_plan->parsed()) {
            const RunManifest manifest = plan(plan_flags.resolve());
            std::cout << "planned " << manifest.tasks.size() << " tasks (config "
                      << manifest.config_hash << ") in " << plan_flags.config.out_dir << "\n";
        } else if (cmd_run->parsed()) {
            const RunSummary summary = run(run_dir, backend_flags.resolve(), run_resume, run_limit);
            std::cout << "tasks: " << summary.total_tasks << " total, " << summary.already_done
                      << " resumed, " << summary.executed << " executed, " << summary.failed
                      << " failed\n";
            for (const auto& f : summary.failures) std::cerr << "failed: " << f << "\n";
            if (summary.failed > 0) return 2;
        } else if (cmd_score->parsed()) {
            const ScoreReport report = score_files(score_records, score_guidelines, score_out);
            std::cout << "records: " << report.n_records << "\n"
                      << "accuracy: " << report.overall.point << " [" << report.overall.ci95.lo
                      << ", " << report.overall.ci95.hi << "]\n"
                      << "refusal_rate: " << report.refusal_rate
                      << "  unparsed_rate: " << report.unparsed_rate << "\n";
            if (report.pearson_r) {
                std::cout << "pearson_r: " << *report.pearson_r << "\n";
            } else {
                std::cout << "pearson_r: undefined\n";
            }
            std::cout << "report written to " << score_out << "\n";
        } else if (cmd_agree->parsed()) {
            const AgreeReport report = agree(agree_records, agree_annotations, agree_weighted);
            const std::string text = agree_to_json(report).dump(2) + "\n";
            if (agree_out.empty()) {
                std::cout << text;
            } else {
                std::ofstream out(agree_out, std::ios::binary | std::ios::trunc);
                out << text;
                std::cout << "agreement report written to " << agree_out << "\n";
            }
        } else if (cmd_dump->parsed()) {
            dump_prompts(dump_flags.resolve(), family_from_string(dump_family), dump_dir);
            std::cout << "prompts written to " << dump_dir << "\n";
        } else if (cmd_verify->parsed()) {
            const auto violations = verify_assets(assets_dir);
            if (violations.empty()) {
                std::cout << "assets ok\n";
            } else {
                for (const auto& v : violations) std::cerr << "violation: " << v << "\n";
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
