#include "gprobe/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "gprobe/hashing.hpp"

namespace gprobe {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw OrchestratorError("cannot read file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw OrchestratorError("cannot write file: " + path.string());
    out << content;
}

std::vector<std::string> load_ood_words_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw OrchestratorError("OOD word list not found: " + path.string());
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

ordered_json config_to_json(const ExperimentConfig& c) {
    ordered_json j;
    j["scheme_path"] = c.scheme_path;
    j["def_set"] = c.def_set;
    j["dataset_path"] = c.dataset_path;
    j["per_class"] = c.per_class;
    j["seed"] = c.seed;
    j["variants"] = c.variants;
    j["sweep"] = {{"levels", c.sweep.levels},
                  {"per_level", c.sweep.per_level},
                  {"balanced", c.sweep.balanced}};
    j["ood_words_path"] = c.ood_words_path;
    if (c.ood_seed) {
        j["ood_seed"] = *c.ood_seed;
    } else {
        j["ood_seed"] = nullptr;
    }
    j["refusal_phrases_path"] = c.refusal_phrases_path;
    return j;
}

struct PlanMaterial {
    ConceptScheme scheme;
    std::vector<Sentence> sample;
    std::vector<Guideline> guidelines;
};

PlanMaterial build_plan_material(const ExperimentConfig& config) {
    PlanMaterial mat;
    mat.scheme = load_scheme(config.scheme_path);

    const auto all = load_sentences(config.dataset_path, mat.scheme);
    if (config.per_class > 0) {
        mat.sample = balanced_sample(all, mat.scheme, config.per_class,
                                     derive_seed(config.seed, "sentence-sample"));
    } else {
        mat.sample = all;
    }
    if (mat.sample.empty()) throw OrchestratorError("experiment has no sentences");

    if (config.variants.empty()) throw OrchestratorError("experiment has no variants");
    const Guideline factual = factual_guideline(mat.scheme, config.def_set);
    for (const auto& variant : config.variants) {
        if (variant == kVariantFactual) {
            mat.guidelines.push_back(factual);
        } else if (variant == kVariantFactualEmpty) {
            mat.guidelines.push_back(empty_definitions(factual));
        } else if (variant == kVariantOod || variant == kVariantOodEmpty) {
            if (config.ood_words_path.empty()) {
                throw OrchestratorError("variant '" + variant + "' needs --ood-words");
            }
            const auto words = load_ood_words_file(config.ood_words_path);
            Guideline ood = substitute_ood(factual, words, config.ood_seed);
            mat.guidelines.push_back(variant == kVariantOod ? ood : empty_definitions(ood));
        } else if (variant == kVariantCounterfactualFull) {
            mat.guidelines.push_back(sample_full_derangement(
                mat.scheme, config.def_set, derive_seed(config.seed, "derangement")));
        } else if (variant == kVariantDegreeSweep) {
            if (config.sweep.levels.empty()) {
                throw OrchestratorError("degree-sweep needs at least one level");
            }
            if (config.sweep.per_level == 0) {
                throw OrchestratorError("degree-sweep needs per-level >= 1");
            }
            for (std::size_t level : config.sweep.levels) {
                auto batch = sample_by_degree(mat.scheme, config.def_set, level,
                                              config.sweep.per_level,
                                              derive_seed(config.seed, "sweep", level),
                                              config.sweep.balanced);
                for (auto& g : batch) mat.guidelines.push_back(std::move(g));
            }
        } else {
            throw OrchestratorError("unknown variant '" + variant + "'");
        }
    }

    // Duplicate guidelines (e.g. the same variant listed twice) would break
    // the task keying; reject early.
    std::set<std::string> ids;
    for (const auto& g : mat.guidelines) {
        if (!ids.insert(g.id()).second) {
            throw OrchestratorError("duplicate guideline in plan: " + g.id());
        }
    }
    return mat;
}

void write_manifest(const fs::path& out_dir, const RunManifest& manifest) {
    ordered_json j;
    j["config_hash"] = manifest.config_hash;
    j["created_at"] = manifest.created_at;
    j["updated_at"] = manifest.updated_at;
    j["config"] = manifest.config;
    ordered_json tasks = ordered_json::array();
    for (const auto& t : manifest.tasks) {
        tasks.push_back({{"sentence_id", t.sentence_id},
                         {"guideline_id", t.guideline_id},
                         {"status", t.status}});
    }
    j["tasks"] = std::move(tasks);
    write_file(out_dir / kManifestFile, j.dump(2) + "\n");
}

std::string task_key(const std::string& sentence_id, const std::string& guideline_id) {
    return sentence_id + "\x1f" + guideline_id;
}

// Reads records, discarding a torn final line (a crash mid-append). A torn
// line is rewritten away by truncating the file to the last good newline.
std::vector<EvalRecord> load_records_tolerant(const fs::path& path) {
    std::string content = read_file(path);
    std::size_t good_end = 0;
    std::size_t pos = 0;
    std::vector<EvalRecord> records;
    while (pos < content.size()) {
        const std::size_t nl = content.find('\n', pos);
        if (nl == std::string::npos) break;  // no newline: torn tail
        const std::string line = content.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) {
            good_end = pos;
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            break;  // treat anything from here on as torn
        }
        EvalRecord r;
        try {
            r.sentence_id = j.at("sentence_id").get<std::string>();
            r.guideline_id = j.at("guideline_id").get<std::string>();
            r.variant = variant_from_string(j.at("variant").get<std::string>());
            r.degree = j.at("degree").get<std::size_t>();
            r.factual_gold = j.at("factual_gold").get<std::string>();
            r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
            if (!j["predicted_display"].is_null()) r.predicted_display = j["predicted_display"];
            if (!j["predicted_factual"].is_null()) r.predicted_factual = j["predicted_factual"];
            r.raw_text = j.value("raw_text", std::string{});
            r.from_cache = j.value("from_cache", false);
        } catch (const nlohmann::json::exception&) {
            break;
        }
        records.push_back(std::move(r));
        good_end = pos;
    }
    if (good_end != content.size()) {
        fs::resize_file(path, good_end);
    }
    return records;
}

}  // namespace

RunManifest plan(const ExperimentConfig& config) {
    if (config.out_dir.empty()) throw OrchestratorError("plan needs an output directory");
    PlanMaterial mat = build_plan_material(config);

    fs::create_directories(config.out_dir);
    const fs::path out_dir(config.out_dir);

    write_file(out_dir / kSchemeSnapshotFile, read_file(config.scheme_path));
    save_sentences(out_dir / kSampleFile, mat.sample);
    save_guidelines(out_dir / kGuidelinesFile, mat.guidelines);
    if (!config.refusal_phrases_path.empty()) {
        write_file(out_dir / kRefusalSnapshotFile, read_file(config.refusal_phrases_path));
    }

    RunManifest manifest;
    manifest.config = config_to_json(config);
    manifest.config_hash = to_hex64(fnv1a64(manifest.config.dump()));
    manifest.created_at = iso_timestamp();
    manifest.updated_at = manifest.created_at;
    for (const auto& g : mat.guidelines) {
        const std::string gid = g.id();
        for (const auto& s : mat.sample) {
            manifest.tasks.push_back({s.id, gid, "pending"});
        }
    }
    write_manifest(out_dir, manifest);
    return manifest;
}

RunManifest load_manifest(const fs::path& out_dir) {
    const fs::path path = out_dir / kManifestFile;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw OrchestratorError("manifest not found: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw OrchestratorError(path.string() + ": malformed manifest: " + e.what());
    }
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.created_at = j.value("created_at", std::string{});
    m.updated_at = j.value("updated_at", std::string{});
    m.config = j.at("config");
    for (const auto& t : j.at("tasks")) {
        m.tasks.push_back({t.at("sentence_id").get<std::string>(),
                           t.at("guideline_id").get<std::string>(),
                           t.value("status", "pending")});
    }
    return m;
}

RunSummary run(const fs::path& out_dir, const BackendConfig& backend, bool resume,
               std::size_t limit) {
    RunManifest manifest = load_manifest(out_dir);
    const ConceptScheme scheme = load_scheme(out_dir / kSchemeSnapshotFile);
    const auto guidelines = load_guidelines(out_dir / kGuidelinesFile);
    const auto sample = load_sentences(out_dir / kSampleFile, scheme);

    std::vector<std::string> refusal_phrases;
    if (fs::exists(out_dir / kRefusalSnapshotFile)) {
        refusal_phrases = load_refusal_phrases(out_dir / kRefusalSnapshotFile);
    }

    std::map<std::string, const Guideline*> guideline_by_id;
    for (const auto& g : guidelines) guideline_by_id[g.id()] = &g;
    std::map<std::string, const Sentence*> sentence_by_id;
    for (const auto& s : sample) sentence_by_id[s.id] = &s;

    const fs::path records_path = out_dir / kRecordsFile;
    std::set<std::string> done;
    if (fs::exists(records_path)) {
        if (!resume) {
            throw OrchestratorError("records already exist at " + records_path.string() +
                                    "; pass --resume to continue or remove the file");
        }
        for (const auto& r : load_records_tolerant(records_path)) {
            done.insert(task_key(r.sentence_id, r.guideline_id));
        }
    }

    RunSummary summary;
    summary.total_tasks = manifest.tasks.size();
    summary.already_done = done.size();

    // Pending tasks, in manifest order; `limit` caps how many run now.
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < manifest.tasks.size(); ++i) {
        if (!done.count(task_key(manifest.tasks[i].sentence_id, manifest.tasks[i].guideline_id))) {
            pending.push_back(i);
        } else {
            manifest.tasks[i].status = "done";
        }
    }
    if (limit > 0 && pending.size() > limit) pending.resize(limit);

    struct Slot {
        bool completed = false;
        bool failed = false;
        std::string error;
        EvalRecord record;
    };
    std::vector<Slot> slots(pending.size());

    std::ofstream records_out(records_path, std::ios::binary | std::ios::app);
    if (!records_out) throw OrchestratorError("cannot open records file: " + records_path.string());

    std::mutex flush_mutex;
    std::size_t next_to_flush = 0;
    // Records flush strictly in task order: a slot is written only once every
    // earlier slot has completed, so an interrupted run leaves a clean prefix.
    auto flush_ready = [&]() {
        std::lock_guard<std::mutex> lock(flush_mutex);
        while (next_to_flush < slots.size() && slots[next_to_flush].completed) {
            const Slot& slot = slots[next_to_flush];
            if (!slot.failed) {
                append_record(records_out, slot.record);
                records_out.flush();
            }
            ++next_to_flush;
        }
    };

    std::atomic<std::size_t> next_task{0};
    const int n_threads = std::max(1, std::min<int>(backend.parallelism,
                                                    static_cast<int>(pending.size())));
    auto worker = [&]() {
        for (;;) {
            const std::size_t idx = next_task.fetch_add(1);
            if (idx >= pending.size()) return;
            const TaskRef& task = manifest.tasks[pending[idx]];
            Slot& slot = slots[idx];
            try {
                auto git = guideline_by_id.find(task.guideline_id);
                if (git == guideline_by_id.end()) {
                    throw OrchestratorError("manifest references unknown guideline " + task.guideline_id);
                }
                auto sit = sentence_by_id.find(task.sentence_id);
                if (sit == sentence_by_id.end()) {
                    throw OrchestratorError("manifest references unknown sentence " + task.sentence_id);
                }
                const Guideline& g = *git->second;
                const Sentence& s = *sit->second;

                const PromptBundle bundle = build_prompt(g, scheme, s.text, backend.family);
                TaskContext ctx;
                ctx.guideline = &g;
                ctx.factual_gold = s.gold_label;
                const ModelOutput output = complete(backend, bundle, ctx);

                const Extraction ex = extract_label(output.raw_text, g, refusal_phrases);
                EvalRecord r;
                r.sentence_id = s.id;
                r.guideline_id = task.guideline_id;
                r.variant = g.variant;
                r.degree = g.degree;
                r.factual_gold = s.gold_label;
                r.outcome = ex.outcome;
                if (ex.outcome == Outcome::label) {
                    r.predicted_display = ex.display_label;
                    r.predicted_factual = remap_prediction(g, ex.display_label);
                }
                r.raw_text = output.raw_text;
                r.from_cache = output.from_cache;
                slot.record = std::move(r);
            } catch (const std::exception& e) {
                slot.failed = true;
                slot.error = e.what();
            }
            {
                std::lock_guard<std::mutex> lock(flush_mutex);
                slot.completed = true;
            }
            flush_ready();
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    flush_ready();

    for (std::size_t idx = 0; idx < pending.size(); ++idx) {
        auto& task = manifest.tasks[pending[idx]];
        if (slots[idx].failed) {
            task.status = "failed";
            ++summary.failed;
            summary.failures.push_back(task.sentence_id + " x " + task.guideline_id + ": " +
                                       slots[idx].error);
        } else {
            task.status = "done";
            ++summary.executed;
        }
    }
    manifest.updated_at = iso_timestamp();
    write_manifest(out_dir, manifest);
    return summary;
}

ScoreReport score_files(const fs::path& records_path, const fs::path& guidelines_path,
                        const fs::path& out_dir) {
    const auto records = load_records(records_path);
    const auto guidelines = load_guidelines(guidelines_path);
    std::map<std::string, Guideline> by_id;
    for (const auto& g : guidelines) by_id[g.id()] = g;
    for (const auto& r : records) {
        if (!by_id.count(r.guideline_id)) {
            throw OrchestratorError("record references guideline '" + r.guideline_id +
                                    "' missing from " + guidelines_path.string());
        }
    }

    const ScoreReport report = build_score_report(records, by_id);
    fs::create_directories(out_dir);

    auto accuracy_json = [](const AccuracyEstimate& a) {
        ordered_json j;
        j["point"] = a.point;
        j["ci95_lo"] = a.ci95.lo;
        j["ci95_hi"] = a.ci95.hi;
        j["n_correct"] = a.n_correct;
        j["n"] = a.n;
        return j;
    };

    ordered_json j;
    j["n_records"] = report.n_records;
    j["accuracy"] = accuracy_json(report.overall);
    ordered_json pv = ordered_json::object();
    for (const auto& [variant, est] : report.per_variant) pv[variant] = accuracy_json(est);
    j["per_variant"] = std::move(pv);
    ordered_json curve = ordered_json::array();
    for (const auto& p : report.curve) {
        curve.push_back({{"degree", p.degree},
                         {"mean", p.mean},
                         {"stddev", p.stddev},
                         {"n_guidelines", p.n_guidelines}});
    }
    j["degree_curve"] = std::move(curve);
    if (report.pearson_r) {
        j["pearson_r"] = *report.pearson_r;
    } else {
        j["pearson_r"] = nullptr;
    }
    j["refusal_rate"] = report.refusal_rate;
    j["unparsed_rate"] = report.unparsed_rate;
    j["random_baseline"] = report.random_baseline;

    ordered_json adherence;
    adherence["labels"] = report.adherence.labels;
    ordered_json rows = ordered_json::array();
    for (const auto& row : report.adherence.cells) {
        ordered_json cells = ordered_json::array();
        for (const auto& cell : row) {
            if (cell.support == 0) {
                cells.push_back(nullptr);
            } else {
                cells.push_back({{"value", cell.value()},
                                 {"adherent", cell.adherent},
                                 {"support", cell.support}});
            }
        }
        rows.push_back(std::move(cells));
    }
    adherence["cells"] = std::move(rows);
    j["adherence"] = std::move(adherence);
    write_file(out_dir / kReportFile, j.dump(2) + "\n");

    std::ostringstream curves;
    curves << "degree,mean,std\n";
    curves.precision(12);
    for (const auto& p : report.curve) {
        curves << p.degree << "," << p.mean << "," << p.stddev << "\n";
    }
    write_file(out_dir / kCurvesFile, curves.str());

    auto csv_quote = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string quoted = "\"";
        for (char c : s) {
            if (c == '"') quoted += "\"\"";
            else quoted += c;
        }
        quoted += "\"";
        return quoted;
    };
    std::ostringstream adh;
    adh << "row_label,col_label,value,support\n";
    adh.precision(12);
    for (std::size_t i = 0; i < report.adherence.labels.size(); ++i) {
        for (std::size_t jj = 0; jj < report.adherence.labels.size(); ++jj) {
            const auto& cell = report.adherence.cells[i][jj];
            if (cell.support == 0) continue;
            adh << csv_quote(report.adherence.labels[i]) << ","
                << csv_quote(report.adherence.labels[jj]) << "," << cell.value() << ","
                << cell.support << "\n";
        }
    }
    write_file(out_dir / kAdherenceFile, adh.str());
    return report;
}

AgreeReport agree(const fs::path& records_path, const fs::path& annotations_path,
                  bool include_weighted) {
    const auto records = load_records(records_path);
    const auto items = load_annotations(annotations_path);

    // Model label per item: factual-guideline predictions only.
    std::map<std::string, std::string> model_label;
    for (const auto& r : records) {
        if (r.variant != Variant::factual || r.outcome != Outcome::label) continue;
        model_label.emplace(r.sentence_id, r.predicted_factual);
    }

    // Keep items where at least one annotator assigned a concept.
    std::vector<const AnnotationItem*> kept;
    std::set<std::string> annotator_names;
    for (const auto& item : items) {
        bool any = false;
        for (const auto& [name, labels] : item.annotators) {
            annotator_names.insert(name);
            if (!labels.empty()) any = true;
        }
        if (any) kept.push_back(&item);
    }

    bool overlap = false;
    for (const auto* item : kept) {
        if (model_label.count(item->id)) overlap = true;
    }
    if (!overlap) {
        throw OrchestratorError("no overlap between model records and annotation items");
    }

    AgreeReport report;
    report.n_items = kept.size();

    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& name : annotator_names) {
        std::vector<std::pair<std::string, std::string>> pairs;
        for (const auto* item : kept) {
            auto mit = model_label.find(item->id);
            if (mit == model_label.end()) continue;
            auto ait = item->annotators.find(name);
            if (ait == item->annotators.end() || ait->second.empty()) continue;
            pairs.emplace_back(mit->second, ait->second.front());  // primary label
        }
        report.per_annotator_items[name] = pairs.size();
        if (pairs.size() >= 2) {
            report.per_annotator[name] = cohen_kappa(pairs);
        } else {
            report.per_annotator[name] = std::nullopt;
        }
        if (report.per_annotator[name]) {
            sum += *report.per_annotator[name];
            ++defined;
        }
    }
    if (defined > 0) report.average = sum / static_cast<double>(defined);

    if (include_weighted) {
        std::vector<std::string> names(annotator_names.begin(), annotator_names.end());
        for (std::size_t a = 0; a < names.size(); ++a) {
            for (std::size_t b = a + 1; b < names.size(); ++b) {
                std::vector<std::pair<LabelSet, LabelSet>> pairs;
                for (const auto* item : kept) {
                    auto ia = item->annotators.find(names[a]);
                    auto ib = item->annotators.find(names[b]);
                    LabelSet sa, sb;
                    if (ia != item->annotators.end()) sa.insert(ia->second.begin(), ia->second.end());
                    if (ib != item->annotators.end()) sb.insert(ib->second.begin(), ib->second.end());
                    pairs.emplace_back(std::move(sa), std::move(sb));
                }
                const std::string key = names[a] + "|" + names[b];
                report.pairwise_weighted[key] =
                    pairs.size() >= 2 ? weighted_kappa(pairs) : std::nullopt;
            }
        }
    }
    return report;
}

void dump_prompts(const ExperimentConfig& config, Family family, const fs::path& dump_dir) {
    PlanMaterial mat = build_plan_material(config);
    fs::create_directories(dump_dir);
    for (const auto& g : mat.guidelines) {
        const fs::path gdir = dump_dir / g.id();
        fs::create_directories(gdir);
        for (const auto& s : mat.sample) {
            const PromptBundle bundle = build_prompt(g, mat.scheme, s.text, family);
            write_file(gdir / (s.id + ".txt"), bundle.wrapped);
        }
    }
}

}  // namespace gprobe
