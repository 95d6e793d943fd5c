#include "gprobe/corpus.hpp"

#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

namespace gprobe {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

json parse_line(const std::string& line, const std::string& origin, std::size_t line_no) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw CorpusError(origin + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
}

std::string get_string(const json& j, const char* field, const std::string& where) {
    if (!j.contains(field) || !j[field].is_string()) {
        throw CorpusError(where + ": missing or non-string field '" + std::string(field) + "'");
    }
    return j[field].get<std::string>();
}

}  // namespace

std::vector<Sentence> load_sentences(const std::filesystem::path& path, const ConceptScheme& scheme) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("sentence file not found: " + path.string());

    std::vector<Sentence> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const json j = parse_line(line, path.string(), line_no);

        Sentence s;
        s.id = get_string(j, "id", where);
        s.text = get_string(j, "text", where);
        const std::string raw_label = get_string(j, "label", where);
        s.source = j.value("source", std::string{});
        s.domain = j.value("domain", std::string{});

        if (s.text.empty()) throw CorpusError(where + ": empty text for id '" + s.id + "'");
        if (!ids.insert(s.id).second) throw CorpusError(where + ": duplicate id '" + s.id + "'");

        const auto resolved = scheme.resolve_label(raw_label);
        if (!resolved) {
            throw CorpusError(where + ": unknown label '" + raw_label + "' for scheme '" +
                              scheme.domain_name + "'");
        }
        s.gold_label = *resolved;
        out.push_back(std::move(s));
    }
    return out;
}

void save_sentences(const std::filesystem::path& path, std::span<const Sentence> sentences) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CorpusError("cannot write sentence file: " + path.string());
    for (const auto& s : sentences) {
        ordered_json j;
        j["id"] = s.id;
        j["text"] = s.text;
        j["label"] = s.gold_label;
        j["source"] = s.source;
        j["domain"] = s.domain;
        out << j.dump() << "\n";
    }
}

std::vector<Sentence> balanced_sample(std::span<const Sentence> sentences,
                                      const ConceptScheme& scheme, std::size_t per_class,
                                      std::uint64_t seed) {
    if (per_class == 0) throw CorpusError("per-class sample size must be >= 1");

    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < sentences.size(); ++i) by_label[sentences[i].gold_label].push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<Sentence> out;
    out.reserve(per_class * scheme.labels.size());
    // Labels are processed in scheme order so the draw sequence is stable.
    for (const auto& label : scheme.labels) {
        auto it = by_label.find(label);
        const std::size_t have = (it == by_label.end()) ? 0 : it->second.size();
        if (have < per_class) {
            throw CorpusError("label '" + label + "' has " + std::to_string(have) +
                              " sentences, need " + std::to_string(per_class) + " (short by " +
                              std::to_string(per_class - have) + ")");
        }
        auto& pool = it->second;
        for (std::size_t i = 0; i < per_class; ++i) {
            std::uniform_int_distribution<std::size_t> dist(i, pool.size() - 1);
            std::swap(pool[i], pool[dist(rng)]);
            out.push_back(sentences[pool[i]]);
        }
    }
    // Deterministic output shuffle so per-label blocks do not reach the
    // backend in gold order.
    for (std::size_t i = out.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> dist(0, i - 1);
        std::swap(out[i - 1], out[dist(rng)]);
    }
    return out;
}

std::vector<AnnotationItem> load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("annotation file not found: " + path.string());

    std::vector<AnnotationItem> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const json j = parse_line(line, path.string(), line_no);

        AnnotationItem item;
        item.id = get_string(j, "id", where);
        item.text = j.value("text", std::string{});
        if (!ids.insert(item.id).second) throw CorpusError(where + ": duplicate id '" + item.id + "'");

        if (!j.contains("annotators") || !j["annotators"].is_object()) {
            throw CorpusError(where + ": missing or non-object field 'annotators'");
        }
        for (const auto& [name, labels] : j["annotators"].items()) {
            if (!labels.is_array()) {
                throw CorpusError(where + ": annotator '" + name + "' must map to an array");
            }
            std::vector<std::string> set;
            for (const auto& l : labels) set.push_back(l.get<std::string>());
            if (set.size() > 2) {
                throw CorpusError(where + ": annotator '" + name + "' assigned " +
                                  std::to_string(set.size()) + " labels; at most two are allowed");
            }
            item.annotators.emplace(name, std::move(set));
        }
        out.push_back(std::move(item));
    }
    return out;
}

}  // namespace gprobe
