#include "gprobe/concepts.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gprobe {

namespace {

using nlohmann::json;

std::string require_string(const json& j, const char* field, const std::string& origin) {
    if (!j.contains(field) || !j[field].is_string()) {
        throw SchemeError(origin + ": missing or non-string field '" + std::string(field) + "'");
    }
    return j[field].get<std::string>();
}

}  // namespace

std::string normalize_label(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;  // leading whitespace is dropped
    for (char ch : s) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

const std::vector<std::string>& ConceptScheme::definitions(const std::string& set_name) const {
    auto it = definition_sets.find(set_name);
    if (it == definition_sets.end()) {
        throw SchemeError("scheme '" + domain_name + "': unknown definition set '" + set_name + "'");
    }
    return it->second;
}

bool ConceptScheme::has_definition_set(const std::string& set_name) const {
    return definition_sets.find(set_name) != definition_sets.end();
}

std::optional<std::size_t> ConceptScheme::label_index(std::string_view label) const {
    const std::string norm = normalize_label(label);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (normalize_label(labels[i]) == norm) return i;
    }
    return std::nullopt;
}

std::optional<std::string> ConceptScheme::resolve_label(std::string_view dataset_label) const {
    if (auto idx = label_index(dataset_label)) return labels[*idx];
    const std::string norm = normalize_label(dataset_label);
    for (const auto& [alias, target] : label_aliases) {
        if (normalize_label(alias) == norm) {
            if (auto idx = label_index(target)) return labels[*idx];
            return std::nullopt;  // alias points at a non-label; caught by validate
        }
    }
    return std::nullopt;
}

ConceptScheme scheme_from_json_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemeError(origin + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw SchemeError(origin + ": top level must be an object");

    ConceptScheme scheme;
    scheme.domain_name = require_string(j, "domain_name", origin);
    scheme.domain_prompt_token = require_string(j, "domain_prompt_token", origin);
    if (j.contains("falcon_instruction")) {
        if (!j["falcon_instruction"].is_string()) {
            throw SchemeError(origin + ": field 'falcon_instruction' must be a string");
        }
        scheme.falcon_instruction = j["falcon_instruction"].get<std::string>();
    }

    if (!j.contains("labels") || !j["labels"].is_array()) {
        throw SchemeError(origin + ": missing or non-array field 'labels'");
    }
    for (const auto& item : j["labels"]) {
        if (!item.is_string()) throw SchemeError(origin + ": field 'labels' must contain strings");
        scheme.labels.push_back(item.get<std::string>());
    }

    if (!j.contains("definition_sets") || !j["definition_sets"].is_object()) {
        throw SchemeError(origin + ": missing or non-object field 'definition_sets'");
    }
    for (const auto& [name, defs] : j["definition_sets"].items()) {
        if (!defs.is_array()) {
            throw SchemeError(origin + ": definition set '" + name + "' must be an array");
        }
        std::vector<std::string> out;
        for (const auto& d : defs) {
            if (!d.is_string()) {
                throw SchemeError(origin + ": definition set '" + name + "' must contain strings");
            }
            out.push_back(d.get<std::string>());
        }
        scheme.definition_sets.emplace(name, std::move(out));
    }

    if (j.contains("label_aliases")) {
        if (!j["label_aliases"].is_object()) {
            throw SchemeError(origin + ": field 'label_aliases' must be an object");
        }
        for (const auto& [alias, target] : j["label_aliases"].items()) {
            if (!target.is_string()) {
                throw SchemeError(origin + ": alias '" + alias + "' must map to a string");
            }
            scheme.label_aliases.emplace(alias, target.get<std::string>());
        }
    }

    const auto violations = validate_scheme(scheme);
    if (!violations.empty()) {
        std::ostringstream oss;
        oss << origin << ": invalid scheme:";
        for (const auto& v : violations) oss << "\n  - " << v;
        throw SchemeError(oss.str());
    }
    return scheme;
}

ConceptScheme load_scheme(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemeError("scheme file not found: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return scheme_from_json_text(buf.str(), path.string());
}

std::vector<std::string> validate_scheme(const ConceptScheme& scheme) {
    std::vector<std::string> violations;
    if (scheme.domain_name.empty()) violations.push_back("domain_name is empty");
    if (scheme.labels.size() < 2) violations.push_back("scheme needs >=2 labels");

    std::set<std::string> seen;
    for (const auto& label : scheme.labels) {
        const std::string norm = normalize_label(label);
        if (norm.empty()) {
            violations.push_back("empty label");
            continue;
        }
        if (!seen.insert(norm).second) violations.push_back("duplicate label '" + label + "'");
    }

    for (const auto& [name, defs] : scheme.definition_sets) {
        if (defs.size() != scheme.labels.size()) {
            violations.push_back("definition set '" + name + "' length mismatch: " +
                                 std::to_string(defs.size()) + " definitions for " +
                                 std::to_string(scheme.labels.size()) + " labels");
        }
    }

    for (const auto& [alias, target] : scheme.label_aliases) {
        bool found = false;
        for (const auto& label : scheme.labels) {
            if (normalize_label(label) == normalize_label(target)) found = true;
        }
        if (!found) violations.push_back("alias '" + alias + "' targets unknown label '" + target + "'");
    }
    return violations;
}

}  // namespace gprobe
