#include "gprobe/extraction.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace gprobe {

std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::label: return "label";
        case Outcome::refusal: return "refusal";
        case Outcome::unparsed: return "unparsed";
    }
    return "?";
}

Outcome outcome_from_string(const std::string& s) {
    if (s == "label") return Outcome::label;
    if (s == "refusal") return Outcome::refusal;
    if (s == "unparsed") return Outcome::unparsed;
    throw std::runtime_error("unknown outcome '" + s + "'");
}

std::string to_string(MatchRule r) {
    switch (r) {
        case MatchRule::none: return "none";
        case MatchRule::exact: return "exact";
        case MatchRule::unique_substring: return "unique-substring";
        case MatchRule::refusal_phrase: return "refusal-phrase";
    }
    return "?";
}

std::string normalize_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;
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

namespace {

// Trailing sentence punctuation is noise around a bare label ("Conclusion.").
std::string strip_terminal_punct(std::string s) {
    while (!s.empty()) {
        const char c = s.back();
        if (c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':' || c == ' ') {
            s.pop_back();
        } else {
            break;
        }
    }
    return s;
}

}  // namespace

bool detect_refusal(const std::string& raw, const std::vector<std::string>& phrases) {
    const std::string norm = normalize_text(raw);
    if (norm.empty()) return false;
    for (const auto& phrase : phrases) {
        const std::string p = normalize_text(phrase);
        if (!p.empty() && norm.find(p) != std::string::npos) return true;
    }
    return false;
}

Extraction extract_label(const std::string& raw, const Guideline& g,
                         const std::vector<std::string>& refusal_phrases) {
    Extraction ex;
    const std::string norm = strip_terminal_punct(normalize_text(raw));

    // 1. Exact match beats everything.
    for (std::size_t i = 0; i < g.display_labels.size(); ++i) {
        if (norm == normalize_label(g.display_labels[i])) {
            ex.outcome = Outcome::label;
            ex.display_label = g.display_labels[i];
            ex.span_begin = 0;
            ex.span_end = norm.size();
            ex.rule = MatchRule::exact;
            return ex;
        }
    }

    // 2. Unique-substring: exactly one display label occurring in the text is
    // the prediction; zero or several fall through (never a guess).
    std::size_t matches = 0;
    std::size_t match_index = 0;
    std::size_t match_pos = 0;
    for (std::size_t i = 0; i < g.display_labels.size(); ++i) {
        const std::string needle = normalize_label(g.display_labels[i]);
        if (needle.empty()) continue;
        const std::size_t pos = norm.find(needle);
        if (pos != std::string::npos) {
            ++matches;
            match_index = i;
            match_pos = pos;
        }
    }
    if (matches == 1) {
        ex.outcome = Outcome::label;
        ex.display_label = g.display_labels[match_index];
        ex.span_begin = match_pos;
        ex.span_end = match_pos + normalize_label(g.display_labels[match_index]).size();
        ex.rule = MatchRule::unique_substring;
        return ex;
    }

    // 3. Refusal phrases.
    if (detect_refusal(raw, refusal_phrases)) {
        ex.outcome = Outcome::refusal;
        ex.rule = MatchRule::refusal_phrase;
        return ex;
    }

    ex.outcome = Outcome::unparsed;
    ex.rule = MatchRule::none;
    return ex;
}

std::vector<std::string> load_refusal_phrases(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("refusal phrases file not found: " + path.string());
    std::vector<std::string> phrases;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        phrases.push_back(line);
    }
    return phrases;
}

}  // namespace gprobe
