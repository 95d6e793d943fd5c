#pragma once
// Turns raw model output into a structured outcome: a display label, a
// refusal, or unparsed. The pipeline, in order: exact match against the
// guideline's display labels, unique-substring match, refusal-phrase match,
// otherwise unparsed. All matching happens on normalized text (lowercase,
// trimmed, internal whitespace collapsed) and is total and deterministic.

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gprobe/guidelines.hpp"

namespace gprobe {

enum class Outcome { label, refusal, unparsed };

std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

enum class MatchRule { none, exact, unique_substring, refusal_phrase };

std::string to_string(MatchRule r);

struct Extraction {
    Outcome outcome = Outcome::unparsed;
    // Set when outcome == label: the matched display label (guideline spelling).
    std::string display_label;
    // Character range of the match in the normalized raw text.
    std::size_t span_begin = 0;
    std::size_t span_end = 0;
    MatchRule rule = MatchRule::none;
};

// Lowercase + trim + collapse internal whitespace.
std::string normalize_text(std::string_view s);

Extraction extract_label(const std::string& raw, const Guideline& g,
                         const std::vector<std::string>& refusal_phrases);

// True iff any phrase (normalized) is a substring of the normalized raw text.
bool detect_refusal(const std::string& raw, const std::vector<std::string>& phrases);

// One phrase per line, UTF-8; '#' starts a comment line; blanks are skipped.
std::vector<std::string> load_refusal_phrases(const std::filesystem::path& path);

}  // namespace gprobe
