#pragma once
// Prompt assembly. Rendering is byte-exact: the guideline prompt lists one
// "- {label}: {definition}" line per concept, the task prompt carries the
// classification instruction, and wrapping produces the model-family payload.
// No system message is ever emitted.

#include <stdexcept>
#include <string>
#include <vector>

#include "gprobe/concepts.hpp"
#include "gprobe/guidelines.hpp"

namespace gprobe {

struct PromptError : std::runtime_error {
    explicit PromptError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Family { llama2_chat, falcon_chat, chat_api };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct ChatMessage {
    std::string role;
    std::string content;
};

struct PromptBundle {
    std::string guideline_text;
    std::string task_text;
    Family family = Family::chat_api;
    // Single-text payload for llama2-chat / falcon-chat; for chat-api this is
    // the canonical JSON dump of `messages` (also used for caching and dumps).
    std::string wrapped;
    // Populated for chat-api: exactly one user message.
    std::vector<ChatMessage> messages;
};

// Header "Consider the following concept categories:" plus one line per
// concept, "- {display_label}: {definition}" in display order. Empty-variant
// guidelines render "- {display_label}:" with the trailing colon retained.
std::string render_guideline_prompt(const Guideline& g, const ConceptScheme& scheme);

// Instruction line, blank line, "Text: {sentence}", then "{token} Concept:".
// An empty domain token yields "Concept:" with no leading space.
std::string render_task_prompt(const std::string& sentence, const std::string& domain_token);

PromptBundle wrap_prompt(Family family, const std::string& guideline_text,
                         const std::string& task_text, const std::string& falcon_instruction = "");

PromptBundle build_prompt(const Guideline& g, const ConceptScheme& scheme,
                          const std::string& sentence, Family family);

}  // namespace gprobe
