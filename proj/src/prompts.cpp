#include "gprobe/prompts.hpp"

#include <json.hpp>

namespace gprobe {

namespace {
constexpr const char* kGuidelineHeader = "Consider the following concept categories:";
constexpr const char* kTaskInstruction =
    "Classify the text below into one of the categories listed above. "
    "Be concise and write only the category name.";
}  // namespace

std::string to_string(Family f) {
    switch (f) {
        case Family::llama2_chat: return "llama2-chat";
        case Family::falcon_chat: return "falcon-chat";
        case Family::chat_api: return "chat-api";
    }
    return "?";
}

Family family_from_string(const std::string& s) {
    if (s == "llama2-chat") return Family::llama2_chat;
    if (s == "falcon-chat") return Family::falcon_chat;
    if (s == "chat-api") return Family::chat_api;
    throw PromptError("unknown model family '" + s + "'");
}

std::string render_guideline_prompt(const Guideline& g, const ConceptScheme& scheme) {
    if (g.scheme_name != scheme.domain_name) {
        throw PromptError("guideline scheme '" + g.scheme_name + "' does not match scheme '" +
                          scheme.domain_name + "'");
    }
    const auto& defs = scheme.definitions(g.def_set);
    if (defs.size() != g.display_labels.size()) {
        throw PromptError("definition set '" + g.def_set + "' does not match guideline size");
    }

    std::string out = kGuidelineHeader;
    for (std::size_t pos = 0; pos < g.display_labels.size(); ++pos) {
        out += "\n- ";
        out += g.display_labels[pos];
        out += ":";
        if (!g.is_empty_variant()) {
            out += " ";
            out += defs[g.assignment[pos]];
        }
    }
    return out;
}

std::string render_task_prompt(const std::string& sentence, const std::string& domain_token) {
    if (sentence.empty()) throw PromptError("cannot render a task prompt for an empty sentence");
    std::string out = kTaskInstruction;
    out += "\n\nText: ";
    out += sentence;
    out += "\n";
    if (!domain_token.empty()) {
        out += domain_token;
        out += " ";
    }
    out += "Concept:";
    return out;
}

PromptBundle wrap_prompt(Family family, const std::string& guideline_text,
                         const std::string& task_text, const std::string& falcon_instruction) {
    PromptBundle bundle;
    bundle.guideline_text = guideline_text;
    bundle.task_text = task_text;
    bundle.family = family;

    switch (family) {
        case Family::llama2_chat:
            bundle.wrapped = "[INST] " + guideline_text + "\n\n" + task_text + " [/INST]";
            break;
        case Family::falcon_chat: {
            // The {instruction} slot is rendered empty by default; the doubled
            // space collapses when it is.
            std::string head = "User: ";
            if (!falcon_instruction.empty()) head += falcon_instruction + " ";
            bundle.wrapped = head + guideline_text + "\n\n" + task_text + "\nFalcon:";
            break;
        }
        case Family::chat_api: {
            bundle.messages.push_back({"user", guideline_text + "\n\n" + task_text});
            nlohmann::ordered_json arr = nlohmann::ordered_json::array();
            for (const auto& m : bundle.messages) {
                arr.push_back({{"role", m.role}, {"content", m.content}});
            }
            bundle.wrapped = arr.dump();
            break;
        }
    }
    return bundle;
}

PromptBundle build_prompt(const Guideline& g, const ConceptScheme& scheme,
                          const std::string& sentence, Family family) {
    return wrap_prompt(family, render_guideline_prompt(g, scheme),
                       render_task_prompt(sentence, scheme.domain_prompt_token),
                       scheme.falcon_instruction);
}

}  // namespace gprobe
