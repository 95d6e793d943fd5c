#include <doctest.h>

#include "gprobe/assets.hpp"
#include "gprobe/prompts.hpp"
#include "test_util.hpp"

using namespace gprobe;

namespace {

ConceptScheme scientific() {
    return load_scheme(testutil::assets_dir() / "schemes" / "scientific.json");
}

ConceptScheme financial() {
    return load_scheme(testutil::assets_dir() / "schemes" / "financial.json");
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

}  // namespace

TEST_CASE("factual guideline prompt lists label: definition pairs") {
    const auto s = scientific();
    const std::string text = render_guideline_prompt(factual_guideline(s, "model-generated"), s);
    const auto lines = split_lines(text);
    REQUIRE(lines.size() == 6);
    CHECK(lines[0] == "Consider the following concept categories:");
    CHECK(lines[1].rfind("- Background: A sentence that provides context, foundational knowledge", 0) ==
          0);
    CHECK(lines[5].rfind("- Conclusion: A sentence that summarizes the key takeaways", 0) == 0);
}

TEST_CASE("empty-definition prompts keep the bare colon") {
    const auto s = financial();
    const Guideline g = empty_definitions(factual_guideline(s, "model-generated"));
    const auto lines = split_lines(render_guideline_prompt(g, s));
    REQUIRE(lines.size() == 7);
    CHECK(lines[1] == "- Financial:");
    CHECK(lines[5] == "- Social and relationship:");
    CHECK(lines[6] == "- Natural:");
}

TEST_CASE("counterfactual prompts relocate definitions, not labels") {
    const auto s = scientific();
    const Guideline swap = counterfactual_guideline(s, "model-generated", {0, 1, 2, 4, 3});
    const auto lines = split_lines(render_guideline_prompt(swap, s));
    // The Result line now carries the Conclusion definition.
    CHECK(lines[4].rfind("- Result: A sentence that summarizes the key takeaways", 0) == 0);
    CHECK(lines[5].rfind("- Conclusion: A sentence that presents the empirical findings", 0) == 0);
}

TEST_CASE("task prompt carries the domain token") {
    const std::string sci = render_task_prompt("An example sentence.", "Scientific");
    const auto sci_lines = split_lines(sci);
    CHECK(sci_lines.front() ==
          "Classify the text below into one of the categories listed above. Be concise and write "
          "only the category name.");
    CHECK(sci_lines[1].empty());
    CHECK(sci_lines[2] == "Text: An example sentence.");
    CHECK(sci_lines.back() == "Scientific Concept:");

    const std::string fin = render_task_prompt("An example sentence.", "");
    CHECK(split_lines(fin).back() == "Concept:");

    CHECK_THROWS_AS(render_task_prompt("", "Scientific"), PromptError);
}

TEST_CASE("family wrappers") {
    const PromptBundle llama = wrap_prompt(Family::llama2_chat, "G-TEXT", "T-TEXT");
    CHECK(llama.wrapped == "[INST] G-TEXT\n\nT-TEXT [/INST]");

    const PromptBundle falcon = wrap_prompt(Family::falcon_chat, "G-TEXT", "T-TEXT");
    CHECK(falcon.wrapped == "User: G-TEXT\n\nT-TEXT\nFalcon:");

    const PromptBundle falcon_instr = wrap_prompt(Family::falcon_chat, "G", "T", "Do the task.");
    CHECK(falcon_instr.wrapped == "User: Do the task. G\n\nT\nFalcon:");

    const PromptBundle chat = wrap_prompt(Family::chat_api, "G-TEXT", "T-TEXT");
    REQUIRE(chat.messages.size() == 1);
    CHECK(chat.messages[0].role == "user");
    CHECK(chat.messages[0].content == "G-TEXT\n\nT-TEXT");
    CHECK(chat.wrapped == R"([{"role":"user","content":"G-TEXT\n\nT-TEXT"}])");

    CHECK_THROWS_AS(family_from_string("mistral"), PromptError);
}

TEST_CASE("wrapped llama payload starts with the guideline header") {
    const auto s = scientific();
    const PromptBundle bundle = build_prompt(factual_guideline(s, "model-generated"), s,
                                             "A sentence.", Family::llama2_chat);
    CHECK(bundle.wrapped.rfind("[INST] Consider the following", 0) == 0);
}

TEST_CASE("golden payloads match byte for byte") {
    const auto s = scientific();
    const Guideline factual = factual_guideline(s, "model-generated");
    const Guideline empty = empty_definitions(factual);
    const Guideline cf = counterfactual_guideline(s, "model-generated",
                                                  kGoldenCounterfactualAssignment);
    const std::vector<std::pair<std::string, Guideline>> variants{
        {"factual", factual}, {"factual_empty", empty}, {"counterfactual", cf}};
    for (Family family : {Family::llama2_chat, Family::falcon_chat, Family::chat_api}) {
        for (const auto& [tag, g] : variants) {
            const auto file =
                testutil::assets_dir() / "golden" / (to_string(family) + "_" + tag + ".txt");
            const std::string expected = testutil::slurp(file);
            REQUIRE_FALSE(expected.empty());
            const PromptBundle bundle = build_prompt(g, s, kGoldenSentence, family);
            CHECK_MESSAGE(bundle.wrapped == expected, "mismatch for ", file.string());
        }
    }
}

TEST_CASE("distinct guidelines render distinct guideline text") {
    const auto s = scientific();
    const Guideline factual = factual_guideline(s, "model-generated");
    const Guideline cf = counterfactual_guideline(s, "model-generated", {0, 1, 2, 4, 3});
    const Guideline cf2 = counterfactual_guideline(s, "model-generated", {1, 0, 2, 3, 4});
    const std::string a = render_guideline_prompt(factual, s);
    const std::string b = render_guideline_prompt(cf, s);
    const std::string c = render_guideline_prompt(cf2, s);
    CHECK(a != b);
    CHECK(a != c);
    CHECK(b != c);
}
