#include <doctest.h>
#include <filesystem>

#include <json.hpp>

#include "gprobe/assets.hpp"
#include "gprobe/concepts.hpp"
#include "test_util.hpp"

using namespace gprobe;
namespace fs = std::filesystem;

namespace {

void copy_assets(const fs::path& dst) {
    fs::copy(testutil::assets_dir(), dst, fs::copy_options::recursive);
}

}  // namespace

TEST_CASE("the pristine bundle verifies clean") {
    const auto violations = verify_assets(testutil::assets_dir());
    for (const auto& v : violations) MESSAGE(v);
    CHECK(violations.empty());
}

TEST_CASE("the OOD list ships the ten words in listed order") {
    const auto words = load_ood_words(testutil::assets_dir() / "ood_words.txt");
    CHECK(words == std::vector<std::string>{"Flibberknock", "Quibblesnatch", "Blibberflop",
                                            "Ziggledorf", "Snizzlewump", "Wobblequark",
                                            "Jibberplunk", "Crumblefluff", "Splonglewort",
                                            "Dinglewhack"});
}

TEST_CASE("definition texts are frozen") {
    const ConceptScheme sci = load_scheme(testutil::assets_dir() / "schemes" / "scientific.json");
    const auto& defs = sci.definitions("model-generated");
    CHECK(defs[0] ==
          "A sentence that provides context, foundational knowledge, or relevant information about "
          "the research topic, existing theories, prior studies, or the broader scientific field "
          "in which the research is situated. It helps readers understand the background against "
          "which the research is conducted.");
    CHECK(defs[1].rfind("A sentence that explains the reasons, objectives, or goals", 0) == 0);
    CHECK(defs[2].rfind("A sentence that describes the research methods, techniques", 0) == 0);
    CHECK(defs[3].rfind("A sentence that presents the empirical findings, outcomes", 0) == 0);
    CHECK(defs[4].rfind("A sentence that summarizes the key takeaways, implications", 0) == 0);

    const ConceptScheme fin = load_scheme(testutil::assets_dir() / "schemes" / "financial.json");
    const auto& fdefs = fin.definitions("model-generated");
    CHECK(fdefs[0] ==
          "A sentence that pertains to monetary resources, assets, liabilities, revenues, "
          "expenses, or any other financial information related to the company's operations, "
          "investments, and financial performance.");
    CHECK(fdefs[4].rfind("A sentence that deals with the company's relationships", 0) == 0);
    CHECK(fdefs[5].rfind("A sentence that addresses environmental resources", 0) == 0);
}

TEST_CASE("tampering is caught as violations, not crashes") {
    testutil::TempDir tmp("assets");
    const fs::path bundle = tmp.path / "assets";

    SUBCASE("a deleted definition row") {
        copy_assets(bundle);
        const fs::path scheme = bundle / "schemes" / "financial.json";
        auto j = nlohmann::json::parse(testutil::slurp(scheme));
        j["definition_sets"]["model-generated"].erase(5);
        testutil::spit(scheme, j.dump(2));
        const auto violations = verify_assets(bundle);
        bool found = false;
        for (const auto& v : violations) {
            if (v.find("length mismatch") != std::string::npos) found = true;
        }
        CHECK(found);
    }

    SUBCASE("a duplicated OOD word") {
        copy_assets(bundle);
        testutil::spit(bundle / "ood_words.txt",
                       "Flibberknock\nFlibberknock\nBlibberflop\nZiggledorf\nSnizzlewump\n"
                       "Wobblequark\nJibberplunk\nCrumblefluff\nSplonglewort\nDinglewhack\n");
        const auto violations = verify_assets(bundle);
        bool found = false;
        for (const auto& v : violations) {
            if (v.find("duplicate word") != std::string::npos) found = true;
        }
        CHECK(found);
    }

    SUBCASE("an edited golden file") {
        copy_assets(bundle);
        const fs::path golden = bundle / "golden" / "llama2-chat_factual.txt";
        testutil::spit(golden, testutil::slurp(golden) + " tampered");
        const auto violations = verify_assets(bundle);
        bool found = false;
        for (const auto& v : violations) {
            if (v.find("llama2-chat_factual.txt") != std::string::npos) found = true;
        }
        CHECK(found);
    }
}
