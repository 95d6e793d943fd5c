#include <atomic>
#include <cmath>
#include <cstdlib>
#include <doctest.h>
#include <map>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "gprobe/assets.hpp"
#include "gprobe/backends.hpp"
#include "test_util.hpp"

using namespace gprobe;

namespace {

ConceptScheme scientific() {
    return load_scheme(testutil::assets_dir() / "schemes" / "scientific.json");
}

BackendConfig mock_config(MockPolicy policy) {
    BackendConfig cfg;
    cfg.kind = BackendKind::mock;
    cfg.mock_policy = policy;
    cfg.model_name = "mock";
    cfg.family = Family::chat_api;
    cfg.params = default_params(Family::chat_api);
    return cfg;
}

// Loopback server wrapper: serves until destruction on an OS-chosen port.
struct LocalServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit LocalServer() = default;
    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("mock policies realize their contracts") {
    const auto s = scientific();
    const Guideline swap = counterfactual_guideline(s, "model-generated", {0, 1, 2, 4, 3});
    const PromptBundle bundle = build_prompt(swap, s, "Some sentence.", Family::chat_api);

    TaskContext ctx;
    ctx.guideline = &swap;
    ctx.factual_gold = "Result";

    CHECK(complete(mock_config(MockPolicy::guideline_follower), bundle, ctx).raw_text == "Conclusion");
    CHECK(complete(mock_config(MockPolicy::prior_biased), bundle, ctx).raw_text == "Result");
    CHECK(complete(mock_config(MockPolicy::refuser), bundle, ctx).raw_text ==
          "None of the categories listed above are appropriate for classifying the given text.");
}

TEST_CASE("uniform_random mock is seed-reproducible and roughly uniform") {
    const auto s = scientific();
    const Guideline g = factual_guideline(s, "model-generated");

    BackendConfig cfg = mock_config(MockPolicy::uniform_random);
    cfg.mock_seed = 31337;

    TaskContext ctx;
    ctx.guideline = &g;
    ctx.factual_gold = "Background";

    std::map<std::string, std::size_t> histogram;
    std::vector<std::string> first_pass;
    for (int i = 0; i < 10000; ++i) {
        const PromptBundle bundle =
            build_prompt(g, s, "Sentence number " + std::to_string(i) + ".", Family::chat_api);
        const std::string out = complete(cfg, bundle, ctx).raw_text;
        histogram[out] += 1;
        first_pass.push_back(out);
    }
    // Same seed, same sequence.
    for (int i = 0; i < 100; ++i) {
        const PromptBundle bundle =
            build_prompt(g, s, "Sentence number " + std::to_string(i) + ".", Family::chat_api);
        CHECK(complete(cfg, bundle, ctx).raw_text == first_pass[static_cast<std::size_t>(i)]);
    }
    // Chi-squared against uniform over 5 labels, df = 4: 18.467 at p = 0.001.
    REQUIRE(histogram.size() == 5);
    const double expected = 10000.0 / 5.0;
    double chi2 = 0.0;
    for (const auto& [label, count] : histogram) {
        const double diff = double(count) - expected;
        chi2 += diff * diff / expected;
    }
    CHECK(chi2 < 18.467);
}

TEST_CASE("cache keys cover params and payload but not retry settings") {
    const auto s = scientific();
    const Guideline g = factual_guideline(s, "model-generated");
    const PromptBundle a = build_prompt(g, s, "Sentence one.", Family::chat_api);
    const PromptBundle b = build_prompt(g, s, "Sentence two.", Family::chat_api);

    BackendConfig cfg = mock_config(MockPolicy::guideline_follower);
    CHECK(cache_key(cfg, a) == cache_key(cfg, a));
    CHECK(cache_key(cfg, a) != cache_key(cfg, b));

    BackendConfig hotter = cfg;
    hotter.params.temperature = 0.8;
    CHECK(cache_key(cfg, a) != cache_key(hotter, a));

    BackendConfig retried = cfg;
    retried.retry.max_attempts = 9;
    retried.parallelism = 64;
    CHECK(cache_key(cfg, a) == cache_key(retried, a));
}

TEST_CASE("cache round-trips byte-identical responses") {
    testutil::TempDir tmp("cache");
    const auto s = scientific();
    const Guideline g = factual_guideline(s, "model-generated");
    const PromptBundle bundle = build_prompt(g, s, "A cached sentence.", Family::chat_api);

    BackendConfig cfg = mock_config(MockPolicy::guideline_follower);
    cfg.cache_dir = (tmp.path / "cache").string();

    TaskContext ctx;
    ctx.guideline = &g;
    ctx.factual_gold = "Method";

    const ModelOutput first = complete(cfg, bundle, ctx);
    CHECK_FALSE(first.from_cache);
    const ModelOutput second = complete(cfg, bundle, ctx);
    CHECK(second.from_cache);
    CHECK(second.raw_text == first.raw_text);
    CHECK(second.request_hash == first.request_hash);
}

TEST_CASE("chat endpoint speaks the OpenAI-compatible wire format") {
    LocalServer server;
    nlohmann::json seen_body;
    std::string seen_auth;
    server.server.Post("/v1/chat/completions",
                       [&](const httplib::Request& req, httplib::Response& res) {
                           seen_body = nlohmann::json::parse(req.body);
                           if (req.has_header("Authorization")) {
                               seen_auth = req.get_header_value("Authorization");
                           }
                           res.set_content(R"({"choices":[{"message":{"content":"Conclusion"}}]})",
                                           "application/json");
                       });
    server.start();

    setenv(kApiKeyEnvVar, "test-key-123", 1);
    const auto s = scientific();
    const Guideline g = factual_guideline(s, "model-generated");
    const PromptBundle bundle = build_prompt(g, s, "A live sentence.", Family::chat_api);

    BackendConfig cfg;
    cfg.kind = BackendKind::chat_endpoint;
    cfg.base_url = server.base_url();
    cfg.model_name = "gpt-3.5-turbo-0613";
    cfg.family = Family::chat_api;
    cfg.params = default_params(Family::chat_api);

    const ModelOutput out = complete(cfg, bundle);
    unsetenv(kApiKeyEnvVar);

    CHECK(out.raw_text == "Conclusion");
    CHECK_FALSE(out.from_cache);
    CHECK(seen_auth == "Bearer test-key-123");
    CHECK(seen_body.at("model") == "gpt-3.5-turbo-0613");
    REQUIRE(seen_body.at("messages").size() == 1);
    CHECK(seen_body["messages"][0].at("role") == "user");
    CHECK(seen_body["messages"][0].at("content").get<std::string>().find(
              "Consider the following concept categories:") == 0);
    CHECK(seen_body.at("temperature") == 1.0);
    CHECK(seen_body.at("top_p") == 1.0);
    CHECK(seen_body.at("presence_penalty") == 0.0);
    CHECK(seen_body.at("frequency_penalty") == 0.0);
    CHECK(seen_body.at("max_tokens") == 128);
}

TEST_CASE("text endpoint posts the wrapped prompt") {
    LocalServer server;
    nlohmann::json seen_body;
    server.server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = nlohmann::json::parse(req.body);
        res.set_content(R"({"choices":[{"text":" Background"}]})", "application/json");
    });
    server.start();

    const auto s = scientific();
    const Guideline g = factual_guideline(s, "model-generated");
    const PromptBundle bundle = build_prompt(g, s, "A live sentence.", Family::llama2_chat);

    BackendConfig cfg;
    cfg.kind = BackendKind::text_endpoint;
    cfg.base_url = server.base_url();
    cfg.model_name = "llama-2-70b-chat";
    cfg.family = Family::llama2_chat;
    cfg.params = default_params(Family::llama2_chat);

    const ModelOutput out = complete(cfg, bundle);
    CHECK(out.raw_text == " Background");  // verbatim, untrimmed
    CHECK(seen_body.at("prompt").get<std::string>().rfind("[INST] ", 0) == 0);
    CHECK(seen_body.at("temperature") == 0.8);
    CHECK(seen_body.at("top_p") == 0.95);
}

TEST_CASE("persistent server errors surface after bounded retries") {
    LocalServer server;
    std::atomic<int> hits{0};
    server.server.Post("/v1/chat/completions",
                       [&](const httplib::Request&, httplib::Response& res) {
                           hits.fetch_add(1);
                           res.status = 500;
                       });
    server.start();

    const auto s = scientific();
    const Guideline g = factual_guideline(s, "model-generated");
    const PromptBundle bundle = build_prompt(g, s, "A doomed sentence.", Family::chat_api);

    BackendConfig cfg;
    cfg.kind = BackendKind::chat_endpoint;
    cfg.base_url = server.base_url();
    cfg.model_name = "m";
    cfg.retry.max_attempts = 3;
    cfg.retry.initial_backoff_ms = 1;

    CHECK_THROWS_AS(complete(cfg, bundle), BackendError);
    CHECK(hits.load() == 3);
}

TEST_CASE("non-retryable statuses fail fast and malformed bodies are tagged") {
    LocalServer server;
    std::atomic<int> hits{0};
    server.server.Post("/v1/chat/completions",
                       [&](const httplib::Request&, httplib::Response& res) {
                           hits.fetch_add(1);
                           res.status = 401;
                       });
    server.server.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json at all", "text/plain");
    });
    server.start();

    const auto s = scientific();
    const Guideline g = factual_guideline(s, "model-generated");
    const PromptBundle bundle = build_prompt(g, s, "A sentence.", Family::chat_api);

    BackendConfig cfg;
    cfg.kind = BackendKind::chat_endpoint;
    cfg.base_url = server.base_url();
    cfg.model_name = "m";
    cfg.retry.max_attempts = 3;
    cfg.retry.initial_backoff_ms = 1;
    try {
        complete(cfg, bundle);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.kind == "http-status");
    }
    CHECK(hits.load() == 1);

    BackendConfig text = cfg;
    text.kind = BackendKind::text_endpoint;
    text.family = Family::llama2_chat;
    try {
        complete(text, build_prompt(g, s, "A sentence.", Family::llama2_chat));
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.kind == "malformed-response");
    }
}

TEST_CASE("default generation parameters follow the family") {
    const GenerationParams open_model = default_params(Family::llama2_chat);
    CHECK(open_model.temperature == doctest::Approx(0.8));
    CHECK(open_model.top_p == doctest::Approx(0.95));
    CHECK(open_model.max_new_tokens == 128);

    const GenerationParams chat = default_params(Family::chat_api);
    CHECK(chat.temperature == doctest::Approx(1.0));
    CHECK(chat.top_p == doctest::Approx(1.0));
    CHECK(chat.presence_penalty == doctest::Approx(0.0));
    CHECK(chat.frequency_penalty == doctest::Approx(0.0));
    CHECK(chat.max_new_tokens == 128);
}
