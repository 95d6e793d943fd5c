#pragma once
// Backend dispatch: OpenAI-style chat/text endpoints and deterministic mocks,
// with a file cache keyed by request content. Identical requests hit the
// cache and never touch the network. All mock policies are pure functions of
// (policy, seed, request), so runs are reproducible at any parallelism.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "gprobe/guidelines.hpp"
#include "gprobe/prompts.hpp"

namespace gprobe {

// Name of the environment variable holding the bearer token for endpoints.
constexpr const char* kApiKeyEnvVar = "GUIDELINE_PROBE_API_KEY";

// Verbatim output of the refuser mock (the refusal shape emitted by aligned
// chat APIs when every label is nonsensical).
constexpr const char* kRefuserOutput =
    "None of the categories listed above are appropriate for classifying the given text.";

struct GenerationParams {
    double temperature = 0.8;
    double top_p = 0.95;
    double presence_penalty = 0.0;
    double frequency_penalty = 0.0;
    int max_new_tokens = 128;
};

// Defaults per family: open-model endpoints sample at 0.8/0.95, chat APIs at
// 1/1 with zero penalties; 128 max generation tokens everywhere.
GenerationParams default_params(Family family);

enum class BackendKind { chat_endpoint, text_endpoint, mock };

enum class MockPolicy { guideline_follower, prior_biased, refuser, uniform_random };

std::string to_string(MockPolicy p);
MockPolicy mock_policy_from_string(const std::string& s);

struct RetryPolicy {
    int max_attempts = 3;
    int initial_backoff_ms = 1000;  // doubles per retry
};

struct BackendConfig {
    BackendKind kind = BackendKind::mock;
    std::string base_url;         // endpoints only
    std::string model_name;
    Family family = Family::chat_api;
    GenerationParams params;
    MockPolicy mock_policy = MockPolicy::guideline_follower;
    std::uint64_t mock_seed = 0;  // uniform_random only
    int parallelism = 1;
    RetryPolicy retry;
    std::string cache_dir;        // empty disables caching
    int connect_timeout_sec = 10;
    int read_timeout_sec = 120;
};

struct ModelOutput {
    std::string raw_text;     // verbatim, untrimmed
    std::string request_hash;
    int latency_ms = 0;
    bool from_cache = false;
};

// Task-side context consumed by the mock policies; endpoints ignore it.
struct TaskContext {
    const Guideline* guideline = nullptr;
    std::string factual_gold;
};

struct BackendError : std::runtime_error {
    std::string kind;  // network | http-status | malformed-response | config
    BackendError(std::string k, const std::string& msg)
        : std::runtime_error(msg), kind(std::move(k)) {}
};

// Stable digest over (model_name, family, params, payload bytes). Retry and
// parallelism settings do not participate.
std::string cache_key(const BackendConfig& config, const PromptBundle& payload);

// Sends one request (or consults the cache, or evaluates a mock). Throws
// BackendError after retries are exhausted; callers mark the task failed.
ModelOutput complete(const BackendConfig& config, const PromptBundle& payload,
                     const TaskContext& ctx = {});

}  // namespace gprobe
