#include "gprobe/backends.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "gprobe/hashing.hpp"

namespace gprobe {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::mutex g_cache_mutex;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string params_canonical(const GenerationParams& p) {
    return "t=" + format_double(p.temperature) + "|p=" + format_double(p.top_p) +
           "|pp=" + format_double(p.presence_penalty) + "|fp=" + format_double(p.frequency_penalty) +
           "|mt=" + std::to_string(p.max_new_tokens);
}

ordered_json params_json(const GenerationParams& p) {
    ordered_json j;
    j["temperature"] = p.temperature;
    j["top_p"] = p.top_p;
    j["presence_penalty"] = p.presence_penalty;
    j["frequency_penalty"] = p.frequency_penalty;
    j["max_new_tokens"] = p.max_new_tokens;
    return j;
}

// Splits "http://host:1234/prefix" into origin and path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw BackendError("config", "base_url must include a scheme: " + base_url);
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

std::optional<ModelOutput> cache_lookup(const BackendConfig& config, const std::string& key) {
    if (config.cache_dir.empty()) return std::nullopt;
    const fs::path file = fs::path(config.cache_dir) / (key + ".json");
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;  // damaged entry: treat as a miss and rewrite
    }
    ModelOutput out;
    out.raw_text = j.at("response").at("raw_text").get<std::string>();
    out.latency_ms = j["response"].value("latency_ms", 0);
    out.request_hash = key;
    out.from_cache = true;
    return out;
}

void cache_store(const BackendConfig& config, const std::string& key, const PromptBundle& payload,
                 const ModelOutput& out) {
    if (config.cache_dir.empty()) return;
    const fs::path dir(config.cache_dir);
    const fs::path file = dir / (key + ".json");
    const fs::path tmp = dir / (key + ".json.tmp");

    ordered_json j;
    j["request"] = {
        {"model", config.model_name},
        {"family", to_string(config.family)},
        {"params", params_json(config.params)},
        {"payload", payload.wrapped},
    };
    j["response"] = {{"raw_text", out.raw_text}, {"latency_ms", out.latency_ms}};
    j["timestamp"] = static_cast<std::int64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());

    std::lock_guard<std::mutex> lock(g_cache_mutex);
    fs::create_directories(dir);
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << j.dump(2) << "\n";
    }
    fs::rename(tmp, file);
}

std::string mock_response(const BackendConfig& config, const PromptBundle& payload,
                          const TaskContext& ctx) {
    switch (config.mock_policy) {
        case MockPolicy::refuser:
            return kRefuserOutput;
        case MockPolicy::prior_biased:
            if (ctx.factual_gold.empty()) {
                throw BackendError("config", "prior_biased mock needs the sentence's gold label");
            }
            return ctx.factual_gold;
        case MockPolicy::guideline_follower:
            if (!ctx.guideline || ctx.factual_gold.empty()) {
                throw BackendError("config", "guideline_follower mock needs guideline and gold label");
            }
            return guideline_gold(*ctx.guideline, ctx.factual_gold);
        case MockPolicy::uniform_random: {
            if (!ctx.guideline) {
                throw BackendError("config", "uniform_random mock needs the guideline");
            }
            const auto& labels = ctx.guideline->display_labels;
            // Choice depends only on (seed, request), not invocation order,
            // so concurrent runs stay reproducible.
            const std::uint64_t h = splitmix64(config.mock_seed ^ fnv1a64(payload.wrapped));
            return labels[h % labels.size()];
        }
    }
    throw BackendError("config", "unhandled mock policy");
}

bool status_retryable(int status) {
    return status == 429 || status == 408 || (status >= 500 && status < 600);
}

ModelOutput http_complete(const BackendConfig& config, const PromptBundle& payload,
                          const std::string& key) {
    const auto [origin, prefix] = split_base_url(config.base_url);
    const std::string path =
        prefix + (config.kind == BackendKind::chat_endpoint ? "/v1/chat/completions" : "/v1/completions");

    ordered_json body;
    body["model"] = config.model_name;
    if (config.kind == BackendKind::chat_endpoint) {
        ordered_json messages = ordered_json::array();
        for (const auto& m : payload.messages) {
            messages.push_back({{"role", m.role}, {"content", m.content}});
        }
        if (messages.empty()) {
            // Non-chat prompt families still travel as one user message.
            messages.push_back({{"role", "user"}, {"content", payload.wrapped}});
        }
        body["messages"] = std::move(messages);
    } else {
        body["prompt"] = payload.wrapped;
    }
    body["temperature"] = config.params.temperature;
    body["top_p"] = config.params.top_p;
    body["presence_penalty"] = config.params.presence_penalty;
    body["frequency_penalty"] = config.params.frequency_penalty;
    body["max_tokens"] = config.params.max_new_tokens;
    const std::string body_text = body.dump();

    httplib::Headers headers;
    if (const char* api_key = std::getenv(kApiKeyEnvVar); api_key && *api_key) {
        headers.emplace("Authorization", std::string("Bearer ") + api_key);
    }

    std::string last_error;
    for (int attempt = 1; attempt <= config.retry.max_attempts; ++attempt) {
        if (attempt > 1) {
            const auto delay = std::chrono::milliseconds(
                static_cast<long long>(config.retry.initial_backoff_ms) << (attempt - 2));
            std::this_thread::sleep_for(delay);
        }

        httplib::Client client(origin);
        client.set_connection_timeout(config.connect_timeout_sec, 0);
        client.set_read_timeout(config.read_timeout_sec, 0);

        const auto start = std::chrono::steady_clock::now();
        auto res = client.Post(path, headers, body_text, "application/json");
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();

        if (!res) {
            last_error = "network: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "http-status: " + std::to_string(res->status) + " from " + origin + path;
            if (status_retryable(res->status)) continue;
            throw BackendError("http-status", last_error);
        }

        nlohmann::json rj;
        try {
            rj = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw BackendError("malformed-response", std::string("response is not JSON: ") + e.what());
        }
        try {
            ModelOutput out;
            const auto& choice = rj.at("choices").at(0);
            if (config.kind == BackendKind::chat_endpoint) {
                out.raw_text = choice.at("message").at("content").get<std::string>();
            } else {
                out.raw_text = choice.at("text").get<std::string>();
            }
            out.latency_ms = static_cast<int>(elapsed);
            out.request_hash = key;
            return out;
        } catch (const nlohmann::json::exception& e) {
            throw BackendError("malformed-response",
                               std::string("unexpected response shape: ") + e.what());
        }
    }
    throw BackendError("network", "request failed after " + std::to_string(config.retry.max_attempts) +
                                      " attempts: " + last_error);
}

}  // namespace

GenerationParams default_params(Family family) {
    GenerationParams p;
    if (family == Family::chat_api) {
        p.temperature = 1.0;
        p.top_p = 1.0;
    } else {
        p.temperature = 0.8;
        p.top_p = 0.95;
    }
    p.presence_penalty = 0.0;
    p.frequency_penalty = 0.0;
    p.max_new_tokens = 128;
    return p;
}

std::string to_string(MockPolicy p) {
    switch (p) {
        case MockPolicy::guideline_follower: return "guideline_follower";
        case MockPolicy::prior_biased: return "prior_biased";
        case MockPolicy::refuser: return "refuser";
        case MockPolicy::uniform_random: return "uniform_random";
    }
    return "?";
}

MockPolicy mock_policy_from_string(const std::string& s) {
    if (s == "guideline_follower") return MockPolicy::guideline_follower;
    if (s == "prior_biased") return MockPolicy::prior_biased;
    if (s == "refuser") return MockPolicy::refuser;
    if (s == "uniform_random") return MockPolicy::uniform_random;
    throw BackendError("config", "unknown mock policy '" + s + "'");
}

std::string cache_key(const BackendConfig& config, const PromptBundle& payload) {
    std::string canon = config.model_name;
    canon += '\x1f';
    canon += to_string(config.family);
    canon += '\x1f';
    canon += params_canonical(config.params);
    canon += '\x1f';
    canon += payload.wrapped;
    return to_hex64(fnv1a64(canon));
}

ModelOutput complete(const BackendConfig& config, const PromptBundle& payload,
                     const TaskContext& ctx) {
    const std::string key = cache_key(config, payload);
    if (auto cached = cache_lookup(config, key)) return *cached;

    ModelOutput out;
    if (config.kind == BackendKind::mock) {
        out.raw_text = mock_response(config, payload, ctx);
        out.request_hash = key;
    } else {
        out = http_complete(config, payload, key);
    }
    cache_store(config, key, payload, out);
    return out;
}

}  // namespace gprobe
