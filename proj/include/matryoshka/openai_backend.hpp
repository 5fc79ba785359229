#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "matryoshka/backend.hpp"

namespace matryoshka {

/// Exponential backoff with full jitter; applied to transport failures, 429 and 5xx only.
struct RetryPolicy {
    int max_attempts = 5;
    double base_delay_seconds = 1.0;
    double max_delay_seconds = 30.0;

    void validate() const;
    /// Upper bound of the jitter window before retry number `retry` (1-based).
    double delay_ceiling_seconds(int retry) const;
};

struct OpenAIConfig {
    std::string base_url;  // e.g. "http://localhost:8000/v1"
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    double timeout_seconds = 600.0;
    RetryPolicy retry;

    void validate() const;
};

/// Client for `POST {base_url}/chat/completions`.
class OpenAICompatibleBackend : public Backend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit OpenAICompatibleBackend(OpenAIConfig config, Sleeper sleeper = {});

    GenerationResult generate(const GenerationRequest& request) override;
    std::string id() const override { return "openai:" + config_.model; }

    static nlohmann::json build_request_body(const std::string& model, const GenerationRequest& request);
    /// Reads choices[0].message.content and usage; throws BackendError(bad_response) otherwise.
    static GenerationResult parse_response(const std::string& body, const CallTag& tag, const std::string& backend_id);

private:
    GenerationResult attempt(const GenerationRequest& request, const std::string& body) const;
    std::chrono::milliseconds jittered_delay(int retry);

    OpenAIConfig config_;
    Sleeper sleeper_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::mutex rng_mutex_;
    std::mt19937_64 rng_;
};

}  // namespace matryoshka
