#include "matryoshka/openai_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#ifdef MATRYOSHKA_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

namespace matryoshka {

namespace {

bool looks_like_context_overflow(const std::string& body) {
    static constexpr std::string_view kHints[] = {"context_length_exceeded", "maximum context length",
                                                  "context length", "too many tokens"};
    std::string lower(body);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return std::any_of(std::begin(kHints), std::end(kHints),
                       [&](std::string_view h) { return lower.find(h) != std::string::npos; });
}

}  // namespace

void RetryPolicy::validate() const {
    if (max_attempts < 1) throw ContractViolation("retry.max_attempts must be >= 1");
    if (!(base_delay_seconds >= 0.0) || !(max_delay_seconds >= base_delay_seconds)) {
        throw ContractViolation("retry delays must satisfy 0 <= base <= cap");
    }
}

double RetryPolicy::delay_ceiling_seconds(int retry) const {
    return std::min(max_delay_seconds, base_delay_seconds * std::ldexp(1.0, std::max(0, retry - 1)));
}

void OpenAIConfig::validate() const {
    if (base_url.empty()) throw ContractViolation("openai.base_url is required");
    if (model.empty()) throw ContractViolation("openai.model is required");
    if (!(timeout_seconds > 0.0)) throw ContractViolation("openai.timeout_seconds must be > 0");
    retry.validate();
}

OpenAICompatibleBackend::OpenAICompatibleBackend(OpenAIConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)), rng_(std::random_device{}()) {
    config_.validate();
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

    std::string url = config_.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    const std::size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ContractViolation("openai.base_url must include a scheme: " + config_.base_url);
    }
    const std::size_t path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
}

nlohmann::json OpenAICompatibleBackend::build_request_body(const std::string& model,
                                                           const GenerationRequest& request) {
    nlohmann::json body = {
        {"model", model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.sampling.temperature},
        {"top_p", request.sampling.top_p},
        {"max_tokens", request.sampling.max_tokens},
    };
    if (request.sampling.top_k != -1) body["top_k"] = request.sampling.top_k;
    return body;
}

GenerationResult OpenAICompatibleBackend::parse_response(const std::string& body, const CallTag& tag,
                                                         const std::string& backend_id) {
    nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw BackendError(BackendErrorKind::bad_response, tag, "response is not JSON");

    const auto choices = doc.find("choices");
    if (choices == doc.end() || !choices->is_array() || choices->empty()) {
        throw BackendError(BackendErrorKind::bad_response, tag, "response has no choices");
    }
    const auto& message = (*choices)[0].value("message", nlohmann::json::object());
    const auto content = message.find("content");
    if (content == message.end() || !content->is_string()) {
        throw BackendError(BackendErrorKind::bad_response, tag, "choices[0].message.content missing");
    }

    GenerationResult result;
    result.text = content->get<std::string>();
    result.backend_id = backend_id;
    if (auto usage = doc.find("usage"); usage != doc.end() && usage->is_object()) {
        result.usage.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
        result.usage.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
        const std::int64_t total = usage->value("total_tokens", result.usage.total());
        if (total != result.usage.total()) {
            throw BackendError(BackendErrorKind::bad_response, tag,
                               "usage.total_tokens does not equal prompt_tokens + completion_tokens");
        }
    }
    return result;
}

GenerationResult OpenAICompatibleBackend::attempt(const GenerationRequest& request, const std::string& body) const {
    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
    client.set_connection_timeout(timeout_us);
    client.set_read_timeout(timeout_us);
    client.set_write_timeout(timeout_us);

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto response = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
    if (!response) {
        throw BackendError(BackendErrorKind::transport, request.tag,
                           "transport failure: " + httplib::to_string(response.error()));
    }
    const int status = response->status;
    if (status == 429) throw BackendError(BackendErrorKind::rate_limited, request.tag, "HTTP 429");
    if (status >= 500) throw BackendError(BackendErrorKind::server, request.tag, "HTTP " + std::to_string(status));
    if (status >= 400) {
        const auto kind = looks_like_context_overflow(response->body) ? BackendErrorKind::context_overflow
                                                                      : BackendErrorKind::bad_request;
        throw BackendError(kind, request.tag, "HTTP " + std::to_string(status) + ": " + response->body);
    }
    return parse_response(response->body, request.tag, id());
}

std::chrono::milliseconds OpenAICompatibleBackend::jittered_delay(int retry) {
    const double ceiling = config_.retry.delay_ceiling_seconds(retry);
    std::lock_guard lock(rng_mutex_);
    std::uniform_real_distribution<double> dist(0.0, ceiling);
    return std::chrono::milliseconds(static_cast<std::int64_t>(dist(rng_) * 1000.0));
}

GenerationResult OpenAICompatibleBackend::generate(const GenerationRequest& request) {
    request.sampling.validate();
    const std::string body = build_request_body(config_.model, request).dump();
    for (int attempt_no = 1;; ++attempt_no) {
        try {
            return attempt(request, body);
        } catch (const BackendError& err) {
            if (!err.retryable() || attempt_no >= config_.retry.max_attempts) {
                throw BackendError(err.kind(), request.tag,
                                   std::string(err.what()) + " (after " + std::to_string(attempt_no) +
                                       " attempt" + (attempt_no == 1 ? "" : "s") + ")");
            }
        }
        sleeper_(jittered_delay(attempt_no));
    }
}

}  // namespace matryoshka
