#pragma once

#include <cstdint>
#include <memory>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "matryoshka/core.hpp"

namespace matryoshka {

enum class Phase { answer, verify, summary, final_summary, judge };

std::string_view to_string(Phase phase);
Phase parse_phase(std::string_view name);

/// Identifies one backend call within a run; doubles as the resume key.
struct CallTag {
    std::string query_id;
    int loop_index = 0;
    int sample_index = 0;
    Phase phase = Phase::answer;

    /// Stable textual key, e.g. "q7/1/3/verify".
    std::string key() const;

    friend bool operator==(const CallTag&, const CallTag&) = default;
};

struct SamplingParams {
    double temperature = 1.0;
    double top_p = 1.0;
    int top_k = -1;  // -1 disables top-k
    int max_tokens = 64000;

    void validate() const;

    friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

struct GenerationRequest {
    std::string prompt;
    SamplingParams sampling;
    CallTag tag;
    std::string template_id;
    // Candidate texts presented by the prompt; see RenderedPrompt.
    std::vector<std::string> subject_texts;
};

struct GenerationResult {
    std::string text;
    TokenUsage usage;
    std::string backend_id;
};

enum class BackendErrorKind { transport, rate_limited, server, context_overflow, bad_request, bad_response, replay_missing };

std::string_view to_string(BackendErrorKind kind);
BackendErrorKind parse_backend_error_kind(std::string_view name);

class BackendError : public std::runtime_error {
public:
    BackendError(BackendErrorKind kind, CallTag tag, const std::string& message)
        : std::runtime_error(message), kind_(kind), tag_(std::move(tag)) {}

    BackendErrorKind kind() const { return kind_; }
    const CallTag& tag() const { return tag_; }
    bool retryable() const {
        return kind_ == BackendErrorKind::transport || kind_ == BackendErrorKind::rate_limited ||
               kind_ == BackendErrorKind::server;
    }

private:
    BackendErrorKind kind_;
    CallTag tag_;
};

/// The model: prompt in, completion and token usage out. Implementations must be safe to
/// call from several threads at once.
class Backend {
public:
    virtual ~Backend() = default;
    virtual GenerationResult generate(const GenerationRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Caps the number of in-flight calls to the wrapped backend.
class ThrottledBackend : public Backend {
public:
    ThrottledBackend(std::shared_ptr<Backend> inner, int max_concurrency);

    GenerationResult generate(const GenerationRequest& request) override;
    std::string id() const override { return inner_->id(); }

private:
    std::shared_ptr<Backend> inner_;
    std::counting_semaphore<> slots_;
};

// Deterministic per-call randomness. Every draw is a pure function of (seed, tag, stream),
// so results do not depend on call order or thread schedule.

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_call(std::uint64_t run_seed, const CallTag& tag, std::string_view stream = {});
double uniform_from_hash(std::uint64_t h);

/// True with probability `p_event`: uniform(hash(run_seed, tag, stream)) < p_event.
bool oracle_decide(std::uint64_t run_seed, const CallTag& tag, double p_event, std::string_view stream = {});

}  // namespace matryoshka
