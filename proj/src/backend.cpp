#include "matryoshka/backend.hpp"

#include <array>
#include <cmath>

namespace matryoshka {

namespace {

constexpr std::array<std::string_view, 5> kPhaseNames{"answer", "verify", "summary", "final_summary", "judge"};
constexpr std::array<std::string_view, 7> kErrorKindNames{
    "transport", "rate_limited", "server", "context_overflow", "bad_request", "bad_response", "replay_missing"};

std::uint64_t fnv1a_int(std::uint64_t state, std::int64_t value) {
    auto u = static_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) {
        state ^= (u >> (8 * i)) & 0xFFu;
        state *= 0x100000001b3ULL;
    }
    return state;
}

}  // namespace

std::string_view to_string(Phase phase) { return kPhaseNames[static_cast<std::size_t>(phase)]; }

Phase parse_phase(std::string_view name) {
    for (std::size_t i = 0; i < kPhaseNames.size(); ++i) {
        if (kPhaseNames[i] == name) return static_cast<Phase>(i);
    }
    throw std::invalid_argument("unknown phase '" + std::string(name) + "'");
}

std::string_view to_string(BackendErrorKind kind) { return kErrorKindNames[static_cast<std::size_t>(kind)]; }

BackendErrorKind parse_backend_error_kind(std::string_view name) {
    for (std::size_t i = 0; i < kErrorKindNames.size(); ++i) {
        if (kErrorKindNames[i] == name) return static_cast<BackendErrorKind>(i);
    }
    throw std::invalid_argument("unknown backend error kind '" + std::string(name) + "'");
}

std::string CallTag::key() const {
    std::string out = query_id;
    out += '/';
    out += std::to_string(loop_index);
    out += '/';
    out += std::to_string(sample_index);
    out += '/';
    out += to_string(phase);
    return out;
}

void SamplingParams::validate() const {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
        throw ContractViolation("sampling.temperature must be >= 0");
    }
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ContractViolation("sampling.top_p must be in (0, 1]");
    if (top_k != -1 && top_k <= 0) throw ContractViolation("sampling.top_k must be positive or -1");
    if (max_tokens <= 0) throw ContractViolation("sampling.max_tokens must be > 0");
}

ThrottledBackend::ThrottledBackend(std::shared_ptr<Backend> inner, int max_concurrency)
    : inner_(std::move(inner)), slots_(max_concurrency) {
    if (max_concurrency <= 0) throw ContractViolation("max_concurrency must be > 0");
}

GenerationResult ThrottledBackend::generate(const GenerationRequest& request) {
    slots_.acquire();
    struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
    } release{slots_};
    return inner_->generate(request);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
    for (char c : bytes) {
        state ^= static_cast<unsigned char>(c);
        state *= 0x100000001b3ULL;
    }
    return state;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_call(std::uint64_t run_seed, const CallTag& tag, std::string_view stream) {
    std::uint64_t h = fnv1a64(tag.query_id);
    h = fnv1a_int(h, static_cast<std::int64_t>(tag.query_id.size()));
    h = fnv1a_int(h, tag.loop_index);
    h = fnv1a_int(h, tag.sample_index);
    h = fnv1a_int(h, static_cast<std::int64_t>(tag.phase));
    h = fnv1a64(stream, h);
    h = fnv1a_int(h, static_cast<std::int64_t>(stream.size()));
    return splitmix64(splitmix64(h) ^ splitmix64(run_seed ^ 0x6a09e667f3bcc909ULL));
}

double uniform_from_hash(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

bool oracle_decide(std::uint64_t run_seed, const CallTag& tag, double p_event, std::string_view stream) {
    if (!(p_event >= 0.0 && p_event <= 1.0)) throw ContractViolation("oracle_decide: p_event outside [0, 1]");
    return uniform_from_hash(hash_call(run_seed, tag, stream)) < p_event;
}

}  // namespace matryoshka
