#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "matryoshka/backend.hpp"
#include "matryoshka/core.hpp"
#include "matryoshka/prompts.hpp"

namespace matryoshka {

/// What to summarize when verification leaves the candidate set empty.
enum class EmptySetFallback {
    carry_unverified,  // present the loop's raw candidates, flagged unverified
    fail,              // mark the query failed
    summarize_empty,   // summarize an empty pool (the one-round accuracy model's r = 0 case)
};

std::string_view to_string(EmptySetFallback fallback);
EmptySetFallback parse_empty_set_fallback(std::string_view name);

struct PhaseSampling {
    SamplingParams answer;
    SamplingParams verify;
    SamplingParams summary;
    SamplingParams final_summary;

    static PhaseSampling uniform(const SamplingParams& params) { return {params, params, params, params}; }
    friend bool operator==(const PhaseSampling&, const PhaseSampling&) = default;
};

struct PipelineConfig {
    int loops = 2;
    int samples_per_loop = 8;
    bool verify_enabled = true;
    bool summary_enabled = true;
    EmptySetFallback empty_set_fallback = EmptySetFallback::carry_unverified;
    CandidateRendering rendering;
    PhaseSampling sampling;

    void validate() const;
};

enum class Ablation { full, no_loop, no_loop_no_verify, baseline };

std::string_view to_string(Ablation ablation);
Ablation parse_ablation(std::string_view name);

/// full: unchanged; no_loop: L=0; no_loop_no_verify: L=0 and no verification;
/// baseline: additionally no summary, i.e. a single raw sample.
PipelineConfig apply_ablation(PipelineConfig config, Ablation ablation);

struct LoopRecord {
    int loop_index = 0;
    std::vector<Candidate> raw;         // every candidate generated this loop, in sample order
    int failed_calls = 0;               // generation or verification calls that errored
    bool used_fallback = false;         // the next summary saw this loop's raw candidates unverified
    std::optional<double> entropy_bits; // over extracted answers of `raw`; empty when raw is empty
};

struct QueryOutcome {
    std::string query_id;
    bool failed = false;
    std::string failure;
    std::string final_answer{kUnextractable};
    std::string final_text;
    std::vector<CandidateSet> candidate_history;  // C_0 .. C_L
    std::vector<LoopRecord> loops;
    TokenUsage usage_total;

    std::vector<std::optional<double>> entropy_per_loop() const;
};

/// Runs `count` independent tasks and returns when all have finished.
class Executor {
public:
    virtual ~Executor() = default;
    virtual void run(std::size_t count, const std::function<void(std::size_t)>& task) = 0;
};

class SequentialExecutor : public Executor {
public:
    void run(std::size_t count, const std::function<void(std::size_t)>& task) override;
};

/// One thread per task; used for remote backends where tasks block on I/O.
class ThreadExecutor : public Executor {
public:
    void run(std::size_t count, const std::function<void(std::size_t)>& task) override;
};

struct PipelineContext {
    Backend& backend;
    const TemplateSet& templates;
    std::uint64_t run_seed = 0;
    Executor& executor;
};

/// Sample, verify and summarize for L+1 loops, then produce one final answer.
QueryOutcome run_query(const Query& query, const PipelineConfig& config, const PipelineContext& ctx);

/// Raw candidates of a loop, flagged as unverified, for use as a summary pool.
CandidateSet empty_set_fallback(const std::string& query_id, std::span<const Candidate> loop_raw);

class VoteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Modal answer after dropping "unextractable"; ties go to the lexicographically smallest.
std::string majority_vote(std::span<const std::string> answers);

}  // namespace matryoshka
