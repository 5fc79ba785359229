#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "matryoshka/core.hpp"

namespace matryoshka::harness {

struct QueryReport {
    std::string id;
    std::optional<std::string> ground_truth;
    std::string final_answer;
    std::optional<bool> correct;
    bool failed = false;
    std::string failure;
    std::string evaluation_error;
    TokenUsage usage;  // pipeline calls plus the judge call, if any
    std::vector<std::optional<double>> entropy_per_loop;
    std::vector<std::size_t> accepted_per_loop;
    std::optional<std::string> majority_vote_answer;  // over the initial samples
    std::optional<bool> majority_vote_correct;
    int initial_samples = 0;
    int initial_correct = 0;  // exact match against the ground truth
};

/// Aggregate outcome of one benchmark run. Contains nothing time- or schedule-dependent, so
/// identical runs serialize to identical bytes.
struct RunReport {
    std::string ablation;
    int loops = 0;
    int samples_per_loop = 0;
    bool verify_enabled = true;
    bool summary_enabled = true;
    std::string backend;
    std::string evaluation;
    std::uint64_t seed = 0;
    std::vector<QueryReport> queries;

    std::size_t evaluated = 0;
    std::size_t correct = 0;
    std::size_t failed = 0;
    std::size_t excluded = 0;
    double accuracy = 0.0;
    std::optional<double> majority_vote_accuracy;
    std::vector<std::pair<int, double>> pass_at_k;  // over the initial samples
    std::string pass_at_k_note;
    TokenUsage tokens;
    std::int64_t max_query_tokens = 0;
    std::int64_t trace_total_tokens = 0;
    std::vector<std::optional<double>> mean_entropy_per_loop;

    /// Fills the aggregate fields from `queries`.
    void aggregate(const std::vector<int>& ks);

    nlohmann::json to_json() const;
    std::string to_json_text() const { return to_json().dump(2) + "\n"; }
    std::string summary_text() const;
};

}  // namespace matryoshka::harness
