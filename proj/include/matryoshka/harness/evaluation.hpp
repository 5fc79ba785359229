#pragma once

#include <optional>
#include <string>

#include "matryoshka/backend.hpp"
#include "matryoshka/harness/config.hpp"
#include "matryoshka/prompts.hpp"

namespace matryoshka::harness {

struct Evaluation {
    std::optional<bool> correct;  // empty: not evaluated (no ground truth or judge failure)
    std::string error;
    TokenUsage usage;             // judge call cost, zero for exact match
};

/// Canonical string equality; "0.5" and "1/2" differ.
bool exact_match(const std::string& predicted, const std::string& ground_truth);

struct JudgeContext {
    Backend& backend;
    const PromptTemplate& judge_template;
    SamplingParams sampling;
};

/// Grades `predicted` against `query.ground_truth`. llm_judge mode issues one judge call
/// tagged (query id, 0, 0, judge) and reads its FINAL VERDICT marker.
Evaluation evaluate_answer(const std::string& predicted, const Query& query, EvaluationMode mode,
                           const JudgeContext* judge_ctx = nullptr);

}  // namespace matryoshka::harness
