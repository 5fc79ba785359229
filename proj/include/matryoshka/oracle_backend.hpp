#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>

#include "matryoshka/backend.hpp"

namespace matryoshka {

/// Behaviour of the simulated model.
struct OracleParams {
    double p = 0.5;     // fresh answer is correct
    double tpr = 0.9;   // verifier accepts a correct candidate
    double fpr = 0.1;   // verifier accepts an incorrect candidate
    double s1 = 0.95;   // summary correct when the presented pool holds a correct candidate
    double s0 = 0.1;    // summary correct when it does not
    std::int64_t answer_tokens = 1200;
    std::int64_t verify_tokens = 400;
    std::int64_t summary_tokens = 900;
    int wrong_answer_vocab = 8;

    void validate() const;
};

/// Deterministic simulated model. Correct answers are `\boxed{<ground truth>}`, incorrect ones
/// `\boxed{WRONG-<j>}`; verify and summary calls read that bit back out of the candidate
/// texts attached to the request. Every draw is keyed by (run seed, call tag), so the oracle
/// holds no mutable state and is safe to share between threads.
class OracleBackend : public Backend {
public:
    OracleBackend(OracleParams params, std::uint64_t run_seed,
                  std::unordered_map<std::string, std::string> answer_key);

    GenerationResult generate(const GenerationRequest& request) override;
    std::string id() const override { return "oracle"; }

    const OracleParams& params() const { return params_; }

    /// Ground truth used for any query id missing from the answer key.
    void set_shared_truth(std::string truth) { shared_truth_ = std::move(truth); }

private:
    bool is_correct_text(const std::string& ground_truth, const std::string& text) const;
    std::string answer_text(const CallTag& tag, const std::string& ground_truth, bool correct) const;

    OracleParams params_;
    std::uint64_t run_seed_;
    std::unordered_map<std::string, std::string> answer_key_;
    std::optional<std::string> shared_truth_;
};

}  // namespace matryoshka
