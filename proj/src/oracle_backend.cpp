#include "matryoshka/oracle_backend.hpp"

#include <algorithm>

namespace matryoshka {

namespace {

bool is_probability(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

void OracleParams::validate() const {
    if (!is_probability(p) || !is_probability(tpr) || !is_probability(fpr) || !is_probability(s1) ||
        !is_probability(s0)) {
        throw ContractViolation("oracle probabilities must lie in [0, 1]");
    }
    if (answer_tokens <= 0 || verify_tokens <= 0 || summary_tokens <= 0) {
        throw ContractViolation("oracle token costs must be > 0");
    }
    if (wrong_answer_vocab <= 0) throw ContractViolation("oracle wrong_answer_vocab must be > 0");
}

OracleBackend::OracleBackend(OracleParams params, std::uint64_t run_seed,
                             std::unordered_map<std::string, std::string> answer_key)
    : params_(params), run_seed_(run_seed), answer_key_(std::move(answer_key)) {
    params_.validate();
}

bool OracleBackend::is_correct_text(const std::string& ground_truth, const std::string& text) const {
    return extract_answer(text) == ground_truth;
}

std::string OracleBackend::answer_text(const CallTag& tag, const std::string& ground_truth, bool correct) const {
    std::string answer = ground_truth;
    if (!correct) {
        const auto vocab = static_cast<std::uint64_t>(params_.wrong_answer_vocab);
        answer = "WRONG-" + std::to_string(1 + hash_call(run_seed_, tag, "wrong") % vocab);
    }
    std::string text = "Simulated ";
    text += tag.phase == Phase::answer ? "solution" : "reconciliation";
    text += " for ";
    text += tag.query_id;
    text += " (loop ";
    text += std::to_string(tag.loop_index);
    text += ", sample ";
    text += std::to_string(tag.sample_index);
    text += ").\nTherefore the answer is \\boxed{";
    text += answer;
    text += "}.";
    return text;
}

GenerationResult OracleBackend::generate(const GenerationRequest& request) {
    request.sampling.validate();
    const CallTag& tag = request.tag;
    const std::string* truth_ptr = nullptr;
    if (auto it = answer_key_.find(tag.query_id); it != answer_key_.end()) {
        truth_ptr = &it->second;
    } else if (shared_truth_) {
        truth_ptr = &*shared_truth_;
    } else {
        throw BackendError(BackendErrorKind::bad_request, tag,
                           "oracle has no ground truth for query '" + tag.query_id + "'");
    }
    const std::string& truth = *truth_ptr;

    GenerationResult result;
    result.backend_id = id();
    result.usage.prompt_tokens = static_cast<std::int64_t>((request.prompt.size() + 3) / 4);

    switch (tag.phase) {
        case Phase::answer: {
            const bool correct = oracle_decide(run_seed_, tag, params_.p, "correct");
            result.text = answer_text(tag, truth, correct);
            result.usage.completion_tokens = params_.answer_tokens;
            break;
        }
        case Phase::verify: {
            if (request.subject_texts.size() != 1) {
                throw BackendError(BackendErrorKind::bad_request, tag, "oracle verify call needs exactly one subject");
            }
            const bool correct = is_correct_text(truth, request.subject_texts.front());
            const bool accept = oracle_decide(run_seed_, tag, correct ? params_.tpr : params_.fpr, "accept");
            result.text = "Simulated check of the proposed solution.\nFINAL VERDICT: ";
            result.text += accept ? "CORRECT" : "INCORRECT";
            result.usage.completion_tokens = params_.verify_tokens;
            break;
        }
        case Phase::summary:
        case Phase::final_summary: {
            const bool pool_has_correct =
                std::any_of(request.subject_texts.begin(), request.subject_texts.end(),
                            [&](const std::string& s) { return is_correct_text(truth, s); });
            const bool correct =
                oracle_decide(run_seed_, tag, pool_has_correct ? params_.s1 : params_.s0, "correct");
            result.text = answer_text(tag, truth, correct);
            result.usage.completion_tokens = params_.summary_tokens;
            break;
        }
        case Phase::judge: {
            const bool match = !request.subject_texts.empty() && request.subject_texts.front() == truth;
            result.text = "Simulated comparison with the reference answer.\nFINAL VERDICT: ";
            result.text += match ? "CORRECT" : "INCORRECT";
            result.usage.completion_tokens = params_.verify_tokens;
            break;
        }
    }
    return result;
}

}  // namespace matryoshka
