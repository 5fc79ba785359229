#include "matryoshka/harness/evaluation.hpp"

namespace matryoshka::harness {

bool exact_match(const std::string& predicted, const std::string& ground_truth) {
    return canonicalize_answer(predicted) == canonicalize_answer(ground_truth);
}

Evaluation evaluate_answer(const std::string& predicted, const Query& query, EvaluationMode mode,
                           const JudgeContext* judge_ctx) {
    Evaluation ev;
    if (!query.ground_truth) {
        ev.error = "query has no ground truth";
        return ev;
    }
    if (mode == EvaluationMode::exact_match) {
        ev.correct = exact_match(predicted, *query.ground_truth);
        return ev;
    }

    if (judge_ctx == nullptr) throw ContractViolation("llm_judge evaluation needs a judge backend");
    const RenderedPrompt prompt = render_judge(judge_ctx->judge_template, query, predicted);
    GenerationRequest req;
    req.prompt = prompt.text;
    req.sampling = judge_ctx->sampling;
    req.tag = CallTag{query.id, 0, 0, Phase::judge};
    req.template_id = prompt.template_id;
    req.subject_texts = prompt.subject_texts;
    try {
        const GenerationResult result = judge_ctx->backend.generate(req);
        ev.usage = result.usage;
        ev.correct = judge(result.text).accepted;
    } catch (const BackendError& err) {
        ev.error = std::string("judge call failed: ") + err.what();
    }
    return ev;
}

}  // namespace matryoshka::harness
