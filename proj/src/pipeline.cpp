#include "matryoshka/pipeline.hpp"

#include <array>
#include <exception>
#include <map>
#include <thread>

#include "matryoshka/analytics.hpp"

namespace matryoshka {

namespace {

constexpr std::array<std::string_view, 3> kFallbackNames{"carry_unverified", "fail", "summarize_empty"};
constexpr std::array<std::string_view, 4> kAblationNames{"full", "no_loop", "no_loop_no_verify", "baseline"};

struct CallOutcome {
    std::optional<GenerationResult> result;
    std::string error;
};

CallOutcome call_backend(Backend& backend, GenerationRequest request) {
    CallOutcome out;
    try {
        out.result = backend.generate(request);
    } catch (const BackendError& err) {
        out.error = err.what();
    }
    return out;
}

GenerationRequest make_request(RenderedPrompt prompt, const SamplingParams& sampling, CallTag tag) {
    GenerationRequest req;
    req.prompt = std::move(prompt.text);
    req.sampling = sampling;
    req.tag = std::move(tag);
    req.template_id = std::move(prompt.template_id);
    req.subject_texts = std::move(prompt.subject_texts);
    return req;
}

}  // namespace

std::string_view to_string(EmptySetFallback fallback) {
    return kFallbackNames[static_cast<std::size_t>(fallback)];
}

EmptySetFallback parse_empty_set_fallback(std::string_view name) {
    for (std::size_t i = 0; i < kFallbackNames.size(); ++i) {
        if (kFallbackNames[i] == name) return static_cast<EmptySetFallback>(i);
    }
    throw std::invalid_argument("unknown empty_set_fallback '" + std::string(name) + "'");
}

std::string_view to_string(Ablation ablation) { return kAblationNames[static_cast<std::size_t>(ablation)]; }

Ablation parse_ablation(std::string_view name) {
    for (std::size_t i = 0; i < kAblationNames.size(); ++i) {
        if (kAblationNames[i] == name) return static_cast<Ablation>(i);
    }
    throw std::invalid_argument("unknown ablation '" + std::string(name) +
                                "' (expected full, no_loop, no_loop_no_verify or baseline)");
}

PipelineConfig apply_ablation(PipelineConfig config, Ablation ablation) {
    switch (ablation) {
        case Ablation::full:
            break;
        case Ablation::no_loop:
            config.loops = 0;
            break;
        case Ablation::no_loop_no_verify:
            config.loops = 0;
            config.verify_enabled = false;
            break;
        case Ablation::baseline:
            config.loops = 0;
            config.verify_enabled = false;
            config.summary_enabled = false;
            break;
    }
    return config;
}

void PipelineConfig::validate() const {
    if (loops < 0) throw ContractViolation("pipeline.loops must be >= 0");
    if (samples_per_loop < 1) throw ContractViolation("pipeline.samples_per_loop must be >= 1");
    if (!summary_enabled && loops != 0) {
        throw ContractViolation("pipeline.loops must be 0 when summarization is disabled");
    }
    rendering.validate();
    sampling.answer.validate();
    sampling.verify.validate();
    sampling.summary.validate();
    sampling.final_summary.validate();
}

std::vector<std::optional<double>> QueryOutcome::entropy_per_loop() const {
    std::vector<std::optional<double>> out;
    out.reserve(loops.size());
    for (const LoopRecord& rec : loops) out.push_back(rec.entropy_bits);
    return out;
}

void SequentialExecutor::run(std::size_t count, const std::function<void(std::size_t)>& task) {
    for (std::size_t i = 0; i < count; ++i) task(i);
}

void ThreadExecutor::run(std::size_t count, const std::function<void(std::size_t)>& task) {
    if (count == 0) return;
    std::vector<std::exception_ptr> errors(count);
    {
        std::vector<std::jthread> threads;
        threads.reserve(count - 1);
        for (std::size_t i = 1; i < count; ++i) {
            threads.emplace_back([&, i] {
                try {
                    task(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
        try {
            task(0);
        } catch (...) {
            errors[0] = std::current_exception();
        }
    }
    for (const auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
}

CandidateSet empty_set_fallback(const std::string& query_id, std::span<const Candidate> loop_raw) {
    std::vector<Candidate> flagged(loop_raw.begin(), loop_raw.end());
    for (Candidate& c : flagged) c.unverified_fallback = true;
    return CandidateSet(query_id).with(flagged);
}

QueryOutcome run_query(const Query& query, const PipelineConfig& config, const PipelineContext& ctx) {
    config.validate();
    const auto M = static_cast<std::size_t>(config.samples_per_loop);

    QueryOutcome out;
    out.query_id = query.id;

    // C_l lives in candidate_history; C_{-1} is the empty set.
    const CandidateSet none(query.id);
    out.candidate_history.reserve(static_cast<std::size_t>(config.loops) + 1);
    auto accepted = [&]() -> const CandidateSet& {
        return out.candidate_history.empty() ? none : out.candidate_history.back();
    };
    std::optional<CandidateSet> fallback_pool;
    auto summary_pool = [&]() -> const CandidateSet& {
        return accepted().empty() && fallback_pool ? *fallback_pool : accepted();
    };
    const bool allow_empty_pool = config.empty_set_fallback == EmptySetFallback::summarize_empty;

    for (int l = 0; l <= config.loops; ++l) {
        LoopRecord rec;
        rec.loop_index = l;

        const bool first = l == 0;
        const RenderedPrompt prompt =
            first ? render_answer(ctx.templates.answer, query)
                  : render_summary(ctx.templates.summary, query, summary_pool(), config.rendering, allow_empty_pool);
        const SamplingParams& sampling = first ? config.sampling.answer : config.sampling.summary;
        const Phase phase = first ? Phase::answer : Phase::summary;

        std::vector<CallOutcome> generations(M);
        ctx.executor.run(M, [&](std::size_t i) {
            generations[i] = call_backend(
                ctx.backend, make_request(prompt, sampling, {query.id, l, static_cast<int>(i) + 1, phase}));
        });

        for (std::size_t i = 0; i < M; ++i) {
            if (!generations[i].result) {
                ++rec.failed_calls;
                continue;
            }
            GenerationResult& gen = *generations[i].result;
            Candidate c;
            c.loop_index = l;
            c.sample_index = static_cast<int>(i) + 1;
            c.extracted_answer = extract_answer(gen.text);
            c.full_text = std::move(gen.text);
            c.usage = gen.usage;
            out.usage_total += gen.usage;
            rec.raw.push_back(std::move(c));
        }

        if (config.verify_enabled) {
            std::vector<CallOutcome> checks(rec.raw.size());
            ctx.executor.run(rec.raw.size(), [&](std::size_t i) {
                const Candidate& c = rec.raw[i];
                checks[i] = call_backend(
                    ctx.backend,
                    make_request(render_verify(ctx.templates.verify, query, c, config.rendering),
                                 config.sampling.verify, {query.id, l, c.sample_index, Phase::verify}));
            });
            for (std::size_t i = 0; i < rec.raw.size(); ++i) {
                if (checks[i].result) {
                    out.usage_total += checks[i].result->usage;
                    rec.raw[i].verdict = judge(checks[i].result->text);
                } else {
                    ++rec.failed_calls;
                    rec.raw[i].verdict = VerificationVerdict{"verification call failed: " + checks[i].error, false, false};
                }
            }
        } else {
            for (Candidate& c : rec.raw) c.verdict = VerificationVerdict{"verification disabled", true, true};
        }

        if (!rec.raw.empty()) {
            std::vector<std::string> answers;
            answers.reserve(rec.raw.size());
            for (const Candidate& c : rec.raw) answers.push_back(c.extracted_answer);
            rec.entropy_bits = analytics::answer_entropy(answers);
        }

        out.candidate_history.push_back(union_accepted(accepted(), rec.raw));

        if (accepted().empty()) {
            if (config.empty_set_fallback == EmptySetFallback::fail) {
                out.failed = true;
                out.failure = "no candidate passed verification by loop " + std::to_string(l);
                out.loops.push_back(std::move(rec));
                return out;
            }
            if (config.empty_set_fallback == EmptySetFallback::carry_unverified && !rec.raw.empty()) {
                fallback_pool = empty_set_fallback(query.id, rec.raw);
                rec.used_fallback = true;
            }
        }
        out.loops.push_back(std::move(rec));
    }

    if (config.summary_enabled) {
        const CandidateSet& pool = summary_pool();
        if (pool.empty() && !allow_empty_pool) {
            out.failed = true;
            out.failure = "no candidates available for the final summary";
            return out;
        }
        const RenderedPrompt prompt =
            render_summary(ctx.templates.summary, query, pool, config.rendering, allow_empty_pool);
        CallOutcome final_call =
            call_backend(ctx.backend, make_request(prompt, config.sampling.final_summary,
                                                   {query.id, config.loops, 0, Phase::final_summary}));
        if (!final_call.result) {
            out.failed = true;
            out.failure = "final summary call failed: " + final_call.error;
            return out;
        }
        out.usage_total += final_call.result->usage;
        out.final_answer = extract_answer(final_call.result->text);
        out.final_text = std::move(final_call.result->text);
        return out;
    }

    const std::vector<Candidate>& raw = out.loops.back().raw;
    if (raw.empty()) {
        out.failed = true;
        out.failure = "every generation call failed";
        return out;
    }
    const CallTag select_tag{query.id, config.loops, 0, Phase::answer};
    const std::size_t pick = hash_call(ctx.run_seed, select_tag, "select") % raw.size();
    out.final_answer = raw[pick].extracted_answer;
    out.final_text = raw[pick].full_text;
    return out;
}

std::string majority_vote(std::span<const std::string> answers) {
    std::map<std::string_view, std::size_t> counts;
    for (const std::string& a : answers) {
        if (a != kUnextractable) ++counts[a];
    }
    if (counts.empty()) throw VoteError("majority_vote: no extractable answers");
    std::string_view best;
    std::size_t best_count = 0;
    for (const auto& [answer, count] : counts) {
        if (count > best_count) {
            best = answer;
            best_count = count;
        }
    }
    return std::string(best);
}

}  // namespace matryoshka
