#include "matryoshka/harness/runner.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include "matryoshka/harness/dataset.hpp"
#include "matryoshka/harness/evaluation.hpp"
#include "matryoshka/harness/trace.hpp"

namespace matryoshka::harness {

namespace fs = std::filesystem;

RunPaths RunPaths::in(const fs::path& output_dir) {
    return {output_dir / "trace.jsonl", output_dir / "report.json", output_dir / "config.json"};
}

std::shared_ptr<Backend> make_backend(const RunConfig& config, const std::vector<Query>& dataset) {
    if (config.backend.kind == BackendKind::openai) {
        return std::make_shared<OpenAICompatibleBackend>(*config.backend.openai);
    }
    std::unordered_map<std::string, std::string> answer_key;
    for (const Query& q : dataset) {
        if (q.ground_truth) answer_key.emplace(q.id, *q.ground_truth);
    }
    return std::make_shared<OracleBackend>(config.backend.oracle, config.seed, std::move(answer_key));
}

namespace {

QueryReport summarize_query(const Query& query, const QueryOutcome& outcome, const Evaluation& eval) {
    QueryReport r;
    r.id = query.id;
    r.ground_truth = query.ground_truth;
    r.final_answer = outcome.final_answer;
    r.correct = eval.correct;
    r.failed = outcome.failed;
    r.failure = outcome.failure;
    r.evaluation_error = eval.error;
    r.usage = outcome.usage_total + eval.usage;
    r.entropy_per_loop = outcome.entropy_per_loop();
    for (const CandidateSet& set : outcome.candidate_history) r.accepted_per_loop.push_back(set.size());

    if (!outcome.loops.empty()) {
        const std::vector<Candidate>& initial = outcome.loops.front().raw;
        r.initial_samples = static_cast<int>(initial.size());
        std::vector<std::string> answers;
        for (const Candidate& c : initial) {
            answers.push_back(c.extracted_answer);
            if (query.ground_truth && exact_match(c.extracted_answer, *query.ground_truth)) ++r.initial_correct;
        }
        try {
            r.majority_vote_answer = majority_vote(answers);
            if (query.ground_truth) r.majority_vote_correct = exact_match(*r.majority_vote_answer, *query.ground_truth);
        } catch (const VoteError&) {
            if (query.ground_truth) r.majority_vote_correct = false;
        }
    }
    return r;
}

}  // namespace

RunReport run_benchmark(const RunConfig& config, const RunOptions& options) {
    config.validate();
    const PipelineConfig pipeline = config.effective_pipeline();
    const std::vector<Query> dataset = load_dataset(config.dataset);
    const TemplateSet templates =
        config.templates.directory
            ? TemplateSet::load(*config.templates.directory, config.templates.answer, config.templates.verify,
                                config.templates.summary, config.templates.judge)
            : TemplateSet::defaults();
    const RunPaths paths = RunPaths::in(config.output_dir);

    std::unique_ptr<TraceLog> trace;
    std::shared_ptr<Backend> inner;
    if (options.replay_only) {
        trace = TraceLog::open_read_only(paths.trace);
    } else {
        trace = TraceLog::open(paths.trace, options.fresh);
        inner = std::make_shared<ThrottledBackend>(make_backend(config, dataset), config.max_concurrency);
        std::ofstream(paths.config) << to_json(config).dump(2) << '\n';
    }
    RecordingBackend backend(inner, *trace);

    const bool remote = config.backend.kind == BackendKind::openai;
    std::vector<QueryReport> reports(dataset.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::atomic<bool> abort{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        SequentialExecutor sequential;
        ThreadExecutor threaded;
        Executor& executor = remote ? static_cast<Executor&>(threaded) : sequential;
        const PipelineContext ctx{backend, templates, config.seed, executor};
        const JudgeContext judge_ctx{backend, templates.judge, pipeline.sampling.verify};
        while (!abort) {
            const std::size_t i = next.fetch_add(1);
            if (i >= dataset.size()) return;
            try {
                const Query& q = dataset[i];
                const QueryOutcome outcome = run_query(q, pipeline, ctx);
                Evaluation eval;
                if (outcome.failed) {
                    if (q.ground_truth) eval.correct = false;
                } else {
                    eval = evaluate_answer(outcome.final_answer, q, config.evaluation, &judge_ctx);
                }
                reports[i] = summarize_query(q, outcome, eval);
                const std::size_t finished = ++done;
                if (options.progress) {
                    std::lock_guard lock(error_mutex);
                    *options.progress << "[" << finished << "/" << dataset.size() << "] " << q.id
                                      << (outcome.failed ? " failed: " + outcome.failure : "") << "\n";
                }
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                abort = true;
            }
        }
    };

    const std::size_t workers = std::max<std::size_t>(
        1, std::min<std::size_t>(static_cast<std::size_t>(config.max_concurrency), dataset.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (first_error) std::rethrow_exception(first_error);

    RunReport report;
    report.ablation = std::string(to_string(config.ablation));
    report.loops = pipeline.loops;
    report.samples_per_loop = pipeline.samples_per_loop;
    report.verify_enabled = pipeline.verify_enabled;
    report.summary_enabled = pipeline.summary_enabled;
    report.backend = config.backend.kind == BackendKind::openai ? "openai:" + config.backend.openai->model : "oracle";
    report.evaluation = std::string(to_string(config.evaluation));
    report.seed = config.seed;
    report.queries = std::move(reports);
    report.trace_total_tokens = trace->total_tokens();
    report.aggregate(config.pass_at_k);

    if (!options.replay_only) {
        std::ofstream out(paths.report, std::ios::binary | std::ios::trunc);
        out << report.to_json_text();
        if (!out) throw std::runtime_error("cannot write report " + paths.report.string());
    }
    return report;
}

}  // namespace matryoshka::harness
