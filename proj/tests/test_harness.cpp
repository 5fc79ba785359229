#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "matryoshka/harness/config.hpp"
#include "matryoshka/harness/dataset.hpp"
#include "matryoshka/harness/evaluation.hpp"
#include "matryoshka/harness/model_validation.hpp"
#include "matryoshka/harness/runner.hpp"
#include "matryoshka/harness/trace.hpp"

using namespace matryoshka;
using namespace matryoshka::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("matryoshka_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

fs::path write_dataset(const fs::path& dir, int count) {
    std::string text;
    for (int i = 0; i < count; ++i) {
        text += R"({"id": "q)" + std::to_string(i) + R"(", "question": "Q)" + std::to_string(i) +
                R"(", "answer": ")" + std::to_string(i * 3) + "\"}\n";
    }
    const fs::path path = dir / "data.jsonl";
    write_file(path, text);
    return path;
}

RunConfig oracle_config(const fs::path& dir, int queries, int loops = 2, int samples = 4) {
    RunConfig cfg;
    cfg.dataset = write_dataset(dir, queries);
    cfg.output_dir = dir / "out";
    cfg.seed = 3;
    cfg.pipeline.loops = loops;
    cfg.pipeline.samples_per_loop = samples;
    cfg.pass_at_k = {1, 2};
    return cfg;
}

}  // namespace

TEST_CASE("dataset parsing") {
    auto two = parse_dataset("{\"id\":\"a\",\"question\":\"x\",\"answer\":\" $5$ \"}\n\n{\"id\":2,\"question\":\"y\"}\n");
    REQUIRE(two.size() == 2);
    CHECK(two[0].ground_truth == std::optional<std::string>("5"));
    CHECK(two[1].id == "2");
    CHECK_FALSE(two[1].ground_truth);

    auto message_of = [](std::string_view text) {
        try {
            parse_dataset(text, "d.jsonl");
        } catch (const DatasetError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message_of("{\"id\":\"a\",\"question\":\"x\"}\n{\"id\":\"a\",\"question\":\"y\"}") ==
          "d.jsonl:2: duplicate id 'a'");
    CHECK(message_of("{\"id\":\"a\",\"question\":\"x\"}\n\n{\"id\":\"b\"}") == "d.jsonl:3: missing field 'question'");
    CHECK(message_of("{\"id\":\"a\",") == "d.jsonl:1: not a JSON object");
    CHECK(message_of("{\"id\":\"\",\"question\":\"x\"}") == "d.jsonl:1: empty 'id'");
    CHECK_THROWS_AS(load_dataset("/nonexistent/file.jsonl"), DatasetError);
}

TEST_CASE("config parsing is strict and resolves paths") {
    const nlohmann::json doc = nlohmann::json::parse(R"({
        "backend": {"kind": "oracle", "oracle": {"p": 0.3}},
        "pipeline": {"loops": 1, "samples_per_loop": 3,
                     "sampling": {"preset": "qwen3-4b-thinking-2507", "verify": {"temperature": 0.1}}},
        "ablation": "no_loop",
        "dataset": "data/x.jsonl",
        "output_dir": "runs/a",
        "seed": 9,
        "pass_at_k": [1, 3]
    })");
    const RunConfig cfg = parse_run_config(doc, "/base");
    CHECK(cfg.backend.oracle.p == 0.3);
    CHECK(cfg.dataset == fs::path("/base/data/x.jsonl"));
    CHECK(cfg.output_dir == fs::path("/base/runs/a"));
    CHECK(cfg.pipeline.sampling.answer.temperature == 0.7);
    CHECK(cfg.pipeline.sampling.answer.top_p == 0.8);
    CHECK(cfg.pipeline.sampling.verify.temperature == 0.1);
    CHECK(cfg.pipeline.sampling.verify.top_p == 0.8);
    CHECK(cfg.effective_pipeline().loops == 0);
    CHECK(cfg.pass_at_k == std::vector<int>{1, 3});

    const RunConfig again = parse_run_config(to_json(cfg), "/elsewhere");
    CHECK(again.dataset == cfg.dataset);
    CHECK(again.pipeline.sampling == cfg.pipeline.sampling);
    CHECK(again.ablation == cfg.ablation);

    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"sede": 1})"), "/"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"pipeline": {"loop": 1}})"), "/"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"backend": {"kind": "gpu"}})"), "/"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"seed": "x"})"), "/"), ConfigError);
    CHECK_THROWS_AS(sampling_preset("gpt-5"), ConfigError);
    CHECK(sampling_preset("seed-oss-36b-instruct").temperature == 1.1);
}

TEST_CASE("evaluate_answer") {
    const Query q{"q", "x", std::string("42")};
    CHECK(*evaluate_answer("42", q, EvaluationMode::exact_match).correct);
    CHECK_FALSE(*evaluate_answer("42.0", q, EvaluationMode::exact_match).correct);
    CHECK_FALSE(evaluate_answer("42", Query{"u", "x", std::nullopt}, EvaluationMode::exact_match).correct);

    OracleBackend oracle({}, 1, {{"q", "42"}});
    const TemplateSet templates = TemplateSet::defaults();
    const JudgeContext ctx{oracle, templates.judge, {}};
    const auto yes = evaluate_answer("42", q, EvaluationMode::llm_judge, &ctx);
    CHECK(*yes.correct);
    CHECK(yes.usage.total() > 0);
    CHECK_FALSE(*evaluate_answer("41", q, EvaluationMode::llm_judge, &ctx).correct);

    OracleBackend no_truth({}, 1, {});
    const JudgeContext broken{no_truth, templates.judge, {}};
    const auto failed = evaluate_answer("42", q, EvaluationMode::llm_judge, &broken);
    CHECK_FALSE(failed.correct);
    CHECK_FALSE(failed.error.empty());
}

TEST_CASE("trace records round-trip and torn tails are tolerated") {
    const fs::path dir = scratch("trace");
    const fs::path path = dir / "trace.jsonl";
    {
        auto log = TraceLog::open(path, true);
        for (int i = 0; i < 3; ++i) {
            TraceRecord r;
            r.tag = {"q", 0, i + 1, Phase::answer};
            r.prompt_hash = prompt_hash("p");
            r.response = "line one\nline \"two\"";
            r.usage = {10, i};
            log->append(r);
        }
        CHECK(log->total_tokens() == 33);
        TraceRecord dup;
        dup.tag = {"q", 0, 1, Phase::answer};
        CHECK_THROWS_AS(log->append(dup), TraceError);
    }
    const std::string full = slurp(path);
    write_file(path, full + "{\"tag\": {\"query_id\"");
    std::uintmax_t valid = 0;
    CHECK(read_trace(path, &valid).size() == 3);
    CHECK(valid == full.size());
    {
        auto log = TraceLog::open(path, false);
        CHECK(log->size() == 3);
        CHECK(log->find("q/0/2/answer")->response == "line one\nline \"two\"");
    }
    CHECK(slurp(path) == full);

    write_file(path, "garbage\n" + full);
    CHECK_THROWS_AS(TraceLog::open(path, false), TraceError);
    CHECK_NOTHROW(TraceLog::open(path, true));
    fs::remove_all(dir);
}

TEST_CASE("recording backend replays and refuses mismatched prompts") {
    const fs::path dir = scratch("recording");
    auto log = TraceLog::open(dir / "t.jsonl", true);
    auto oracle = std::make_shared<OracleBackend>(OracleParams{}, 1, std::unordered_map<std::string, std::string>{{"q", "1"}});
    RecordingBackend rec(oracle, *log);
    GenerationRequest req;
    req.prompt = "hello";
    req.tag = {"q", 0, 1, Phase::answer};
    const auto first = rec.generate(req);
    CHECK(log->size() == 1);
    CHECK(rec.generate(req).text == first.text);
    CHECK(log->size() == 1);

    req.prompt = "changed";
    CHECK_THROWS_AS(rec.generate(req), TraceError);

    RecordingBackend replay(nullptr, *log);
    req.tag.sample_index = 2;
    CHECK_THROWS_AS(replay.generate(req), TraceError);
    fs::remove_all(dir);
}

TEST_CASE("recorded backend errors replay as the same error") {
    class Failing : public Backend {
    public:
        GenerationResult generate(const GenerationRequest& r) override {
            ++calls;
            throw BackendError(BackendErrorKind::context_overflow, r.tag, "too long");
        }
        std::string id() const override { return "failing"; }
        int calls = 0;
    };
    const fs::path dir = scratch("errors");
    auto log = TraceLog::open(dir / "t.jsonl", true);
    auto failing = std::make_shared<Failing>();
    RecordingBackend rec(failing, *log);
    GenerationRequest req;
    req.tag = {"q", 0, 1, Phase::answer};
    for (int i = 0; i < 2; ++i) {
        try {
            rec.generate(req);
            FAIL("expected error");
        } catch (const BackendError& e) {
            CHECK(e.kind() == BackendErrorKind::context_overflow);
        }
    }
    CHECK(failing->calls == 1);
    fs::remove_all(dir);
}

TEST_CASE("perfect oracle run scores 1.0 and token totals match the trace") {
    const fs::path dir = scratch("perfect");
    RunConfig cfg = oracle_config(dir, 15);
    cfg.backend.oracle.p = 1.0;
    cfg.backend.oracle.s1 = 1.0;
    const RunReport report = run_benchmark(cfg, {.fresh = true});
    CHECK(report.accuracy == 1.0);
    CHECK(report.evaluated == 15);
    CHECK(report.tokens.total() == report.trace_total_tokens);
    std::int64_t sum = 0;
    for (const auto& r : read_trace(RunPaths::in(cfg.output_dir).trace)) sum += r.usage.total();
    CHECK(sum == report.tokens.total());
    CHECK(fs::exists(RunPaths::in(cfg.output_dir).config));
    fs::remove_all(dir);
}

TEST_CASE("resuming from any truncation point reproduces the report bytes") {
    const fs::path dir = scratch("resume");
    RunConfig cfg = oracle_config(dir, 12);
    run_benchmark(cfg, {.fresh = true});
    const RunPaths paths = RunPaths::in(cfg.output_dir);
    const std::string reference = slurp(paths.report);
    const std::string trace = slurp(paths.trace);

    std::mt19937 rng(17);
    std::vector<std::size_t> cuts{0, trace.size() / 2, trace.size() - 1};
    for (int i = 0; i < 12; ++i) cuts.push_back(std::uniform_int_distribution<std::size_t>(0, trace.size())(rng));
    for (std::size_t cut : cuts) {
        write_file(paths.trace, trace.substr(0, cut));
        fs::remove(paths.report);
        run_benchmark(cfg);
        CHECK(slurp(paths.report) == reference);
    }
    fs::remove_all(dir);
}

TEST_CASE("reports are identical across max_concurrency settings") {
    const fs::path dir = scratch("concurrency");
    RunConfig cfg = oracle_config(dir, 20);
    std::string reference;
    for (int c : {1, 8, 64}) {
        cfg.max_concurrency = c;
        const RunReport report = run_benchmark(cfg, {.fresh = true});
        const std::string text = report.to_json_text();
        if (reference.empty()) reference = text;
        CHECK(text == reference);
    }
    fs::remove_all(dir);
}

TEST_CASE("replay-only run regenerates the report without a backend") {
    const fs::path dir = scratch("replay");
    RunConfig cfg = oracle_config(dir, 5);
    const RunReport live = run_benchmark(cfg, {.fresh = true});
    const RunReport replay = run_benchmark(cfg, {.replay_only = true});
    CHECK(replay.to_json_text() == live.to_json_text());

    cfg.pipeline.samples_per_loop = 5;
    CHECK_THROWS_AS(run_benchmark(cfg, {.replay_only = true}), TraceError);
    fs::remove_all(dir);
}

TEST_CASE("a corrupt trace blocks resuming until --fresh") {
    const fs::path dir = scratch("corrupt");
    RunConfig cfg = oracle_config(dir, 3);
    run_benchmark(cfg, {.fresh = true});
    const RunPaths paths = RunPaths::in(cfg.output_dir);
    write_file(paths.trace, "not json\n" + slurp(paths.trace));
    CHECK_THROWS_AS(run_benchmark(cfg), TraceError);
    CHECK_NOTHROW(run_benchmark(cfg, {.fresh = true}));
    fs::remove_all(dir);
}

TEST_CASE("llm_judge runs record judge calls and count them in tokens") {
    const fs::path dir = scratch("judge");
    RunConfig cfg = oracle_config(dir, 6);
    cfg.evaluation = EvaluationMode::llm_judge;
    const RunReport judged = run_benchmark(cfg, {.fresh = true});
    cfg.evaluation = EvaluationMode::exact_match;
    cfg.output_dir = dir / "exact";
    const RunReport exact = run_benchmark(cfg, {.fresh = true});
    CHECK(judged.accuracy == exact.accuracy);
    CHECK(judged.tokens.total() > exact.tokens.total());
    CHECK(judged.tokens.total() == judged.trace_total_tokens);
    fs::remove_all(dir);
}

TEST_CASE("report aggregates") {
    RunReport r;
    QueryReport a;
    a.id = "a";
    a.ground_truth = "1";
    a.correct = true;
    a.usage = {10, 5};
    a.entropy_per_loop = {1.0, 0.5};
    a.initial_samples = 4;
    a.initial_correct = 2;
    a.majority_vote_correct = true;
    QueryReport b = a;
    b.id = "b";
    b.correct = false;
    b.usage = {1, 1};
    b.entropy_per_loop = {0.0, std::nullopt};
    b.initial_correct = 0;
    b.majority_vote_correct = false;
    QueryReport c;
    c.id = "c";
    c.failed = true;
    c.evaluation_error = "query has no ground truth";
    r.queries = {a, b, c};
    r.aggregate({1, 4});
    CHECK(r.evaluated == 2);
    CHECK(r.correct == 1);
    CHECK(r.excluded == 1);
    CHECK(r.failed == 1);
    CHECK(r.accuracy == 0.5);
    CHECK(r.tokens.total() == 17);
    CHECK(r.max_query_tokens == 15);
    CHECK(*r.majority_vote_accuracy == 0.5);
    CHECK(r.pass_at_k.at(0).second == doctest::Approx(0.25));
    CHECK(r.pass_at_k.at(1).second == doctest::Approx(0.5));
    CHECK(*r.mean_entropy_per_loop.at(0) == doctest::Approx(0.5));
    CHECK(*r.mean_entropy_per_loop.at(1) == doctest::Approx(0.5));
    CHECK(r.summary_text().find("warning: 1 query excluded") != std::string::npos);
}

TEST_CASE("validation grid") {
    const auto grid = default_validation_grid();
    CHECK(grid.size() == 48);
    const auto axes = parse_grid(nlohmann::json::parse(
        R"({"axes": {"p": [0.1, 0.9], "tpr": [0.7], "fpr": [0.05], "s0_s1": [[0, 0.9]], "n": [8, 32]}})"));
    CHECK(axes.size() == 4);
    const auto points = parse_grid(nlohmann::json::parse(R"({"points": [{"p":1,"tpr":1,"fpr":0,"s0":0,"s1":1,"n":2}]})"));
    REQUIRE(points.size() == 1);
    CHECK(points[0].n == 2);
    CHECK_THROWS(parse_grid(nlohmann::json::parse(R"({"points": [{"q": 1}]})")));
    CHECK(sweep_csv(points).starts_with("p,tpr,fpr,s0,s1,n,analytical\n"));
}

TEST_CASE("model validation: degenerate and small points, and a corrupted model fails") {
    std::vector<GridPoint> grid{{1.0, 1.0, 0.1, 0.0, 1.0, 4}, {0.5, 1.0, 0.0, 0.0, 1.0, 2}};
    ValidationSettings settings;
    settings.trials = 20000;
    settings.threads = 1;
    const auto results = validate_model(grid, settings);
    CHECK(results[0].analytical == 1.0);
    CHECK(results[0].empirical == 1.0);
    CHECK(results[0].abs_diff == 0.0);
    CHECK(results[0].pass);
    CHECK(results[1].analytical == doctest::Approx(0.75));
    CHECK(results[1].pass);

    // Drops the empty-pool branch.
    const AccuracyModel corrupted = [](analytics::AnalyticalParams a) {
        a.s0 = 0.0;
        return analytics::pass1_final(a);
    };
    std::vector<GridPoint> tough{{0.1, 0.7, 0.3, 0.2, 1.0, 8}};
    const auto bad = validate_model(tough, settings, corrupted);
    CHECK_FALSE(bad[0].pass);
    CHECK(validation_csv(bad).find(",false\n") != std::string::npos);
}

TEST_CASE("simulation is reproducible and independent of thread count") {
    const GridPoint point{0.5, 0.9, 0.1, 0.1, 0.95, 8};
    CHECK(simulate_point(point, 3000, 5, 1) == simulate_point(point, 3000, 5, 3));
}

TEST_CASE("sampling presets carry the published per-model settings") {
    struct Row {
        const char* model;
        double temperature;
        double top_p;
        int max_tokens;
    };
    const Row table[] = {
        {"gpt-oss-120b", 1.0, 1.0, 64000},
        {"seed-oss-36b-instruct", 1.1, 0.95, 64000},
        {"qwen3-30b-a3b-thinking-2507", 0.6, 0.95, 64000},
        {"qwen3-30b-a3b-instruct-2507", 0.6, 0.95, 64000},
        {"qwen3-4b-thinking-2507", 0.7, 0.8, 64000},
        {"qwen3-4b-instruct-2507", 0.7, 0.8, 64000},
        {"ernie-4.5-21b-a3b-thinking", 0.9, 0.9, 64000},
        {"ernie-4.5-vl-28b-a3b", 0.2, 0.8, 64000},
        {"qwen2.5-omni-7b", 0.9, 1.0, 8192},
    };
    CHECK(sampling_presets().size() == std::size(table));
    for (const Row& row : table) {
        const SamplingParams s = sampling_preset(row.model);
        CHECK(s.temperature == row.temperature);
        CHECK(s.top_p == row.top_p);
        CHECK(s.top_k == -1);
        CHECK(s.max_tokens == row.max_tokens);
    }
}
