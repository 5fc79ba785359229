#include "matryoshka/harness/model_validation.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "matryoshka/harness/config.hpp"
#include "matryoshka/oracle_backend.hpp"
#include "matryoshka/pipeline.hpp"

namespace matryoshka::harness {

using nlohmann::json;

namespace {

constexpr std::string_view kTruth = "42";

std::string format_row(const GridPoint& g) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g,%.6g,%.6g,%d", g.p, g.tpr, g.fpr, g.s0, g.s1, g.n);
    return buf;
}

}  // namespace

std::vector<GridPoint> default_validation_grid() {
    std::vector<GridPoint> grid;
    for (double p : {0.1, 0.5, 0.9}) {
        for (double tpr : {0.7, 0.95}) {
            for (double fpr : {0.05, 0.3}) {
                for (auto [s0, s1] : {std::pair{0.0, 0.9}, std::pair{0.2, 1.0}}) {
                    for (int n : {8, 32}) grid.push_back({p, tpr, fpr, s0, s1, n});
                }
            }
        }
    }
    return grid;
}

std::vector<GridPoint> parse_grid(const json& doc) {
    if (!doc.is_object()) throw ConfigError("grid must be a JSON object");
    require_known_keys(doc, {"points", "axes"}, "grid");
    std::vector<GridPoint> grid;
    try {
        if (auto pts = doc.find("points"); pts != doc.end()) {
            for (const json& pt : *pts) {
                require_known_keys(pt, {"p", "tpr", "fpr", "s0", "s1", "n"}, "grid.points[]");
                grid.push_back({pt.at("p").get<double>(), pt.at("tpr").get<double>(), pt.at("fpr").get<double>(),
                                pt.at("s0").get<double>(), pt.at("s1").get<double>(), pt.at("n").get<int>()});
            }
        }
        if (auto axes = doc.find("axes"); axes != doc.end()) {
            require_known_keys(*axes, {"p", "tpr", "fpr", "s0_s1", "n"}, "grid.axes");
            for (double p : axes->at("p").get<std::vector<double>>())
                for (double tpr : axes->at("tpr").get<std::vector<double>>())
                    for (double fpr : axes->at("fpr").get<std::vector<double>>())
                        for (const auto& pair : axes->at("s0_s1").get<std::vector<std::vector<double>>>()) {
                            if (pair.size() != 2) throw ConfigError("grid.axes.s0_s1 entries must be [s0, s1]");
                            for (int n : axes->at("n").get<std::vector<int>>())
                                grid.push_back({p, tpr, fpr, pair[0], pair[1], n});
                        }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    for (const GridPoint& g : grid) {
        try {
            g.analytical().validate();
        } catch (const analytics::DomainError& e) {
            throw ConfigError(std::string("grid point ") + format_row(g) + ": " + e.what());
        }
    }
    if (grid.empty()) throw ConfigError("grid has no points");
    return grid;
}

std::vector<GridPoint> load_grid(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open grid file " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("grid file " + path.string() + " is not valid JSON");
    return parse_grid(doc);
}

double simulate_point(const GridPoint& point, int trials, std::uint64_t seed, unsigned threads) {
    if (trials <= 0) throw ContractViolation("simulate_point: trials must be > 0");
    OracleParams params;
    params.p = point.p;
    params.tpr = point.tpr;
    params.fpr = point.fpr;
    params.s0 = point.s0;
    params.s1 = point.s1;

    PipelineConfig cfg;
    cfg.loops = 0;
    cfg.samples_per_loop = point.n;
    cfg.verify_enabled = true;
    cfg.summary_enabled = true;
    cfg.empty_set_fallback = EmptySetFallback::summarize_empty;
    cfg.rendering.max_candidates = static_cast<std::size_t>(point.n);
    cfg.rendering.include_full_reasoning = false;

    const TemplateSet templates = TemplateSet::defaults();
    OracleBackend oracle(params, seed, {});
    oracle.set_shared_truth(std::string(kTruth));

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(trials));
    std::atomic<long long> correct{0};
    auto work = [&](unsigned worker) {
        SequentialExecutor executor;
        const PipelineContext ctx{oracle, templates, seed, executor};
        long long local = 0;
        Query q;
        q.prompt = "Simulated problem.";
        q.ground_truth = std::string(kTruth);
        for (int t = static_cast<int>(worker); t < trials; t += static_cast<int>(threads)) {
            q.id = "t" + std::to_string(t);
            const QueryOutcome out = run_query(q, cfg, ctx);
            if (!out.failed && out.final_answer == kTruth) ++local;
        }
        correct += local;
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    }
    return static_cast<double>(correct.load()) / static_cast<double>(trials);
}

std::vector<PointResult> validate_model(std::span<const GridPoint> grid, const ValidationSettings& settings,
                                        const AccuracyModel& model) {
    const AccuracyModel closed_form = [](const analytics::AnalyticalParams& p) { return analytics::pass1_final(p); };
    const AccuracyModel& formula = model ? model : closed_form;

    std::vector<PointResult> results;
    results.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        PointResult r;
        r.point = grid[i];
        r.trials = settings.trials;
        r.analytical = formula(grid[i].analytical());
        r.empirical = simulate_point(grid[i], settings.trials, splitmix64(settings.seed + i), settings.threads);
        r.stderr_binomial = std::sqrt(std::max(0.0, r.analytical * (1.0 - r.analytical)) / settings.trials);
        r.abs_diff = std::abs(r.empirical - r.analytical);
        r.pass = r.abs_diff <= settings.sigma_limit * r.stderr_binomial + 1e-12;
        results.push_back(r);
    }
    return results;
}

std::string validation_csv(std::span<const PointResult> results) {
    std::string out = "p,tpr,fpr,s0,s1,n,trials,analytical,empirical,stderr,abs_diff,z,pass\n";
    char buf[200];
    for (const PointResult& r : results) {
        const double z = r.stderr_binomial > 0.0 ? r.abs_diff / r.stderr_binomial : (r.abs_diff > 0.0 ? INFINITY : 0.0);
        std::snprintf(buf, sizeof buf, ",%d,%.10f,%.10f,%.10f,%.10f,%.4f,%s\n", r.trials, r.analytical, r.empirical,
                      r.stderr_binomial, r.abs_diff, z, r.pass ? "true" : "false");
        out += format_row(r.point);
        out += buf;
    }
    return out;
}

std::string sweep_csv(std::span<const GridPoint> grid) {
    std::string out = "p,tpr,fpr,s0,s1,n,analytical\n";
    char buf[64];
    for (const GridPoint& g : grid) {
        std::snprintf(buf, sizeof buf, ",%.12f\n", analytics::pass1_final(g.analytical()));
        out += format_row(g);
        out += buf;
    }
    return out;
}

}  // namespace matryoshka::harness
