// Command-line front end: run, simulate, validate-model, sweep, report.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "matryoshka/harness/config.hpp"
#include "matryoshka/harness/model_validation.hpp"
#include "matryoshka/harness/runner.hpp"

namespace mh = matryoshka::harness;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitValidationFailure = 2;

struct RunFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> ablation;
    std::optional<int> loops;
    std::optional<int> samples;
    bool fresh = false;
    bool quiet = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& flags, bool with_fresh) {
    cmd->add_option("--config", flags.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", flags.seed, "Override the run seed");
    cmd->add_option("--ablation", flags.ablation, "full | no_loop | no_loop_no_verify | baseline");
    cmd->add_option("--loops", flags.loops, "Override the number of loops L");
    cmd->add_option("--samples", flags.samples, "Override samples per loop M");
    if (with_fresh) cmd->add_flag("--fresh", flags.fresh, "Discard an existing trace instead of resuming");
    cmd->add_flag("--quiet", flags.quiet, "No per-query progress");
}

mh::RunConfig resolve_config(const RunFlags& flags) {
    mh::RunConfig cfg = mh::load_run_config(flags.config);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.loops) cfg.pipeline.loops = *flags.loops;
    if (flags.samples) cfg.pipeline.samples_per_loop = *flags.samples;
    if (flags.ablation) {
        try {
            cfg.ablation = matryoshka::parse_ablation(*flags.ablation);
        } catch (const std::invalid_argument& e) {
            throw mh::ConfigError(e.what());
        }
    }
    cfg.validate();
    return cfg;
}

int run_command(const RunFlags& flags, bool force_oracle) {
    mh::RunConfig cfg = resolve_config(flags);
    if (force_oracle) cfg.backend.kind = mh::BackendKind::oracle;
    mh::RunOptions options;
    options.fresh = flags.fresh;
    options.progress = flags.quiet ? nullptr : &std::cerr;
    const mh::RunReport report = mh::run_benchmark(cfg, options);
    std::cout << report.summary_text();
    std::cout << "report: " << mh::RunPaths::in(cfg.output_dir).report.string() << "\n";
    if (report.tokens.total() != report.trace_total_tokens) {
        std::cerr << "error: report token total " << report.tokens.total() << " differs from trace total "
                  << report.trace_total_tokens << "\n";
        return kExitRunFailure;
    }
    return kExitOk;
}

int report_command(const RunFlags& flags, const std::string& out_path) {
    const mh::RunConfig cfg = resolve_config(flags);
    mh::RunOptions options;
    options.replay_only = true;
    const mh::RunReport report = mh::run_benchmark(cfg, options);
    const std::string target = out_path.empty() ? mh::RunPaths::in(cfg.output_dir).report.string() : out_path;
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    out << report.to_json_text();
    if (!out) throw std::runtime_error("cannot write " + target);
    std::cout << report.summary_text() << "report: " << target << "\n";
    return kExitOk;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterated sample / self-verify / summarize inference engine"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "Run a benchmark with the configured backend");
    add_run_flags(run, run_flags, true);

    RunFlags sim_flags;
    auto* simulate = app.add_subcommand("simulate", "Run a benchmark on the simulated oracle backend");
    add_run_flags(simulate, sim_flags, true);

    RunFlags report_flags;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Re-render a run report from its trace");
    add_run_flags(report, report_flags, false);
    report->add_option("--out", report_out, "Where to write the report (default: <output_dir>/report.json)");

    std::string grid_path;
    std::string csv_path;
    mh::ValidationSettings settings;
    auto* validate = app.add_subcommand("validate-model", "Check the closed-form accuracy model by simulation");
    validate->add_option("--grid", grid_path, "Grid file (default: the built-in 48-point grid)")
        ->check(CLI::ExistingFile);
    validate->add_option("--trials", settings.trials, "Monte Carlo trials per point")->check(CLI::PositiveNumber);
    validate->add_option("--seed", settings.seed, "Simulation seed");
    validate->add_option("--sigma", settings.sigma_limit, "Allowed deviation in binomial standard errors");
    validate->add_option("--threads", settings.threads, "Worker threads (0: all cores)");
    validate->add_option("--csv", csv_path, "CSV output path ('-' for stdout)");

    std::string sweep_grid;
    std::string sweep_csv_path;
    auto* sweep = app.add_subcommand("sweep", "Evaluate the closed-form accuracy model over a grid");
    sweep->add_option("--grid", sweep_grid, "Grid file (default: the built-in 48-point grid)")
        ->check(CLI::ExistingFile);
    sweep->add_option("--csv", sweep_csv_path, "CSV output path ('-' for stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return run_command(run_flags, false);
        if (*simulate) return run_command(sim_flags, true);
        if (*report) return report_command(report_flags, report_out);
        if (*validate) {
            const auto grid = grid_path.empty() ? mh::default_validation_grid() : mh::load_grid(grid_path);
            const auto start = std::chrono::steady_clock::now();
            const auto results = mh::validate_model(grid, settings);
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            write_text(csv_path, mh::validation_csv(results));
            std::size_t failed = 0;
            for (const auto& r : results) {
                if (!r.pass) ++failed;
            }
            std::fprintf(stderr, "%zu/%zu grid points within %.1f sigma (%d trials each, %.1f s)\n",
                         results.size() - failed, results.size(), settings.sigma_limit, settings.trials, seconds);
            return failed == 0 ? kExitOk : kExitValidationFailure;
        }
        if (*sweep) {
            const auto grid = sweep_grid.empty() ? mh::default_validation_grid() : mh::load_grid(sweep_grid);
            write_text(sweep_csv_path, mh::sweep_csv(grid));
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRunFailure;
    }
    return kExitOk;
}
