#pragma once

#include <filesystem>
#include <memory>
#include <ostream>

#include "matryoshka/harness/config.hpp"
#include "matryoshka/harness/report.hpp"

namespace matryoshka::harness {

struct RunOptions {
    bool fresh = false;        // discard an existing trace instead of resuming from it
    bool replay_only = false;  // serve every call from the trace; never contact a backend
    std::ostream* progress = nullptr;
};

struct RunPaths {
    std::filesystem::path trace;
    std::filesystem::path report;
    std::filesystem::path config;

    static RunPaths in(const std::filesystem::path& output_dir);
};

/// Runs the pipeline over the dataset, recording every backend call to
/// `<output_dir>/trace.jsonl` and writing `<output_dir>/report.json`. Calls already in the
/// trace are replayed rather than re-issued. In replay-only mode nothing is written and a
/// call missing from the trace is an error.
RunReport run_benchmark(const RunConfig& config, const RunOptions& options = {});

/// Backend described by `config` (before throttling and tracing).
std::shared_ptr<Backend> make_backend(const RunConfig& config, const std::vector<Query>& dataset);

}  // namespace matryoshka::harness
