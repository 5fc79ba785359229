#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matryoshka/analytics.hpp"

namespace matryoshka::harness {

/// One (p, TPR, FPR, S0, S1, N) combination.
struct GridPoint {
    double p = 0.5;
    double tpr = 0.9;
    double fpr = 0.1;
    double s0 = 0.1;
    double s1 = 0.95;
    int n = 32;

    analytics::AnalyticalParams analytical() const { return {p, tpr, fpr, s1, s0, n}; }
};

/// Full factorial grid over p {0.1,0.5,0.9}, TPR {0.7,0.95}, FPR {0.05,0.3},
/// (S0,S1) {(0,0.9),(0.2,1.0)}, N {8,32}: 48 points.
std::vector<GridPoint> default_validation_grid();

/// Grid file: {"points": [{"p":..,"tpr":..,"fpr":..,"s0":..,"s1":..,"n":..}, ...]} or
/// {"axes": {"p": [...], "tpr": [...], "fpr": [...], "s0_s1": [[s0,s1], ...], "n": [...]}}.
std::vector<GridPoint> parse_grid(const nlohmann::json& doc);
std::vector<GridPoint> load_grid(const std::filesystem::path& path);

struct ValidationSettings {
    int trials = 100000;
    std::uint64_t seed = 20251017;
    double sigma_limit = 4.0;
    unsigned threads = 0;  // 0: hardware concurrency
};

struct PointResult {
    GridPoint point;
    int trials = 0;
    double analytical = 0.0;
    double empirical = 0.0;
    double stderr_binomial = 0.0;  // sqrt(a(1-a)/trials) at the analytical value a
    double abs_diff = 0.0;
    bool pass = false;
};

using AccuracyModel = std::function<double(const analytics::AnalyticalParams&)>;

/// Monte Carlo accuracy of one grid point: the full pipeline with L = 0 and M = N on the
/// oracle backend, one final summary per trial, empty verified pools summarized as empty.
double simulate_point(const GridPoint& point, int trials, std::uint64_t seed, unsigned threads);

/// Compares `model` (default: the closed form) with simulation at every point. A point
/// passes when |empirical - analytical| <= sigma_limit * stderr.
std::vector<PointResult> validate_model(std::span<const GridPoint> grid, const ValidationSettings& settings,
                                        const AccuracyModel& model = {});

std::string validation_csv(std::span<const PointResult> results);

/// Closed-form accuracy only: p,tpr,fpr,s0,s1,n,analytical.
std::string sweep_csv(std::span<const GridPoint> grid);

}  // namespace matryoshka::harness
