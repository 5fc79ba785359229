#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "matryoshka/openai_backend.hpp"
#include "matryoshka/oracle_backend.hpp"
#include "matryoshka/pipeline.hpp"

namespace matryoshka::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class BackendKind { oracle, openai };
enum class EvaluationMode { exact_match, llm_judge };

std::string_view to_string(BackendKind kind);
std::string_view to_string(EvaluationMode mode);
EvaluationMode parse_evaluation_mode(std::string_view name);

struct BackendConfig {
    BackendKind kind = BackendKind::oracle;
    OracleParams oracle;
    std::optional<OpenAIConfig> openai;
};

struct TemplateSelection {
    std::optional<std::filesystem::path> directory;  // unset: built-in defaults
    std::string answer = "answer";
    std::string verify = "verify";
    std::string summary = "summary";
    std::string judge = "judge";
};

struct RunConfig {
    BackendConfig backend;
    PipelineConfig pipeline;
    Ablation ablation = Ablation::full;
    TemplateSelection templates;
    std::filesystem::path dataset;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "run";
    int max_concurrency = 8;
    EvaluationMode evaluation = EvaluationMode::exact_match;
    std::vector<int> pass_at_k = {1};

    /// Pipeline settings after the ablation is applied.
    PipelineConfig effective_pipeline() const { return apply_ablation(pipeline, ablation); }

    void validate() const;
};

/// Sampling presets keyed by model name, mirroring the per-model settings used for evaluation.
struct SamplingPreset {
    std::string_view model;
    SamplingParams params;
};

const std::vector<SamplingPreset>& sampling_presets();
SamplingParams sampling_preset(std::string_view model);

/// Parses a run config. Relative paths resolve against `base_dir`; unknown keys are rejected.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Inverse of parse_run_config (paths written as absolute).
nlohmann::json to_json(const RunConfig& config);

/// Throws ConfigError naming the first key of `object` not in `allowed`.
void require_known_keys(const nlohmann::json& object, std::initializer_list<std::string_view> allowed,
                        std::string_view context);

}  // namespace matryoshka::harness
