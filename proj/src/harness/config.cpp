#include "matryoshka/harness/config.hpp"

#include <algorithm>
#include <fstream>

namespace matryoshka::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T get_as(const json& value, std::string_view context) {
    try {
        return value.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(context) + ": " + e.what());
    }
}

template <typename T>
void read_field(const json& object, const char* key, T& target, std::string_view context) {
    if (auto it = object.find(key); it != object.end()) {
        target = get_as<T>(*it, std::string(context) + "." + key);
    }
}

const json& require_object(const json& value, std::string_view context) {
    if (!value.is_object()) throw ConfigError(std::string(context) + " must be an object");
    return value;
}

fs::path resolve(const fs::path& base_dir, const std::string& raw) {
    fs::path p(raw);
    return p.is_absolute() ? p : (base_dir / p).lexically_normal();
}

void overlay_sampling(const json& object, SamplingParams& params, std::string_view context) {
    require_object(object, context);
    require_known_keys(object, {"temperature", "top_p", "top_k", "max_tokens"}, context);
    read_field(object, "temperature", params.temperature, context);
    read_field(object, "top_p", params.top_p, context);
    read_field(object, "top_k", params.top_k, context);
    read_field(object, "max_tokens", params.max_tokens, context);
}

PhaseSampling parse_sampling(const json& object) {
    constexpr std::string_view ctx = "pipeline.sampling";
    require_object(object, ctx);
    require_known_keys(object, {"preset", "default", "answer", "verify", "summary", "final_summary"}, ctx);
    SamplingParams base;
    if (auto it = object.find("preset"); it != object.end()) {
        base = sampling_preset(get_as<std::string>(*it, "pipeline.sampling.preset"));
    }
    if (auto it = object.find("default"); it != object.end()) overlay_sampling(*it, base, "pipeline.sampling.default");

    PhaseSampling out = PhaseSampling::uniform(base);
    auto phase = [&](const char* key, SamplingParams& target) {
        if (auto it = object.find(key); it != object.end()) {
            overlay_sampling(*it, target, std::string(ctx) + "." + key);
        }
    };
    phase("answer", out.answer);
    phase("verify", out.verify);
    phase("summary", out.summary);
    phase("final_summary", out.final_summary);
    return out;
}

PipelineConfig parse_pipeline(const json& object) {
    constexpr std::string_view ctx = "pipeline";
    require_object(object, ctx);
    require_known_keys(object,
                       {"loops", "samples_per_loop", "verify_enabled", "summary_enabled", "empty_set_fallback",
                        "rendering", "sampling"},
                       ctx);
    PipelineConfig cfg;
    read_field(object, "loops", cfg.loops, ctx);
    read_field(object, "samples_per_loop", cfg.samples_per_loop, ctx);
    read_field(object, "verify_enabled", cfg.verify_enabled, ctx);
    read_field(object, "summary_enabled", cfg.summary_enabled, ctx);
    if (auto it = object.find("empty_set_fallback"); it != object.end()) {
        try {
            cfg.empty_set_fallback = parse_empty_set_fallback(get_as<std::string>(*it, "pipeline.empty_set_fallback"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (auto it = object.find("rendering"); it != object.end()) {
        constexpr std::string_view rctx = "pipeline.rendering";
        require_object(*it, rctx);
        require_known_keys(*it, {"per_candidate_chars", "max_candidates", "include_full_reasoning"}, rctx);
        read_field(*it, "per_candidate_chars", cfg.rendering.per_candidate_chars, rctx);
        read_field(*it, "max_candidates", cfg.rendering.max_candidates, rctx);
        read_field(*it, "include_full_reasoning", cfg.rendering.include_full_reasoning, rctx);
    }
    if (auto it = object.find("sampling"); it != object.end()) cfg.sampling = parse_sampling(*it);
    return cfg;
}

OracleParams parse_oracle(const json& object) {
    constexpr std::string_view ctx = "backend.oracle";
    require_object(object, ctx);
    require_known_keys(object,
                       {"p", "tpr", "fpr", "s1", "s0", "answer_tokens", "verify_tokens", "summary_tokens",
                        "wrong_answer_vocab"},
                       ctx);
    OracleParams p;
    read_field(object, "p", p.p, ctx);
    read_field(object, "tpr", p.tpr, ctx);
    read_field(object, "fpr", p.fpr, ctx);
    read_field(object, "s1", p.s1, ctx);
    read_field(object, "s0", p.s0, ctx);
    read_field(object, "answer_tokens", p.answer_tokens, ctx);
    read_field(object, "verify_tokens", p.verify_tokens, ctx);
    read_field(object, "summary_tokens", p.summary_tokens, ctx);
    read_field(object, "wrong_answer_vocab", p.wrong_answer_vocab, ctx);
    return p;
}

OpenAIConfig parse_openai(const json& object) {
    constexpr std::string_view ctx = "backend.openai";
    require_object(object, ctx);
    require_known_keys(object, {"base_url", "model", "api_key_env", "timeout_seconds", "retry"}, ctx);
    OpenAIConfig c;
    read_field(object, "base_url", c.base_url, ctx);
    read_field(object, "model", c.model, ctx);
    read_field(object, "api_key_env", c.api_key_env, ctx);
    read_field(object, "timeout_seconds", c.timeout_seconds, ctx);
    if (auto it = object.find("retry"); it != object.end()) {
        constexpr std::string_view rctx = "backend.openai.retry";
        require_object(*it, rctx);
        require_known_keys(*it, {"max_attempts", "base_delay_seconds", "max_delay_seconds"}, rctx);
        read_field(*it, "max_attempts", c.retry.max_attempts, rctx);
        read_field(*it, "base_delay_seconds", c.retry.base_delay_seconds, rctx);
        read_field(*it, "max_delay_seconds", c.retry.max_delay_seconds, rctx);
    }
    return c;
}

json sampling_json(const SamplingParams& s) {
    return {{"temperature", s.temperature}, {"top_p", s.top_p}, {"top_k", s.top_k}, {"max_tokens", s.max_tokens}};
}

}  // namespace

std::string_view to_string(BackendKind kind) { return kind == BackendKind::oracle ? "oracle" : "openai"; }

std::string_view to_string(EvaluationMode mode) {
    return mode == EvaluationMode::exact_match ? "exact_match" : "llm_judge";
}

EvaluationMode parse_evaluation_mode(std::string_view name) {
    if (name == "exact_match") return EvaluationMode::exact_match;
    if (name == "llm_judge") return EvaluationMode::llm_judge;
    throw ConfigError("unknown evaluation mode '" + std::string(name) + "'");
}

const std::vector<SamplingPreset>& sampling_presets() {
    static const std::vector<SamplingPreset> presets{
        {"gpt-oss-120b", {1.0, 1.0, -1, 64000}},
        {"seed-oss-36b-instruct", {1.1, 0.95, -1, 64000}},
        {"qwen3-30b-a3b-thinking-2507", {0.6, 0.95, -1, 64000}},
        {"qwen3-30b-a3b-instruct-2507", {0.6, 0.95, -1, 64000}},
        {"qwen3-4b-thinking-2507", {0.7, 0.8, -1, 64000}},
        {"qwen3-4b-instruct-2507", {0.7, 0.8, -1, 64000}},
        {"ernie-4.5-21b-a3b-thinking", {0.9, 0.9, -1, 64000}},
        {"ernie-4.5-vl-28b-a3b", {0.2, 0.8, -1, 64000}},
        {"qwen2.5-omni-7b", {0.9, 1.0, -1, 8192}},
    };
    return presets;
}

SamplingParams sampling_preset(std::string_view model) {
    for (const SamplingPreset& p : sampling_presets()) {
        if (p.model == model) return p.params;
    }
    throw ConfigError("unknown sampling preset '" + std::string(model) + "'");
}

void require_known_keys(const json& object, std::initializer_list<std::string_view> allowed, std::string_view context) {
    for (const auto& [key, value] : object.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
        }
    }
}

void RunConfig::validate() const {
    try {
        effective_pipeline().validate();
        backend.oracle.validate();
        if (backend.kind == BackendKind::openai) {
            if (!backend.openai) throw ConfigError("backend.kind is openai but backend.openai is missing");
            backend.openai->validate();
        }
    } catch (const ContractViolation& e) {
        throw ConfigError(e.what());
    }
    if (dataset.empty()) throw ConfigError("dataset is required");
    if (output_dir.empty()) throw ConfigError("output_dir is required");
    if (max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
    if (pass_at_k.empty()) throw ConfigError("pass_at_k must list at least one k");
    for (int k : pass_at_k) {
        if (k < 1) throw ConfigError("pass_at_k entries must be >= 1");
    }
}

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
    require_object(doc, "config");
    require_known_keys(doc,
                       {"backend", "pipeline", "ablation", "templates", "dataset", "seed", "output_dir",
                        "max_concurrency", "evaluation", "pass_at_k"},
                       "config");
    RunConfig cfg;

    if (auto it = doc.find("backend"); it != doc.end()) {
        require_object(*it, "backend");
        require_known_keys(*it, {"kind", "oracle", "openai"}, "backend");
        const std::string kind = it->value("kind", std::string("oracle"));
        if (kind == "oracle") {
            cfg.backend.kind = BackendKind::oracle;
        } else if (kind == "openai") {
            cfg.backend.kind = BackendKind::openai;
        } else {
            throw ConfigError("backend.kind must be 'oracle' or 'openai', got '" + kind + "'");
        }
        if (auto o = it->find("oracle"); o != it->end()) cfg.backend.oracle = parse_oracle(*o);
        if (auto o = it->find("openai"); o != it->end()) cfg.backend.openai = parse_openai(*o);
    }
    if (auto it = doc.find("pipeline"); it != doc.end()) cfg.pipeline = parse_pipeline(*it);
    if (auto it = doc.find("ablation"); it != doc.end()) {
        try {
            cfg.ablation = parse_ablation(get_as<std::string>(*it, "ablation"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    if (auto it = doc.find("templates"); it != doc.end()) {
        require_object(*it, "templates");
        require_known_keys(*it, {"directory", "answer", "verify", "summary", "judge"}, "templates");
        if (auto d = it->find("directory"); d != it->end()) {
            cfg.templates.directory = resolve(base_dir, get_as<std::string>(*d, "templates.directory"));
        }
        read_field(*it, "answer", cfg.templates.answer, "templates");
        read_field(*it, "verify", cfg.templates.verify, "templates");
        read_field(*it, "summary", cfg.templates.summary, "templates");
        read_field(*it, "judge", cfg.templates.judge, "templates");
    }
    if (auto it = doc.find("dataset"); it != doc.end()) {
        cfg.dataset = resolve(base_dir, get_as<std::string>(*it, "dataset"));
    }
    read_field(doc, "seed", cfg.seed, "config");
    if (auto it = doc.find("output_dir"); it != doc.end()) {
        cfg.output_dir = resolve(base_dir, get_as<std::string>(*it, "output_dir"));
    }
    read_field(doc, "max_concurrency", cfg.max_concurrency, "config");
    if (auto it = doc.find("evaluation"); it != doc.end()) {
        cfg.evaluation = parse_evaluation_mode(get_as<std::string>(*it, "evaluation"));
    }
    read_field(doc, "pass_at_k", cfg.pass_at_k, "config");
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
    return parse_run_config(doc, fs::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
    json backend = {{"kind", to_string(c.backend.kind)},
                    {"oracle",
                     {{"p", c.backend.oracle.p},
                      {"tpr", c.backend.oracle.tpr},
                      {"fpr", c.backend.oracle.fpr},
                      {"s1", c.backend.oracle.s1},
                      {"s0", c.backend.oracle.s0},
                      {"answer_tokens", c.backend.oracle.answer_tokens},
                      {"verify_tokens", c.backend.oracle.verify_tokens},
                      {"summary_tokens", c.backend.oracle.summary_tokens},
                      {"wrong_answer_vocab", c.backend.oracle.wrong_answer_vocab}}}};
    if (c.backend.openai) {
        const OpenAIConfig& o = *c.backend.openai;
        backend["openai"] = {{"base_url", o.base_url},
                             {"model", o.model},
                             {"api_key_env", o.api_key_env},
                             {"timeout_seconds", o.timeout_seconds},
                             {"retry",
                              {{"max_attempts", o.retry.max_attempts},
                               {"base_delay_seconds", o.retry.base_delay_seconds},
                               {"max_delay_seconds", o.retry.max_delay_seconds}}}};
    }
    const PipelineConfig& p = c.pipeline;
    json pipeline = {
        {"loops", p.loops},
        {"samples_per_loop", p.samples_per_loop},
        {"verify_enabled", p.verify_enabled},
        {"summary_enabled", p.summary_enabled},
        {"empty_set_fallback", to_string(p.empty_set_fallback)},
        {"rendering",
         {{"per_candidate_chars", p.rendering.per_candidate_chars},
          {"max_candidates", p.rendering.max_candidates},
          {"include_full_reasoning", p.rendering.include_full_reasoning}}},
        {"sampling",
         {{"answer", sampling_json(p.sampling.answer)},
          {"verify", sampling_json(p.sampling.verify)},
          {"summary", sampling_json(p.sampling.summary)},
          {"final_summary", sampling_json(p.sampling.final_summary)}}},
    };
    json templates = {{"answer", c.templates.answer},
                      {"verify", c.templates.verify},
                      {"summary", c.templates.summary},
                      {"judge", c.templates.judge}};
    if (c.templates.directory) templates["directory"] = c.templates.directory->string();
    return {{"backend", backend},
            {"pipeline", pipeline},
            {"ablation", to_string(c.ablation)},
            {"templates", templates},
            {"dataset", c.dataset.string()},
            {"seed", c.seed},
            {"output_dir", c.output_dir.string()},
            {"max_concurrency", c.max_concurrency},
            {"evaluation", to_string(c.evaluation)},
            {"pass_at_k", c.pass_at_k}};
}

}  // namespace matryoshka::harness
