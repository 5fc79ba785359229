#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "matryoshka/backend.hpp"

namespace matryoshka::harness {

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TraceCallError {
    BackendErrorKind kind = BackendErrorKind::transport;
    std::string message;
};

/// One backend call. Stored as a single JSON line.
struct TraceRecord {
    CallTag tag;
    std::string template_id;
    std::string prompt_hash;  // hex FNV-1a 64 of the prompt bytes
    std::string response;
    TokenUsage usage;
    std::string backend_id;
    std::string started_at;  // ISO-8601 UTC
    std::string finished_at;
    std::optional<TraceCallError> error;

    nlohmann::json to_json() const;
    static TraceRecord from_json(const nlohmann::json& doc);
};

std::string prompt_hash(std::string_view prompt);

/// Reads every record of a trace file. A torn final line (no trailing newline and not
/// parseable) is tolerated and reported through `valid_bytes`; any other defect throws.
std::vector<TraceRecord> read_trace(const std::filesystem::path& path, std::uintmax_t* valid_bytes = nullptr);

/// Append-only, line-delimited trace with an index of completed calls.
class TraceLog {
public:
    /// Opens `path` for appending. With `fresh`, any existing file is discarded; otherwise
    /// existing records are loaded for replay and a torn final line is cut off.
    static std::unique_ptr<TraceLog> open(const std::filesystem::path& path, bool fresh);

    /// Read-only view for re-rendering a finished run; append() is rejected.
    static std::unique_ptr<TraceLog> open_read_only(const std::filesystem::path& path);

    std::optional<TraceRecord> find(const std::string& key) const;
    void append(const TraceRecord& record);
    std::size_t size() const;
    std::int64_t total_tokens() const;

private:
    TraceLog() = default;

    mutable std::mutex mutex_;
    std::filesystem::path path_;
    std::ofstream out_;
    bool read_only_ = false;
    std::unordered_map<std::string, TraceRecord> records_;
};

/// Serves recorded calls from the trace and records every new one. With no inner backend
/// (re-rendering), a call missing from the trace is a TraceError.
class RecordingBackend : public Backend {
public:
    RecordingBackend(std::shared_ptr<Backend> inner, TraceLog& log) : inner_(std::move(inner)), log_(log) {}

    GenerationResult generate(const GenerationRequest& request) override;
    std::string id() const override { return inner_ ? inner_->id() : "trace-replay"; }

private:
    std::shared_ptr<Backend> inner_;
    TraceLog& log_;
};

}  // namespace matryoshka::harness
