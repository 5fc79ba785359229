#include "matryoshka/harness/trace.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>

namespace matryoshka::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t secs = std::chrono::system_clock::to_time_t(now);
    const auto millis =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(millis));
    return buf;
}

std::unordered_map<std::string, TraceRecord> index_records(std::vector<TraceRecord> records,
                                                           const fs::path& path) {
    std::unordered_map<std::string, TraceRecord> index;
    for (TraceRecord& r : records) {
        std::string key = r.tag.key();
        if (!index.emplace(key, std::move(r)).second) {
            throw TraceError("trace " + path.string() + " records call " + key + " twice");
        }
    }
    return index;
}

}  // namespace

std::string prompt_hash(std::string_view prompt) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(prompt)));
    return buf;
}

json TraceRecord::to_json() const {
    json doc = {
        {"key", tag.key()},
        {"query_id", tag.query_id},
        {"loop", tag.loop_index},
        {"sample", tag.sample_index},
        {"phase", to_string(tag.phase)},
        {"template_id", template_id},
        {"prompt_hash", prompt_hash},
        {"response", response},
        {"usage",
         {{"prompt_tokens", usage.prompt_tokens},
          {"completion_tokens", usage.completion_tokens},
          {"total_tokens", usage.total()}}},
        {"backend_id", backend_id},
        {"started_at", started_at},
        {"finished_at", finished_at},
        {"error", nullptr},
    };
    if (error) doc["error"] = {{"kind", to_string(error->kind)}, {"message", error->message}};
    return doc;
}

TraceRecord TraceRecord::from_json(const json& doc) {
    TraceRecord r;
    r.tag.query_id = doc.at("query_id").get<std::string>();
    r.tag.loop_index = doc.at("loop").get<int>();
    r.tag.sample_index = doc.at("sample").get<int>();
    r.tag.phase = parse_phase(doc.at("phase").get<std::string>());
    r.template_id = doc.at("template_id").get<std::string>();
    r.prompt_hash = doc.at("prompt_hash").get<std::string>();
    r.response = doc.at("response").get<std::string>();
    const json& usage = doc.at("usage");
    r.usage.prompt_tokens = usage.at("prompt_tokens").get<std::int64_t>();
    r.usage.completion_tokens = usage.at("completion_tokens").get<std::int64_t>();
    if (usage.at("total_tokens").get<std::int64_t>() != r.usage.total()) {
        throw std::invalid_argument("usage.total_tokens inconsistent");
    }
    r.backend_id = doc.at("backend_id").get<std::string>();
    r.started_at = doc.at("started_at").get<std::string>();
    r.finished_at = doc.at("finished_at").get<std::string>();
    if (const json& err = doc.at("error"); !err.is_null()) {
        r.error = TraceCallError{parse_backend_error_kind(err.at("kind").get<std::string>()),
                                 err.at("message").get<std::string>()};
    }
    if (doc.at("key").get<std::string>() != r.tag.key()) throw std::invalid_argument("key does not match tag");
    return r;
}

std::vector<TraceRecord> read_trace(const fs::path& path, std::uintmax_t* valid_bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TraceError("cannot read trace " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    std::vector<TraceRecord> records;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        ++line_no;
        const std::size_t end = text.find('\n', pos);
        const bool terminated = end != std::string::npos;
        const std::string_view line(text.data() + pos, (terminated ? end : text.size()) - pos);
        try {
            records.push_back(TraceRecord::from_json(json::parse(line)));
        } catch (const std::exception& e) {
            if (!terminated) break;  // torn write at the tail
            throw TraceError("trace " + path.string() + ":" + std::to_string(line_no) + " is unreadable (" +
                             e.what() + "); rerun with --fresh to discard it");
        }
        if (!terminated) {
            // A complete record without its newline: keep it, the newline is restored on append.
            pos = text.size();
            break;
        }
        pos = end + 1;
    }
    if (valid_bytes) *valid_bytes = pos > text.size() ? text.size() : pos;
    return records;
}

std::unique_ptr<TraceLog> TraceLog::open(const fs::path& path, bool fresh) {
    std::unique_ptr<TraceLog> log(new TraceLog());
    log->path_ = path;
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());

    if (fresh || !fs::exists(path)) {
        log->out_.open(path, std::ios::binary | std::ios::trunc);
    } else {
        std::uintmax_t valid = 0;
        log->records_ = index_records(read_trace(path, &valid), path);
        const std::uintmax_t size = fs::file_size(path);
        bool needs_newline = false;
        if (valid < size) {
            fs::resize_file(path, valid);
        } else if (size > 0) {
            std::ifstream tail(path, std::ios::binary);
            tail.seekg(-1, std::ios::end);
            needs_newline = tail.get() != '\n';
        }
        log->out_.open(path, std::ios::binary | std::ios::app);
        if (needs_newline) log->out_ << '\n';
    }
    if (!log->out_) throw TraceError("cannot open trace " + path.string() + " for writing");
    return log;
}

std::unique_ptr<TraceLog> TraceLog::open_read_only(const fs::path& path) {
    std::unique_ptr<TraceLog> log(new TraceLog());
    log->path_ = path;
    log->read_only_ = true;
    log->records_ = index_records(read_trace(path), path);
    return log;
}

std::optional<TraceRecord> TraceLog::find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = records_.find(key);
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

void TraceLog::append(const TraceRecord& record) {
    std::lock_guard lock(mutex_);
    if (read_only_) throw TraceError("trace " + path_.string() + " is open read-only");
    const std::string key = record.tag.key();
    if (records_.contains(key)) throw TraceError("call " + key + " is already in the trace");
    out_ << record.to_json().dump() << '\n';
    out_.flush();
    if (!out_) throw TraceError("write to trace " + path_.string() + " failed");
    records_.emplace(key, record);
}

std::size_t TraceLog::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::int64_t TraceLog::total_tokens() const {
    std::lock_guard lock(mutex_);
    std::int64_t total = 0;
    for (const auto& [key, record] : records_) total += record.usage.total();
    return total;
}

GenerationResult RecordingBackend::generate(const GenerationRequest& request) {
    const std::string key = request.tag.key();
    const std::string hash = prompt_hash(request.prompt);
    if (auto recorded = log_.find(key)) {
        if (recorded->prompt_hash != hash) {
            throw TraceError("trace entry " + key +
                             " was recorded for a different prompt; the configuration changed since the "
                             "trace was written (rerun with --fresh)");
        }
        if (recorded->error) throw BackendError(recorded->error->kind, request.tag, recorded->error->message);
        return GenerationResult{recorded->response, recorded->usage, recorded->backend_id};
    }
    if (!inner_) throw TraceError("trace has no record of call " + key);

    TraceRecord record;
    record.tag = request.tag;
    record.template_id = request.template_id;
    record.prompt_hash = hash;
    record.started_at = utc_now();
    try {
        GenerationResult result = inner_->generate(request);
        record.finished_at = utc_now();
        record.response = result.text;
        record.usage = result.usage;
        record.backend_id = result.backend_id;
        log_.append(record);
        return result;
    } catch (const BackendError& err) {
        record.finished_at = utc_now();
        record.backend_id = inner_->id();
        record.error = TraceCallError{err.kind(), err.what()};
        log_.append(record);
        throw;
    }
}

}  // namespace matryoshka::harness
