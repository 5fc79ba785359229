#include "matryoshka/harness/dataset.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace matryoshka::harness {

namespace {

std::string scalar_to_string(const nlohmann::json& value) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_number_integer() || value.is_number_unsigned()) return value.dump();
    throw std::invalid_argument("expected a string");
}

}  // namespace

std::vector<Query> parse_dataset(std::string_view text, const std::string& source_name) {
    std::vector<Query> queries;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;

        auto fail = [&](const std::string& why) -> DatasetError {
            return DatasetError(source_name + ":" + std::to_string(line_no) + ": " + why);
        };
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object()) throw fail("not a JSON object");

        Query q;
        try {
            auto id = record.find("id");
            if (id == record.end()) throw fail("missing field 'id'");
            q.id = scalar_to_string(*id);
            auto question = record.find("question");
            if (question == record.end()) throw fail("missing field 'question'");
            q.prompt = scalar_to_string(*question);
            if (auto answer = record.find("answer"); answer != record.end() && !answer->is_null()) {
                q.ground_truth = canonicalize_answer(scalar_to_string(*answer));
            }
        } catch (const std::invalid_argument& e) {
            throw fail(std::string("bad field type: ") + e.what());
        }
        if (q.id.empty()) throw fail("empty 'id'");
        if (q.prompt.empty()) throw fail("empty 'question'");
        if (!seen.insert(q.id).second) throw fail("duplicate id '" + q.id + "'");
        queries.push_back(std::move(q));
    }
    return queries;
}

std::vector<Query> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open dataset " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str(), path.string());
}

}  // namespace matryoshka::harness
