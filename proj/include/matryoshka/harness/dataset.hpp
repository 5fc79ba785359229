#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "matryoshka/core.hpp"

namespace matryoshka::harness {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads JSON lines with fields `id`, `question` and optional `answer`. Blank lines are
/// skipped; any malformed line, missing field or repeated id raises DatasetError naming the line.
std::vector<Query> load_dataset(const std::filesystem::path& path);

std::vector<Query> parse_dataset(std::string_view text, const std::string& source_name = "<memory>");

}  // namespace matryoshka::harness
