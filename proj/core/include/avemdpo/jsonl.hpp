#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace avemdpo {

using Json = nlohmann::json;

// Reads line-delimited JSON. A malformed line throws std::runtime_error
// whose message carries the path and 1-based line number.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

// Writes one compact object per line via a temp file + rename, so readers
// never observe a partial file.
void write_jsonl_atomic(const std::filesystem::path& path,
                        const std::vector<Json>& rows);

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& text);

std::string read_text(const std::filesystem::path& path);

}  // namespace avemdpo
