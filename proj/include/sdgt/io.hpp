#pragma once

#include <string>

#include "json.hpp"

namespace sdgt {

std::string read_text_file(const std::string& path);

// Writes to "<path>.tmp.<pid>" and renames over `path`, so readers never see
// a half-written file.
void write_file_atomic(const std::string& path, const std::string& contents);

nlohmann::json read_json_file(const std::string& path);

// Shortest decimal form that reads back to the same double ("%.17g" trimmed).
std::string format_double(double v);

// FNV-1a 64-bit, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& data);

}  // namespace sdgt
