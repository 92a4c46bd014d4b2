#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ckd {

// Minimal CSV support for the fixed schemas this project reads and writes.
// Fields never contain commas or quotes; event code lists use ';' internally.
std::vector<std::string> split_csv_line(const std::string& line);

// Shortest decimal form that round-trips the double exactly.
std::string format_double(double v);

std::string join_csv(const std::vector<std::string>& fields);

// Whole-file FNV-1a content hash, hex encoded; used in run manifests.
std::string file_hash_hex(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace ckd
