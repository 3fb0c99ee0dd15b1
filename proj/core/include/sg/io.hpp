#pragma once

#include <string>
#include <vector>

namespace sg {

// 17 significant digits — round-trips the double exactly; all CSV floats go
// through this so artifacts are byte-reproducible.
std::string fmt_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
void ensure_directory(const std::string& path);

// Splits one CSV line on commas (no quoting; our artifacts never need it).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace sg
