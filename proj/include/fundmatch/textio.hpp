#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fundmatch {

// Shortest decimal text that round-trips a double exactly.
std::string format_double(double v);

// Split on a single-character delimiter; no quoting, fields may be empty.
std::vector<std::string> split(std::string_view line, char delim);

std::string join(const std::vector<std::string>& parts, char delim);

// Whole-file helpers. read_lines drops a trailing '\r' per line (CRLF input)
// and skips nothing; callers decide what a comment is.
std::vector<std::string> read_lines(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

std::optional<long long> parse_int(std::string_view s);
std::optional<double> parse_real(std::string_view s);

std::string lowercase_ascii(std::string_view s);

}  // namespace fundmatch
