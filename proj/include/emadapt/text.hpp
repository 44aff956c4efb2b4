#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emadapt {

// Shortest decimal form that round-trips to the same double.
std::string format_real(double value);

// Fixed-point with the given number of decimals (used for table cells).
std::string format_fixed(double value, int decimals);

double parse_real(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);
std::string join(std::span<const std::string> parts, std::string_view sep);

// Lines of a CSV file with no quoting support (our writers never quote).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// SHA-1 of the bytes framed as a git blob ("blob <len>\0<bytes>"), hex encoded.
std::string git_blob_hash(std::span<const std::uint8_t> bytes);
std::string git_blob_hash(std::string_view text);
std::string sha1_hex(std::span<const std::uint8_t> bytes);

}  // namespace emadapt
