#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "spatialqr/numeric.hpp"

namespace spatialqr {

/// Text format: a "rows cols" header line, then one line of whitespace-separated
/// values per row. Values are written in shortest round-trip form.
MatrixXd parse_matrix_text(std::string_view text);
std::string format_matrix_text(const MatrixXd& m);

/// CSV: one comma-separated row per line, no header.
MatrixXd parse_matrix_csv(std::string_view text);
std::string format_matrix_csv(const MatrixXd& m);

/// Dispatches on the ".csv" extension; anything else is the text format.
MatrixXd read_matrix(const std::filesystem::path& path);
void write_matrix(const std::filesystem::path& path, const MatrixXd& m);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// Uniform [-1, 1) entries from a seeded 64-bit Mersenne Twister.
MatrixXd random_matrix(std::uint64_t seed, Index rows, Index cols);

}  // namespace spatialqr
