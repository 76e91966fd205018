#include "spatialqr/matrix_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

namespace spatialqr {

namespace {

double parse_value(std::string_view token) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ParseError("invalid number '" + std::string(token) + "'");
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view line) { return line.find_first_not_of(" \t") == std::string_view::npos; }

std::vector<std::string_view> tokens(std::string_view line, std::string_view separators) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    pos = line.find_first_not_of(separators, pos);
    if (pos == std::string_view::npos) break;
    std::size_t end = line.find_first_of(separators, pos);
    if (end == std::string_view::npos) end = line.size();
    out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

Index parse_dim(std::string_view token) {
  Index v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || v < 1) {
    throw ParseError("invalid dimension '" + std::string(token) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

MatrixXd parse_matrix_text(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto line : split_lines(text)) {
    if (!is_blank(line)) lines.push_back(line);
  }
  if (lines.empty()) throw ParseError("empty matrix file");
  const auto header = tokens(lines.front(), " \t");
  if (header.size() != 2) throw ParseError("header must be 'rows cols'");
  const Index rows = parse_dim(header[0]);
  const Index cols = parse_dim(header[1]);
  if (static_cast<Index>(lines.size()) - 1 != rows) {
    throw ParseError("expected " + std::to_string(rows) + " rows, found " + std::to_string(lines.size() - 1));
  }
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto row = tokens(lines[static_cast<std::size_t>(i) + 1], " \t");
    if (static_cast<Index>(row.size()) != cols) {
      throw ParseError("row " + std::to_string(i + 1) + " has " + std::to_string(row.size()) + " values, expected " +
                       std::to_string(cols));
    }
    for (Index j = 0; j < cols; ++j) m(i, j) = parse_value(row[static_cast<std::size_t>(j)]);
  }
  return m;
}

std::string format_matrix_text(const MatrixXd& m) {
  std::string out = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ' ';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

MatrixXd parse_matrix_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  for (auto line : split_lines(text)) {
    if (is_blank(line)) continue;
    std::vector<double> row;
    for (auto cell : tokens(line, ",")) {
      const auto trimmed = tokens(cell, " \t");
      if (trimmed.size() != 1) throw ParseError("malformed csv cell '" + std::string(cell) + "'");
      row.push_back(parse_value(trimmed.front()));
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("ragged csv rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) throw ParseError("empty matrix file");
  MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

std::string format_matrix_csv(const MatrixXd& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

MatrixXd read_matrix(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  return path.extension() == ".csv" ? parse_matrix_csv(text) : parse_matrix_text(text);
}

void write_matrix(const std::filesystem::path& path, const MatrixXd& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  out << (path.extension() == ".csv" ? format_matrix_csv(m) : format_matrix_text(m));
}

MatrixXd random_matrix(std::uint64_t seed, Index rows, Index cols) {
  std::mt19937_64 rng(seed);
  // Built from raw 53-bit draws so the values do not depend on the
  // standard library's distribution implementation.
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      m(i, j) = 2.0 * unit - 1.0;
    }
  }
  return m;
}

}  // namespace spatialqr
