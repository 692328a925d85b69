#include "bilevel/csv.hpp"

#include <charconv>
#include <cstdio>

#include "bilevel/errors.hpp"

namespace bilevel {

std::string format_number(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

std::string format_optional(const std::optional<double>& value) { return value ? format_number(*value) : ""; }

std::string format_vector(const Eigen::VectorXd& values) {
  std::string out;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (i > 0) out += ';';
    out += format_number(values[i]);
  }
  return out;
}

Eigen::VectorXd parse_vector(std::string_view field) {
  if (field.empty()) return {};
  const auto parts = split(field, ';');
  Eigen::VectorXd out(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& part = parts[i];
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc{} || ptr != part.data() + part.size()) {
      throw InvalidConfig("malformed number '" + part + "'");
    }
    out[static_cast<Eigen::Index>(i)] = value;
  }
  return out;
}

std::vector<std::string> split(std::string_view line, char delimiter) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delimiter, start);
    fields.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

CsvWriter::CsvWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw InvalidConfig("cannot open '" + path + "' for writing");
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
  out_.flush();
}

}  // namespace bilevel
