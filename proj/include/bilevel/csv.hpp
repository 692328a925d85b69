#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace bilevel {

/// Shortest-free round-trippable form: 17 significant digits, '.' decimal point.
std::string format_number(double value);
/// Empty field for absent values.
std::string format_optional(const std::optional<double>& value);
/// Coordinates joined with ';' so that a vector fits one CSV field.
std::string format_vector(const Eigen::VectorXd& values);
Eigen::VectorXd parse_vector(std::string_view field);

std::vector<std::string> split(std::string_view line, char delimiter);

/// Line-buffered CSV output with '\n' endings; every row is flushed immediately.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);

  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
};

}  // namespace bilevel
