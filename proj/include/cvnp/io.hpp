#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cvnp {

/// Shortest round-trip decimal form ("nan"/"inf"/"-inf" for non-finite).
std::string format_double(double v);
double parse_double(std::string_view s);

/// A parsed CSV file: header plus rows of raw fields. No quoting support;
/// every file written by this project is comma-free inside fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
  const std::string& at(std::size_t row, std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}
  CsvWriter& row(std::vector<std::string> fields);
  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace cvnp
