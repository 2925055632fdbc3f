#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cqa {

/// Splits on commas. The toolkit's CSV files never quote fields.
std::vector<std::string> split_csv_line(std::string_view line);

long long parse_int(std::string_view s, const char* what);
double parse_double(std::string_view s, const char* what);

/// Shortest decimal representation that round-trips.
std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);

/// Header-addressed CSV table.
class CsvTable {
public:
  static CsvTable read(const std::string& path);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }
  bool has_column(const std::string& name) const;
  const std::string& at(std::size_t row, const std::string& column) const;
  const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }

private:
  std::string path_;
  std::vector<std::string> header_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> rows_;
};

} // namespace cqa
