#include "cqa/csv.hpp"

#include <charconv>
#include <fstream>

#include "cqa/error.hpp"

namespace cqa {

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') {
    line.remove_suffix(1);
  }
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

long long parse_int(std::string_view s, const char* what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(std::string("cannot parse ") + what + " from '" +
                      std::string(s) + "'");
  }
  return v;
}

double parse_double(std::string_view s, const char* what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(std::string("cannot parse ") + what + " from '" +
                      std::string(s) + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

CsvTable CsvTable::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  CsvTable t;
  t.path_ = path;
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("empty CSV file: " + path);
  }
  t.header_ = split_csv_line(line);
  for (std::size_t i = 0; i < t.header_.size(); ++i) {
    t.index_[t.header_[i]] = i;
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header_.size()) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(t.header_.size()) + " columns, got " +
                        std::to_string(cells.size()));
    }
    t.rows_.push_back(std::move(cells));
  }
  return t;
}

bool CsvTable::has_column(const std::string& name) const {
  return index_.count(name) != 0;
}

const std::string& CsvTable::at(std::size_t row, const std::string& column) const {
  auto it = index_.find(column);
  if (it == index_.end()) {
    throw FormatError(path_ + ": missing column '" + column + "'");
  }
  return rows_.at(row)[it->second];
}

} // namespace cqa
