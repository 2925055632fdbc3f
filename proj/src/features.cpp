#include "cqa/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "cqa/csv.hpp"
#include "cqa/kernels.hpp"

namespace cqa {

std::optional<std::size_t> schema_dimension(const std::string& schema_id) {
  if (schema_id == kClassicalSchema) return kClassicalDim;
  if (schema_id == kDeepSchema) return kDeepDim;
  return std::nullopt;
}

const std::vector<std::string>& classical_feature_names() {
  static const std::vector<std::string> names = {
      "area",          "perimeter",     "circularity",   "centroid_dx",
      "centroid_dy",   "hu1",           "hu2",           "hu3",
      "hu4",           "hu5",           "hu6",           "hu7",
      "intensity_mean", "intensity_std", "intensity_p10", "intensity_p50",
      "intensity_p90", "band_grad_mean", "band_grad_std", "radial_mean",
      "radial_std",    "radial_min",    "radial_max",    "area_fraction"};
  return names;
}

namespace {

// Counter-clockwise chain-code directions, y pointing down the rows:
// 0 E, 1 NE, 2 N, 3 NW, 4 W, 5 SW, 6 S, 7 SE. Odd codes are diagonal.
constexpr std::array<int, 8> kDx = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr std::array<int, 8> kDy = {0, -1, -1, -1, 0, 1, 1, 1};

double trace_outer_boundary(const Mask2D& m, int sx, int sy) {
  int x = sx, y = sy;
  int dir = 7;
  int first = -1;
  double length = 0.0;
  const long guard = 4L * static_cast<long>(m.size()) + 16;
  for (long steps = 0; steps < guard; ++steps) {
    const int start = (dir % 2 == 0) ? (dir + 7) % 8 : (dir + 6) % 8;
    int next = -1;
    for (int k = 0; k < 8; ++k) {
      const int d = (start + k) % 8;
      if (m.get_or(x + kDx[d], y + kDy[d], 0)) {
        next = d;
        break;
      }
    }
    if (next < 0) {
      return 0.0;  // isolated pixel
    }
    if (x == sx && y == sy && next == first) {
      return length;
    }
    if (first < 0) {
      first = next;
    }
    x += kDx[next];
    y += kDy[next];
    length += (next % 2) ? std::numbers::sqrt2 : 1.0;
    dir = next;
  }
  return length;
}

double nearest_rank(std::vector<double>& sorted, double p) {
  auto rank = static_cast<std::size_t>(std::ceil(p * sorted.size() / 100.0 - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

MeanStd population_stats(const std::vector<double>& v) {
  if (v.empty()) return {};
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  double q = 0.0;
  for (double x : v) q += (x - m) * (x - m);
  return {m, std::sqrt(q / static_cast<double>(v.size()))};
}

} // namespace

double chain_perimeter(const Mask2D& mask) {
  Grid2D<int> seen(mask.width(), mask.height(), 0);
  double total = 0.0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y) || seen(x, y)) {
        continue;
      }
      // Raster order makes (x, y) the top-left pixel of a new component.
      total += trace_outer_boundary(mask, x, y);
      stack.assign(1, {x, y});
      seen(x, y) = 1;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int d = 0; d < 8; ++d) {
          const int nx = cx + kDx[d], ny = cy + kDy[d];
          if (mask.get_or(nx, ny, 0) && !seen(nx, ny)) {
            seen(nx, ny) = 1;
            stack.emplace_back(nx, ny);
          }
        }
      }
    }
  }
  return total;
}

std::vector<double> hu_moments(const Mask2D& mask) {
  double m00 = 0, m10 = 0, m01 = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) {
        m00 += 1;
        m10 += x;
        m01 += y;
      }
    }
  }
  if (m00 == 0) {
    return std::vector<double>(7, 0.0);
  }
  const double cx = m10 / m00, cy = m01 / m00;
  double mu[4][4] = {};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      const double dx = x - cx, dy = y - cy;
      const double px[4] = {1, dx, dx * dx, dx * dx * dx};
      const double py[4] = {1, dy, dy * dy, dy * dy * dy};
      for (int p = 0; p <= 3; ++p) {
        for (int q = 0; p + q <= 3; ++q) {
          mu[p][q] += px[p] * py[q];
        }
      }
    }
  }
  auto eta = [&](int p, int q) {
    return mu[p][q] / std::pow(m00, 1.0 + (p + q) / 2.0);
  };
  const double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1);
  const double n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1), n12 = eta(1, 2);
  const double a = n30 + n12, b = n21 + n03;
  const double c = n30 - 3 * n12, d = 3 * n21 - n03;
  return {
      n20 + n02,
      (n20 - n02) * (n20 - n02) + 4 * n11 * n11,
      c * c + d * d,
      a * a + b * b,
      c * a * (a * a - 3 * b * b) + d * b * (3 * a * a - b * b),
      (n20 - n02) * (a * a - b * b) + 4 * n11 * a * b,
      d * a * (a * a - 3 * b * b) - c * b * (3 * a * a - b * b),
  };
}

FeatureVector extract_classical(const SliceCrop& crop) {
  const auto& mask = crop.mask;
  const auto& img = crop.pixels;
  if (mask.width() != kCropSize || mask.height() != kCropSize ||
      img.width() != kCropSize || img.height() != kCropSize) {
    throw ValidationError("extract_classical expects a 224x224 crop");
  }
  const double area = static_cast<double>(count_nonzero(mask));
  if (area == 0) {
    throw ValidationError("extract_classical: crop mask is empty");
  }

  FeatureVector out;
  out.schema_id = kClassicalSchema;
  out.case_id = crop.provenance.case_id;
  out.organ = crop.provenance.organ;
  out.slice = crop.provenance.slice;
  auto& f = out.values;
  f.reserve(kClassicalDim);

  const double perimeter = chain_perimeter(mask);
  f.push_back(area);
  f.push_back(perimeter);
  f.push_back(perimeter > 0 ? 4.0 * std::numbers::pi * area / (perimeter * perimeter) : 0.0);

  double sx = 0, sy = 0;
  std::vector<double> intensities;
  Mask2D boundary(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      sx += x;
      sy += y;
      intensities.push_back(img(x, y));
      boundary(x, y) = !mask.get_or(x - 1, y, 0) || !mask.get_or(x + 1, y, 0) ||
                       !mask.get_or(x, y - 1, 0) || !mask.get_or(x, y + 1, 0);
    }
  }
  const double cx = sx / area, cy = sy / area;
  const double centre = (kCropSize - 1) / 2.0;
  f.push_back(cx - centre);
  f.push_back(cy - centre);

  for (double h : hu_moments(mask)) f.push_back(h);

  const auto istats = population_stats(intensities);
  std::sort(intensities.begin(), intensities.end());
  f.push_back(istats.mean);
  f.push_back(istats.std);
  f.push_back(nearest_rank(intensities, 10));
  f.push_back(nearest_rank(intensities, 50));
  f.push_back(nearest_rank(intensities, 90));

  // Band of pixels within 2 px of the boundary, on both sides.
  const auto band_sq = kernels::serial::squared_edt(
      boundary.data(), {mask.width(), mask.height(), 1}, {});
  std::vector<double> grads;
  std::vector<double> radial;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * img.width() + x;
      if (band_sq[i] <= 4.0) {
        const int xl = std::max(x - 1, 0), xr = std::min(x + 1, img.width() - 1);
        const int yl = std::max(y - 1, 0), yr = std::min(y + 1, img.height() - 1);
        const double gx = (double(img(xr, y)) - img(xl, y)) / std::max(xr - xl, 1);
        const double gy = (double(img(x, yr)) - img(x, yl)) / std::max(yr - yl, 1);
        grads.push_back(std::hypot(gx, gy));
      }
      if (boundary(x, y)) {
        radial.push_back(std::hypot(x - cx, y - cy));
      }
    }
  }
  const auto gstats = population_stats(grads);
  f.push_back(gstats.mean);
  f.push_back(gstats.std);

  const auto rstats = population_stats(radial);
  f.push_back(rstats.mean);
  f.push_back(rstats.std);
  f.push_back(*std::min_element(radial.begin(), radial.end()));
  f.push_back(*std::max_element(radial.begin(), radial.end()));

  f.push_back(area / (double(kCropSize) * kCropSize));
  return out;
}

StandardizationStats fit_standardization(const std::vector<FeatureVector>& vectors) {
  if (vectors.size() < 2) {
    throw ValidationError("fit_standardization needs at least 2 vectors");
  }
  const auto& schema = vectors.front().schema_id;
  const std::size_t d = vectors.front().dim();
  for (const auto& v : vectors) {
    if (v.schema_id != schema || v.dim() != d) {
      throw ValidationError("fit_standardization: mixed feature schemas");
    }
  }
  StandardizationStats s;
  s.schema_id = schema;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  const double n = static_cast<double>(vectors.size());
  for (const auto& v : vectors) {
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += v.values[k];
  }
  for (auto& m : s.mean) m /= n;
  for (const auto& v : vectors) {
    for (std::size_t k = 0; k < d; ++k) {
      const double e = v.values[k] - s.mean[k];
      s.std[k] += e * e;
    }
  }
  for (auto& x : s.std) x = std::max(std::sqrt(x / (n - 1.0)), kStdFloor);
  return s;
}

namespace {

void check_schema(const FeatureVector& v, const StandardizationStats& s) {
  if (v.schema_id != s.schema_id || v.dim() != s.mean.size()) {
    throw ValidationError("feature schema '" + v.schema_id + "' (D=" +
                          std::to_string(v.dim()) + ") does not match '" +
                          s.schema_id + "' (D=" + std::to_string(s.mean.size()) + ")");
  }
}

} // namespace

FeatureVector standardize(const FeatureVector& v, const StandardizationStats& s) {
  check_schema(v, s);
  FeatureVector out = v;
  for (std::size_t k = 0; k < v.dim(); ++k) {
    out.values[k] = (v.values[k] - s.mean[k]) / s.std[k];
  }
  return out;
}

FeatureVector unstandardize(const FeatureVector& v, const StandardizationStats& s) {
  check_schema(v, s);
  FeatureVector out = v;
  for (std::size_t k = 0; k < v.dim(); ++k) {
    out.values[k] = v.values[k] * s.std[k] + s.mean[k];
  }
  return out;
}

void write_feature_file(const std::vector<FeatureVector>& vectors,
                        const std::string& schema_id, const std::string& path) {
  std::size_t d = 0;
  if (!vectors.empty()) {
    d = vectors.front().dim();
  } else if (auto reg = schema_dimension(schema_id)) {
    d = *reg;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out << schema_id << ',' << d << '\n';
  out << "case_id,organ,slice,label";
  for (std::size_t k = 0; k < d; ++k) out << ",f_" << k;
  out << '\n';
  for (const auto& v : vectors) {
    if (v.dim() != d || v.schema_id != schema_id) {
      throw ValidationError("write_feature_file: vector does not match schema");
    }
    out << v.case_id << ',' << v.organ << ',' << v.slice << ',' << v.label;
    for (double x : v.values) {
      if (!std::isfinite(x)) {
        throw ValidationError("write_feature_file: non-finite value");
      }
      out << ',' << format_double(x);
    }
    out << '\n';
  }
  if (!out) {
    throw IoError("write failed for " + path);
  }
}

std::vector<FeatureVector> read_feature_file(const std::string& path, bool strict) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("feature file is empty: " + path);
  }
  const auto head = split_csv_line(line);
  if (head.size() != 2) {
    throw FormatError("feature file line 1 must be '<schema_id>,<D>'");
  }
  const std::string schema = head[0];
  const std::size_t d = static_cast<std::size_t>(parse_int(head[1], "feature dimension"));
  const auto reg = schema_dimension(schema);
  if (reg && *reg != d) {
    throw FormatError("schema " + schema + " has D=" + std::to_string(*reg) +
                      ", file declares " + std::to_string(d));
  }
  if (!reg && strict) {
    throw FormatError("unknown feature schema '" + schema + "'");
  }
  if (!std::getline(in, line)) {
    throw FormatError("feature file is missing the column-name line");
  }
  const auto cols = split_csv_line(line);
  if (cols.size() != d + 4 || cols[0] != "case_id" || cols[1] != "organ" ||
      cols[2] != "slice" || cols[3] != "label") {
    throw FormatError("feature file column names do not match D=" + std::to_string(d));
  }
  std::vector<FeatureVector> out;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != d + 4) {
      throw FormatError("feature file line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size() >= 4 ? cells.size() - 4 : 0) +
                        " values, expected " + std::to_string(d));
    }
    FeatureVector v;
    v.schema_id = schema;
    v.case_id = cells[0];
    v.organ = cells[1];
    v.slice = static_cast<int>(parse_int(cells[2], "slice"));
    v.label = cells[3];
    if (v.label != "high" && v.label != "low" && v.label != "unknown") {
      throw FormatError("feature file line " + std::to_string(line_no) +
                        ": bad label '" + v.label + "'");
    }
    v.values.reserve(d);
    for (std::size_t k = 0; k < d; ++k) {
      const double x = parse_double(cells[4 + k], "feature value");
      if (!std::isfinite(x)) {
        throw FormatError("feature file line " + std::to_string(line_no) +
                          ": non-finite value");
      }
      v.values.push_back(x);
    }
    out.push_back(std::move(v));
  }
  return out;
}

} // namespace cqa
