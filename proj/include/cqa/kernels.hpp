#pragma once

// Hot loops of the toolkit, each in two builds: `serial` is the reference
// used by tests, `omp` is the OpenMP-parallel production path. Both produce
// bitwise-identical results for any thread count: parallel loops only write
// disjoint output slots and every reduction runs in a fixed order.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cqa/grid.hpp"
#include "cqa/volume.hpp"

namespace cqa {

struct Point3 {
  double x = 0, y = 0, z = 0;
  bool operator==(const Point3&) const = default;
};

/// Dense row-major matrix of doubles.
struct RowMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  RowMatrix() = default;
  RowMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {}

  double* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
  const double* row(int i) const {
    return data.data() + static_cast<std::size_t>(i) * cols;
  }
  double& operator()(int i, int j) { return row(i)[j]; }
  double operator()(int i, int j) const { return row(i)[j]; }
};

namespace kernels {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// 1-D lower envelope of parabolas: out[p] = min_q f[q] + (w (p - q))^2.
/// Entries of f equal to kInf are not sites.
void edt_1d(std::span<const double> f, double w, std::span<double> out,
            std::span<int> sites, std::span<double> bounds);

/// Squared Euclidean distance (physical units) from every voxel to the
/// nearest nonzero voxel of `sites`; kInf when there are none.
namespace serial {
std::vector<double> squared_edt(std::span<const std::uint8_t> sites, Dims dims,
                                Spacing spacing);
std::vector<double> nearest_sq_distances(std::span<const Point3> from,
                                         std::span<const Point3> to);
RowMatrix rbf_gram(const RowMatrix& x, double gamma);
/// out[j] = sum_i coef[i] * exp(-gamma |sv_i - q_j|^2)
std::vector<double> rbf_expansion(const RowMatrix& sv, std::span<const double> coef,
                                  double gamma, const RowMatrix& queries);
Mask2D dilate(const Mask2D& m, int radius);
Mask2D erode(const Mask2D& m, int radius);
} // namespace serial

namespace omp {
std::vector<double> squared_edt(std::span<const std::uint8_t> sites, Dims dims,
                                Spacing spacing);
std::vector<double> nearest_sq_distances(std::span<const Point3> from,
                                         std::span<const Point3> to);
RowMatrix rbf_gram(const RowMatrix& x, double gamma);
std::vector<double> rbf_expansion(const RowMatrix& sv, std::span<const double> coef,
                                  double gamma, const RowMatrix& queries);
Mask2D dilate(const Mask2D& m, int radius);
Mask2D erode(const Mask2D& m, int radius);
} // namespace omp

/// Offsets (dx, dy) of the discrete disk dx^2 + dy^2 <= r^2.
std::vector<std::pair<int, int>> disk_offsets(int radius);

inline double squared_distance(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int k = 0; k < n; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

} // namespace kernels

/// Number of OpenMP threads for subsequent parallel regions; 0 = runtime default.
void set_threads(int n);
int max_threads();

} // namespace cqa
