#include <cmath>

#include "cqa/kernels.hpp"

namespace cqa::kernels::omp {

namespace {

// One separable EDT pass over `lines` independent lines of length n.
template <typename BaseOf>
void edt_pass(std::vector<double>& dist, long lines, int n, std::size_t stride,
              double w, BaseOf base_of) {
#pragma omp parallel
  {
    std::vector<double> f(n), out(n), bounds(n);
    std::vector<int> idx(n);
#pragma omp for schedule(static)
    for (long line = 0; line < lines; ++line) {
      const std::size_t base = base_of(line);
      for (int i = 0; i < n; ++i) {
        f[i] = dist[base + i * stride];
      }
      edt_1d(f, w, out, idx, bounds);
      for (int i = 0; i < n; ++i) {
        dist[base + i * stride] = out[i];
      }
    }
  }
}

} // namespace

std::vector<double> squared_edt(std::span<const std::uint8_t> sites, Dims dims,
                                Spacing spacing) {
  std::vector<double> dist(dims.count());
  const long total = static_cast<long>(dist.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < total; ++i) {
    dist[i] = sites[i] ? 0.0 : kInf;
  }
  const std::size_t sy = static_cast<std::size_t>(dims.nx);
  const std::size_t sz = sy * dims.ny;
  const long nx = dims.nx, ny = dims.ny;

  edt_pass(dist, static_cast<long>(dims.ny) * dims.nz, dims.nx, 1, spacing.sx,
           [&](long line) { return static_cast<std::size_t>(line) * sy; });
  edt_pass(dist, nx * dims.nz, dims.ny, sy, spacing.sy, [&](long line) {
    return static_cast<std::size_t>(line / nx) * sz + static_cast<std::size_t>(line % nx);
  });
  edt_pass(dist, nx * ny, dims.nz, sz, spacing.sz,
           [&](long line) { return static_cast<std::size_t>(line); });
  return dist;
}

std::vector<double> nearest_sq_distances(std::span<const Point3> from,
                                         std::span<const Point3> to) {
  std::vector<double> out(from.size(), kInf);
  const long n = static_cast<long>(from.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    double best = kInf;
    for (const auto& q : to) {
      const double dx = from[i].x - q.x;
      const double dy = from[i].y - q.y;
      const double dz = from[i].z - q.z;
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    out[i] = best;
  }
  return out;
}

RowMatrix rbf_gram(const RowMatrix& x, double gamma) {
  RowMatrix k(x.rows, x.rows);
  // Upper triangle computed once, mirrored; exp of an identical argument
  // gives the same bits as the serial full-matrix loop.
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < x.rows; ++i) {
    for (int j = i; j < x.rows; ++j) {
      const double v = std::exp(-gamma * squared_distance(x.row(i), x.row(j), x.cols));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

std::vector<double> rbf_expansion(const RowMatrix& sv, std::span<const double> coef,
                                  double gamma, const RowMatrix& queries) {
  std::vector<double> out(queries.rows);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < queries.rows; ++j) {
    double s = 0.0;
    for (int i = 0; i < sv.rows; ++i) {
      s += coef[i] * std::exp(-gamma * squared_distance(sv.row(i), queries.row(j), sv.cols));
    }
    out[j] = s;
  }
  return out;
}

Mask2D dilate(const Mask2D& m, int radius) {
  const auto disk = disk_offsets(radius);
  Mask2D out(m.width(), m.height());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      std::uint8_t v = 0;
      for (auto [dx, dy] : disk) {
        if (m.get_or(x + dx, y + dy, 0)) {
          v = 1;
          break;
        }
      }
      out(x, y) = v;
    }
  }
  return out;
}

Mask2D erode(const Mask2D& m, int radius) {
  const auto disk = disk_offsets(radius);
  Mask2D out(m.width(), m.height());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y)) {
        continue;
      }
      std::uint8_t v = 1;
      for (auto [dx, dy] : disk) {
        if (!m.get_or(x + dx, y + dy, 0)) {
          v = 0;
          break;
        }
      }
      out(x, y) = v;
    }
  }
  return out;
}

} // namespace cqa::kernels::omp
