#include <cmath>

#include "cqa/kernels.hpp"

namespace cqa::kernels::serial {

std::vector<double> squared_edt(std::span<const std::uint8_t> sites, Dims dims,
                                Spacing spacing) {
  std::vector<double> dist(dims.count());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    dist[i] = sites[i] ? 0.0 : kInf;
  }
  const int longest = std::max({dims.nx, dims.ny, dims.nz});
  std::vector<double> f(longest), out(longest), bounds(longest);
  std::vector<int> idx(longest);

  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(dims.nx);
  const std::size_t sz = sy * dims.ny;

  auto pass = [&](int n, std::size_t stride, double w, std::size_t base) {
    for (int i = 0; i < n; ++i) {
      f[i] = dist[base + i * stride];
    }
    edt_1d({f.data(), static_cast<std::size_t>(n)}, w,
           {out.data(), static_cast<std::size_t>(n)},
           {idx.data(), static_cast<std::size_t>(n)},
           {bounds.data(), static_cast<std::size_t>(n)});
    for (int i = 0; i < n; ++i) {
      dist[base + i * stride] = out[i];
    }
  };

  for (int z = 0; z < dims.nz; ++z) {
    for (int y = 0; y < dims.ny; ++y) {
      pass(dims.nx, sx, spacing.sx, z * sz + y * sy);
    }
  }
  for (int z = 0; z < dims.nz; ++z) {
    for (int x = 0; x < dims.nx; ++x) {
      pass(dims.ny, sy, spacing.sy, z * sz + x);
    }
  }
  for (int y = 0; y < dims.ny; ++y) {
    for (int x = 0; x < dims.nx; ++x) {
      pass(dims.nz, sz, spacing.sz, y * sy + x);
    }
  }
  return dist;
}

std::vector<double> nearest_sq_distances(std::span<const Point3> from,
                                         std::span<const Point3> to) {
  std::vector<double> out(from.size(), kInf);
  for (std::size_t i = 0; i < from.size(); ++i) {
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
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.rows; ++j) {
      k(i, j) = std::exp(-gamma * squared_distance(x.row(i), x.row(j), x.cols));
    }
  }
  return k;
}

std::vector<double> rbf_expansion(const RowMatrix& sv, std::span<const double> coef,
                                  double gamma, const RowMatrix& queries) {
  std::vector<double> out(queries.rows);
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

} // namespace cqa::kernels::serial
