#pragma once

// Surface metrics straight from their definitions: explicit neighbour tests,
// set intersection and all-pairs distances. Slow on purpose.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "cqa/metrics.hpp"

namespace oracle {

struct Voxel {
  int x, y, z;
};

inline bool on(const cqa::Volume& m, int x, int y, int z) {
  const auto& d = m.dims();
  if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) return false;
  return m.u8()[m.index(x, y, z)] != 0;
}

inline std::vector<Voxel> surface(const cqa::Volume& m,
                                  cqa::SurfaceRule rule = cqa::SurfaceRule::face6) {
  std::vector<Voxel> out;
  const auto& d = m.dims();
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (!on(m, x, y, z)) continue;
        bool edge = !on(m, x - 1, y, z) || !on(m, x + 1, y, z) || !on(m, x, y - 1, z) ||
                    !on(m, x, y + 1, z);
        if (rule == cqa::SurfaceRule::face6) {
          edge = edge || !on(m, x, y, z - 1) || !on(m, x, y, z + 1);
        }
        if (edge) out.push_back({x, y, z});
      }
    }
  }
  return out;
}

inline double dsc(const cqa::Volume& a, const cqa::Volume& b) {
  std::set<std::size_t> sa, sb;
  for (std::size_t i = 0; i < a.dims().count(); ++i) {
    if (a.u8()[i]) sa.insert(i);
    if (b.u8()[i]) sb.insert(i);
  }
  if (sa.empty() && sb.empty()) return 1.0;
  std::vector<std::size_t> both;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(both));
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(sa.size() + sb.size());
}

inline std::vector<double> directed(const std::vector<Voxel>& from, const std::vector<Voxel>& to,
                                    const cqa::Spacing& s) {
  std::vector<double> out;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      const double dx = (p.x - q.x) * s.sx, dy = (p.y - q.y) * s.sy, dz = (p.z - q.z) * s.sz;
      best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
    out.push_back(best);
  }
  return out;
}

// Smallest sorted element whose rank k satisfies k / N >= p / 100, found by
// walking the ranks instead of using a closed-form index.
inline double nearest_rank(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  for (std::size_t k = 1; k <= v.size(); ++k) {
    if (100.0 * static_cast<double>(k) >= p * n - 1e-9) return v[k - 1];
  }
  return v.back();
}

inline double hausdorff(const cqa::Volume& gt, const cqa::Volume& agc, double p,
                        cqa::SurfaceRule rule = cqa::SurfaceRule::face6) {
  const auto sg = surface(gt, rule), sa = surface(agc, rule);
  return std::max(nearest_rank(directed(sg, sa, gt.spacing()), p),
                  nearest_rank(directed(sa, sg, gt.spacing()), p));
}

inline double msd(const cqa::Volume& gt, const cqa::Volume& agc,
                  cqa::SurfaceRule rule = cqa::SurfaceRule::face6) {
  const auto sg = surface(gt, rule), sa = surface(agc, rule);
  double sum = 0.0;
  for (double d : directed(sg, sa, gt.spacing())) sum += d;
  for (double d : directed(sa, sg, gt.spacing())) sum += d;
  return sum / static_cast<double>(sg.size() + sa.size());
}

// Squared distance from every voxel to the nearest site, all pairs.
inline std::vector<double> squared_edt(const std::vector<std::uint8_t>& sites, cqa::Dims d,
                                       cqa::Spacing s) {
  std::vector<double> out(d.count(), std::numeric_limits<double>::infinity());
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < d.nz; ++c)
          for (int b = 0; b < d.ny; ++b)
            for (int a = 0; a < d.nx; ++a) {
              if (!sites[(static_cast<std::size_t>(c) * d.ny + b) * d.nx + a]) continue;
              const double dx = (x - a) * s.sx, dy = (y - b) * s.sy, dz = (z - c) * s.sz;
              best = std::min(best, dx * dx + dy * dy + dz * dz);
            }
        out[(static_cast<std::size_t>(z) * d.ny + y) * d.nx + x] = best;
      }
  return out;
}

} // namespace oracle
