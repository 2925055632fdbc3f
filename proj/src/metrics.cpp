#include "cqa/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace cqa {

namespace {

void require_mask(const Volume& v, const char* what) {
  if (!v.is_mask()) {
    throw ValidationError(std::string(what) + " is not a binary u8 mask");
  }
}

void require_same_grid(const Volume& a, const Volume& b) {
  if (a.dims() != b.dims() || a.spacing() != b.spacing()) {
    throw ValidationError("masks differ in dims or spacing");
  }
}

std::vector<std::uint8_t> surface_indicator(const Volume& mask, SurfaceRule rule) {
  const auto& d = mask.dims();
  const auto m = mask.u8();
  std::vector<std::uint8_t> out(m.size(), 0);
  auto inside = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) {
      return false;
    }
    return m[mask.index(x, y, z)] != 0;
  };
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (!m[mask.index(x, y, z)]) {
          continue;
        }
        bool edge = !inside(x - 1, y, z) || !inside(x + 1, y, z) ||
                    !inside(x, y - 1, z) || !inside(x, y + 1, z);
        if (rule == SurfaceRule::face6) {
          edge = edge || !inside(x, y, z - 1) || !inside(x, y, z + 1);
        }
        out[mask.index(x, y, z)] = edge;
      }
    }
  }
  return out;
}

// Distances (physical units) from each surface voxel of `from` to the surface
// of `to`, in voxel-index order.
std::vector<double> surface_to_surface(const Volume& from,
                                       const std::vector<std::uint8_t>& from_surface,
                                       const std::vector<std::uint8_t>& to_surface) {
  const auto sq = kernels::omp::squared_edt(to_surface, from.dims(), from.spacing());
  std::vector<double> out;
  for (std::size_t i = 0; i < from_surface.size(); ++i) {
    if (from_surface[i]) {
      out.push_back(std::sqrt(sq[i]));
    }
  }
  return out;
}

struct SurfaceDistances {
  std::vector<double> gt_to_agc;
  std::vector<double> agc_to_gt;
};

SurfaceDistances both_directions(const Volume& gt, const Volume& agc,
                                  SurfaceRule rule) {
  require_mask(gt, "gt");
  require_mask(agc, "agc");
  require_same_grid(gt, agc);
  const auto sg = surface_indicator(gt, rule);
  const auto sa = surface_indicator(agc, rule);
  const bool gt_empty = std::none_of(sg.begin(), sg.end(), [](auto v) { return v; });
  const bool agc_empty = std::none_of(sa.begin(), sa.end(), [](auto v) { return v; });
  if (gt_empty || agc_empty) {
    throw ValidationError("surface distance metrics need two nonempty masks");
  }
  return {surface_to_surface(gt, sg, sa), surface_to_surface(agc, sa, sg)};
}

double mean_surface(const SurfaceDistances& d) {
  double sum = 0.0;
  for (double v : d.gt_to_agc) sum += v;
  for (double v : d.agc_to_gt) sum += v;
  return sum / static_cast<double>(d.gt_to_agc.size() + d.agc_to_gt.size());
}

} // namespace

SurfacePointSet surface_voxels(const Volume& mask, SurfaceRule rule) {
  require_mask(mask, "mask");
  const auto s = surface_indicator(mask, rule);
  const auto& d = mask.dims();
  const auto& sp = mask.spacing();
  SurfacePointSet out;
  for (int z = 0; z < d.nz; ++z) {
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        if (s[mask.index(x, y, z)]) {
          out.points.push_back({x * sp.sx, y * sp.sy, z * sp.sz});
        }
      }
    }
  }
  return out;
}

double dsc(const Volume& gt, const Volume& agc) {
  require_mask(gt, "gt");
  require_mask(agc, "agc");
  require_same_grid(gt, agc);
  const auto a = gt.u8();
  const auto b = agc.u8();
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
    both += a[i] & b[i];
  }
  if (na + nb == 0) {
    return 1.0;
  }
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<double> directed_distances(const SurfacePointSet& a,
                                       const SurfacePointSet& b) {
  if (b.empty()) {
    throw ValidationError("directed_distances: target point set is empty");
  }
  auto sq = kernels::omp::nearest_sq_distances(a.points, b.points);
  for (auto& v : sq) {
    v = std::sqrt(v);
  }
  return sq;
}

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) {
    throw ValidationError("percentile of an empty set");
  }
  if (!(p > 0.0 && p <= 100.0)) {
    throw ValidationError("percentile must be in (0, 100]");
  }
  const double n = static_cast<double>(values.size());
  // The 1e-9 guard keeps exact products like 95 * 20 / 100 from rounding up.
  auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0 - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
  return values[rank - 1];
}

double hausdorff(const Volume& gt, const Volume& agc, double percentile,
                 SurfaceRule rule) {
  auto d = both_directions(gt, agc, rule);
  return std::max(nearest_rank_percentile(std::move(d.gt_to_agc), percentile),
                  nearest_rank_percentile(std::move(d.agc_to_gt), percentile));
}

double msd(const Volume& gt, const Volume& agc, SurfaceRule rule) {
  return mean_surface(both_directions(gt, agc, rule));
}

MetricTriple agreement(const Volume& gt, const Volume& agc, double percentile,
                       SurfaceRule rule) {
  auto d = both_directions(gt, agc, rule);
  MetricTriple m;
  m.dsc = dsc(gt, agc);
  m.msd = mean_surface(d);
  m.hd95 = std::max(nearest_rank_percentile(std::move(d.gt_to_agc), percentile),
                    nearest_rank_percentile(std::move(d.agc_to_gt), percentile));
  return m;
}

Volume as_volume(const Mask2D& m, double spacing_x, double spacing_y) {
  return {{m.width(), m.height(), 1}, {spacing_x, spacing_y, 1.0}, m.data()};
}

MetricTriple agreement_2d(const Mask2D& gt, const Mask2D& agc, double spacing_x,
                          double spacing_y, double percentile) {
  return agreement(as_volume(gt, spacing_x, spacing_y),
                   as_volume(agc, spacing_x, spacing_y), percentile,
                   SurfaceRule::in_plane4);
}

OrganVolume organ_volume(const Volume& mask) {
  require_mask(mask, "mask");
  std::size_t n = 0;
  for (auto v : mask.u8()) {
    n += v;
  }
  const auto& s = mask.spacing();
  return {n, static_cast<double>(n) * s.sx * s.sy * s.sz};
}

} // namespace cqa
