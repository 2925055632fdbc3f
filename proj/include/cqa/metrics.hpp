#pragma once

#include <cstddef>
#include <vector>

#include "cqa/grid.hpp"
#include "cqa/kernels.hpp"
#include "cqa/volume.hpp"

namespace cqa {

/// Which neighbours decide whether a mask voxel lies on the surface.
/// face6: the six face neighbours, grid boundary counts as background.
/// in_plane4: the four in-plane neighbours; used for per-slice 2-D metrics,
/// where a slice is a plane rather than a one-voxel-thick slab.
enum class SurfaceRule { face6, in_plane4 };

/// Surface voxel centres in physical units (index * spacing).
struct SurfacePointSet {
  std::vector<Point3> points;
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Agreement scores between a ground-truth and an automatic contour.
struct MetricTriple {
  double dsc = 0.0;
  double hd95 = 0.0;
  double msd = 0.0;
};

struct OrganVolume {
  std::size_t voxels = 0;
  double mm3 = 0.0;
};

inline constexpr double kDefaultPercentile = 95.0;

SurfacePointSet surface_voxels(const Volume& mask,
                               SurfaceRule rule = SurfaceRule::face6);

double dsc(const Volume& gt, const Volume& agc);

/// For each point of `a`, distance to its nearest point of `b`.
std::vector<double> directed_distances(const SurfacePointSet& a,
                                       const SurfacePointSet& b);

/// Nearest-rank percentile: element ceil(p N / 100) of the sorted values.
double nearest_rank_percentile(std::vector<double> values, double p);

double hausdorff(const Volume& gt, const Volume& agc,
                 double percentile = kDefaultPercentile,
                 SurfaceRule rule = SurfaceRule::face6);
double msd(const Volume& gt, const Volume& agc,
           SurfaceRule rule = SurfaceRule::face6);

/// DSC, HD at `percentile` and MSD from a single pair of distance transforms.
MetricTriple agreement(const Volume& gt, const Volume& agc,
                       double percentile = kDefaultPercentile,
                       SurfaceRule rule = SurfaceRule::face6);

/// Per-slice metrics on 2-D masks; unit spacing gives pixel units.
MetricTriple agreement_2d(const Mask2D& gt, const Mask2D& agc,
                          double spacing_x = 1.0, double spacing_y = 1.0,
                          double percentile = kDefaultPercentile);

OrganVolume organ_volume(const Volume& mask);

/// Wraps a 2-D mask as a one-slice volume.
Volume as_volume(const Mask2D& m, double spacing_x = 1.0, double spacing_y = 1.0);

} // namespace cqa
