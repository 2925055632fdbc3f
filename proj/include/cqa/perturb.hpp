#pragma once

#include <cstdint>
#include <string>

#include "cqa/grid.hpp"
#include "cqa/metrics.hpp"
#include "cqa/quality.hpp"

namespace cqa {

enum class PerturbKind { translate, enlarge, shrink };

std::string to_string(PerturbKind k);
PerturbKind parse_perturb_kind(const std::string& s);
inline constexpr PerturbKind kAllKinds[] = {PerturbKind::translate,
                                            PerturbKind::enlarge,
                                            PerturbKind::shrink};

struct PerturbationSpec {
  PerturbKind kind = PerturbKind::translate;
  double distance = 1.0;    // translate only, pixels
  int disk_radius = 2;      // enlarge/shrink only
  int max_iterations = 50;
  std::uint64_t seed = 0;
  // Grow the translation distance by one pixel per iteration, starting at
  // `distance`, until the contour turns low quality.
  bool escalate_translation = false;

  void validate() const;
};

/// Shift by (round(d cos a), round(d sin a)); pixels leaving the grid are lost.
Mask2D translate_mask(const Mask2D& mask, double distance, double angle);
/// Integer shift; result may be empty.
Mask2D shift_mask(const Mask2D& mask, int dx, int dy);

/// Minkowski sum with the disk dx^2 + dy^2 <= r^2, clipped to the grid.
Mask2D dilate(const Mask2D& mask, int disk_radius);
/// Keeps a pixel iff the whole disk around it is inside the mask.
Mask2D erode(const Mask2D& mask, int disk_radius);

struct GeneratedError {
  Mask2D mask;
  int iterations = 0;
  double param = 0.0;  // translation distance or disk radius
  double angle = 0.0;  // translate only
  MetricTriple metrics;
};

/// Perturbs `agc` against a fixed `gt` until it is labeled low quality.
/// Metrics are per-slice 2-D in pixel units, matching the thresholds.
/// Throws ValidationError if the input pair is not high quality and
/// ConvergenceError if generation fails (cap hit, mask emptied or filled).
GeneratedError generate_error(const Mask2D& gt, const Mask2D& agc,
                              const PerturbationSpec& spec,
                              const QualityThresholds& thresholds);

} // namespace cqa
