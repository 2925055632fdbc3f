#include "cqa/perturb.hpp"

#include <cmath>
#include <numbers>

#include "cqa/kernels.hpp"
#include "cqa/rng.hpp"

namespace cqa {

std::string to_string(PerturbKind k) {
  switch (k) {
  case PerturbKind::translate:
    return "translate";
  case PerturbKind::enlarge:
    return "enlarge";
  case PerturbKind::shrink:
    return "shrink";
  }
  return "?";
}

PerturbKind parse_perturb_kind(const std::string& s) {
  if (s == "translate") return PerturbKind::translate;
  if (s == "enlarge") return PerturbKind::enlarge;
  if (s == "shrink") return PerturbKind::shrink;
  throw ValidationError("unknown perturbation kind '" + s + "'");
}

void PerturbationSpec::validate() const {
  if (!(distance >= 0.0)) throw ValidationError("perturbation distance must be >= 0");
  if (disk_radius < 1) throw ValidationError("disk radius must be >= 1");
  if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
}

Mask2D shift_mask(const Mask2D& mask, int dx, int dy) {
  Mask2D out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y) && out.contains(x + dx, y + dy)) {
        out(x + dx, y + dy) = 1;
      }
    }
  }
  return out;
}

Mask2D translate_mask(const Mask2D& mask, double distance, double angle) {
  if (count_nonzero(mask) == 0) {
    throw ValidationError("translate_mask: mask is empty");
  }
  const int dx = static_cast<int>(std::lround(distance * std::cos(angle)));
  const int dy = static_cast<int>(std::lround(distance * std::sin(angle)));
  auto out = shift_mask(mask, dx, dy);
  if (count_nonzero(out) == 0) {
    throw ValidationError("translate_mask: contour shifted off the grid");
  }
  return out;
}

Mask2D dilate(const Mask2D& mask, int disk_radius) {
  return kernels::omp::dilate(mask, disk_radius);
}

Mask2D erode(const Mask2D& mask, int disk_radius) {
  return kernels::omp::erode(mask, disk_radius);
}

GeneratedError generate_error(const Mask2D& gt, const Mask2D& agc,
                              const PerturbationSpec& spec,
                              const QualityThresholds& thresholds) {
  spec.validate();
  if (count_nonzero(gt) == 0 || count_nonzero(agc) == 0) {
    throw ValidationError("generate_error needs nonempty masks");
  }
  if (label(agreement_2d(gt, agc), thresholds).value != Quality::high) {
    throw ValidationError("generate_error: input contour is not high quality");
  }

  GeneratedError out;
  if (spec.kind == PerturbKind::translate) {
    Rng rng(spec.seed);
    std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
    out.angle = uniform(rng);
    const int attempts = spec.escalate_translation ? spec.max_iterations : 1;
    for (int i = 0; i < attempts; ++i) {
      const double d = spec.distance + i;
      Mask2D moved;
      try {
        moved = translate_mask(agc, d, out.angle);
      } catch (const ValidationError&) {
        throw ConvergenceError("translation moved the contour off the grid");
      }
      const auto m = agreement_2d(gt, moved);
      if (label(m, thresholds).value == Quality::low) {
        out.mask = std::move(moved);
        out.iterations = i + 1;
        out.param = d;
        out.metrics = m;
        return out;
      }
    }
    throw ConvergenceError("translation did not produce a low-quality contour");
  }

  const std::size_t grid_pixels = agc.size();
  Mask2D current = agc;
  out.param = spec.disk_radius;
  for (int i = 1; i <= spec.max_iterations; ++i) {
    current = spec.kind == PerturbKind::enlarge ? dilate(current, spec.disk_radius)
                                                : erode(current, spec.disk_radius);
    const std::size_t n = count_nonzero(current);
    if (n == 0) {
      throw ConvergenceError("shrinkage emptied the contour before it turned low quality");
    }
    const auto m = agreement_2d(gt, current);
    if (label(m, thresholds).value == Quality::low) {
      out.mask = std::move(current);
      out.iterations = i;
      out.metrics = m;
      return out;
    }
    if (n == grid_pixels) {
      throw ConvergenceError("enlargement filled the grid before it turned low quality");
    }
  }
  throw ConvergenceError("max_iterations reached without a low-quality contour");
}

} // namespace cqa
