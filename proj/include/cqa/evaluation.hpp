#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cqa/grid.hpp"
#include "cqa/quality.hpp"

namespace cqa {

/// Positive class is low quality.
struct ConfusionCounts {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  std::size_t total() const { return tp + fn + tn + fp; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const Quality> predictions,
                          std::span<const Quality> labels);

/// Metrics with a zero denominator are absent rather than NaN.
struct EvalReport {
  std::optional<double> balanced_accuracy;
  std::optional<double> f_score;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> auc;
  ConfusionCounts counts;
};

/// `scores` are oriented so that larger means more likely low quality; pass an
/// empty span to skip AUC.
EvalReport report(const ConfusionCounts& c, std::span<const double> scores,
                  std::span<const Quality> labels);

/// Mann-Whitney probability that a low-quality sample outscores a high-quality
/// one, ties counted 1/2. Absent unless both classes are present.
std::optional<double> rank_auc(std::span<const double> scores,
                               std::span<const Quality> labels);

double pearson(std::span<const double> xs, std::span<const double> ys);

/// A contour to be displaced: the image it lives on and its mask.
struct ContourSample {
  std::string id;
  const Image2D* image = nullptr;
  Mask2D mask;
};

/// Classifies a batch of (image, mask) contours.
using ContourClassifier =
    std::function<std::vector<Quality>(const std::vector<ContourSample>&)>;

enum class DetectionRateMode {
  perturbed_only,  // fraction of displaced contours predicted low
  mixed,           // balanced accuracy over displaced and original contours
};

struct DetectionLimitParams {
  int d_max = 20;
  int repeats = 10;
  double rate_threshold = 0.90;
  std::uint64_t seed = 0;
  DetectionRateMode mode = DetectionRateMode::perturbed_only;
};

struct DetectionPoint {
  int distance = 0;
  double rate = 0.0;
  std::size_t samples = 0;
};

struct DetectionLimitResult {
  std::string organ;
  std::optional<int> limit;
  std::vector<DetectionPoint> per_distance;
};

/// Scans d = 1..d_max; at each distance every contour is shifted `repeats`
/// times in seeded random directions and classified. The limit is the
/// smallest d whose detection rate reaches the threshold.
DetectionLimitResult detection_limit(const ContourClassifier& classify,
                                     const std::vector<ContourSample>& contours,
                                     const DetectionLimitParams& params,
                                     const std::string& organ = {});

} // namespace cqa
