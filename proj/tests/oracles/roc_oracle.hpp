#pragma once

// Area under the empirical ROC curve by the trapezoidal rule. The curve is
// traced by lowering the threshold through each distinct score, so tied
// scores move both rates at once and give a diagonal segment.

#include <algorithm>
#include <vector>

#include "cqa/quality.hpp"

namespace oracle {

inline double trapezoid_auc(const std::vector<double>& scores,
                            const std::vector<cqa::Quality>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double pos = 0, neg = 0;
  for (auto l : labels) (l == cqa::Quality::low ? pos : neg) += 1;
  double area = 0.0, prev_tpr = 0.0, prev_fpr = 0.0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] == cqa::Quality::low ? tp : fp) += 1;
    }
    const double tpr = tp / pos, fpr = fp / neg;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return area;
}

} // namespace oracle
