#include "cqa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cqa/perturb.hpp"
#include "cqa/rng.hpp"

namespace cqa {

ConfusionCounts confusion(std::span<const Quality> predictions,
                          std::span<const Quality> labels) {
  if (predictions.size() != labels.size()) {
    throw ValidationError("confusion: predictions and labels differ in length");
  }
  if (predictions.empty()) {
    throw ValidationError("confusion: no samples");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred_low = predictions[i] == Quality::low;
    const bool true_low = labels[i] == Quality::low;
    if (pred_low && true_low) ++c.tp;
    else if (pred_low) ++c.fp;
    else if (true_low) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {

std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

} // namespace

std::optional<double> rank_auc(std::span<const double> scores,
                               std::span<const Quality> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("rank_auc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks over tie groups, then the Mann-Whitney U of the positives.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Quality::low) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    return std::nullopt;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

EvalReport report(const ConfusionCounts& c, std::span<const double> scores,
                  std::span<const Quality> labels) {
  EvalReport r;
  r.counts = c;
  const double tp = static_cast<double>(c.tp), fn = static_cast<double>(c.fn);
  const double tn = static_cast<double>(c.tn), fp = static_cast<double>(c.fp);
  r.sensitivity = ratio(tp, tp + fn);
  r.specificity = ratio(tn, tn + fp);
  if (r.sensitivity && r.specificity) {
    // One rounding instead of three keeps exact cases exact.
    r.balanced_accuracy = (tp * (tn + fp) + tn * (tp + fn)) / (2.0 * (tp + fn) * (tn + fp));
  }
  r.f_score = ratio(2.0 * tp, 2.0 * tp + fn + fp);
  if (!scores.empty()) {
    r.auc = rank_auc(scores, labels);
  }
  return r;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw ValidationError("pearson: inputs differ in length");
  }
  if (xs.size() < 2) {
    throw ValidationError("pearson needs at least 2 points");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw ValidationError("pearson: an input is constant");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

DetectionLimitResult detection_limit(const ContourClassifier& classify,
                                     const std::vector<ContourSample>& contours,
                                     const DetectionLimitParams& params,
                                     const std::string& organ) {
  if (contours.empty()) {
    throw ValidationError("detection_limit: no contours");
  }
  if (params.d_max < 1 || params.repeats < 1) {
    throw ValidationError("detection_limit: d_max and repeats must be >= 1");
  }
  DetectionLimitResult result;
  result.organ = organ;

  std::optional<double> original_specificity;
  if (params.mode == DetectionRateMode::mixed) {
    const auto preds = classify(contours);
    const auto high = std::count(preds.begin(), preds.end(), Quality::high);
    original_specificity = static_cast<double>(high) / static_cast<double>(preds.size());
  }

  bool generated_any = false;
  for (int d = 1; d <= params.d_max; ++d) {
    std::vector<ContourSample> batch;
    for (const auto& c : contours) {
      for (int k = 0; k < params.repeats; ++k) {
        Rng rng(derive_seed(params.seed, c.id, static_cast<std::uint64_t>(d),
                            static_cast<std::uint64_t>(k)));
        std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
        const double angle = uniform(rng);
        try {
          batch.push_back({c.id, c.image, translate_mask(c.mask, d, angle)});
        } catch (const ValidationError&) {
          // Shifted entirely off the grid; not a usable sample.
        }
      }
    }
    DetectionPoint point{d, 0.0, batch.size()};
    if (!batch.empty()) {
      generated_any = true;
      const auto preds = classify(batch);
      const auto low = std::count(preds.begin(), preds.end(), Quality::low);
      point.rate = static_cast<double>(low) / static_cast<double>(preds.size());
      if (original_specificity) {
        point.rate = 0.5 * (point.rate + *original_specificity);
      }
    }
    result.per_distance.push_back(point);
    if (!result.limit && point.samples > 0 && point.rate >= params.rate_threshold) {
      result.limit = d;
    }
  }
  if (!generated_any) {
    throw ValidationError("detection_limit: every displacement left the grid");
  }
  return result;
}

} // namespace cqa
