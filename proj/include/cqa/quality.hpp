#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqa/metrics.hpp"

namespace cqa {

/// How the mean +/- sigma bounds are oriented.
///
/// prevalence_consistent: high iff dsc >= mean - sigma and hd95, msd <=
/// mean + sigma (inclusive). paper_literal: high iff dsc > mean + sigma and
/// hd95, msd < mean - sigma (strict).
enum class DirectionMode { prevalence_consistent, paper_literal };

std::string to_string(DirectionMode m);
DirectionMode parse_direction_mode(const std::string& s);

enum class Quality { high, low };

std::string to_string(Quality q);
Quality parse_quality(const std::string& s);

/// Per-organ statistics of the training-set agreement metrics.
struct QualityThresholds {
  std::string organ;
  double mean_dsc = 0, sigma_dsc = 0;
  double mean_hd95 = 0, sigma_hd95 = 0;
  double mean_msd = 0, sigma_msd = 0;
  DirectionMode direction_mode = DirectionMode::prevalence_consistent;
  std::size_t samples = 0;
};

enum class Check { dsc, hd95, msd };
std::string to_string(Check c);

struct QualityLabel {
  Quality value = Quality::high;
  std::vector<Check> failed_checks;

  /// Semicolon-joined names of the failed checks; empty when high.
  std::string failed_string() const;
};

/// Arithmetic means and sample (n-1) standard deviations; needs >= 2 triples.
QualityThresholds fit_thresholds(const std::vector<MetricTriple>& triples,
                                 const std::string& organ,
                                 DirectionMode mode = DirectionMode::prevalence_consistent);

QualityLabel label(const MetricTriple& m, const QualityThresholds& t);

using ThresholdSet = std::map<std::string, QualityThresholds>;

nlohmann::json to_json(const QualityThresholds& t);
QualityThresholds thresholds_from_json(const std::string& organ,
                                       const nlohmann::json& j);
void save_thresholds(const ThresholdSet& set, const std::string& path);
ThresholdSet load_thresholds(const std::string& path);

} // namespace cqa
