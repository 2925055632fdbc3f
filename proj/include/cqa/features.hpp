#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cqa/volume.hpp"

namespace cqa {

inline constexpr const char* kClassicalSchema = "classical-v1";
inline constexpr std::size_t kClassicalDim = 24;
inline constexpr const char* kDeepSchema = "resnet152-gap-v1";
inline constexpr std::size_t kDeepDim = 2048;

/// Registered dimension for a schema id, if known.
std::optional<std::size_t> schema_dimension(const std::string& schema_id);

struct FeatureVector {
  std::vector<double> values;
  std::string schema_id;
  std::string case_id;
  std::string organ;
  int slice = -1;
  std::string label = "unknown";  // high, low or unknown

  std::size_t dim() const { return values.size(); }
};

/// Names of the classical-v1 features, in vector order.
const std::vector<std::string>& classical_feature_names();

/// 24-dimensional shape/intensity descriptor of a 224x224 crop:
///   0 area, 1 perimeter (8-connected chain length), 2 circularity 4 pi A / P^2,
///   3-4 centroid offset from the crop centre, 5-11 Hu moments of the mask,
///   12-16 masked intensity mean/std/p10/p50/p90,
///   17-18 gradient magnitude mean/std in the +/-2 px band around the boundary,
///   19-22 centroid-to-boundary distance mean/std/min/max,
///   23 mask area over crop area.
FeatureVector extract_classical(const SliceCrop& crop);

/// Outer-boundary chain length over all 8-connected components.
double chain_perimeter(const Mask2D& mask);
/// The seven Hu invariants of a binary mask.
std::vector<double> hu_moments(const Mask2D& mask);

struct StandardizationStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::string schema_id;
};

inline constexpr double kStdFloor = 1e-8;

StandardizationStats fit_standardization(const std::vector<FeatureVector>& vectors);
FeatureVector standardize(const FeatureVector& v, const StandardizationStats& s);
FeatureVector unstandardize(const FeatureVector& v, const StandardizationStats& s);

/// Feature CSV. Line 1: "<schema_id>,<D>"; line 2: column names
/// "case_id,organ,slice,label,f_0,...,f_{D-1}"; then one row per vector.
void write_feature_file(const std::vector<FeatureVector>& vectors,
                        const std::string& schema_id, const std::string& path);
/// With `strict`, schema ids absent from the registry are rejected.
std::vector<FeatureVector> read_feature_file(const std::string& path,
                                             bool strict = false);

} // namespace cqa
