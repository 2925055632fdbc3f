#pragma once

#include <cmath>
#include <span>

#include "cqa/error.hpp"

namespace cqa {

inline double mean(std::span<const double> v) {
  if (v.empty()) {
    throw ValidationError("mean of an empty set");
  }
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Standard deviation with the n-1 denominator.
inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) {
    throw ValidationError("sample standard deviation needs >= 2 values");
  }
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace cqa
