#include "cqa/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cqa {

void set_threads(int n) {
#ifdef _OPENMP
  static const int default_threads = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : default_threads);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace kernels {

void edt_1d(std::span<const double> f, double w, std::span<double> out,
            std::span<int> sites, std::span<double> bounds) {
  const int n = static_cast<int>(f.size());
  const double w2 = w * w;
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) {
      continue;
    }
    const double fq = f[q] + w2 * q * q;
    double s = -kInf;
    while (k >= 0) {
      const int v = sites[k];
      s = (fq - (f[v] + w2 * v * v)) / (2.0 * w2 * (q - v));
      if (s > bounds[k]) {
        break;
      }
      --k;
    }
    ++k;
    sites[k] = q;
    bounds[k] = k == 0 ? -kInf : s;
  }
  if (k < 0) {
    for (int p = 0; p < n; ++p) {
      out[p] = kInf;
    }
    return;
  }
  int j = 0;
  for (int p = 0; p < n; ++p) {
    while (j < k && bounds[j + 1] < p) {
      ++j;
    }
    const double d = w * (p - sites[j]);
    out[p] = d * d + f[sites[j]];
  }
}

std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> out;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) {
        out.emplace_back(dx, dy);
      }
    }
  }
  return out;
}

} // namespace kernels
} // namespace cqa
