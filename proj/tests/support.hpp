#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "cqa/grid.hpp"
#include "cqa/rng.hpp"
#include "cqa/volume.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("cqa_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline cqa::Mask2D disk(int w, int h, double cx, double cy, double r) {
  cqa::Mask2D m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      m(x, y) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  return m;
}

inline cqa::Mask2D rect(int w, int h, int x0, int y0, int x1, int y1) {
  cqa::Mask2D m(w, h);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m(x, y) = 1;
  return m;
}

// Random blob: a union of a few random boxes, never empty.
inline cqa::Volume random_mask(cqa::Rng& rng, cqa::Dims d, cqa::Spacing s) {
  auto v = cqa::Volume::zeros(d, s, cqa::DType::u8);
  std::uniform_int_distribution<int> boxes(1, 4);
  const int n = boxes(rng);
  for (int b = 0; b < n; ++b) {
    std::uniform_int_distribution<int> ux(0, d.nx - 1), uy(0, d.ny - 1), uz(0, d.nz - 1);
    int x0 = ux(rng), x1 = ux(rng), y0 = uy(rng), y1 = uy(rng), z0 = uz(rng), z1 = uz(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    if (z0 > z1) std::swap(z0, z1);
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) v.u8()[v.index(x, y, z)] = 1;
  }
  // Sprinkle isolated voxels so surfaces are not only box faces.
  std::bernoulli_distribution speck(0.02);
  for (auto& x : v.u8()) x = x | static_cast<std::uint8_t>(speck(rng));
  return v;
}

inline cqa::Mask2D random_mask_2d(cqa::Rng& rng, int w, int h, double density) {
  cqa::Mask2D m(w, h);
  std::bernoulli_distribution on(density);
  for (auto& x : m.data()) x = on(rng);
  return m;
}

} // namespace testing
