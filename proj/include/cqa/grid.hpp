#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cqa/error.hpp"

namespace cqa {

/// Dense row-major 2-D grid, x fastest.
template <typename T>
class Grid2D {
public:
  Grid2D() = default;
  Grid2D(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw ValidationError("grid dimensions must be >= 1");
    }
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Grid2D(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1 ||
        data_.size() != static_cast<std::size_t>(width) * height) {
      throw ValidationError("grid payload does not match dimensions");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  const T& operator()(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  // Out-of-grid reads return `outside`.
  T get_or(int x, int y, T outside) const {
    return contains(x, y) ? (*this)(x, y) : outside;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Grid2D&) const = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Image2D = Grid2D<std::uint8_t>;
/// Binary mask, values restricted to {0, 1}.
using Mask2D = Grid2D<std::uint8_t>;

inline std::size_t count_nonzero(const Mask2D& m) {
  std::size_t n = 0;
  for (auto v : m.data()) {
    n += v != 0;
  }
  return n;
}

inline bool is_binary(const Mask2D& m) {
  for (auto v : m.data()) {
    if (v > 1) {
      return false;
    }
  }
  return true;
}

/// Axis-aligned inclusive pixel box.
struct Box2D {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool operator==(const Box2D&) const = default;
};

} // namespace cqa
