#pragma once

// Dilation and erosion by the lattice disk, evaluated pixel by pixel from
// the structuring-element definition.

#include "cqa/grid.hpp"

namespace oracle {

inline bool in_disk(int dx, int dy, int r) { return dx * dx + dy * dy <= r * r; }

inline cqa::Mask2D dilate(const cqa::Mask2D& m, int r) {
  cqa::Mask2D out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      for (int dy = -r; dy <= r && !out(x, y); ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (in_disk(dx, dy, r) && m.get_or(x - dx, y - dy, 0)) {
            out(x, y) = 1;
            break;
          }
  return out;
}

inline cqa::Mask2D erode(const cqa::Mask2D& m, int r) {
  cqa::Mask2D out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      bool all = m(x, y) != 0;
      for (int dy = -r; dy <= r && all; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (in_disk(dx, dy, r) && !m.get_or(x + dx, y + dy, 0)) {
            all = false;
            break;
          }
      out(x, y) = all ? 1 : 0;
    }
  return out;
}

} // namespace oracle
