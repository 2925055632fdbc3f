#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cqa/grid.hpp"

namespace cqa {

enum class DType { u8, i16, f32 };

std::string to_string(DType t);
DType parse_dtype(const std::string& s);

struct Dims {
  int nx = 1, ny = 1, nz = 1;
  std::size_t count() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double sx = 1.0, sy = 1.0, sz = 1.0;
  bool operator==(const Spacing&) const = default;
};

/// 3-D scalar grid with physical spacing, x-fastest then y then z.
///
/// Holds either CT intensities (i16 HU or f32) or a binary mask (u8 with
/// values in {0, 1}). Construction validates dims and payload length; the
/// mask invariant is checked on save and by the metric entry points.
class Volume {
public:
  using Payload = std::variant<std::vector<std::uint8_t>,
                               std::vector<std::int16_t>, std::vector<float>>;

  Volume() = default;
  Volume(Dims dims, Spacing spacing, Payload voxels);

  static Volume zeros(Dims dims, Spacing spacing, DType dtype);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  DType dtype() const;
  const Payload& payload() const { return voxels_; }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims_.ny + y) * dims_.nx + x;
  }

  // Typed access; throws ValidationError on dtype mismatch.
  std::span<const std::uint8_t> u8() const;
  std::span<std::uint8_t> u8();
  std::span<const std::int16_t> i16() const;
  std::span<const float> f32() const;

  /// Value at a voxel converted to double, any dtype.
  double value(std::size_t i) const;

  bool is_mask() const;

  /// Copy of slice z as a 2-D grid (u8 only).
  Mask2D slice_u8(int z) const;
  void set_slice_u8(int z, const Mask2D& m);

  bool operator==(const Volume&) const = default;

private:
  Dims dims_;
  Spacing spacing_;
  Payload voxels_;
};

/// Reads a QAV1 file: one JSON header line then the raw little-endian payload.
Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& v, const std::filesystem::path& path);
/// save_volume after checking the binary-mask invariant.
void save_mask(const Volume& v, const std::filesystem::path& path);

struct HuWindow {
  double lo = -1000.0;
  double hi = 1000.0;
};

/// round(255 * (clamp(v, lo, hi) - lo) / (hi - lo)), half away from zero.
std::uint8_t normalize_value(double v, HuWindow w);
Volume normalize_u8(const Volume& ct, HuWindow window);

inline constexpr int kCropSize = 224;
inline constexpr int kDefaultMargin = 8;

struct CropResult {
  Image2D image;
  Mask2D mask;
  Box2D box;
};

/// Tight box of nonzero mask pixels grown by `margin` and clipped to the slice.
Box2D mask_bounding_box(const Mask2D& mask, int margin);
CropResult crop_to_mask(const Image2D& image, const Mask2D& mask,
                        int margin = kDefaultMargin);

struct Provenance {
  std::string case_id;
  std::string organ;
  int slice = -1;
  Box2D box;
};

/// Fixed-size network input: 224x224 intensity crop plus its mask.
struct SliceCrop {
  Image2D pixels;
  Mask2D mask;
  Provenance provenance;
};

/// Bilinear (corner-aligned) for the image, nearest neighbour for the mask.
Image2D resize_bilinear(const Image2D& src, int width, int height);
Mask2D resize_nearest(const Mask2D& src, int width, int height);
SliceCrop resize_to_crop(const Image2D& image, const Mask2D& mask,
                         Provenance provenance = {});

/// Full preprocessing chain for one slice: crop around the mask, resize.
SliceCrop prepare_slice(const Image2D& image, const Mask2D& mask,
                        int margin = kDefaultMargin,
                        Provenance provenance = {});

} // namespace cqa
