#include "cqa/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace cqa {

static_assert(std::endian::native == std::endian::little,
              "QAV1 payload IO assumes a little-endian host");

std::string to_string(DType t) {
  switch (t) {
  case DType::u8:
    return "u8";
  case DType::i16:
    return "i16";
  case DType::f32:
    return "f32";
  }
  return "?";
}

DType parse_dtype(const std::string& s) {
  if (s == "u8") return DType::u8;
  if (s == "i16") return DType::i16;
  if (s == "f32") return DType::f32;
  throw FormatError("unsupported dtype '" + s + "'");
}

namespace {

std::size_t payload_size(const Volume::Payload& p) {
  return std::visit([](const auto& v) { return v.size(); }, p);
}

std::size_t element_bytes(DType t) {
  switch (t) {
  case DType::u8:
    return 1;
  case DType::i16:
    return 2;
  case DType::f32:
    return 4;
  }
  return 0;
}

} // namespace

Volume::Volume(Dims dims, Spacing spacing, Payload voxels)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
    throw ValidationError("volume dims must be >= 1");
  }
  if (!(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0)) {
    throw ValidationError("volume spacing must be > 0");
  }
  if (payload_size(voxels_) != dims.count()) {
    throw ValidationError("volume payload length does not match dims");
  }
}

Volume Volume::zeros(Dims dims, Spacing spacing, DType dtype) {
  switch (dtype) {
  case DType::u8:
    return {dims, spacing, std::vector<std::uint8_t>(dims.count())};
  case DType::i16:
    return {dims, spacing, std::vector<std::int16_t>(dims.count())};
  case DType::f32:
    return {dims, spacing, std::vector<float>(dims.count())};
  }
  throw ValidationError("bad dtype");
}

DType Volume::dtype() const {
  return static_cast<DType>(voxels_.index());
}

std::span<const std::uint8_t> Volume::u8() const {
  if (const auto* v = std::get_if<std::vector<std::uint8_t>>(&voxels_)) {
    return *v;
  }
  throw ValidationError("volume dtype is not u8");
}

std::span<std::uint8_t> Volume::u8() {
  if (auto* v = std::get_if<std::vector<std::uint8_t>>(&voxels_)) {
    return *v;
  }
  throw ValidationError("volume dtype is not u8");
}

std::span<const std::int16_t> Volume::i16() const {
  if (const auto* v = std::get_if<std::vector<std::int16_t>>(&voxels_)) {
    return *v;
  }
  throw ValidationError("volume dtype is not i16");
}

std::span<const float> Volume::f32() const {
  if (const auto* v = std::get_if<std::vector<float>>(&voxels_)) {
    return *v;
  }
  throw ValidationError("volume dtype is not f32");
}

double Volume::value(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v[i]); },
                    voxels_);
}

bool Volume::is_mask() const {
  const auto* v = std::get_if<std::vector<std::uint8_t>>(&voxels_);
  return v && std::all_of(v->begin(), v->end(), [](auto x) { return x <= 1; });
}

Mask2D Volume::slice_u8(int z) const {
  if (z < 0 || z >= dims_.nz) {
    throw ValidationError("slice index out of range");
  }
  auto src = u8();
  const std::size_t plane = static_cast<std::size_t>(dims_.nx) * dims_.ny;
  std::vector<std::uint8_t> out(src.begin() + z * plane,
                                src.begin() + (z + 1) * plane);
  return {dims_.nx, dims_.ny, std::move(out)};
}

void Volume::set_slice_u8(int z, const Mask2D& m) {
  if (z < 0 || z >= dims_.nz || m.width() != dims_.nx ||
      m.height() != dims_.ny) {
    throw ValidationError("slice shape mismatch");
  }
  auto dst = u8();
  const std::size_t plane = static_cast<std::size_t>(dims_.nx) * dims_.ny;
  std::copy(m.data().begin(), m.data().end(), dst.begin() + z * plane);
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw FormatError("missing QAV1 header in " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed QAV1 header: " + std::string(e.what()));
  }
  Dims dims;
  Spacing spacing;
  DType dtype;
  try {
    if (!header.is_object() || header.at("magic") != "QAV1") {
      throw FormatError("bad QAV1 magic in " + path.string());
    }
    const auto& d = header.at("dims");
    const auto& s = header.at("spacing");
    if (d.size() != 3 || s.size() != 3) {
      throw FormatError("QAV1 dims/spacing must have 3 entries");
    }
    dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    dtype = parse_dtype(header.at("dtype").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed QAV1 header: " + std::string(e.what()));
  }
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
    throw FormatError("QAV1 dims must be >= 1");
  }

  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const std::size_t expected = dims.count() * element_bytes(dtype);
  if (bytes.size() != expected) {
    throw FormatError("QAV1 payload is " + std::to_string(bytes.size()) +
                      " bytes, header declares " + std::to_string(expected));
  }

  auto read_as = [&]<typename T>(std::vector<T> v) {
    v.resize(dims.count());
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return Volume(dims, spacing, std::move(v));
  };
  try {
    switch (dtype) {
    case DType::u8:
      return read_as(std::vector<std::uint8_t>{});
    case DType::i16:
      return read_as(std::vector<std::int16_t>{});
    case DType::f32:
      return read_as(std::vector<float>{});
    }
  } catch (const ValidationError& e) {
    throw FormatError(e.what());
  }
  throw FormatError("unreachable dtype");
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
  nlohmann::json header = {
      {"magic", "QAV1"},
      {"dims", {v.dims().nx, v.dims().ny, v.dims().nz}},
      {"spacing", {v.spacing().sx, v.spacing().sy, v.spacing().sz}},
      {"dtype", to_string(v.dtype())}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << header.dump() << '\n';
  std::visit(
      [&](const auto& data) {
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() *
                                               sizeof(data[0])));
      },
      v.payload());
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

void save_mask(const Volume& v, const std::filesystem::path& path) {
  if (!v.is_mask()) {
    throw ValidationError("mask volume must be u8 with values in {0,1}");
  }
  save_volume(v, path);
}

std::uint8_t normalize_value(double v, HuWindow w) {
  const double c = std::clamp(v, w.lo, w.hi);
  // std::round rounds half away from zero.
  return static_cast<std::uint8_t>(std::round(255.0 * (c - w.lo) / (w.hi - w.lo)));
}

Volume normalize_u8(const Volume& ct, HuWindow window) {
  if (!(window.lo < window.hi)) {
    throw ValidationError("window lo must be < hi");
  }
  if (ct.dtype() == DType::u8) {
    throw ValidationError("normalize_u8 expects an i16 or f32 volume");
  }
  std::vector<std::uint8_t> out(ct.dims().count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = normalize_value(ct.value(i), window);
  }
  return {ct.dims(), ct.spacing(), std::move(out)};
}

Box2D mask_bounding_box(const Mask2D& mask, int margin) {
  Box2D box{mask.width(), mask.height(), -1, -1};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) {
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x);
        box.y1 = std::max(box.y1, y);
      }
    }
  }
  if (box.x1 < 0) {
    throw ValidationError("crop_to_mask: mask is empty");
  }
  margin = std::max(margin, 0);
  box.x0 = std::max(box.x0 - margin, 0);
  box.y0 = std::max(box.y0 - margin, 0);
  box.x1 = std::min(box.x1 + margin, mask.width() - 1);
  box.y1 = std::min(box.y1 + margin, mask.height() - 1);
  return box;
}

CropResult crop_to_mask(const Image2D& image, const Mask2D& mask, int margin) {
  if (image.width() != mask.width() || image.height() != mask.height()) {
    throw ValidationError("crop_to_mask: image and mask shapes differ");
  }
  const Box2D box = mask_bounding_box(mask, margin);
  Image2D sub(box.width(), box.height());
  Mask2D sub_mask(box.width(), box.height());
  for (int y = 0; y < box.height(); ++y) {
    for (int x = 0; x < box.width(); ++x) {
      sub(x, y) = image(box.x0 + x, box.y0 + y);
      sub_mask(x, y) = mask(box.x0 + x, box.y0 + y);
    }
  }
  return {std::move(sub), std::move(sub_mask), box};
}

namespace {

// Corner-aligned source coordinate of destination index i.
double source_coord(int i, int src_n, int dst_n) {
  if (dst_n == 1) {
    return 0.0;
  }
  return static_cast<double>(i) * (src_n - 1) / static_cast<double>(dst_n - 1);
}

} // namespace

Image2D resize_bilinear(const Image2D& src, int width, int height) {
  Image2D out(width, height);
  for (int y = 0; y < height; ++y) {
    const double fy = source_coord(y, src.height(), height);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = source_coord(x, src.width(), width);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * src(x0, y0) + wx * src(x1, y0);
      const double bottom = (1.0 - wx) * src(x0, y1) + wx * src(x1, y1);
      const double v = (1.0 - wy) * top + wy * bottom;
      out(x, y) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
  }
  return out;
}

Mask2D resize_nearest(const Mask2D& src, int width, int height) {
  Mask2D out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>(std::floor(source_coord(y, src.height(), height) + 0.5));
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>(std::floor(source_coord(x, src.width(), width) + 0.5));
      out(x, y) = src(std::min(sx, src.width() - 1), std::min(sy, src.height() - 1));
    }
  }
  return out;
}

SliceCrop resize_to_crop(const Image2D& image, const Mask2D& mask,
                         Provenance provenance) {
  if (image.width() != mask.width() || image.height() != mask.height()) {
    throw ValidationError("resize: image and mask shapes differ");
  }
  return {resize_bilinear(image, kCropSize, kCropSize),
          resize_nearest(mask, kCropSize, kCropSize), std::move(provenance)};
}

SliceCrop prepare_slice(const Image2D& image, const Mask2D& mask, int margin,
                        Provenance provenance) {
  auto crop = crop_to_mask(image, mask, margin);
  provenance.box = crop.box;
  auto out = resize_to_crop(crop.image, crop.mask, std::move(provenance));
  if (count_nonzero(out.mask) == 0) {
    // Nearest-neighbour can drop a one-pixel mask only for degenerate inputs.
    throw ValidationError("resized mask is empty");
  }
  return out;
}

} // namespace cqa
