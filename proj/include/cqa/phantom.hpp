#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqa/volume.hpp"

namespace cqa {

/// One elliptical organ: centre and semi-axes in pixels, intensity offset in HU
/// over the background, per-case jitter of centre and semi-axes.
struct OrganSpec {
  std::string name;
  double center_x = 0, center_y = 0;
  double semi_x = 5, semi_y = 5;
  double contrast = 100;
  double jitter_std = 1.0;
};

/// How automatic contours deviate from the ground truth. A `clean_fraction`
/// of (case, organ) pairs are exact copies; the rest get a random in-plane
/// shift and a random scaling of both semi-axes.
struct AgcErrorSpec {
  double clean_fraction = 0.85;
  double translation_std = 2.5;   // px, per axis
  double radius_scale_std = 0.12;
  // When set, translation_std is a fraction of the organ's mean semi-axis,
  // so larger organs get proportionally larger shifts.
  bool relative_translation = false;
};

struct PhantomSpec {
  std::vector<OrganSpec> organs;
  Dims grid{192, 160, 12};
  Spacing spacing{0.98, 0.98, 2.5};
  double background = 40.0;   // HU
  double noise_std = 15.0;    // HU
  double taper = 0.1;         // semi-axis shrink at the outermost slices
  // Independent per-slice jitter of centre and semi-axes, as a multiple of
  // each organ's jitter_std, so slices of one case are not copies.
  double slice_jitter = 1.0;
  int cases = 50;
  AgcErrorSpec agc_error;
  std::uint64_t seed = 0;

  void validate() const;

  /// Five thoracic-like organs whose areas span about 1:30.
  static PhantomSpec defaults();
};

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

struct PhantomCase {
  std::string case_id;
  Volume ct;                         // i16 HU
  std::vector<std::string> organs;   // spec order
  std::map<std::string, Volume> gt;
  std::map<std::string, Volume> agc;
};

std::string phantom_case_id(int case_index);

/// Deterministic in (spec.seed, case_index).
PhantomCase generate_case(const PhantomSpec& spec, int case_index);

/// Writes every case as QAV1 volumes plus manifest.csv
/// (case_id,organ,gt_path,agc_path,ct_path; paths relative to the manifest).
std::filesystem::path write_phantom_dataset(const PhantomSpec& spec,
                                            const std::filesystem::path& out_dir);

} // namespace cqa
