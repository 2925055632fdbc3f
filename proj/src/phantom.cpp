#include "cqa/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cqa/rng.hpp"

namespace cqa {

void PhantomSpec::validate() const {
  if (organs.empty()) throw ValidationError("phantom needs at least one organ");
  if (cases < 1) throw ValidationError("phantom cases must be >= 1");
  if (grid.nx < 1 || grid.ny < 1 || grid.nz < 1) {
    throw ValidationError("phantom grid must be >= 1 in every dimension");
  }
  if (!(noise_std >= 0)) throw ValidationError("noise_std must be >= 0");
  if (!(taper >= 0 && taper < 1)) throw ValidationError("taper must be in [0, 1)");
  if (!(slice_jitter >= 0)) throw ValidationError("slice_jitter must be >= 0");
  const auto& e = agc_error;
  if (!(e.clean_fraction >= 0 && e.clean_fraction <= 1)) {
    throw ValidationError("clean_fraction must be in [0, 1]");
  }
  if (!(e.translation_std >= 0 && e.radius_scale_std >= 0)) {
    throw ValidationError("agc error stds must be >= 0");
  }
  for (const auto& o : organs) {
    if (o.semi_x < 2 || o.semi_y < 2) {
      throw ValidationError("organ " + o.name + ": semi-axes must be >= 2 px");
    }
    if (o.center_x - o.semi_x < 0 || o.center_x + o.semi_x > grid.nx - 1 ||
        o.center_y - o.semi_y < 0 || o.center_y + o.semi_y > grid.ny - 1) {
      throw ValidationError("organ " + o.name + " does not fit the grid");
    }
    if (o.jitter_std < 0) throw ValidationError("organ jitter must be >= 0");
  }
}

PhantomSpec PhantomSpec::defaults() {
  PhantomSpec s;
  s.organs = {
      {"esophagus", 96, 60, 5, 5, 120, 0.6},
      {"spinal_cord", 96, 134, 6, 6, 400, 0.6},
      {"heart", 100, 96, 20, 17, 150, 1.2},
      {"left_lung", 152, 72, 22, 32, -700, 1.5},
      {"right_lung", 40, 72, 24, 34, -700, 1.5},
  };
  return s;
}

nlohmann::json to_json(const PhantomSpec& s) {
  nlohmann::json organs = nlohmann::json::array();
  for (const auto& o : s.organs) {
    organs.push_back({{"name", o.name},
                      {"center", {o.center_x, o.center_y}},
                      {"semi_axes", {o.semi_x, o.semi_y}},
                      {"contrast", o.contrast},
                      {"jitter_std", o.jitter_std}});
  }
  return {{"organs", organs},
          {"grid", {s.grid.nx, s.grid.ny, s.grid.nz}},
          {"spacing", {s.spacing.sx, s.spacing.sy, s.spacing.sz}},
          {"background", s.background},
          {"noise_std", s.noise_std},
          {"taper", s.taper},
          {"slice_jitter", s.slice_jitter},
          {"cases", s.cases},
          {"agc_error",
           {{"clean_fraction", s.agc_error.clean_fraction},
            {"translation_std", s.agc_error.translation_std},
            {"radius_scale_std", s.agc_error.radius_scale_std},
            {"relative_translation", s.agc_error.relative_translation}}},
          {"seed", s.seed}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  PhantomSpec s = PhantomSpec::defaults();
  try {
    if (j.contains("organs")) {
      s.organs.clear();
      for (const auto& o : j.at("organs")) {
        OrganSpec org;
        org.name = o.at("name").get<std::string>();
        org.center_x = o.at("center")[0].get<double>();
        org.center_y = o.at("center")[1].get<double>();
        org.semi_x = o.at("semi_axes")[0].get<double>();
        org.semi_y = o.at("semi_axes")[1].get<double>();
        org.contrast = o.value("contrast", 100.0);
        org.jitter_std = o.value("jitter_std", 1.0);
        s.organs.push_back(org);
      }
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      s.grid = {g[0].get<int>(), g[1].get<int>(), g[2].get<int>()};
    }
    if (j.contains("spacing")) {
      const auto& g = j.at("spacing");
      s.spacing = {g[0].get<double>(), g[1].get<double>(), g[2].get<double>()};
    }
    s.background = j.value("background", s.background);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.taper = j.value("taper", s.taper);
    s.slice_jitter = j.value("slice_jitter", s.slice_jitter);
    s.cases = j.value("cases", s.cases);
    s.seed = j.value("seed", s.seed);
    if (j.contains("agc_error")) {
      const auto& e = j.at("agc_error");
      s.agc_error.clean_fraction = e.value("clean_fraction", s.agc_error.clean_fraction);
      s.agc_error.translation_std = e.value("translation_std", s.agc_error.translation_std);
      s.agc_error.radius_scale_std = e.value("radius_scale_std", s.agc_error.radius_scale_std);
      s.agc_error.relative_translation =
          e.value("relative_translation", s.agc_error.relative_translation);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed phantom spec: " + std::string(e.what()));
  }
  return s;
}

std::string phantom_case_id(int case_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case_%03d", case_index);
  return buf;
}

namespace {

struct Ellipse {
  double cx, cy, ax, ay;
};

double slice_scale(const PhantomSpec& spec, int z) {
  if (spec.grid.nz == 1) return 1.0;
  const double mid = 0.5 * (spec.grid.nz - 1);
  const double t = (z - mid) / mid;
  return 1.0 - spec.taper * t * t;
}

using SliceEllipses = std::vector<Ellipse>;

Volume rasterize(const PhantomSpec& spec, const SliceEllipses& slices) {
  auto v = Volume::zeros(spec.grid, spec.spacing, DType::u8);
  auto data = v.u8();
  for (int z = 0; z < spec.grid.nz; ++z) {
    const auto& e = slices[static_cast<std::size_t>(z)];
    for (int y = 0; y < spec.grid.ny; ++y) {
      const double ny = (y - e.cy) / e.ay;
      for (int x = 0; x < spec.grid.nx; ++x) {
        const double nx = (x - e.cx) / e.ax;
        if (nx * nx + ny * ny <= 1.0) {
          data[v.index(x, y, z)] = 1;
        }
      }
    }
  }
  return v;
}

void check_inside(const PhantomSpec& spec, const std::string& name, const Ellipse& e) {
  if (e.cx - e.ax < 0 || e.cx + e.ax > spec.grid.nx - 1 || e.cy - e.ay < 0 ||
      e.cy + e.ay > spec.grid.ny - 1) {
    throw ValidationError("organ " + name + " exits the grid");
  }
}

} // namespace

PhantomCase generate_case(const PhantomSpec& spec, int case_index) {
  spec.validate();
  PhantomCase pc;
  pc.case_id = phantom_case_id(case_index);
  const auto idx = static_cast<std::uint64_t>(case_index);

  for (const auto& organ : spec.organs) {
    Rng rng(derive_seed(spec.seed, idx, organ.name));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    const Ellipse base{organ.center_x + organ.jitter_std * gauss(rng),
                       organ.center_y + organ.jitter_std * gauss(rng),
                       organ.semi_x + organ.jitter_std * gauss(rng),
                       organ.semi_y + organ.jitter_std * gauss(rng)};
    const double sj = spec.slice_jitter * organ.jitter_std;
    SliceEllipses gt(static_cast<std::size_t>(spec.grid.nz));
    for (int z = 0; z < spec.grid.nz; ++z) {
      const double s = slice_scale(spec, z);
      auto& e = gt[static_cast<std::size_t>(z)];
      e.cx = base.cx + sj * gauss(rng);
      e.cy = base.cy + sj * gauss(rng);
      e.ax = std::max(2.0, base.ax * s + sj * gauss(rng));
      e.ay = std::max(2.0, base.ay * s + sj * gauss(rng));
      check_inside(spec, organ.name, e);
    }

    // Draw every variate unconditionally so the stream layout is fixed.
    const double u = uniform(rng);
    const double tstd = spec.agc_error.translation_std *
                        (spec.agc_error.relative_translation
                             ? 0.5 * (organ.semi_x + organ.semi_y)
                             : 1.0);
    const double tx = tstd * gauss(rng);
    const double ty = tstd * gauss(rng);
    const double scale =
        std::max(0.3, 1.0 + spec.agc_error.radius_scale_std * gauss(rng));
    const bool clean = u < spec.agc_error.clean_fraction;
    SliceEllipses agc = gt;
    if (!clean) {
      for (auto& e : agc) {
        e = {e.cx + tx, e.cy + ty, std::max(2.0, e.ax * scale), std::max(2.0, e.ay * scale)};
        check_inside(spec, organ.name + " (automatic contour)", e);
      }
    }
    pc.organs.push_back(organ.name);
    pc.gt.emplace(organ.name, rasterize(spec, gt));
    pc.agc.emplace(organ.name, clean ? pc.gt.at(organ.name) : rasterize(spec, agc));
  }

  // Ground-truth organs may touch but not overlap by more than 1% of the
  // smaller one.
  for (std::size_t a = 0; a < pc.organs.size(); ++a) {
    for (std::size_t b = a + 1; b < pc.organs.size(); ++b) {
      const auto ma = pc.gt.at(pc.organs[a]).u8();
      const auto mb = pc.gt.at(pc.organs[b]).u8();
      std::size_t na = 0, nb = 0, both = 0;
      for (std::size_t i = 0; i < ma.size(); ++i) {
        na += ma[i];
        nb += mb[i];
        both += ma[i] & mb[i];
      }
      if (static_cast<double>(both) > 0.01 * static_cast<double>(std::min(na, nb))) {
        throw ValidationError("organs " + pc.organs[a] + " and " + pc.organs[b] +
                              " overlap");
      }
    }
  }

  std::vector<std::int16_t> ct(spec.grid.count());
  Rng noise_rng(derive_seed(spec.seed, idx, "ct-noise"));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < ct.size(); ++i) {
    double v = spec.background;
    for (std::size_t o = 0; o < spec.organs.size(); ++o) {
      if (pc.gt.at(spec.organs[o].name).u8()[i]) {
        v = spec.background + spec.organs[o].contrast;
      }
    }
    v += spec.noise_std * noise(noise_rng);
    ct[i] = static_cast<std::int16_t>(std::clamp(std::round(v), -32768.0, 32767.0));
  }
  pc.ct = Volume(spec.grid, spec.spacing, std::move(ct));
  return pc;
}

std::filesystem::path write_phantom_dataset(const PhantomSpec& spec,
                                            const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  }
  const auto manifest = out_dir / "manifest.csv";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + manifest.string());
  }
  out << "case_id,organ,gt_path,agc_path,ct_path\n";
  for (int c = 0; c < spec.cases; ++c) {
    const auto pc = generate_case(spec, c);
    const std::string ct_name = pc.case_id + "_ct.qav";
    save_volume(pc.ct, out_dir / ct_name);
    for (const auto& organ : pc.organs) {
      const std::string gt_name = pc.case_id + "_" + organ + "_gt.qav";
      const std::string agc_name = pc.case_id + "_" + organ + "_agc.qav";
      save_mask(pc.gt.at(organ), out_dir / gt_name);
      save_mask(pc.agc.at(organ), out_dir / agc_name);
      out << pc.case_id << ',' << organ << ',' << gt_name << ',' << agc_name << ','
          << ct_name << '\n';
    }
  }
  std::ofstream spec_out(out_dir / "phantom_spec.json", std::ios::trunc);
  spec_out << to_json(spec).dump(2) << '\n';
  return manifest;
}

} // namespace cqa
