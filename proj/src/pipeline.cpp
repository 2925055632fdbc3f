#include "cqa/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cqa/csv.hpp"
#include "cqa/error.hpp"
#include "cqa/rng.hpp"

namespace cqa::pipeline {

namespace {

// Runs f(i) for every index; the first failure in index order is rethrown so
// error reporting does not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::string key(const std::string& case_id, const std::string& organ) {
  return case_id + '\x1f' + organ;
}

const ManifestEntry& find_entry(const std::vector<ManifestEntry>& entries,
                                const std::string& case_id, const std::string& organ) {
  for (const auto& e : entries) {
    if (e.case_id == case_id && e.organ == organ) return e;
  }
  throw ValidationError("no manifest entry for " + case_id + "/" + organ);
}

// Normalized CT slices shared by many samples. std::map keeps element
// addresses stable, so samples can hold plain pointers.
class SliceCache {
public:
  explicit SliceCache(HuWindow window) : window_(window) {}

  const Image2D& get(const fs::path& ct_path, int z) {
    const auto k = std::make_pair(ct_path.string(), z);
    auto it = slices_.find(k);
    if (it != slices_.end()) return it->second;
    auto vit = volumes_.find(k.first);
    if (vit == volumes_.end()) {
      vit = volumes_.emplace(k.first, normalize_u8(load_volume(ct_path), window_)).first;
    }
    if (z < 0 || z >= vit->second.dims().nz) {
      throw ValidationError("slice " + std::to_string(z) + " outside " + k.first);
    }
    return slices_.emplace(k, vit->second.slice_u8(z)).first->second;
  }

private:
  HuWindow window_;
  std::map<std::string, Volume> volumes_;
  std::map<std::pair<std::string, int>, Image2D> slices_;
};

class MaskCache {
public:
  const Volume& get(const fs::path& path) {
    auto it = masks_.find(path.string());
    if (it == masks_.end()) {
      Volume v = load_volume(path);
      if (!v.is_mask()) throw FormatError(path.string() + " is not a binary u8 mask");
      it = masks_.emplace(path.string(), std::move(v)).first;
    }
    return it->second;
  }

private:
  std::map<std::string, Volume> masks_;
};

std::string quality_cell(const std::optional<QualityLabel>& l) {
  return l ? to_string(l->value) : std::string();
}

} // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  const auto table = CsvTable::read(path.string());
  for (const char* col : {"case_id", "organ", "gt_path", "agc_path"}) {
    if (!table.has_column(col)) {
      throw FormatError(path.string() + ": missing column " + col);
    }
  }
  const fs::path base = path.parent_path();
  const bool has_ct = table.has_column("ct_path");
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    ManifestEntry e;
    e.case_id = table.at(r, "case_id");
    e.organ = table.at(r, "organ");
    if (e.case_id.empty() || e.organ.empty()) {
      throw FormatError(path.string() + ": empty case_id or organ on row " +
                        std::to_string(r + 2));
    }
    if (!seen.insert(key(e.case_id, e.organ)).second) {
      throw FormatError(path.string() + ": duplicate entry " + e.case_id + "/" + e.organ);
    }
    e.gt = base / table.at(r, "gt_path");
    e.agc = base / table.at(r, "agc_path");
    const std::string ct = has_ct ? table.at(r, "ct_path") : std::string();
    e.ct = base / (ct.empty() ? e.case_id + "_ct.qav" : ct);
    out.push_back(std::move(e));
  }
  if (out.empty()) throw ValidationError(path.string() + ": manifest has no entries");
  return out;
}

std::vector<std::string> case_ids(const std::vector<ManifestEntry>& entries) {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (std::find(out.begin(), out.end(), e.case_id) == out.end()) out.push_back(e.case_id);
  }
  return out;
}

Subset parse_subset(const std::string& s) {
  if (s == "all") return Subset::all;
  if (s == "train") return Subset::train;
  if (s == "test") return Subset::test;
  throw ValidationError("unknown subset '" + s + "' (all, train, test)");
}

CaseSplit::CaseSplit(const std::vector<ManifestEntry>& entries, int train_cases)
    : CaseSplit(case_ids(entries), train_cases) {}

CaseSplit::CaseSplit(const std::vector<std::string>& ids, int train_cases) {
  if (train_cases < 0) throw ValidationError("train case count must be >= 0");
  all_train_ = false;
  for (std::size_t i = 0; i < ids.size() && i < static_cast<std::size_t>(train_cases); ++i) {
    train_.insert(ids[i]);
  }
}

bool CaseSplit::contains(const std::string& case_id, Subset subset) const {
  if (subset == Subset::all) return true;
  const bool train = all_train_ || train_.count(case_id) > 0;
  return subset == Subset::train ? train : !train;
}

std::string to_string(MetricsMode m) { return m == MetricsMode::two_d ? "2d" : "3d"; }

MetricsMode parse_metrics_mode(const std::string& s) {
  if (s == "2d") return MetricsMode::two_d;
  if (s == "3d") return MetricsMode::three_d;
  throw ValidationError("unknown metrics mode '" + s + "' (2d, 3d)");
}

Units parse_units(const std::string& s) {
  if (s == "px") return Units::pixel;
  if (s == "mm") return Units::mm;
  throw ValidationError("unknown units '" + s + "' (px, mm)");
}

std::vector<MetricsRow> compute_metrics(const std::vector<ManifestEntry>& entries,
                                        MetricsMode mode, Units units) {
  // Entries are independent; each produces its own block of rows.
  std::vector<std::vector<MetricsRow>> blocks(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const Volume gt = load_volume(e.gt);
    const Volume agc = load_volume(e.agc);
    if (!gt.is_mask() || !agc.is_mask()) {
      throw FormatError(e.case_id + "/" + e.organ + ": masks must be binary u8");
    }
    if (gt.dims() != agc.dims()) {
      throw ValidationError(e.case_id + "/" + e.organ + ": GT and AGC dims differ");
    }
    const Spacing sp = units == Units::mm ? gt.spacing() : Spacing{1.0, 1.0, 1.0};
    if (mode == MetricsMode::three_d) {
      const Volume g{gt.dims(), sp, gt.payload()};
      const Volume a{agc.dims(), sp, agc.payload()};
      MetricsRow row{e.case_id, e.organ, mode, -1, agreement(g, a), organ_volume(gt).voxels, {}};
      blocks[i].push_back(std::move(row));
      continue;
    }
    for (int z = 0; z < gt.dims().nz; ++z) {
      const Mask2D g = gt.slice_u8(z);
      const Mask2D a = agc.slice_u8(z);
      const auto ng = count_nonzero(g);
      if (ng == 0 || count_nonzero(a) == 0) continue;
      blocks[i].push_back({e.case_id, e.organ, mode, z, agreement_2d(g, a, sp.sx, sp.sy), ng, {}});
    }
  }
  std::vector<MetricsRow> out;
  for (auto& b : blocks) {
    for (auto& r : b) out.push_back(std::move(r));
  }
  return out;
}

void write_metrics(const std::vector<MetricsRow>& rows, const fs::path& path) {
  const bool labeled = std::any_of(rows.begin(), rows.end(),
                                   [](const MetricsRow& r) { return r.label.has_value(); });
  auto out = open_out(path);
  out << "case_id,organ,mode,slice,dsc,hd95,msd,volume_vox";
  if (labeled) out << ",label,failed";
  out << '\n';
  for (const auto& r : rows) {
    out << r.case_id << ',' << r.organ << ',' << to_string(r.mode) << ',' << r.slice << ','
        << format_double(r.metrics.dsc) << ',' << format_double(r.metrics.hd95) << ','
        << format_double(r.metrics.msd) << ',' << r.volume_vox;
    if (labeled) {
      out << ',' << quality_cell(r.label) << ',' << (r.label ? r.label->failed_string() : "");
    }
    out << '\n';
  }
  finish(out, path);
}

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  const auto table = CsvTable::read(path.string());
  for (const char* col : {"case_id", "organ", "mode", "slice", "dsc", "hd95", "msd", "volume_vox"}) {
    if (!table.has_column(col)) throw FormatError(path.string() + ": missing column " + col);
  }
  const bool labeled = table.has_column("label");
  std::vector<MetricsRow> rows;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    MetricsRow row;
    row.case_id = table.at(r, "case_id");
    row.organ = table.at(r, "organ");
    try {
      row.mode = parse_metrics_mode(table.at(r, "mode"));
    } catch (const ValidationError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    row.slice = static_cast<int>(parse_int(table.at(r, "slice"), "slice"));
    row.metrics.dsc = parse_double(table.at(r, "dsc"), "dsc");
    row.metrics.hd95 = parse_double(table.at(r, "hd95"), "hd95");
    row.metrics.msd = parse_double(table.at(r, "msd"), "msd");
    const auto vox = parse_int(table.at(r, "volume_vox"), "volume_vox");
    if (vox < 0) throw FormatError(path.string() + ": negative volume_vox");
    row.volume_vox = static_cast<std::size_t>(vox);
    if (labeled && !table.at(r, "label").empty()) {
      QualityLabel l;
      try {
        l.value = parse_quality(table.at(r, "label"));
      } catch (const ValidationError& e) {
        throw FormatError(path.string() + ": " + e.what());
      }
      if (table.has_column("failed")) {
        std::stringstream ss(table.at(r, "failed"));
        for (std::string name; std::getline(ss, name, ';');) {
          if (name == "dsc") l.failed_checks.push_back(Check::dsc);
          else if (name == "hd95") l.failed_checks.push_back(Check::hd95);
          else if (name == "msd") l.failed_checks.push_back(Check::msd);
          else if (!name.empty()) throw FormatError(path.string() + ": unknown check " + name);
        }
      }
      row.label = std::move(l);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> case_ids(const std::vector<MetricsRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.case_id) == out.end()) out.push_back(r.case_id);
  }
  return out;
}

ThresholdSet fit_dataset_thresholds(const std::vector<MetricsRow>& rows,
                                    const CaseSplit& split, DirectionMode mode) {
  std::map<std::string, std::vector<MetricTriple>> by_organ;
  std::optional<MetricsMode> seen_mode;
  for (const auto& r : rows) {
    if (!split.contains(r.case_id, Subset::train)) continue;
    if (seen_mode && *seen_mode != r.mode) {
      throw ValidationError("thresholds need rows of a single metrics mode");
    }
    seen_mode = r.mode;
    by_organ[r.organ].push_back(r.metrics);
  }
  if (by_organ.empty()) throw ValidationError("no training rows to fit thresholds on");
  ThresholdSet out;
  for (const auto& [organ, triples] : by_organ) {
    out.emplace(organ, fit_thresholds(triples, organ, mode));
  }
  return out;
}

void apply_labels(std::vector<MetricsRow>& rows, const ThresholdSet& thresholds) {
  for (auto& r : rows) {
    const auto it = thresholds.find(r.organ);
    if (it == thresholds.end()) throw ValidationError("no thresholds for organ " + r.organ);
    r.label = label(r.metrics, it->second);
  }
}

void inherit_organ_labels(std::vector<MetricsRow>& slice_rows,
                          const std::vector<MetricsRow>& organ_rows) {
  std::map<std::string, QualityLabel> labels;
  for (const auto& r : organ_rows) {
    if (r.mode != MetricsMode::three_d || !r.label) {
      throw ValidationError("organ-level inheritance needs labeled 3d rows");
    }
    labels[key(r.case_id, r.organ)] = *r.label;
  }
  for (auto& r : slice_rows) {
    const auto it = labels.find(key(r.case_id, r.organ));
    if (it == labels.end()) {
      throw ValidationError("no organ-level label for " + r.case_id + "/" + r.organ);
    }
    r.label = it->second;
  }
}

PerturbSummary perturb_dataset(const std::vector<ManifestEntry>& entries,
                               const std::vector<MetricsRow>& labeled_rows,
                               const ThresholdSet& thresholds, const CaseSplit& split,
                               Subset subset, const PerturbOptions& options) {
  struct Job {
    const MetricsRow* row;
    PerturbKind kind;
    const Volume* gt;
    const Volume* agc;
  };
  MaskCache masks;
  std::vector<Job> jobs;
  for (const auto& r : labeled_rows) {
    if (r.mode != MetricsMode::two_d) throw ValidationError("perturbation needs 2d metric rows");
    if (!r.label) throw ValidationError("perturbation needs labeled metric rows");
    if (r.label->value != Quality::high || !split.contains(r.case_id, subset)) continue;
    if (!thresholds.count(r.organ)) throw ValidationError("no thresholds for organ " + r.organ);
    const auto& e = find_entry(entries, r.case_id, r.organ);
    for (const auto kind : options.kinds) {
      jobs.push_back({&r, kind, &masks.get(e.gt), &masks.get(e.agc)});
    }
  }

  std::vector<std::optional<PerturbRecord>> slots(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto& r = *job.row;
    PerturbationSpec spec;
    spec.kind = job.kind;
    spec.distance = options.distance;
    spec.disk_radius = options.disk_radius;
    spec.max_iterations = options.max_iterations;
    spec.escalate_translation = options.escalate_translation;
    spec.seed = derive_seed(options.seed, r.case_id, r.organ,
                            static_cast<std::uint64_t>(r.slice), to_string(job.kind));
    spec.validate();
    try {
      auto g = generate_error(job.gt->slice_u8(r.slice), job.agc->slice_u8(r.slice), spec,
                              thresholds.at(r.organ));
      PerturbRecord rec;
      rec.case_id = r.case_id;
      rec.organ = r.organ;
      rec.slice = r.slice;
      rec.kind = job.kind;
      rec.param = g.param;
      rec.iterations = g.iterations;
      rec.metrics = g.metrics;
      rec.label = Quality::low;
      rec.mask = std::move(g.mask);
      rec.spacing = job.gt->spacing();
      slots[i] = std::move(rec);
    } catch (const ConvergenceError&) {
      // Counted below; an unreachable error kind is not a sample.
    } catch (const ValidationError&) {
      // The slice pair is not high quality under these thresholds (e.g. labels
      // inherited from the organ level).
    }
  });

  PerturbSummary out;
  for (auto& s : slots) {
    if (s) out.records.push_back(std::move(*s));
    else ++out.failures;
  }
  return out;
}

fs::path write_perturbations(std::vector<PerturbRecord>& records, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const fs::path manifest = out_dir / "perturbations.csv";
  auto out = open_out(manifest);
  out << "case_id,organ,slice,kind,param,iterations,dsc,hd95,msd,label,mask_path\n";
  for (auto& r : records) {
    r.mask_path = r.case_id + "_" + r.organ + "_s" + std::to_string(r.slice) + "_" +
                  to_string(r.kind) + ".qav";
    const Dims dims{r.mask.width(), r.mask.height(), 1};
    std::vector<std::uint8_t> payload = r.mask.data();
    save_mask(Volume(dims, r.spacing, std::move(payload)), out_dir / r.mask_path);
    out << r.case_id << ',' << r.organ << ',' << r.slice << ',' << to_string(r.kind) << ','
        << format_double(r.param) << ',' << r.iterations << ',' << format_double(r.metrics.dsc)
        << ',' << format_double(r.metrics.hd95) << ',' << format_double(r.metrics.msd) << ','
        << to_string(r.label) << ',' << r.mask_path << '\n';
  }
  finish(out, manifest);
  return manifest;
}

std::vector<PerturbRecord> read_perturbations(const fs::path& manifest) {
  const auto table = CsvTable::read(manifest.string());
  for (const char* col : {"case_id", "organ", "slice", "kind", "param", "iterations", "dsc",
                          "hd95", "msd", "label", "mask_path"}) {
    if (!table.has_column(col)) throw FormatError(manifest.string() + ": missing column " + col);
  }
  std::vector<PerturbRecord> out;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    PerturbRecord rec;
    rec.case_id = table.at(r, "case_id");
    rec.organ = table.at(r, "organ");
    rec.slice = static_cast<int>(parse_int(table.at(r, "slice"), "slice"));
    try {
      rec.kind = parse_perturb_kind(table.at(r, "kind"));
      rec.label = parse_quality(table.at(r, "label"));
    } catch (const ValidationError& e) {
      throw FormatError(manifest.string() + ": " + e.what());
    }
    rec.param = parse_double(table.at(r, "param"), "param");
    rec.iterations = static_cast<int>(parse_int(table.at(r, "iterations"), "iterations"));
    rec.metrics.dsc = parse_double(table.at(r, "dsc"), "dsc");
    rec.metrics.hd95 = parse_double(table.at(r, "hd95"), "hd95");
    rec.metrics.msd = parse_double(table.at(r, "msd"), "msd");
    rec.mask_path = table.at(r, "mask_path");
    const Volume v = load_volume(manifest.parent_path() / rec.mask_path);
    if (!v.is_mask() || v.dims().nz != 1) {
      throw FormatError(rec.mask_path + ": expected a single-slice binary mask");
    }
    rec.mask = v.slice_u8(0);
    rec.spacing = v.spacing();
    out.push_back(std::move(rec));
  }
  return out;
}

FeatureVector contour_features(const Image2D& slice, const Mask2D& mask,
                               const FeatureOptions& options, Provenance provenance) {
  auto crop = prepare_slice(slice, mask, options.margin, std::move(provenance));
  return extract_classical(crop);
}

std::vector<FeatureVector> extract_dataset_features(
    const std::vector<ManifestEntry>& entries, const std::vector<MetricsRow>& labeled_rows,
    const CaseSplit& split, Subset subset, const std::vector<PerturbRecord>& perturbed,
    const FeatureOptions& options) {
  struct Job {
    const Image2D* image;
    const Mask2D* mask;
    Provenance provenance;
    std::string label;
  };
  SliceCache slices(options.window);
  MaskCache masks;
  std::vector<Mask2D> agc_slices;  // owned storage for original contours
  agc_slices.reserve(labeled_rows.size());
  std::vector<Job> jobs;
  for (const auto& r : labeled_rows) {
    if (r.mode != MetricsMode::two_d) throw ValidationError("features need 2d metric rows");
    if (!split.contains(r.case_id, subset)) continue;
    const auto& e = find_entry(entries, r.case_id, r.organ);
    agc_slices.push_back(masks.get(e.agc).slice_u8(r.slice));
    jobs.push_back({&slices.get(e.ct, r.slice), &agc_slices.back(),
                    {r.case_id, r.organ, r.slice, {}}, quality_cell(r.label)});
  }
  for (const auto& p : perturbed) {
    if (!split.contains(p.case_id, subset)) continue;
    const auto& e = find_entry(entries, p.case_id, p.organ);
    jobs.push_back({&slices.get(e.ct, p.slice), &p.mask,
                    {p.case_id + "+" + to_string(p.kind), p.organ, p.slice, {}},
                    to_string(p.label)});
  }

  std::vector<FeatureVector> out(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    auto& job = jobs[i];
    out[i] = contour_features(*job.image, *job.mask, options, job.provenance);
    out[i].label = job.label.empty() ? "unknown" : job.label;
  });
  return out;
}

std::vector<OrganModel> train_per_organ(const std::vector<FeatureVector>& features,
                                        const TrainOptions& options) {
  std::map<std::string, std::vector<FeatureVector>> inliers;
  for (const auto& f : features) {
    if (f.label == "high") inliers[options.pooled ? kPooledModel : f.organ].push_back(f);
  }
  if (inliers.empty()) throw ValidationError("no high-quality samples to train on");

  std::vector<OrganModel> out;
  for (const auto& [organ, data] : inliers) {
    TrainConfig cfg;
    cfg.tolerance = options.tolerance;
    OrganModel m;
    m.organ = organ;
    if (options.nu && options.gamma) {
      cfg.nu = *options.nu;
      cfg.kernel.gamma = *options.gamma;
    } else {
      auto grid = CalibrationGrid::defaults(data.front().dim());
      if (options.nu) grid.nus = {*options.nu};
      else if (!options.nu_grid.empty()) grid.nus = options.nu_grid;
      if (options.gamma) grid.gammas = {*options.gamma};
      else if (!options.gamma_grid.empty()) grid.gammas = options.gamma_grid;
      m.calibration = calibrate(data, grid, options.noise, derive_seed(options.seed, organ), cfg);
      cfg.nu = m.calibration->nu;
      cfg.kernel.gamma = m.calibration->gamma;
    }
    cfg.validate();
    m.model = train(data, cfg);
    out.push_back(std::move(m));
  }
  return out;
}

void save_models(const std::vector<OrganModel>& models, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json calib = nlohmann::json::object();
  for (const auto& m : models) {
    save_model(m.model, (dir / (m.organ + ".model.json")).string());
    if (!m.calibration) continue;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : m.calibration->cells) {
      nlohmann::json cell{{"nu", c.nu}, {"gamma", c.gamma}, {"trained", c.trained}};
      if (c.trained) {
        cell["balanced_accuracy"] = c.balanced_accuracy;
        cell["sensitivity"] = c.sensitivity;
        cell["specificity"] = c.specificity;
      } else {
        cell["error"] = c.error;
      }
      cells.push_back(std::move(cell));
    }
    calib[m.organ] = {{"nu", m.calibration->nu},
                      {"gamma", m.calibration->gamma},
                      {"balanced_accuracy", m.calibration->balanced_accuracy},
                      {"cells", std::move(cells)}};
  }
  if (!calib.empty()) {
    const auto path = dir / "calibration.json";
    auto out = open_out(path);
    out << calib.dump(2) << '\n';
    finish(out, path);
  }
}

std::map<std::string, OcsvmModel> load_models(const fs::path& dir) {
  static const std::string suffix = ".model.json";
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, OcsvmModel> out;
  for (const auto& f : files) {
    const auto name = f.filename().string();
    out.emplace(name.substr(0, name.size() - suffix.size()), load_model(f.string()));
  }
  if (out.empty()) throw IoError("no *.model.json files in " + dir.string());
  return out;
}

const OcsvmModel* model_for(const std::map<std::string, OcsvmModel>& models,
                            const std::string& organ) {
  auto it = models.find(organ);
  if (it == models.end()) it = models.find(kPooledModel);
  return it == models.end() ? nullptr : &it->second;
}

std::vector<Prediction> predict_dataset(const std::map<std::string, OcsvmModel>& models,
                                        const std::vector<FeatureVector>& features) {
  std::map<std::string, std::vector<std::size_t>> by_organ;
  for (std::size_t i = 0; i < features.size(); ++i) by_organ[features[i].organ].push_back(i);
  std::vector<Prediction> out(features.size());
  for (const auto& [organ, idx] : by_organ) {
    const auto* model = model_for(models, organ);
    if (!model) throw ValidationError("no model for organ " + organ);
    std::vector<FeatureVector> batch;
    batch.reserve(idx.size());
    for (auto i : idx) batch.push_back(features[i]);
    const auto scores = decision_batch(*model, batch);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& f = features[idx[k]];
      out[idx[k]] = {f.case_id, f.organ, f.slice, f.label, scores[k],
                     scores[k] >= 0.0 ? Quality::high : Quality::low};
    }
  }
  return out;
}

void write_predictions(const std::vector<Prediction>& preds, const fs::path& path) {
  auto out = open_out(path);
  out << "case_id,organ,slice,label,score,prediction\n";
  for (const auto& p : preds) {
    out << p.case_id << ',' << p.organ << ',' << p.slice << ',' << p.label << ','
        << format_double(p.score) << ',' << to_string(p.prediction) << '\n';
  }
  finish(out, path);
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  const auto table = CsvTable::read(path.string());
  for (const char* col : {"case_id", "organ", "slice", "label", "score", "prediction"}) {
    if (!table.has_column(col)) throw FormatError(path.string() + ": missing column " + col);
  }
  std::vector<Prediction> out;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    Prediction p;
    p.case_id = table.at(r, "case_id");
    p.organ = table.at(r, "organ");
    p.slice = static_cast<int>(parse_int(table.at(r, "slice"), "slice"));
    p.label = table.at(r, "label");
    if (p.label != "high" && p.label != "low" && p.label != "unknown") {
      throw FormatError(path.string() + ": bad label '" + p.label + "'");
    }
    p.score = parse_double(table.at(r, "score"), "score");
    try {
      p.prediction = parse_quality(table.at(r, "prediction"));
    } catch (const ValidationError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

Aggregate Aggregate::parse(const std::string& s) {
  if (s == "mean") return {Kind::mean, 0.5};
  if (s == "any") return {Kind::any, 0.5};
  static const std::string prefix = "fraction:";
  if (s.starts_with(prefix)) {
    const double f = parse_double(std::string_view(s).substr(prefix.size()), "fraction");
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("aggregate fraction must be in (0, 1]");
    return {Kind::fraction, f};
  }
  throw ValidationError("unknown aggregate '" + s + "' (mean, any, fraction:<theta>)");
}

std::vector<OrganPrediction> aggregate_predictions(const std::vector<Prediction>& preds,
                                                   const Aggregate& how) {
  std::vector<OrganPrediction> out;
  std::map<std::string, std::size_t> index;
  std::vector<std::size_t> lows;
  for (const auto& p : preds) {
    const auto k = key(p.case_id, p.organ);
    auto it = index.find(k);
    if (it == index.end()) {
      it = index.emplace(k, out.size()).first;
      out.push_back({p.case_id, p.organ, 0, 0.0, 0.0, Quality::high});
      lows.push_back(0);
    }
    auto& o = out[it->second];
    ++o.slices;
    o.mean_score += p.score;
    if (p.prediction == Quality::low) ++lows[it->second];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& o = out[i];
    const double n = static_cast<double>(o.slices);
    o.mean_score /= n;
    o.low_fraction = static_cast<double>(lows[i]) / n;
    bool low = false;
    switch (how.kind) {
      case Aggregate::Kind::mean: low = o.mean_score < 0.0; break;
      case Aggregate::Kind::any: low = lows[i] > 0; break;
      case Aggregate::Kind::fraction: low = o.low_fraction >= how.fraction; break;
    }
    o.prediction = low ? Quality::low : Quality::high;
  }
  return out;
}

void write_organ_predictions(const std::vector<OrganPrediction>& preds, const fs::path& path) {
  auto out = open_out(path);
  out << "case_id,organ,slices,mean_score,low_fraction,prediction\n";
  for (const auto& p : preds) {
    out << p.case_id << ',' << p.organ << ',' << p.slices << ',' << format_double(p.mean_score)
        << ',' << format_double(p.low_fraction) << ',' << to_string(p.prediction) << '\n';
  }
  finish(out, path);
}

std::vector<OrganReport> evaluate_predictions(const std::vector<Prediction>& preds,
                                              bool by_kind) {
  struct Group {
    std::vector<Quality> predicted, labels;
    std::vector<double> scores;
    void add(const Prediction& p) {
      predicted.push_back(p.prediction);
      labels.push_back(parse_quality(p.label));
      scores.push_back(-p.score);  // larger = more likely low quality
    }
  };
  std::map<std::string, Group> groups;
  std::map<std::string, std::set<std::string>> kinds_of;
  for (const auto& p : preds) {
    if (p.label == "unknown") continue;
    groups[p.organ].add(p);
    const auto plus = p.case_id.find('+');
    if (plus != std::string::npos) kinds_of[p.organ].insert(p.case_id.substr(plus + 1));
  }
  if (groups.empty()) throw ValidationError("no labeled predictions to evaluate");
  if (by_kind) {
    // Each kind is scored against the organ's unperturbed samples.
    for (const auto& p : preds) {
      if (p.label == "unknown") continue;
      const auto plus = p.case_id.find('+');
      if (plus == std::string::npos) {
        for (const auto& kind : kinds_of[p.organ]) groups[p.organ + "+" + kind].add(p);
      } else {
        groups[p.organ + "+" + p.case_id.substr(plus + 1)].add(p);
      }
    }
  }
  std::vector<OrganReport> out;
  for (const auto& [name, g] : groups) {
    const auto c = confusion(g.predicted, g.labels);
    out.push_back({name, report(c, g.scores, g.labels)});
  }
  return out;
}

void write_report_csv(const std::vector<OrganReport>& reports, const fs::path& path) {
  auto out = open_out(path);
  out << "organ,tp,fn,tn,fp,ba,f,sens,spec,auc\n";
  for (const auto& [organ, r] : reports) {
    out << organ << ',' << r.counts.tp << ',' << r.counts.fn << ',' << r.counts.tn << ','
        << r.counts.fp << ',' << format_optional(r.balanced_accuracy) << ','
        << format_optional(r.f_score) << ',' << format_optional(r.sensitivity) << ','
        << format_optional(r.specificity) << ',' << format_optional(r.auc) << '\n';
  }
  finish(out, path);
}

void write_report_json(const std::vector<OrganReport>& reports, const fs::path& path) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [organ, r] : reports) {
    rows.push_back({{"organ", organ},
                    {"tp", r.counts.tp},
                    {"fn", r.counts.fn},
                    {"tn", r.counts.tn},
                    {"fp", r.counts.fp},
                    {"ba", opt(r.balanced_accuracy)},
                    {"f", opt(r.f_score)},
                    {"sens", opt(r.sensitivity)},
                    {"spec", opt(r.specificity)},
                    {"auc", opt(r.auc)}});
  }
  auto out = open_out(path);
  out << rows.dump(2) << '\n';
  finish(out, path);
}

ContourClassifier make_classifier(const OcsvmModel& model, const FeatureOptions& options) {
  return [&model, options](const std::vector<ContourSample>& samples) {
    std::vector<FeatureVector> feats(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
      feats[i] = contour_features(*samples[i].image, samples[i].mask, options);
    });
    const auto scores = decision_batch(model, feats);
    std::vector<Quality> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      out[i] = scores[i] >= 0.0 ? Quality::high : Quality::low;
    }
    return out;
  };
}

std::vector<DetectionLimitResult> dataset_detection_limits(
    const std::vector<ManifestEntry>& entries, const std::vector<MetricsRow>& labeled_rows,
    const CaseSplit& split, Subset subset, const std::map<std::string, OcsvmModel>& models,
    const DetectLimitOptions& options) {
  SliceCache slices(options.features.window);
  MaskCache masks;
  std::map<std::string, std::vector<ContourSample>> by_organ;
  for (const auto& r : labeled_rows) {
    if (r.mode != MetricsMode::two_d) throw ValidationError("detect-limit needs 2d metric rows");
    if (!r.label) throw ValidationError("detect-limit needs labeled metric rows");
    if (r.label->value != Quality::high || !split.contains(r.case_id, subset)) continue;
    if (!model_for(models, r.organ)) continue;
    const auto& e = find_entry(entries, r.case_id, r.organ);
    by_organ[r.organ].push_back({r.case_id + "/" + r.organ + "/" + std::to_string(r.slice),
                                 &slices.get(e.ct, r.slice), masks.get(e.gt).slice_u8(r.slice)});
  }
  if (by_organ.empty()) throw ValidationError("no high-quality contours with a matching model");
  std::vector<DetectionLimitResult> out;
  for (const auto& [organ, contours] : by_organ) {
    auto params = options.params;
    params.seed = derive_seed(options.params.seed, organ);
    out.push_back(detection_limit(make_classifier(*model_for(models, organ), options.features),
                                  contours,
                                  params, organ));
  }
  return out;
}

void write_detection_trace(const std::vector<DetectionLimitResult>& results,
                           const fs::path& path) {
  auto out = open_out(path);
  out << "organ,distance,rate,limit\n";
  for (const auto& r : results) {
    const std::string limit = r.limit ? std::to_string(*r.limit) : std::string();
    for (const auto& p : r.per_distance) {
      out << r.organ << ',' << p.distance << ',' << format_double(p.rate) << ',' << limit << '\n';
    }
  }
  finish(out, path);
}

std::vector<DetectionLimitResult> read_detection_trace(const fs::path& path) {
  const auto table = CsvTable::read(path.string());
  for (const char* col : {"organ", "distance", "rate", "limit"}) {
    if (!table.has_column(col)) throw FormatError(path.string() + ": missing column " + col);
  }
  std::vector<DetectionLimitResult> out;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto& organ = table.at(r, "organ");
    if (out.empty() || out.back().organ != organ) {
      DetectionLimitResult res;
      res.organ = organ;
      if (!table.at(r, "limit").empty()) {
        res.limit = static_cast<int>(parse_int(table.at(r, "limit"), "limit"));
      }
      out.push_back(std::move(res));
    }
    out.back().per_distance.push_back(
        {static_cast<int>(parse_int(table.at(r, "distance"), "distance")),
         parse_double(table.at(r, "rate"), "rate"), 0});
  }
  return out;
}

std::vector<CorrelationRow> correlate_limits(const std::vector<DetectionLimitResult>& limits,
                                             const std::vector<MetricsRow>& metrics) {
  struct Sums {
    double volume = 0, dsc = 0, hd95 = 0, msd = 0;
    std::size_t n = 0;
  };
  std::map<std::string, Sums> per_organ;
  for (const auto& r : metrics) {
    auto& s = per_organ[r.organ];
    s.volume += static_cast<double>(r.volume_vox);
    s.dsc += r.metrics.dsc;
    s.hd95 += r.metrics.hd95;
    s.msd += r.metrics.msd;
    ++s.n;
  }
  std::vector<double> lim, vol, dsc_m, hd_m, msd_m;
  for (const auto& l : limits) {
    if (!l.limit) continue;
    const auto it = per_organ.find(l.organ);
    if (it == per_organ.end() || it->second.n == 0) {
      throw ValidationError("no metrics for organ " + l.organ);
    }
    const auto& s = it->second;
    const double n = static_cast<double>(s.n);
    lim.push_back(*l.limit);
    vol.push_back(s.volume / n);
    dsc_m.push_back(s.dsc / n);
    hd_m.push_back(s.hd95 / n);
    msd_m.push_back(s.msd / n);
  }
  auto corr = [&](const char* name, const std::vector<double>& xs) {
    CorrelationRow row{name, std::nullopt, lim.size()};
    try {
      row.r = pearson(lim, xs);
    } catch (const ValidationError&) {
      // Fewer than two organs or a constant column: correlation undefined.
    }
    return row;
  };
  return {corr("volume", vol), corr("dsc", dsc_m), corr("hd95", hd_m), corr("msd", msd_m)};
}

void write_correlations(const std::vector<CorrelationRow>& rows, const fs::path& path) {
  auto out = open_out(path);
  out << "factor,r,organs\n";
  for (const auto& r : rows) {
    out << r.factor << ',' << format_optional(r.r) << ',' << r.organs << '\n';
  }
  finish(out, path);
}

} // namespace cqa::pipeline
