#pragma once

// Dataset-level stages of the QA workflow. Each stage reads and writes plain
// files so intermediate artifacts stay inspectable; the CLI is a thin layer
// over these functions.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cqa/evaluation.hpp"
#include "cqa/features.hpp"
#include "cqa/metrics.hpp"
#include "cqa/ocsvm.hpp"
#include "cqa/perturb.hpp"
#include "cqa/quality.hpp"
#include "cqa/volume.hpp"

namespace cqa::pipeline {

namespace fs = std::filesystem;

struct ManifestEntry {
  std::string case_id;
  std::string organ;
  fs::path gt;
  fs::path agc;
  fs::path ct;
};

/// Reads case_id,organ,gt_path,agc_path[,ct_path]; relative paths resolve
/// against the manifest directory. Without ct_path the CT is expected at
/// <case_id>_ct.qav next to the manifest.
std::vector<ManifestEntry> read_manifest(const fs::path& path);

/// Distinct case ids in manifest order.
std::vector<std::string> case_ids(const std::vector<ManifestEntry>& entries);

enum class Subset { all, train, test };
Subset parse_subset(const std::string& s);

/// The first `train_cases` distinct case ids form the training split.
class CaseSplit {
public:
  CaseSplit() = default;
  CaseSplit(const std::vector<ManifestEntry>& entries, int train_cases);
  CaseSplit(const std::vector<std::string>& ordered_ids, int train_cases);
  bool contains(const std::string& case_id, Subset subset) const;

private:
  std::set<std::string> train_;
  bool all_train_ = true;
};

enum class MetricsMode { two_d, three_d };
enum class Units { pixel, mm };
std::string to_string(MetricsMode m);
MetricsMode parse_metrics_mode(const std::string& s);
Units parse_units(const std::string& s);

struct MetricsRow {
  std::string case_id;
  std::string organ;
  MetricsMode mode = MetricsMode::two_d;
  int slice = -1;
  MetricTriple metrics;
  std::size_t volume_vox = 0;  // ground-truth voxels in the slice or organ
  std::optional<QualityLabel> label;
};

/// 2-D: one row per slice where both contours are nonempty. 3-D: one row per
/// organ. Slices with exactly one empty contour are skipped.
std::vector<MetricsRow> compute_metrics(const std::vector<ManifestEntry>& entries,
                                        MetricsMode mode, Units units);
void write_metrics(const std::vector<MetricsRow>& rows, const fs::path& path);
std::vector<MetricsRow> read_metrics(const fs::path& path);

/// Distinct case ids in row order.
std::vector<std::string> case_ids(const std::vector<MetricsRow>& rows);

ThresholdSet fit_dataset_thresholds(const std::vector<MetricsRow>& rows,
                                    const CaseSplit& split, DirectionMode mode);
void apply_labels(std::vector<MetricsRow>& rows, const ThresholdSet& thresholds);
/// Gives each slice row the label of its organ-level row.
void inherit_organ_labels(std::vector<MetricsRow>& slice_rows,
                          const std::vector<MetricsRow>& organ_rows);

struct PerturbOptions {
  std::vector<PerturbKind> kinds{std::begin(kAllKinds), std::end(kAllKinds)};
  double distance = 5.0;
  int disk_radius = 2;
  int max_iterations = 50;
  bool escalate_translation = false;
  std::uint64_t seed = 0;
};

struct PerturbRecord {
  std::string case_id;
  std::string organ;
  int slice = 0;
  PerturbKind kind = PerturbKind::translate;
  double param = 0.0;
  int iterations = 0;
  MetricTriple metrics;
  Quality label = Quality::low;
  Mask2D mask;           // not serialized in the manifest
  Spacing spacing;       // of the source slice
  std::string mask_path; // relative to the perturbation manifest
};

struct PerturbSummary {
  std::vector<PerturbRecord> records;
  std::size_t failures = 0;
};

/// Generates every requested error kind for each high-quality 2-D slice row.
/// Seeds derive from (case, organ, slice, kind).
PerturbSummary perturb_dataset(const std::vector<ManifestEntry>& entries,
                               const std::vector<MetricsRow>& labeled_rows,
                               const ThresholdSet& thresholds, const CaseSplit& split,
                               Subset subset, const PerturbOptions& options);
/// Writes masks and the manifest (case_id,organ,slice,kind,param,iterations,
/// dsc,hd95,msd,label,mask_path) into `out_dir`; returns the manifest path.
fs::path write_perturbations(std::vector<PerturbRecord>& records, const fs::path& out_dir);
std::vector<PerturbRecord> read_perturbations(const fs::path& manifest);

struct FeatureOptions {
  HuWindow window;
  int margin = kDefaultMargin;
};

/// Features of one contour on an already normalized slice.
FeatureVector contour_features(const Image2D& slice, const Mask2D& mask,
                               const FeatureOptions& options, Provenance provenance = {});

/// Perturbed samples get case_id "<case_id>+<kind>" and label "low".
std::vector<FeatureVector> extract_dataset_features(
    const std::vector<ManifestEntry>& entries, const std::vector<MetricsRow>& labeled_rows,
    const CaseSplit& split, Subset subset, const std::vector<PerturbRecord>& perturbed,
    const FeatureOptions& options);

struct TrainOptions {
  std::optional<double> nu;
  std::optional<double> gamma;
  std::vector<double> nu_grid;     // empty: defaults
  std::vector<double> gamma_grid;  // empty: defaults
  PseudoOutliers noise;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  bool pooled = false;  // one model over every organ, saved as kPooledModel
};

/// Name of the model that serves every organ lacking a model of its own.
inline const std::string kPooledModel = "pooled";

struct OrganModel {
  std::string organ;
  OcsvmModel model;
  std::optional<CalibrationResult> calibration;
};

/// One model per organ, trained on the rows labeled high only.
std::vector<OrganModel> train_per_organ(const std::vector<FeatureVector>& features,
                                        const TrainOptions& options);
void save_models(const std::vector<OrganModel>& models, const fs::path& dir);
std::map<std::string, OcsvmModel> load_models(const fs::path& dir);
/// The organ's own model, else the pooled one, else nullptr.
const OcsvmModel* model_for(const std::map<std::string, OcsvmModel>& models,
                            const std::string& organ);

struct Prediction {
  std::string case_id;
  std::string organ;
  int slice = -1;
  std::string label;  // ground truth, may be "unknown"
  double score = 0.0; // decision value, positive = inlier
  Quality prediction = Quality::high;
};

std::vector<Prediction> predict_dataset(const std::map<std::string, OcsvmModel>& models,
                                        const std::vector<FeatureVector>& features);
void write_predictions(const std::vector<Prediction>& preds, const fs::path& path);
std::vector<Prediction> read_predictions(const fs::path& path);

/// Organ-level decision from slice scores.
struct Aggregate {
  enum class Kind { mean, any, fraction } kind = Kind::mean;
  double fraction = 0.5;
  static Aggregate parse(const std::string& s);
};

struct OrganPrediction {
  std::string case_id;
  std::string organ;
  std::size_t slices = 0;
  double mean_score = 0.0;
  double low_fraction = 0.0;
  Quality prediction = Quality::high;
};

std::vector<OrganPrediction> aggregate_predictions(const std::vector<Prediction>& preds,
                                                   const Aggregate& how);
void write_organ_predictions(const std::vector<OrganPrediction>& preds, const fs::path& path);

struct OrganReport {
  std::string organ;
  EvalReport report;
};

/// Per-organ reports over predictions with a known label. With `by_kind`,
/// perturbed samples are additionally grouped as "<organ>+<kind>".
std::vector<OrganReport> evaluate_predictions(const std::vector<Prediction>& preds,
                                              bool by_kind = false);
void write_report_csv(const std::vector<OrganReport>& reports, const fs::path& path);
void write_report_json(const std::vector<OrganReport>& reports, const fs::path& path);

struct DetectLimitOptions {
  DetectionLimitParams params;
  FeatureOptions features;
};

/// A classifier that preprocesses each contour and scores it with `model`.
ContourClassifier make_classifier(const OcsvmModel& model, const FeatureOptions& options);

std::vector<DetectionLimitResult> dataset_detection_limits(
    const std::vector<ManifestEntry>& entries, const std::vector<MetricsRow>& labeled_rows,
    const CaseSplit& split, Subset subset, const std::map<std::string, OcsvmModel>& models,
    const DetectLimitOptions& options);
void write_detection_trace(const std::vector<DetectionLimitResult>& results,
                           const fs::path& path);
std::vector<DetectionLimitResult> read_detection_trace(const fs::path& path);

struct CorrelationRow {
  std::string factor;
  std::optional<double> r;
  std::size_t organs = 0;
};

/// Pearson correlation of per-organ detection limits with mean organ volume
/// (voxels) and mean DSC, HD95 and MSD. Organs without a limit are dropped.
std::vector<CorrelationRow> correlate_limits(const std::vector<DetectionLimitResult>& limits,
                                             const std::vector<MetricsRow>& metrics);
void write_correlations(const std::vector<CorrelationRow>& rows, const fs::path& path);

} // namespace cqa::pipeline
