#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cqa/features.hpp"
#include "cqa/kernels.hpp"
#include "cqa/quality.hpp"

namespace cqa {

/// RBF kernel k(x, y) = exp(-gamma |x - y|^2).
struct KernelParams {
  std::string kind = "rbf";
  double gamma = 0.5;
};

struct TrainConfig {
  double nu = 0.1;
  KernelParams kernel;
  double tolerance = 1e-6;    // maximal KKT violation at convergence
  long max_iterations = 0;    // pair updates; 0 means 10 n^2

  void validate() const;
};

/// Trained one-class SVM.
///
/// Support vectors are stored in the standardized feature space; scoring
/// standardizes the query with `standardization` first. Only points with a
/// nonzero dual coefficient are kept.
struct OcsvmModel {
  std::string schema_id;
  double nu = 0.0;
  KernelParams kernel;
  double rho = 0.0;
  std::vector<double> alphas;
  RowMatrix support_vectors;
  StandardizationStats standardization;
  std::size_t train_size = 0;

  double upper_bound() const { return 1.0 / (nu * static_cast<double>(train_size)); }
};

/// Solution of min 1/2 a^T K a  s.t.  0 <= a_i <= 1/(nu n), sum a = 1.
struct DualSolution {
  std::vector<double> alpha;
  std::vector<double> gradient;  // K a
  double rho = 0.0;
  double objective = 0.0;
  double violation = 0.0;        // max_{a_i>0} G_i - min_{a_j<C} G_j
  long iterations = 0;
  std::vector<double> objective_trace;  // filled when requested
};

/// Sequential pairwise solver: repeatedly moves mass along the maximal
/// KKT-violating pair and solves the two-variable subproblem in closed form.
DualSolution solve_dual(const RowMatrix& gram, double nu, double tolerance,
                        long max_iterations, bool trace_objective = false);

struct TrainReport {
  long iterations = 0;
  double violation = 0.0;
  double objective = 0.0;
  std::vector<double> alpha;  // all n coefficients, training order
  std::vector<double> train_scores;
};

/// Fits standardization on `data`, then solves the dual on the RBF Gram matrix.
OcsvmModel train(const std::vector<FeatureVector>& data, const TrainConfig& cfg,
                 TrainReport* report = nullptr);

/// sum_i alpha_i k(sv_i, x) - rho; positive on the inlier side.
double decision(const OcsvmModel& model, const FeatureVector& x);
std::vector<double> decision_batch(const OcsvmModel& model,
                                   const std::vector<FeatureVector>& xs);

/// high iff decision >= 0.
Quality predict(const OcsvmModel& model, const FeatureVector& x);

struct CalibrationGrid {
  std::vector<double> nus;
  std::vector<double> gammas;

  /// nu in {0.01, 0.05, 0.1, 0.2}, gamma in {1/(2D), 1/D, 2/D, 4/D}.
  static CalibrationGrid defaults(std::size_t dim);
};

struct PseudoOutliers {
  std::size_t count = 200;
  double sigma = 3.0;  // per-dimension std in standardized space
};

struct CalibrationCell {
  double nu = 0.0;
  double gamma = 0.0;
  bool trained = false;
  double balanced_accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  std::string error;
};

struct CalibrationResult {
  double nu = 0.0;
  double gamma = 0.0;
  double balanced_accuracy = 0.0;
  std::vector<CalibrationCell> cells;
};

/// Grid search scored by balanced accuracy on held-out inliers versus
/// zero-mean Gaussian pseudo-outliers. Ties prefer smaller nu, then gamma.
CalibrationResult calibrate(const std::vector<FeatureVector>& train_features,
                            const CalibrationGrid& grid, const PseudoOutliers& noise,
                            std::uint64_t seed, const TrainConfig& base = {});

nlohmann::json to_json(const OcsvmModel& model);
OcsvmModel model_from_json(const nlohmann::json& j);
void save_model(const OcsvmModel& model, const std::string& path);
OcsvmModel load_model(const std::string& path);

} // namespace cqa
