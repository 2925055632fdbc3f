#include "cqa/ocsvm.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cqa/rng.hpp"

namespace cqa {

void TrainConfig::validate() const {
  if (!(nu > 0.0 && nu <= 1.0)) {
    throw ValidationError("nu must be in (0, 1]");
  }
  if (kernel.kind != "rbf") {
    throw ValidationError("only the rbf kernel is supported");
  }
  if (!(kernel.gamma > 0.0)) {
    throw ValidationError("gamma must be > 0");
  }
  if (!(tolerance > 0.0)) {
    throw ValidationError("tolerance must be > 0");
  }
  if (max_iterations < 0) {
    throw ValidationError("max_iterations must be >= 0");
  }
}

namespace {

double dual_objective(const std::vector<double>& alpha,
                      const std::vector<double>& gradient) {
  double s = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) s += alpha[i] * gradient[i];
  return 0.5 * s;
}

} // namespace

DualSolution solve_dual(const RowMatrix& gram, double nu, double tolerance,
                        long max_iterations, bool trace_objective) {
  const int n = gram.rows;
  if (n < 1 || gram.cols != n) {
    throw ValidationError("solve_dual: Gram matrix must be square and nonempty");
  }
  const double nn = nu * n;
  if (nn < 1.0 - 1e-12) {
    throw ValidationError("nu * n must be >= 1 (nu=" + std::to_string(nu) +
                          ", n=" + std::to_string(n) + ")");
  }
  const double c = 1.0 / nn;

  DualSolution s;
  s.alpha.assign(n, 0.0);
  // C on the first floor(nu n) points, the remainder on the next one.
  const int full = std::min(static_cast<int>(std::floor(nn + 1e-12)), n);
  for (int i = 0; i < full; ++i) s.alpha[i] = c;
  if (full < n) s.alpha[full] = std::max(0.0, 1.0 - full * c);

  s.gradient.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = gram.row(i);
    double g = 0.0;
    for (int j = 0; j < n; ++j) g += row[j] * s.alpha[j];
    s.gradient[i] = g;
  }
  if (max_iterations == 0) {
    max_iterations = 10L * n * n;
  }

  auto& alpha = s.alpha;
  auto& grad = s.gradient;
  double objective = dual_objective(alpha, grad);
  if (trace_objective) s.objective_trace.push_back(objective);

  for (long it = 0;; ++it) {
    // i: may give mass (alpha_i > 0) and has the largest gradient.
    // j: may take mass (alpha_j < C) and has the smallest gradient.
    int i = -1, j = -1;
    double gi = -kernels::kInf, gj = kernels::kInf;
    for (int k = 0; k < n; ++k) {
      if (alpha[k] > 0.0 && grad[k] > gi) {
        gi = grad[k];
        i = k;
      }
      if (alpha[k] < c && grad[k] < gj) {
        gj = grad[k];
        j = k;
      }
    }
    s.violation = (i < 0 || j < 0) ? 0.0 : gi - gj;
    if (s.violation <= tolerance) {
      s.iterations = it;
      break;
    }
    if (it >= max_iterations) {
      throw ConvergenceError("one-class SVM did not converge in " +
                             std::to_string(max_iterations) +
                             " pair updates; KKT violation " +
                             std::to_string(s.violation));
    }
    double eta = gram(i, i) + gram(j, j) - 2.0 * gram(i, j);
    if (eta <= 1e-12) eta = 1e-12;
    double t = s.violation / eta;
    bool i_hits_zero = false, j_hits_cap = false;
    if (t >= alpha[i]) {
      t = alpha[i];
      i_hits_zero = true;
    }
    if (t >= c - alpha[j]) {
      t = c - alpha[j];
      j_hits_cap = true;
      i_hits_zero = i_hits_zero && t == alpha[i];
    }
    alpha[i] = i_hits_zero ? 0.0 : alpha[i] - t;
    alpha[j] = j_hits_cap ? c : alpha[j] + t;

    const double* ri = gram.row(i);
    const double* rj = gram.row(j);
    for (int k = 0; k < n; ++k) {
      grad[k] += t * (rj[k] - ri[k]);
    }

    // Exact change of the objective along the pair direction.
    const double delta = -t * s.violation + 0.5 * t * t * eta;
    assert(delta <= 1e-15);
    objective += delta;
    if (trace_objective) s.objective_trace.push_back(dual_objective(alpha, grad));
  }
  s.objective = dual_objective(alpha, grad);

  // rho: mean gradient over free SVs; otherwise the midpoint of the bounds
  // implied by the points at C (gradient <= rho) and at 0 (gradient >= rho).
  double free_sum = 0.0;
  int free_count = 0;
  double ub = kernels::kInf, lb = -kernels::kInf;
  for (int k = 0; k < n; ++k) {
    if (alpha[k] > 0.0 && alpha[k] < c) {
      free_sum += grad[k];
      ++free_count;
    } else if (alpha[k] == 0.0) {
      ub = std::min(ub, grad[k]);
    } else {
      lb = std::max(lb, grad[k]);
    }
  }
  if (free_count > 0) {
    s.rho = free_sum / free_count;
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    s.rho = 0.5 * (ub + lb);
  } else {
    s.rho = std::isfinite(lb) ? lb : ub;
  }
  return s;
}

namespace {

RowMatrix standardized_matrix(const std::vector<FeatureVector>& vs,
                              const StandardizationStats& st) {
  RowMatrix m(static_cast<int>(vs.size()), static_cast<int>(st.mean.size()));
  for (int i = 0; i < m.rows; ++i) {
    const auto& v = vs[i];
    if (v.schema_id != st.schema_id || v.dim() != st.mean.size()) {
      throw ValidationError("feature schema '" + v.schema_id +
                            "' does not match the model schema '" + st.schema_id + "'");
    }
    double* r = m.row(i);
    for (int k = 0; k < m.cols; ++k) {
      r[k] = (v.values[k] - st.mean[k]) / st.std[k];
    }
  }
  return m;
}

} // namespace

OcsvmModel train(const std::vector<FeatureVector>& data, const TrainConfig& cfg,
                 TrainReport* report) {
  cfg.validate();
  if (data.size() < 2) {
    throw ValidationError("training needs at least 2 vectors");
  }
  const auto stats = fit_standardization(data);
  const auto x = standardized_matrix(data, stats);
  const auto gram = kernels::omp::rbf_gram(x, cfg.kernel.gamma);
  const auto sol = solve_dual(gram, cfg.nu, cfg.tolerance, cfg.max_iterations);

  OcsvmModel model;
  model.schema_id = stats.schema_id;
  model.nu = cfg.nu;
  model.kernel = cfg.kernel;
  model.rho = sol.rho;
  model.standardization = stats;
  model.train_size = data.size();
  int sv_count = 0;
  for (double a : sol.alpha) sv_count += a > 0.0;
  model.support_vectors = RowMatrix(sv_count, x.cols);
  int r = 0;
  for (int i = 0; i < x.rows; ++i) {
    if (sol.alpha[i] > 0.0) {
      model.alphas.push_back(sol.alpha[i]);
      std::copy(x.row(i), x.row(i) + x.cols, model.support_vectors.row(r++));
    }
  }
  if (report) {
    report->iterations = sol.iterations;
    report->violation = sol.violation;
    report->objective = sol.objective;
    report->alpha = sol.alpha;
    report->train_scores.resize(sol.gradient.size());
    for (std::size_t i = 0; i < sol.gradient.size(); ++i) {
      report->train_scores[i] = sol.gradient[i] - sol.rho;
    }
  }
  return model;
}

std::vector<double> decision_batch(const OcsvmModel& model,
                                   const std::vector<FeatureVector>& xs) {
  const auto q = standardized_matrix(xs, model.standardization);
  auto out = kernels::omp::rbf_expansion(model.support_vectors, model.alphas,
                                         model.kernel.gamma, q);
  for (auto& v : out) v -= model.rho;
  return out;
}

double decision(const OcsvmModel& model, const FeatureVector& x) {
  return decision_batch(model, {x}).front();
}

Quality predict(const OcsvmModel& model, const FeatureVector& x) {
  return decision(model, x) >= 0.0 ? Quality::high : Quality::low;
}

CalibrationGrid CalibrationGrid::defaults(std::size_t dim) {
  const double d = static_cast<double>(dim);
  return {{0.01, 0.05, 0.1, 0.2}, {0.5 / d, 1.0 / d, 2.0 / d, 4.0 / d}};
}

CalibrationResult calibrate(const std::vector<FeatureVector>& train_features,
                            const CalibrationGrid& grid, const PseudoOutliers& noise,
                            std::uint64_t seed, const TrainConfig& base) {
  if (grid.nus.empty() || grid.gammas.empty()) {
    throw ValidationError("calibration grid is empty");
  }
  if (noise.count < 1 || !(noise.sigma > 0.0)) {
    throw ValidationError("pseudo-outlier count must be >= 1 and sigma > 0");
  }
  const std::size_t n = train_features.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "calibration-split"));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_fit = static_cast<std::size_t>(std::floor(0.8 * n));
  if (n_fit < 2 || n - n_fit < 2) {
    throw ValidationError("calibration split leaves fewer than 2 points on a side");
  }
  std::vector<FeatureVector> fit, held;
  for (std::size_t k = 0; k < n; ++k) {
    (k < n_fit ? fit : held).push_back(train_features[order[k]]);
  }

  // Every cell trains on the same subset, so they share one standardization
  // and the same pseudo-outliers.
  const auto stats = fit_standardization(fit);
  Rng noise_rng(derive_seed(seed, "calibration-noise"));
  std::normal_distribution<double> gauss(0.0, noise.sigma);
  std::vector<FeatureVector> outliers(noise.count);
  for (auto& v : outliers) {
    v.schema_id = stats.schema_id;
    v.values.resize(stats.mean.size());
    for (std::size_t k = 0; k < v.values.size(); ++k) {
      v.values[k] = stats.mean[k] + gauss(noise_rng) * stats.std[k];
    }
  }

  auto nus = grid.nus;
  auto gammas = grid.gammas;
  std::sort(nus.begin(), nus.end());
  std::sort(gammas.begin(), gammas.end());

  CalibrationResult result;
  bool any = false;
  for (double nu : nus) {
    for (double gamma : gammas) {
      CalibrationCell cell;
      cell.nu = nu;
      cell.gamma = gamma;
      TrainConfig cfg = base;
      cfg.nu = nu;
      cfg.kernel.gamma = gamma;
      try {
        const auto model = train(fit, cfg);
        const auto in_scores = decision_batch(model, held);
        const auto out_scores = decision_batch(model, outliers);
        const double tn = static_cast<double>(
            std::count_if(in_scores.begin(), in_scores.end(), [](double s) { return s >= 0; }));
        const double tp = static_cast<double>(
            std::count_if(out_scores.begin(), out_scores.end(), [](double s) { return s < 0; }));
        cell.specificity = tn / static_cast<double>(in_scores.size());
        cell.sensitivity = tp / static_cast<double>(out_scores.size());
        cell.balanced_accuracy = 0.5 * (cell.sensitivity + cell.specificity);
        cell.trained = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (cell.trained && (!any || cell.balanced_accuracy > result.balanced_accuracy)) {
        any = true;
        result.nu = nu;
        result.gamma = gamma;
        result.balanced_accuracy = cell.balanced_accuracy;
      }
      result.cells.push_back(std::move(cell));
    }
  }
  if (!any) {
    throw ValidationError("no calibration cell could be trained: " +
                          result.cells.front().error);
  }
  return result;
}

nlohmann::json to_json(const OcsvmModel& model) {
  nlohmann::json sv = nlohmann::json::array();
  for (int i = 0; i < model.support_vectors.rows; ++i) {
    const double* r = model.support_vectors.row(i);
    sv.push_back(std::vector<double>(r, r + model.support_vectors.cols));
  }
  return {{"format", "ocsvm-v1"},
          {"schema_id", model.schema_id},
          {"nu", model.nu},
          {"kernel", {{"kind", model.kernel.kind}, {"gamma", model.kernel.gamma}}},
          {"rho", model.rho},
          {"alphas", model.alphas},
          {"support_vectors", sv},
          {"standardization",
           {{"mean", model.standardization.mean}, {"std", model.standardization.std}}},
          {"train_size", model.train_size}};
}

OcsvmModel model_from_json(const nlohmann::json& j) {
  OcsvmModel m;
  try {
    if (j.at("format") != "ocsvm-v1") {
      throw FormatError("unsupported model format " + j.at("format").dump());
    }
    m.schema_id = j.at("schema_id").get<std::string>();
    m.nu = j.at("nu").get<double>();
    m.kernel.kind = j.at("kernel").at("kind").get<std::string>();
    m.kernel.gamma = j.at("kernel").at("gamma").get<double>();
    m.rho = j.at("rho").get<double>();
    m.alphas = j.at("alphas").get<std::vector<double>>();
    const auto sv = j.at("support_vectors").get<std::vector<std::vector<double>>>();
    const auto& st = j.at("standardization");
    m.standardization.mean = st.at("mean").get<std::vector<double>>();
    m.standardization.std = st.at("std").get<std::vector<double>>();
    m.standardization.schema_id = m.schema_id;
    m.train_size = j.at("train_size").get<std::size_t>();
    const int dim = static_cast<int>(m.standardization.mean.size());
    m.support_vectors = RowMatrix(static_cast<int>(sv.size()), dim);
    for (std::size_t i = 0; i < sv.size(); ++i) {
      if (static_cast<int>(sv[i].size()) != dim) {
        throw FormatError("support vector dimension does not match standardization");
      }
      std::copy(sv[i].begin(), sv[i].end(), m.support_vectors.row(static_cast<int>(i)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed model: " + std::string(e.what()));
  }
  if (!(m.nu > 0.0 && m.nu <= 1.0)) throw ValidationError("model nu must be in (0, 1]");
  if (m.kernel.kind != "rbf" || !(m.kernel.gamma > 0.0)) {
    throw ValidationError("model kernel must be rbf with gamma > 0");
  }
  if (m.alphas.size() != static_cast<std::size_t>(m.support_vectors.rows) ||
      m.alphas.empty()) {
    throw ValidationError("model needs one alpha per support vector");
  }
  if (m.standardization.std.size() != m.standardization.mean.size()) {
    throw ValidationError("standardization mean/std lengths differ");
  }
  for (double s : m.standardization.std) {
    if (!(s > 0.0)) throw ValidationError("standardization std must be > 0");
  }
  if (auto d = schema_dimension(m.schema_id);
      d && *d != m.standardization.mean.size()) {
    throw ValidationError("model dimension does not match schema " + m.schema_id);
  }
  if (m.train_size < 1) throw ValidationError("model train_size must be >= 1");
  return m;
}

void save_model(const OcsvmModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out << to_json(model).dump() << '\n';
}

OcsvmModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed model file: " + std::string(e.what()));
  }
  return model_from_json(j);
}

} // namespace cqa
