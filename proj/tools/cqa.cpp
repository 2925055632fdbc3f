// Command-line driver: one subcommand per pipeline stage.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cqa/csv.hpp"
#include "cqa/error.hpp"
#include "cqa/kernels.hpp"
#include "cqa/phantom.hpp"
#include "cqa/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cqa;
using namespace cqa::pipeline;

namespace {

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& field : split_csv_line(s)) {
    if (!field.empty()) out.push_back(parse_double(field, what));
  }
  return out;
}

std::vector<PerturbKind> parse_kinds(const std::string& s) {
  std::vector<PerturbKind> out;
  for (const auto& field : split_csv_line(s)) out.push_back(parse_perturb_kind(field));
  if (out.empty()) throw ValidationError("no perturbation kinds given");
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string option_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Turns a config value into command-line tokens for `opt`.
void append_tokens(std::vector<std::string>& out, const CLI::Option* opt,
                   const std::string& name, const nlohmann::json& value) {
  if (value.is_boolean()) {
    if (opt->get_type_size() != 0) {
      out.push_back(name);
      out.push_back(value.get<bool>() ? "true" : "false");
    } else if (value.get<bool>()) {
      out.push_back(name);
    }
    return;
  }
  std::string text;
  if (value.is_string()) {
    text = value.get<std::string>();
  } else if (value.is_number()) {
    text = value.dump();
  } else if (value.is_array()) {
    for (const auto& v : value) {
      if (!text.empty()) text += ',';
      text += v.is_string() ? v.get<std::string>() : v.dump();
    }
  } else {
    throw ValidationError("config value for " + name + " must be a scalar or a list");
  }
  out.push_back(name);
  out.push_back(text);
}

// Config keys are spliced in front of the command-line flags so that flags
// given explicitly win (every option keeps its last value).
std::vector<std::string> expand_config(CLI::App& app, const std::vector<std::string>& argv) {
  std::string config_path;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i] == "--config" && i + 1 < argv.size()) config_path = argv[i + 1];
    if (argv[i].starts_with("--config=")) config_path = argv[i].substr(9);
  }
  if (config_path.empty()) return argv;
  const auto config = read_json(config_path);
  if (!config.is_object()) throw FormatError(config_path + ": config must be a JSON object");

  std::size_t sub_pos = argv.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    try {
      sub = app.get_subcommand(argv[i]);
      sub_pos = i;
      break;
    } catch (const CLI::OptionNotFound&) {
    }
  }
  std::vector<std::string> global, local;
  auto place = [&](const std::string& key, const nlohmann::json& value, bool scoped) {
    const auto name = option_name(key);
    if (sub) {
      if (const auto* opt = sub->get_option_no_throw(name)) {
        append_tokens(local, opt, name, value);
        return;
      }
    }
    if (!scoped) {
      if (const auto* opt = app.get_option_no_throw(name)) {
        append_tokens(global, opt, name, value);
        return;
      }
      for (const auto& s : app.get_subcommands([](CLI::App*) { return true; })) {
        if (s->get_option_no_throw(name)) return;  // belongs to another stage
      }
    }
    throw ValidationError("unknown config key '" + key + "'");
  };
  for (const auto& [key, value] : config.items()) {
    if (value.is_object()) {
      if (sub && key == sub->get_name()) {
        for (const auto& [k, v] : value.items()) place(k, v, true);
      }
      continue;
    }
    if (key == "config") continue;
    place(key, value, false);
  }
  std::vector<std::string> out;
  out.insert(out.end(), global.begin(), global.end());
  for (std::size_t i = 0; i < argv.size(); ++i) {
    out.push_back(argv[i]);
    if (i == sub_pos) out.insert(out.end(), local.begin(), local.end());
  }
  return out;
}

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string config;
};

struct SplitOpts {
  int train_cases = -1;  // -1: every case is a training case
  std::string subset = "all";

  void add(CLI::App* sub, const std::string& default_subset) {
    subset = default_subset;
    sub->add_option("--train-cases", train_cases,
                    "First N distinct cases (manifest order) form the training split");
    sub->add_option("--subset", subset, "Cases to use: all, train or test")
        ->capture_default_str();
  }
  template <class Ids>
  CaseSplit split(const Ids& ids) const {
    return train_cases < 0 ? CaseSplit() : CaseSplit(ids, train_cases);
  }
};

struct FeatureOpts {
  double window_lo = -1000.0;
  double window_hi = 1000.0;
  int margin = kDefaultMargin;

  void add(CLI::App* sub) {
    sub->add_option("--window-lo", window_lo, "HU window lower bound")->capture_default_str();
    sub->add_option("--window-hi", window_hi, "HU window upper bound")->capture_default_str();
    sub->add_option("--margin", margin, "Crop margin in pixels")->capture_default_str();
  }
  FeatureOptions get() const {
    if (!(window_lo < window_hi)) throw ValidationError("window lo must be below hi");
    if (margin < 0) throw ValidationError("margin must be >= 0");
    return {{window_lo, window_hi}, margin};
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Contour quality assurance toolkit"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::map<CLI::App*, std::function<void()>> actions;
  auto on = [&](CLI::App* sub, std::function<void()> f) { actions[sub] = std::move(f); };
  app.add_option("--seed", g.seed, "Base seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads, 0 = auto")->capture_default_str();
  app.add_option("--config", g.config, "JSON file of option values; flags override it");

  // phantom
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic dataset");
  int cases = 50;
  std::string out_dir, spec_path;
  double clean_fraction = 0, translation_std = 0, radius_scale_std = 0, noise_std = 0;
  phantom->add_option("--cases", cases, "Number of cases")->capture_default_str();
  phantom->add_option("--out", out_dir, "Output directory")->required();
  phantom->add_option("--spec", spec_path, "Phantom spec JSON (defaults otherwise)");
  auto* o_clean = phantom->add_option("--clean-fraction", clean_fraction);
  auto* o_tstd = phantom->add_option("--translation-std", translation_std);
  auto* o_rstd = phantom->add_option("--radius-scale-std", radius_scale_std);
  auto* o_noise = phantom->add_option("--noise-std", noise_std);
  auto* o_rel = phantom->add_flag("--relative-translation",
                                  "Translation std is a fraction of the organ's mean semi-axis");
  on(phantom, [&] {
    PhantomSpec spec = spec_path.empty() ? PhantomSpec::defaults()
                                         : phantom_spec_from_json(read_json(spec_path));
    if (phantom->count("--cases") || spec_path.empty()) spec.cases = cases;
    if (o_clean->count()) spec.agc_error.clean_fraction = clean_fraction;
    if (o_tstd->count()) spec.agc_error.translation_std = translation_std;
    if (o_rstd->count()) spec.agc_error.radius_scale_std = radius_scale_std;
    if (o_noise->count()) spec.noise_std = noise_std;
    if (o_rel->count()) spec.agc_error.relative_translation = true;
    spec.seed = g.seed;
    const auto manifest = write_phantom_dataset(spec, out_dir);
    std::cerr << "wrote " << spec.cases << " cases to " << manifest.string() << '\n';
  });

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Agreement metrics between GT and AGC");
  std::string manifest_path, mode = "2d", units, out_path;
  metrics->add_option("--manifest", manifest_path, "Dataset manifest CSV")->required();
  metrics->add_option("--mode", mode, "2d (per slice) or 3d (per organ)")->capture_default_str();
  metrics->add_option("--units", units, "px or mm (default px for 2d, mm for 3d)");
  metrics->add_option("--out", out_path, "Metrics CSV")->required();
  on(metrics, [&] {
    const auto m = parse_metrics_mode(mode);
    const auto u = units.empty() ? (m == MetricsMode::two_d ? Units::pixel : Units::mm)
                                 : parse_units(units);
    write_metrics(compute_metrics(read_manifest(manifest_path), m, u), out_path);
  });

  // label
  auto* label_cmd = app.add_subcommand("label", "Fit per-organ thresholds and label rows");
  std::string metrics_path, thresholds_in, thresholds_out, direction = "prevalence-consistent",
                            inherit_path;
  SplitOpts label_split;
  label_cmd->add_option("--metrics", metrics_path, "Metrics CSV")->required();
  label_cmd->add_option("--direction", direction, "prevalence-consistent or paper-literal")
      ->capture_default_str();
  label_cmd->add_option("--thresholds", thresholds_in, "Apply these thresholds instead of fitting");
  label_cmd->add_option("--thresholds-out", thresholds_out, "Where to save fitted thresholds");
  label_cmd->add_option("--inherit-organ", inherit_path,
                        "Labeled 3d metrics CSV; slices take their organ's label");
  label_cmd->add_option("--train-cases", label_split.train_cases,
                        "Fit on the first N distinct cases only");
  label_cmd->add_option("--out", out_path, "Labeled metrics CSV")->required();
  on(label_cmd, [&] {
    auto rows = read_metrics(metrics_path);
    if (!inherit_path.empty()) {
      inherit_organ_labels(rows, read_metrics(inherit_path));
      write_metrics(rows, out_path);
      return;
    }
    ThresholdSet t;
    if (!thresholds_in.empty()) {
      t = load_thresholds(thresholds_in);
    } else {
      t = fit_dataset_thresholds(rows, label_split.split(case_ids(rows)),
                                 parse_direction_mode(direction));
    }
    apply_labels(rows, t);
    if (!thresholds_out.empty()) save_thresholds(t, thresholds_out);
    write_metrics(rows, out_path);
  });

  // perturb
  auto* perturb = app.add_subcommand("perturb", "Generate low-quality contours from high ones");
  std::string kinds = "translate,enlarge,shrink";
  PerturbOptions popt;
  bool escalate = false;
  SplitOpts perturb_split;
  perturb->add_option("--manifest", manifest_path, "Dataset manifest CSV")->required();
  perturb->add_option("--metrics", metrics_path, "Labeled 2d metrics CSV")->required();
  perturb->add_option("--thresholds", thresholds_in, "Thresholds JSON")->required();
  perturb->add_option("--kinds", kinds, "Comma-separated error kinds")->capture_default_str();
  perturb->add_option("--distance", popt.distance, "Translation distance in pixels")
      ->capture_default_str();
  perturb->add_option("--disk-radius", popt.disk_radius, "Structuring disk radius")
      ->capture_default_str();
  perturb->add_option("--max-iterations", popt.max_iterations)->capture_default_str();
  perturb->add_flag("--escalate", escalate,
                    "Grow the translation by 1 px from --distance until the contour is low");
  perturb_split.add(perturb, "all");
  perturb->add_option("--out", out_dir, "Output directory")->required();
  on(perturb, [&] {
    popt.kinds = parse_kinds(kinds);
    popt.escalate_translation = escalate;
    popt.seed = g.seed;
    const auto entries = read_manifest(manifest_path);
    auto summary = perturb_dataset(entries, read_metrics(metrics_path), load_thresholds(thresholds_in),
                                   perturb_split.split(entries), parse_subset(perturb_split.subset),
                                   popt);
    write_perturbations(summary.records, out_dir);
    std::cerr << summary.records.size() << " perturbed contours, " << summary.failures
              << " generation failures\n";
  });

  // features
  auto* features = app.add_subcommand("features", "Extract classical features");
  std::string perturb_manifest;
  SplitOpts feature_split;
  FeatureOpts feature_opts;
  features->add_option("--manifest", manifest_path, "Dataset manifest CSV")->required();
  features->add_option("--metrics", metrics_path, "Labeled 2d metrics CSV")->required();
  features->add_option("--perturbations", perturb_manifest, "Perturbation manifest to include");
  feature_split.add(features, "all");
  feature_opts.add(features);
  features->add_option("--out", out_path, "Feature CSV")->required();
  on(features, [&] {
    const auto entries = read_manifest(manifest_path);
    std::vector<PerturbRecord> perturbed;
    if (!perturb_manifest.empty()) perturbed = read_perturbations(perturb_manifest);
    const auto feats = extract_dataset_features(entries, read_metrics(metrics_path),
                                                feature_split.split(entries),
                                                parse_subset(feature_split.subset), perturbed,
                                                feature_opts.get());
    write_feature_file(feats, kClassicalSchema, out_path);
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one OC-SVM per organ");
  std::string features_path, nu_grid, gamma_grid;
  double nu = 0, gamma = 0;
  TrainOptions topt;
  train_cmd->add_option("--features", features_path, "Feature CSV")->required();
  auto* o_nu = train_cmd->add_option("--nu", nu, "Fix nu (skips its calibration)");
  auto* o_gamma = train_cmd->add_option("--gamma", gamma, "Fix gamma (skips its calibration)");
  train_cmd->add_option("--nu-grid", nu_grid, "Comma-separated nu candidates");
  train_cmd->add_option("--gamma-grid", gamma_grid, "Comma-separated gamma candidates");
  train_cmd->add_option("--noise-count", topt.noise.count, "Pseudo-outliers for calibration")
      ->capture_default_str();
  train_cmd->add_option("--noise-sigma", topt.noise.sigma,
                        "Pseudo-outlier std in standardized units")
      ->capture_default_str();
  train_cmd->add_option("--tolerance", topt.tolerance, "Solver KKT tolerance")
      ->capture_default_str();
  train_cmd->add_flag("--pooled", topt.pooled,
                      "Train a single model over all organs (" + kPooledModel + ".model.json)");
  train_cmd->add_option("--out", out_dir, "Model directory")->required();
  on(train_cmd, [&] {
    if (o_nu->count()) {
      if (!(nu > 0.0 && nu <= 1.0)) throw ValidationError("nu must be in (0, 1]");
      topt.nu = nu;
    }
    if (o_gamma->count()) {
      if (!(gamma > 0.0)) throw ValidationError("gamma must be > 0");
      topt.gamma = gamma;
    }
    topt.nu_grid = parse_list(nu_grid, "nu grid");
    topt.gamma_grid = parse_list(gamma_grid, "gamma grid");
    topt.seed = g.seed;
    const auto models = train_per_organ(read_feature_file(features_path, true), topt);
    for (const auto& m : models) {
      if (!m.calibration || m.calibration->cells.size() < 2) continue;
      double min_gamma = m.calibration->gamma;
      for (const auto& c : m.calibration->cells) min_gamma = std::min(min_gamma, c.gamma);
      if (m.calibration->gamma == min_gamma && !o_gamma->count()) {
        std::cerr << "note: " << m.organ
                  << ": calibration chose the smallest gamma on the grid; a wider "
                     "--gamma-grid may fit better\n";
      }
    }
    save_models(models, out_dir);
  });

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Score feature rows");
  std::string models_dir, aggregate = "mean", organ_out;
  predict_cmd->add_option("--models", models_dir, "Model directory")->required();
  predict_cmd->add_option("--features", features_path, "Feature CSV")->required();
  predict_cmd->add_option("--out", out_path, "Slice prediction CSV")->required();
  predict_cmd->add_option("--aggregate", aggregate, "mean, any or fraction:<theta>")
      ->capture_default_str();
  predict_cmd->add_option("--organ-out", organ_out, "Organ-level prediction CSV");
  on(predict_cmd, [&] {
    const auto how = Aggregate::parse(aggregate);
    const auto preds = predict_dataset(load_models(models_dir), read_feature_file(features_path));
    write_predictions(preds, out_path);
    if (!organ_out.empty()) write_organ_predictions(aggregate_predictions(preds, how), organ_out);
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Per-organ classification report");
  std::string predictions_path, json_out;
  bool by_kind = false;
  evaluate->add_option("--predictions", predictions_path, "Slice prediction CSV")->required();
  evaluate->add_option("--out", out_path, "Report CSV")->required();
  evaluate->add_option("--json", json_out, "Report JSON");
  evaluate->add_flag("--by-kind", by_kind, "Add one row per organ and error kind");
  on(evaluate, [&] {
    const auto reports = evaluate_predictions(read_predictions(predictions_path), by_kind);
    write_report_csv(reports, out_path);
    if (!json_out.empty()) write_report_json(reports, json_out);
  });

  // detect-limit
  auto* detect = app.add_subcommand("detect-limit", "Smallest detectable translation per organ");
  DetectLimitOptions dopt;
  std::string rate_mode = "perturbed";
  SplitOpts detect_split;
  FeatureOpts detect_features;
  detect->add_option("--manifest", manifest_path, "Dataset manifest CSV")->required();
  detect->add_option("--metrics", metrics_path, "Labeled 2d metrics CSV")->required();
  detect->add_option("--models", models_dir, "Model directory")->required();
  detect->add_option("--d-max", dopt.params.d_max, "Largest distance in pixels")
      ->capture_default_str();
  detect->add_option("--repeats", dopt.params.repeats, "Directions per contour and distance")
      ->capture_default_str();
  detect->add_option("--rate-threshold", dopt.params.rate_threshold)->capture_default_str();
  detect->add_option("--rate-mode", rate_mode, "perturbed or mixed")->capture_default_str();
  detect_split.add(detect, "all");
  detect_features.add(detect);
  detect->add_option("--out", out_path, "Trace CSV")->required();
  on(detect, [&] {
    if (rate_mode == "perturbed") dopt.params.mode = DetectionRateMode::perturbed_only;
    else if (rate_mode == "mixed") dopt.params.mode = DetectionRateMode::mixed;
    else throw ValidationError("unknown rate mode '" + rate_mode + "' (perturbed, mixed)");
    if (!(dopt.params.rate_threshold > 0.0 && dopt.params.rate_threshold <= 1.0)) {
      throw ValidationError("rate threshold must be in (0, 1]");
    }
    dopt.params.seed = g.seed;
    dopt.features = detect_features.get();
    const auto entries = read_manifest(manifest_path);
    const auto models = load_models(models_dir);
    const auto results = dataset_detection_limits(entries, read_metrics(metrics_path),
                                                  detect_split.split(entries),
                                                  parse_subset(detect_split.subset), models, dopt);
    write_detection_trace(results, out_path);
  });

  // correlate
  auto* correlate = app.add_subcommand("correlate", "Correlate detection limits with organ factors");
  std::string trace_path;
  correlate->add_option("--trace", trace_path, "Detection-limit trace CSV")->required();
  correlate->add_option("--metrics", metrics_path, "Metrics CSV")->required();
  correlate->add_option("--out", out_path, "Correlation CSV")->required();
  on(correlate, [&] {
    write_correlations(correlate_limits(read_detection_trace(trace_path), read_metrics(metrics_path)),
                       out_path);
  });

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  if (g.threads < 0) throw ValidationError("--threads must be >= 0");
  set_threads(g.threads);
  actions.at(app.get_subcommands().front())();
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
