#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <sys/wait.h>

#include "cqa/phantom.hpp"
#include "cqa/pipeline.hpp"
#include "support.hpp"

using namespace cqa;
using namespace cqa::pipeline;

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.organs = {{"small", 24, 24, 6, 5, 150, 0.5}, {"large", 64, 60, 18, 16, 120, 1.0}};
  s.grid = {96, 96, 4};
  s.agc_error = {0.5, 1.5, 0.1};
  s.cases = 6;
  s.seed = 21;
  return s;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(CQA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("manifest, split and metrics rows") {
  testing::TempDir dir("pipe");
  const auto manifest = write_phantom_dataset(small_spec(), dir / "data");
  const auto entries = read_manifest(manifest);
  REQUIRE(entries.size() == 12);
  CHECK(entries[0].gt.is_absolute());
  CHECK(case_ids(entries).size() == 6);

  const CaseSplit split(entries, 4);
  CHECK(split.contains("case_000", Subset::train));
  CHECK_FALSE(split.contains("case_005", Subset::train));
  CHECK(split.contains("case_005", Subset::test));
  CHECK(split.contains("case_005", Subset::all));
  CHECK(CaseSplit{}.contains("anything", Subset::train));

  auto rows = compute_metrics(entries, MetricsMode::two_d, Units::pixel);
  CHECK(rows.size() <= 12 * 4);
  CHECK(rows.size() >= 40);
  for (const auto& r : rows) {
    CHECK(r.slice >= 0);
    CHECK(r.volume_vox > 0);
  }
  write_metrics(rows, dir / "m.csv");
  const auto back = read_metrics(dir / "m.csv");
  REQUIRE(back.size() == rows.size());
  CHECK(back[3].metrics.hd95 == rows[3].metrics.hd95);

  const auto thr = fit_dataset_thresholds(rows, split, DirectionMode::prevalence_consistent);
  CHECK(thr.size() == 2);
  apply_labels(rows, thr);
  for (const auto& r : rows) CHECK(r.label.has_value());
  write_metrics(rows, dir / "l.csv");
  CHECK(read_metrics(dir / "l.csv")[0].label.has_value());

  const auto organ_rows = compute_metrics(entries, MetricsMode::three_d, Units::mm);
  CHECK(organ_rows.size() == 12);
  auto inherited = rows;
  auto labeled_organs = organ_rows;
  apply_labels(labeled_organs,
               fit_dataset_thresholds(organ_rows, split, DirectionMode::prevalence_consistent));
  inherit_organ_labels(inherited, labeled_organs);
  for (const auto& r : inherited) {
    for (const auto& o : labeled_organs) {
      if (o.case_id == r.case_id && o.organ == r.organ) {
        CHECK(r.label->value == o.label->value);
      }
    }
  }

  // Mixed modes cannot share thresholds.
  auto mixed = rows;
  mixed.insert(mixed.end(), organ_rows.begin(), organ_rows.end());
  CHECK_THROWS_AS(fit_dataset_thresholds(mixed, split, DirectionMode::prevalence_consistent),
                  ValidationError);
}

TEST_CASE("manifest errors") {
  testing::TempDir dir("man");
  CHECK_THROWS_AS(read_manifest(dir / "none.csv"), IoError);
  {
    std::ofstream out(dir / "dup.csv");
    out << "case_id,organ,gt_path,agc_path\na,b,g,h\na,b,g,h\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "dup.csv"), FormatError);
  {
    std::ofstream out(dir / "cols.csv");
    out << "case_id,gt_path\na,g\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "cols.csv"), FormatError);
}

TEST_CASE("aggregation and per-kind evaluation") {
  CHECK(Aggregate::parse("mean").kind == Aggregate::Kind::mean);
  CHECK(Aggregate::parse("any").kind == Aggregate::Kind::any);
  const auto f = Aggregate::parse("fraction:0.25");
  CHECK(f.kind == Aggregate::Kind::fraction);
  CHECK(f.fraction == 0.25);
  CHECK_THROWS_AS(Aggregate::parse("fraction:2"), ValidationError);
  CHECK_THROWS_AS(Aggregate::parse("median"), ValidationError);

  std::vector<Prediction> preds{
      {"c0", "heart", 0, "high", 0.5, Quality::high},
      {"c0", "heart", 1, "high", -0.1, Quality::low},
      {"c0", "heart", 2, "high", 0.2, Quality::high},
      {"c0+shrink", "heart", 1, "low", -0.4, Quality::low},
      {"c0+translate", "heart", 1, "low", 0.1, Quality::high},
  };
  const auto organs = aggregate_predictions(preds, Aggregate::parse("mean"));
  REQUIRE(organs.size() == 3);
  const auto& orig = organs[0];
  CHECK(orig.case_id == "c0");
  CHECK(orig.slices == 3);
  CHECK(orig.mean_score == doctest::Approx(0.2));
  CHECK(orig.low_fraction == doctest::Approx(1.0 / 3.0));
  CHECK(orig.prediction == Quality::high);
  CHECK(aggregate_predictions(preds, Aggregate::parse("any"))[0].prediction == Quality::low);

  const auto reports = evaluate_predictions(preds, true);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].organ == "heart");
  CHECK(reports[0].report.counts == ConfusionCounts{1, 1, 2, 1});
  CHECK(reports[1].organ == "heart+shrink");
  CHECK(*reports[1].report.sensitivity == 1.0);
  CHECK(reports[2].organ == "heart+translate");
  CHECK(*reports[2].report.sensitivity == 0.0);
  // Larger -score means more likely low: AUC uses the negated decision value.
  CHECK(*reports[1].report.auc == 1.0);
}

TEST_CASE("pooled model serves organs without their own") {
  OcsvmModel a, b;
  a.nu = 0.1;
  b.nu = 0.2;
  std::map<std::string, OcsvmModel> own{{"heart", a}};
  CHECK(model_for(own, "heart")->nu == 0.1);
  CHECK(model_for(own, "lung") == nullptr);
  own[kPooledModel] = b;
  CHECK(model_for(own, "heart")->nu == 0.1);
  CHECK(model_for(own, "lung")->nu == 0.2);
}

TEST_CASE("cli: exit codes") {
  testing::TempDir dir("cli");
  const auto log = dir / "log.txt";
  CHECK(run_cli("--help", log) == 0);
  CHECK(run_cli("", log) == 1);
  CHECK(run_cli("metrics --bogus", log) == 1);
  CHECK(run_cli("metrics --manifest " + (dir / "none.csv").string() + " --out " +
                    (dir / "m.csv").string(),
                log) == 2);
  {
    std::ofstream out(dir / "f.csv");
    out << "classical-v1,24\ncase_id,organ,slice,label";
    for (int k = 0; k < 24; ++k) out << ",f_" << k;
    out << "\n";
    for (int r = 0; r < 3; ++r) {
      out << "c" << r << ",o,0,high";
      for (int k = 0; k < 24; ++k) out << "," << (r + k);
      out << "\n";
    }
  }
  CHECK(run_cli("train --features " + (dir / "f.csv").string() + " --nu 0 --gamma 1 --out " +
                    (dir / "models").string(),
                log) == 1);
  CHECK(testing::slurp(log).find("nu") != std::string::npos);
  CHECK(run_cli("--threads -1 phantom --cases 1 --out " + (dir / "p").string(), log) == 1);
  CHECK(run_cli("--config " + (dir / "none.json").string() + " phantom --cases 1 --out " +
                    (dir / "p").string(),
                log) == 2);
}

TEST_CASE("cli: small end-to-end run is reproducible") {
  testing::TempDir dir("e2e");
  {
    std::ofstream out(dir / "spec.json");
    out << to_json(small_spec()).dump();
  }
  const auto d = [&](const std::string& name) { return (dir / name).string(); };
  const auto log = dir / "log.txt";
  auto stage = [&](const std::string& args) {
    const int rc = run_cli("--seed 5 " + args, log);
    INFO(args);
    INFO(testing::slurp(log));
    REQUIRE(rc == 0);
  };
  stage("phantom --cases 6 --spec " + d("spec.json") + " --out " + d("data"));
  const auto manifest = d("data/manifest.csv");
  stage("metrics --manifest " + manifest + " --out " + d("m.csv"));
  stage("metrics --manifest " + manifest + " --out " + d("m2.csv"));
  CHECK(testing::slurp(d("m.csv")) == testing::slurp(d("m2.csv")));
  stage("label --metrics " + d("m.csv") + " --train-cases 4 --thresholds-out " + d("t.json") +
        " --out " + d("l.csv"));
  stage("perturb --manifest " + manifest + " --metrics " + d("l.csv") + " --thresholds " +
        d("t.json") + " --train-cases 4 --subset test --out " + d("pert"));
  stage("features --manifest " + manifest + " --metrics " + d("l.csv") +
        " --train-cases 4 --subset train --out " + d("ftrain.csv"));
  stage("features --manifest " + manifest + " --metrics " + d("l.csv") + " --perturbations " +
        d("pert/perturbations.csv") + " --train-cases 4 --subset test --out " + d("ftest.csv"));
  stage("train --features " + d("ftrain.csv") + " --nu-grid 0.1,0.2 --out " + d("models"));
  stage("predict --models " + d("models") + " --features " + d("ftest.csv") + " --out " +
        d("p.csv") + " --organ-out " + d("po.csv"));
  stage("evaluate --predictions " + d("p.csv") + " --out " + d("r.csv") + " --json " +
        d("r.json") + " --by-kind");
  const auto report = testing::slurp(d("r.csv"));
  CHECK(report.rfind("organ,tp,fn,tn,fp,ba,f,sens,spec,auc\n", 0) == 0);
  CHECK(report.find("large+translate") != std::string::npos);

  stage("train --pooled --features " + d("ftrain.csv") + " --nu 0.1 --gamma 0.05 --out " +
        d("pooled"));
  CHECK(fs::exists(dir / "pooled" / "pooled.model.json"));
  stage("detect-limit --manifest " + manifest + " --metrics " + d("l.csv") + " --models " +
        d("pooled") + " --train-cases 4 --subset test --d-max 3 --repeats 1 --out " +
        d("trace.csv"));
  const auto trace = read_detection_trace(dir / "trace.csv");
  CHECK(trace.size() == 2);
  for (const auto& t : trace) CHECK(t.per_distance.size() == 3);
}
