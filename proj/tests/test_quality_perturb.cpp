#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cqa/perturb.hpp"
#include "cqa/quality.hpp"
#include "oracles/morphology_oracle.hpp"
#include "support.hpp"

using namespace cqa;

namespace {

QualityThresholds esophagus_like() {
  QualityThresholds t;
  t.organ = "esophagus";
  t.mean_dsc = 0.77;
  t.sigma_dsc = 0.03;
  t.mean_hd95 = 5.0;
  t.sigma_hd95 = 1.0;
  t.mean_msd = 2.0;
  t.sigma_msd = 0.5;
  return t;
}

// Thresholds where only DSC can fail.
QualityThresholds dsc_only(double mean, double sigma) {
  QualityThresholds t;
  t.organ = "x";
  t.mean_dsc = mean;
  t.sigma_dsc = sigma;
  t.mean_hd95 = 1e9;
  t.mean_msd = 1e9;
  return t;
}

} // namespace

TEST_CASE("fit_thresholds uses sample statistics") {
  const auto t = fit_thresholds({{0.8, 1, 1}, {0.9, 2, 1}, {1.0, 3, 1}}, "o");
  CHECK(t.mean_dsc == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(t.sigma_dsc == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(t.mean_hd95 == 2.0);
  CHECK(t.sigma_hd95 == 1.0);
  CHECK(t.sigma_msd == 0.0);
  CHECK(t.samples == 3);
  CHECK_THROWS_AS(fit_thresholds({{0.8, 1, 1}}, "o"), ValidationError);
}

TEST_CASE("label rule") {
  const auto t = esophagus_like();
  auto l = label({0.70, 5.0, 2.0}, t);
  CHECK(l.value == Quality::low);
  CHECK(l.failed_checks == std::vector<Check>{Check::dsc});
  CHECK(l.failed_string() == "dsc");

  // Exactly on every bound is still high.
  l = label({t.mean_dsc - t.sigma_dsc, t.mean_hd95 + t.sigma_hd95, t.mean_msd + t.sigma_msd}, t);
  CHECK(l.value == Quality::high);
  CHECK(l.failed_string().empty());

  l = label({0.1, 100, 100}, t);
  CHECK(l.value == Quality::low);
  CHECK(l.failed_checks == std::vector<Check>{Check::dsc, Check::hd95, Check::msd});
}

TEST_CASE("paper-literal direction is strict and mirrored") {
  auto t = esophagus_like();
  t.direction_mode = DirectionMode::paper_literal;
  CHECK(label({0.81, 3.9, 1.4}, t).value == Quality::high);
  CHECK(label({0.80, 3.9, 1.4}, t).value == Quality::low);
  CHECK(label({0.77, 5.0, 2.0}, t).value == Quality::low);
  CHECK(parse_direction_mode(to_string(DirectionMode::paper_literal)) ==
        DirectionMode::paper_literal);
  CHECK_THROWS_AS(parse_direction_mode("sideways"), ValidationError);
}

TEST_CASE("threshold files round-trip") {
  testing::TempDir dir("thr");
  ThresholdSet set{{"esophagus", esophagus_like()}};
  set["esophagus"].samples = 12;
  save_thresholds(set, (dir / "t.json").string());
  const auto back = load_thresholds((dir / "t.json").string());
  REQUIRE(back.count("esophagus"));
  const auto& b = back.at("esophagus");
  CHECK(b.mean_dsc == 0.77);
  CHECK(b.sigma_msd == 0.5);
  CHECK(b.samples == 12);
}

TEST_CASE("translation examples") {
  const auto sq = testing::rect(6, 6, 0, 0, 1, 1);
  CHECK(translate_mask(sq, 0, 1.23) == sq);
  CHECK(translate_mask(sq, 1, 0) == testing::rect(6, 6, 1, 0, 2, 1));
  CHECK(translate_mask(sq, 2, std::numbers::pi / 2) == testing::rect(6, 6, 0, 2, 1, 3));
  CHECK(shift_mask(sq, 10, 0) == Mask2D(6, 6));
}

TEST_CASE("dilation and erosion") {
  CHECK(dilate(Mask2D(5, 5), 2) == Mask2D(5, 5));
  Mask2D one(9, 9);
  one(4, 4) = 1;
  const auto d = dilate(one, 2);
  CHECK(count_nonzero(d) == 13);
  CHECK(d == oracle::dilate(one, 2));

  const auto sq = testing::rect(9, 9, 2, 2, 6, 6);
  const auto e = erode(sq, 2);
  CHECK(e == oracle::erode(sq, 2));
  CHECK(count_nonzero(e) == 1);
  CHECK(e(4, 4) == 1);

  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const auto m = testing::random_mask_2d(rng, 23, 19, 0.25);
    for (int r : {1, 2, 3}) {
      const auto dm = dilate(m, r);
      CHECK(dm == oracle::dilate(m, r));
      CHECK(erode(m, r) == oracle::erode(m, r));
      for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(dm.data()[i] >= m.data()[i]);
    }
  }
}

TEST_CASE("generate_error: enlargement of a radius-10 disk stops at iteration 2") {
  const auto c = testing::disk(64, 64, 32, 32, 10);
  PerturbationSpec spec;
  spec.kind = PerturbKind::enlarge;
  spec.disk_radius = 2;
  const auto out = generate_error(c, c, spec, dsc_only(0.77, 0.03));
  CHECK(out.iterations == 2);
  CHECK(out.metrics.dsc < 0.74);
  CHECK(out.metrics.dsc == doctest::Approx(2.0 * 100 / (100 + 196)).epsilon(0.03));
  CHECK(label(out.metrics, dsc_only(0.77, 0.03)).value == Quality::low);

  spec.max_iterations = 1;
  CHECK_THROWS_AS(generate_error(c, c, spec, dsc_only(0.77, 0.03)), ConvergenceError);
}

TEST_CASE("generate_error: every kind ends low and is reproducible") {
  const auto c = testing::disk(64, 64, 32, 32, 10);
  const auto t = dsc_only(0.95, 0.02);
  for (auto kind : kAllKinds) {
    PerturbationSpec spec;
    spec.kind = kind;
    spec.distance = 5;
    spec.seed = 99;
    const auto a = generate_error(c, c, spec, t);
    const auto b = generate_error(c, c, spec, t);
    CHECK(a.mask == b.mask);
    CHECK(label(a.metrics, t).value == Quality::low);
    CHECK(parse_perturb_kind(to_string(kind)) == kind);
  }
}

TEST_CASE("generate_error refuses low-quality input and bad specs") {
  const auto c = testing::disk(64, 64, 32, 32, 10);
  const auto off = testing::disk(64, 64, 12, 12, 6);
  PerturbationSpec spec;
  CHECK_THROWS_AS(generate_error(c, off, spec, dsc_only(0.9, 0.01)), ValidationError);
  spec.disk_radius = 0;
  spec.kind = PerturbKind::enlarge;
  CHECK_THROWS_AS(generate_error(c, c, spec, dsc_only(0.9, 0.01)), ValidationError);
}

TEST_CASE("a single translation that stays high is a convergence failure") {
  const auto c = testing::disk(64, 64, 32, 32, 20);
  PerturbationSpec spec;
  spec.kind = PerturbKind::translate;
  spec.distance = 1;
  CHECK_THROWS_AS(generate_error(c, c, spec, dsc_only(0.9, 0.01)), ConvergenceError);
  spec.escalate_translation = true;
  const auto out = generate_error(c, c, spec, dsc_only(0.9, 0.01));
  CHECK(out.param > 1);
  CHECK(out.iterations > 1);
}
