#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "dtr/qlearn.hpp"

using namespace dtr;

namespace {

Trajectory make_row(const std::string& id, std::vector<std::pair<std::string, double>> s1,
                    int a1, double y) {
  Trajectory t;
  t.id = id;
  StageObservation obs;
  obs.covariates = std::move(s1);
  obs.action = a1;
  t.stages.push_back(std::move(obs));
  t.outcome = y;
  return t;
}

// Exhaustive K=1 grid over s in {0,1}, a in {0,1} with Y = 1 + s + a(0.5 - s).
// The four cells are the oracle: Y(0,0)=1, Y(0,1)=1.5, Y(1,0)=2, Y(1,1)=1.5.
TrajectoryDataset four_cell_dataset() {
  std::vector<Trajectory> rows;
  int id = 1;
  for (int s = 0; s <= 1; ++s) {
    for (int a = 0; a <= 1; ++a) {
      const double y = 1.0 + s + a * (0.5 - s);
      rows.push_back(make_row(std::to_string(id++), {{"x", double(s)}}, a, y));
    }
  }
  return TrajectoryDataset::from_rows(rows);
}

ModelSpec k1_model() { return model_from_strings({{"1 + s1.x", "1 + s1.x", "1"}}); }

TrajectoryDataset noisy_k1(int n, std::uint32_t seed, double contrast_scale = 1.0) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<Trajectory> rows;
  for (int i = 0; i < n; ++i) {
    const double x = nd(gen);
    const int a = std::bernoulli_distribution(0.5)(gen) ? 1 : 0;
    const double y = 1.0 + 0.5 * x + contrast_scale * a * (0.4 - 0.9 * x) + nd(gen);
    rows.push_back(make_row(std::to_string(i + 1), {{"x", x}}, a, y));
  }
  rows[0].stages[0].action = 0;
  rows[1].stages[0].action = 1;
  return TrajectoryDataset::from_rows(rows);
}

}  // namespace

TEST_CASE("noiseless saturated fit recovers the generating coefficients exactly") {
  auto d = four_cell_dataset();
  auto [fit, pseudo] = fit_q_stage(d, 1, d.outcomes(), k1_model().stage(1));
  CHECK(fit.baseline_coef(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.baseline_coef(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.contrast_coefs[0](0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fit.contrast_coefs[0](1) == doctest::Approx(-1.0).epsilon(1e-12));
  // V-hat is the cellwise max: s=0 -> 1.5, s=1 -> 2.0
  CHECK(pseudo(0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(pseudo(2) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("rule from the saturated fit: recommend 1 iff s < 0.5") {
  auto d = four_cell_dataset();
  auto regime = fit_q_regime(d, k1_model());
  History h0;
  h0.covariates.push_back(Eigen::VectorXd::Constant(1, 0.0));
  History h1;
  h1.covariates.push_back(Eigen::VectorXd::Constant(1, 1.0));
  CHECK(recommend_next(regime, d.schema(), h0) == 1);
  CHECK(recommend_next(regime, d.schema(), h1) == 0);
}

TEST_CASE("indifference: exactly-null contrast recommends the smallest code everywhere") {
  // Y depends on s only; the fitted contrast is ~1e-16 and must count as zero.
  std::vector<Trajectory> rows;
  int id = 1;
  for (int s = -2; s <= 2; ++s) {
    for (int a = 0; a <= 1; ++a) {
      rows.push_back(make_row(std::to_string(id++), {{"x", double(s)}}, a, 2.0 + 0.7 * s));
    }
  }
  auto d = TrajectoryDataset::from_rows(rows);
  auto regime = fit_q_regime(d, k1_model());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    History h = history_at(d, i, 1);
    CHECK(recommend_next(regime, d.schema(), h) == 0);
    // V-hat equals the fitted baseline value up to fp noise
    const auto values = regime.q_values(d.schema(), h, 1);
    CHECK(values.maxCoeff() ==
          doctest::Approx(2.0 + 0.7 * h.covariates[0](0)).epsilon(1e-9));
  }
}

TEST_CASE("fit_q_regime at K=1 reduces to fit_q_stage on Y") {
  auto d = noisy_k1(500, 99);
  auto regime = fit_q_regime(d, k1_model());
  auto [stage_fit, pseudo] = fit_q_stage(d, 1, d.outcomes(), k1_model().stage(1));
  CHECK((regime.stage_fit(1).eta() - stage_fit.eta()).norm() == 0.0);
}

TEST_CASE("K=2 with null second stage matches a direct K=1 fit (zero noise)") {
  // With no outcome noise and a correctly specified stage-2 model, the
  // propagated pseudo-outcome equals Y, so both paths estimate the same
  // stage-1 regression.
  std::mt19937 gen(7);
  std::normal_distribution<double> nd;
  const int n = 10000;
  std::vector<Trajectory> k2_rows, k1_rows;
  for (int i = 0; i < n; ++i) {
    const double x1 = nd(gen);
    const int a1 = std::bernoulli_distribution(0.5)(gen) ? 1 : 0;
    const double x2 = 0.5 * x1 + 0.5 * nd(gen);
    const int a2 = std::bernoulli_distribution(0.5)(gen) ? 1 : 0;
    const double y = 1.0 + 0.8 * x1 + 0.5 * x2 + a1 * (0.3 - 0.6 * x1);
    Trajectory t;
    t.id = std::to_string(i + 1);
    StageObservation s1;
    s1.covariates = {{"x", x1}};
    s1.action = a1;
    StageObservation s2;
    s2.covariates = {{"x", x2}, {"aprev", double(a1)}};
    s2.action = a2;
    t.stages = {s1, s2};
    t.outcome = y;
    k2_rows.push_back(t);
    Trajectory u = t;
    u.stages.pop_back();
    k1_rows.push_back(u);
  }
  auto d2 = TrajectoryDataset::from_rows(k2_rows);
  auto d1 = TrajectoryDataset::from_rows(k1_rows);
  auto m2 = model_from_strings({{"1 + s1.x", "1 + s1.x", "1"},
                                {"1 + s1.x + s2.x + s2.aprev + s1.x*s2.aprev", "1 + s2.x", "1"}});
  auto regime2 = fit_q_regime(d2, m2);
  auto regime1 = fit_q_regime(d1, k1_model());
  CHECK((regime2.stage_fit(1).eta() - regime1.stage_fit(1).eta()).lpNorm<Eigen::Infinity>() <
        1e-6);
}

TEST_CASE("argmax invariance: cY + d leaves every recommendation identical") {
  auto d = noisy_k1(2000, 21);
  auto models = k1_model();
  auto base = fit_q_regime(d, models);

  std::vector<Trajectory> scaled_rows;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    Trajectory t = d.row(i);
    t.outcome = 2.0 * t.outcome + 3.0;
    scaled_rows.push_back(std::move(t));
  }
  auto scaled = fit_q_regime(TrajectoryDataset::from_rows(scaled_rows), models);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    History h = history_at(d, i, 1);
    CHECK(base.decide(d.schema(), h, 1, 0.0) == scaled.decide(d.schema(), h, 1, 0.0));
  }
}

TEST_CASE("max dominance of the propagated pseudo-outcome") {
  auto d = noisy_k1(500, 33);
  auto [fit, pseudo] = fit_q_stage(d, 1, d.outcomes(), k1_model().stage(1));
  QRegime regime(k1_model(), d.spaces(), d.schema(), d.schema_fingerprint(), {fit});
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const auto values = regime.q_values(d.schema(), history_at(d, i, 1), 1);
    for (Eigen::Index l = 0; l < values.size(); ++l) {
      CHECK(pseudo(i) >= values(l) - 1e-12);
    }
  }
}

TEST_CASE("row-order invariance of the coefficients") {
  auto d = noisy_k1(1000, 55);
  std::vector<Eigen::Index> perm(1000);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(5));
  auto shuffled = d.select(perm);
  auto a = fit_q_regime(d, k1_model());
  auto b = fit_q_regime(shuffled, k1_model());
  CHECK((a.stage_fit(1).eta() - b.stage_fit(1).eta()).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("binary recommend follows the sign of the fitted contrast") {
  // Contrast block c0 + c1*s positive exactly when s < c0/(-c1).
  auto d = noisy_k1(4000, 77);
  auto regime = fit_q_regime(d, k1_model());
  const auto& psi = regime.stage_fit(1).contrast_coefs[0];
  for (double x : {-2.0, -0.5, 0.0, 0.4, 0.9, 2.5}) {
    History h;
    h.covariates.push_back(Eigen::VectorXd::Constant(1, x));
    const double contrast = psi(0) + psi(1) * x;
    CHECK(recommend_next(regime, d.schema(), h) == (contrast > 0 ? 1 : 0));
  }
}

TEST_CASE("posited Q with bare-covariate baseline evaluates as s*e11 + a*e12 + a*s*e13") {
  ModelSpec models = model_from_strings({{"s1.x", "1 + s1.x", "1"}});
  Schema schema;
  schema.stage_covariates = {{"x"}};
  QStageFit fit;
  fit.stage = 1;
  fit.baseline_coef = Eigen::VectorXd::Constant(1, 2.0);               // e11
  fit.contrast_coefs = {(Eigen::VectorXd(2) << 0.5, -1.0).finished()};  // e12, e13
  QRegime regime(models, {TreatmentSpace::binary()}, schema, 0, {fit});
  for (double s : {-1.5, 0.0, 0.25, 2.0}) {
    History h;
    h.covariates.push_back(Eigen::VectorXd::Constant(1, s));
    const auto values = regime.q_values(schema, h, 1);
    CHECK(values(0) == doctest::Approx(2.0 * s).epsilon(1e-14));
    CHECK(values(1) == doctest::Approx(2.0 * s + 0.5 - s).epsilon(1e-14));
  }
}

TEST_CASE("three-level ties resolve to the first maximal level") {
  ModelSpec models = model_from_strings({{"1", "1", "1"}});
  std::vector<TreatmentSpace> spaces{TreatmentSpace({0, 1, 2})};
  Schema schema;
  schema.stage_covariates = {{}};
  QStageFit fit;
  fit.stage = 1;
  fit.baseline_coef = Eigen::VectorXd::Constant(1, 0.1);
  fit.contrast_coefs = {Eigen::VectorXd::Constant(1, 0.8),
                        Eigen::VectorXd::Constant(1, 0.8)};
  QRegime regime(models, spaces, schema, 0, {fit});
  History h;
  h.covariates.push_back(Eigen::VectorXd(0));
  const auto values = regime.q_values(schema, h, 1);
  CHECK(values(0) == doctest::Approx(0.1));
  CHECK(values(1) == values(2));
  CHECK(regime.decide(schema, h, 1, 0.0) == 1);
}

TEST_CASE("multi-level dummy blocks are recovered on a saturated grid") {
  std::vector<Trajectory> rows;
  int id = 1;
  for (int s = 0; s <= 2; ++s) {
    for (int a = 0; a <= 2; ++a) {
      const double y = 0.5 * s + (a == 1 ? 1.0 + s : 0.0) + (a == 2 ? 2.0 - s : 0.0);
      rows.push_back(make_row(std::to_string(id++), {{"x", double(s)}}, a, y));
    }
  }
  auto d = TrajectoryDataset::from_rows(rows);
  auto regime = fit_q_regime(d, k1_model());
  const auto& fit = regime.stage_fit(1);
  REQUIRE(fit.contrast_coefs.size() == 2);
  CHECK(fit.contrast_coefs[0](0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.contrast_coefs[0](1) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.contrast_coefs[1](0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit.contrast_coefs[1](1) == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(fit.eta().size() == 2 + 2 * 2);
  // grid search over levels: at s=0 level 2 wins (2.0 > 1.0 > 0); at s=2
  // level 1 wins (3.0 > 1.0 > 0)
  History h0;
  h0.covariates.push_back(Eigen::VectorXd::Constant(1, 0.0));
  History h2;
  h2.covariates.push_back(Eigen::VectorXd::Constant(1, 2.0));
  CHECK(regime.decide(d.schema(), h0, 1, 0.0) == 2);
  CHECK(regime.decide(d.schema(), h2, 1, 0.0) == 1);
}

TEST_CASE("incomplete history is an error") {
  auto d = noisy_k1(100, 91);
  auto regime = fit_q_regime(d, k1_model());
  History empty;
  CHECK_THROWS_WITH_AS(recommend_next(regime, d.schema(), empty),
                       doctest::Contains("incomplete history"), Error);
}

TEST_CASE("regime file round trip preserves decisions and coefficients") {
  auto d = noisy_k1(500, 101);
  auto regime = fit_q_regime(d, k1_model());
  const std::string path = "/tmp/dtr_test_qregime.json";
  save_regime_file(regime, path);
  auto loaded = load_regime_file(path);
  CHECK(loaded->method() == "qlearn");
  CHECK(loaded->schema_fingerprint() == regime.schema_fingerprint());
  auto a = regime.named_coefficients();
  auto b = loaded->named_coefficients();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second == b[i].second);
  }
  for (double x : {-1.0, 0.0, 1.0}) {
    History h;
    h.covariates.push_back(Eigen::VectorXd::Constant(1, x));
    CHECK(recommend_next(*loaded, d.schema(), h) == recommend_next(regime, d.schema(), h));
  }
}
