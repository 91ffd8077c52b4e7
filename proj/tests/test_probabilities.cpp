#include <cmath>
#include <random>

#include "doctest.h"
#include "idm/error.hpp"
#include "idm/probabilities.hpp"
#include "test_support.hpp"

using namespace idm;

namespace {

constexpr double a = 0.04, b = 0.02, c = 0.10;

// Closed forms for constant intensities, derived by hand.
double cf_p00(double w) { return std::exp(-(a + b) * w); }
double cf_p01(double w) { return a / (a + b - c) * (std::exp(-c * w) - std::exp(-(a + b) * w)); }
double cf_risk(double w) { return a / (a + b) * (1.0 - std::exp(-(a + b) * w)); }

const FittedModel& small_fit() {
  static const FittedModel fm = [] {
    std::mt19937_64 rng(404);
    auto records = testing::exact_constant_records(rng, 500, 0.04, 0.03, 0.10, {0.5, 0.0, 0.0});
    FitConfig cfg;
    cfg.covariates = {"x"};
    cfg.n_interior_knots = 3;
    cfg.weights = {1e3, 1e3, 1e3};
    return fit(records, cfg);
  }();
  return fm;
}

}  // namespace

TEST_CASE("constant hazards reproduce the closed forms") {
  const auto m = constant_hazard_model(a, b, c);
  const auto p = transition_probabilities(m, 60, 70);
  CHECK(p.p00 == doctest::Approx(cf_p00(10)).epsilon(1e-12));
  CHECK(p.p01 == doctest::Approx(cf_p01(10)).epsilon(1e-12));
  CHECK(p.p00 + p.p01 + p.p02 == doctest::Approx(1.0).epsilon(1e-15));

  const double ages[] = {60, 65, 70};
  const auto risk = risk_curve(m, {}, ages);
  CHECK(risk.estimate[0] == 0.0);
  CHECK(risk.estimate[2] == doctest::Approx(cf_risk(10)).epsilon(1e-12));
  const auto prev = prevalence_curve(m, {}, ages);
  CHECK(prev.estimate[0] == 0.0);
  CHECK(prev.estimate[2] == doctest::Approx(cf_p01(10) / (cf_p00(10) + cf_p01(10))).epsilon(1e-12));

  // age homogeneity of the conditional probability
  for (double s : {60.0, 67.5, 80.0})
    CHECK(conditional_probability(m, {}, s, Horizon::within(10)).value == doctest::Approx(cf_risk(10)).epsilon(1e-12));
  CHECK(conditional_probability(m, {}, 70, Horizon::within(0)).value == 0.0);
  // competing-risks limit
  CHECK(onset_probability(m, 60, 900) == doctest::Approx(a / (a + b)).epsilon(1e-10));
}

TEST_CASE("degenerate and limiting cases") {
  const auto m = constant_hazard_model(a, b, c);
  const auto same = transition_probabilities(m, 72, 72);
  CHECK(same.p00 == 1.0);
  CHECK(same.p01 == 0.0);
  CHECK(same.p02 == 0.0);
  CHECK_THROWS_AS(transition_probabilities(m, 72, 70), OrderingError);

  IllnessDeathModel no_onset = m;
  no_onset.hazards[0] = HazardSpec::piecewise_constant(Transition::HealthyToIll, {40, 120}, {0.0});
  const auto p = transition_probabilities(no_onset, 60, 85);
  CHECK(p.p01 == 0.0);
  CHECK(p.p00 == std::exp(-b * 25.0));

  const auto fast_death = constant_hazard_model(a, b, 100.0);
  std::vector<double> ages;
  for (double t = 60; t <= 100; t += 2.5) ages.push_back(t);
  for (double v : prevalence_curve(fast_death, {}, ages).estimate) CHECK(v < 0.01);
}

TEST_CASE("conservation and Chapman-Kolmogorov on spline models") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(60.0, 100.0);
  std::vector<IllnessDeathModel> models = {testing::random_spline_model(rng, {}), small_fit().model};
  for (const auto& m : models) {
    const auto z = std::vector<double>(m.covariates.size(), 0.3);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
      double s = u(rng), t = u(rng);
      if (s > t) std::swap(s, t);
      const auto p = transition_probabilities(m, s, t, z);
      worst = std::max(worst, std::abs(p.p00 + p.p01 + p.p02 - 1.0));
      CHECK(p.p00 >= 0.0);
      CHECK(p.p01 >= 0.0);
      CHECK(p.p02 >= -1e-12);
    }
    CHECK(worst <= 1e-8);

    for (int i = 0; i < 50; ++i) {
      double v[3] = {u(rng), u(rng), u(rng)};
      std::sort(v, v + 3);
      const auto st = transition_probabilities(m, v[0], v[1], z);
      const auto tu = transition_probabilities(m, v[1], v[2], z);
      const auto su = transition_probabilities(m, v[0], v[2], z);
      const double ck = st.p00 * tu.p01 + st.p01 * ill_survival(m, v[1], v[2], z);
      CHECK(std::abs(su.p01 - ck) <= 1e-6);
      CHECK(std::abs(su.p00 - st.p00 * tu.p00) <= 1e-12);
    }
  }
}

TEST_CASE("curve properties: risk dominates P01, refinement, monotonicity") {
  std::mt19937_64 rng(31);
  const auto m = testing::random_spline_model(rng, {});
  std::vector<double> ages;
  for (double t = 60; t <= 100; t += 1) ages.push_back(t);
  const auto risk = risk_curve(m, {}, ages);
  ProbabilityOptions fine;
  fine.nodes_per_span = 60;
  const auto risk_fine = risk_curve(m, {}, ages, 60.0, fine);
  const auto prev = prevalence_curve(m, {}, ages);
  const auto prev_fine = prevalence_curve(m, {}, ages, 60.0, fine);
  for (std::size_t i = 0; i < ages.size(); ++i) {
    CHECK(risk.estimate[i] >= transition_probabilities(m, 60, ages[i]).p01 - 1e-14);
    CHECK(std::abs(risk.estimate[i] - risk_fine.estimate[i]) < 1e-6);
    CHECK(std::abs(prev.estimate[i] - prev_fine.estimate[i]) < 1e-6);
    if (i > 0) CHECK(risk.estimate[i] >= risk.estimate[i - 1]);
  }
  CHECK(risk.extrapolated);
  CHECK(risk.extrapolation_age == 95.0);

  double last = 0.0;
  for (double w : {0.0, 5.0, 10.0, 20.0, 30.0}) {
    const double v = conditional_probability(m, {}, 70, Horizon::within(w)).value;
    CHECK(v >= last);
    last = v;
  }
  CHECK(conditional_probability(m, {}, 70, Horizon::ever()).value >= last);
  CHECK_THROWS_AS(risk_curve(m, {}, std::vector<double>{59.0}), ConfigError);
  CHECK_THROWS_AS(risk_curve(m, {{"nope", 1.0}}, ages), ConfigError);
}

TEST_CASE("conditional table layout") {
  const auto m = constant_hazard_model(a, b, c);
  const std::vector<double> ages = {60, 65, 70, 75, 80};
  const std::vector<Horizon> hz = {Horizon::within(10), Horizon::within(20), Horizon::ever()};
  const auto t = conditional_table(m, {}, ages, hz, 110.0, 95.0);
  REQUIRE(t.estimate.size() == 5);
  CHECK_FALSE(t.estimate[4][1].has_value());
  CHECK(t.estimate[3][1].has_value());
  CHECK(t.estimate[4][0].has_value());
  CHECK(t.estimate[4][2].has_value());
  CHECK(*t.estimate[0][0] == doctest::Approx(cf_risk(10)).epsilon(1e-12));
  CHECK(*t.estimate[1][2] == doctest::Approx(cf_risk(45)).epsilon(1e-12));
  CHECK(hz[1].label() == "20y");
  CHECK(hz[2].label() == "ever");
}

TEST_CASE("confidence bands") {
  const auto& fm = small_fit();
  std::vector<double> ages;
  for (double t = 60; t <= 95; t += 5) ages.push_back(t);

  SUBCASE("zero covariance collapses the band") {
    FittedModel zero = fm;
    zero.covariance.setZero();
    auto curve = risk_curve(zero.model, {{"x", 1.0}}, ages);
    confidence_bands(zero, curve, {200, 1, 1});
    for (std::size_t i = 0; i < ages.size(); ++i) {
      CHECK(curve.lo95[i] == curve.estimate[i]);
      CHECK(curve.hi95[i] == curve.estimate[i]);
    }
  }

  SUBCASE("bands bracket the estimate, are deterministic and stable in the draw count") {
    auto r1 = risk_curve(fm.model, {}, ages);
    auto r1b = r1;
    auto r2 = r1;
    confidence_bands(fm, r1, {1000, 7, 1});
    confidence_bands(fm, r1b, {1000, 7, 4});
    confidence_bands(fm, r2, {2000, 7, 2});
    CHECK(r1.band_method == "mvn-resampling");
    for (std::size_t i = 0; i < ages.size(); ++i) {
      CHECK(r1.lo95[i] <= r1.estimate[i]);
      CHECK(r1.estimate[i] <= r1.hi95[i]);
      CHECK(r1.lo95[i] >= 0.0);
      CHECK(r1.hi95[i] <= 1.0);
      CHECK(r1.lo95[i] == r1b.lo95[i]);
      CHECK(r1.hi95[i] == r1b.hi95[i]);
      CHECK(std::abs(r1.lo95[i] - r2.lo95[i]) < 0.01);
      CHECK(std::abs(r1.hi95[i] - r2.hi95[i]) < 0.01);
      if (i > 0) {
        CHECK(r1.lo95[i] >= r1.lo95[i - 1]);
        CHECK(r1.hi95[i] >= r1.hi95[i - 1]);
      }
    }
    CHECK(r1.hi95.back() > r1.lo95.back());
  }

  SUBCASE("indefinite covariance is repaired with a warning") {
    FittedModel bad = fm;
    bad.covariance(0, 0) = -1.0;
    auto curve = prevalence_curve(bad.model, {}, ages);
    confidence_bands(bad, curve, {200, 3, 1});
    REQUIRE_FALSE(curve.warnings.empty());
    CHECK(curve.warnings.front().find("PSD") != std::string::npos);
  }

  SUBCASE("preconditions") {
    auto curve = risk_curve(fm.model, {}, ages);
    CHECK_THROWS_AS(confidence_bands(fm, curve, {100, 1, 1}), ConfigError);
    FittedModel none = fm;
    none.covariance.resize(0, 0);
    CHECK_THROWS_AS(confidence_bands(none, curve, {200, 1, 1}), ConfigError);
  }
}

TEST_CASE("percentile") {
  CHECK(percentile({3, 1, 2}, 0.5) == 2.0);
  CHECK(percentile({0, 10}, 0.025) == doctest::Approx(0.25));
  CHECK(percentile({5}, 0.975) == 5.0);
}
