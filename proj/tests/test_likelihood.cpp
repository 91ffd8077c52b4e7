#include <cmath>
#include <random>

#include "doctest.h"
#include "idm/error.hpp"
#include "idm/likelihood.hpp"
#include "test_support.hpp"

using namespace idm;

namespace {

constexpr double a = 0.04, b = 0.02, c = 0.10;

SubjectRecord healthy(double e, double L) {
  SubjectRecord r;
  r.id = "h";
  r.entry_age = e;
  r.last_healthy_age = L;
  r.last_alive_age = L;
  return r;
}

SubjectRecord dead_without_onset(double e, double L, double D, bool conclusive) {
  SubjectRecord r = healthy(e, L);
  r.id = "d";
  r.death_age = D;
  r.last_alive_age = D;
  r.dementia_conclusive_at_death = conclusive;
  return r;
}

SubjectRecord interval_onset(double e, double L, double R, std::optional<double> death, double last_alive) {
  SubjectRecord r = healthy(e, L);
  r.id = "i";
  r.onset = Onset::interval(L, R);
  r.death_age = death;
  r.last_alive_age = death ? *death : last_alive;
  return r;
}

// Closed form of integral_L^R e^{-(a+b)(u-L)} a e^{-c(T-u)} du.
double constant_onset_integral(double L, double R, double T) {
  const double k = a + b - c;
  return a * std::exp(-c * (T - L)) * (1.0 - std::exp(-k * (R - L))) / k;
}

IllnessDeathModel no_illness_model() {
  return IllnessDeathModel{{HazardSpec::piecewise_constant(Transition::HealthyToIll, {50, 120}, {0.0}),
                            HazardSpec::constant(Transition::HealthyToDead, b),
                            HazardSpec::constant(Transition::IllToDead, c)},
                           {}};
}

}  // namespace

TEST_CASE("observation patterns") {
  CHECK(classify_pattern(healthy(60, 70)) == ObservationPattern::HealthyCensored);
  auto ill = interval_onset(60, 70, 72, 80.0, 80.0);
  CHECK(classify_pattern(ill) == ObservationPattern::IllThenDead);
  auto ill_alive = interval_onset(60, 70, 72, std::nullopt, 75.0);
  CHECK(classify_pattern(ill_alive) == ObservationPattern::IllCensored);
  auto dead = dead_without_onset(60, 78, 85, false);
  CHECK(classify_pattern(dead) == ObservationPattern::DeadInconclusive);
  CHECK(classify_pattern(dead, true) == ObservationPattern::HealthyThenDeadConclusive);
}

TEST_CASE("record validation") {
  auto r = healthy(60, 70);
  r.entry_age = 71;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  auto d = dead_without_onset(60, 78, 75, false);
  CHECK_THROWS_AS(d.validate(), ConfigError);
  auto i = interval_onset(60, 70, 72, 71.0, 71.0);
  CHECK_THROWS_AS(i.validate(), ConfigError);
}

TEST_CASE("constant-hazard contributions match closed forms") {
  const auto model = constant_hazard_model(a, b, c);
  CHECK(log_likelihood_contribution(healthy(60, 70), model) == doctest::Approx(-0.6).epsilon(1e-13));

  SubjectRecord exact = healthy(60, 64);
  exact.onset = Onset::at(65.0);
  exact.death_age = 70.0;
  exact.last_alive_age = 70.0;
  const double expected = -0.3 + std::log(0.04) - 0.5 + std::log(0.10);
  CHECK(log_likelihood_contribution(exact, model) == doctest::Approx(expected).epsilon(1e-13));

  // interval onset, dead and alive
  {
    const double e = 61, L = 70, R = 72.5, D = 79;
    const double oracle = -(a + b) * (L - e) + std::log(constant_onset_integral(L, R, D)) + std::log(c);
    CHECK(log_likelihood_contribution(interval_onset(e, L, R, D, D), model) ==
          doctest::Approx(oracle).epsilon(1e-12));
    const double C = 76;
    const double alive = -(a + b) * (L - e) + std::log(constant_onset_integral(L, R, C));
    CHECK(log_likelihood_contribution(interval_onset(e, L, R, std::nullopt, C), model) ==
          doctest::Approx(alive).epsilon(1e-12));
  }
  // dead inconclusive and conclusive
  {
    const double e = 60, L = 78, D = 85;
    const double direct = std::exp(-(a + b) * (D - L)) * b;
    const double oracle = -(a + b) * (L - e) + std::log(direct + c * constant_onset_integral(L, D, D));
    CHECK(log_likelihood_contribution(dead_without_onset(e, L, D, false), model) ==
          doctest::Approx(oracle).epsilon(1e-12));
    const double conclusive = -(a + b) * (D - e) + std::log(b);
    CHECK(log_likelihood_contribution(dead_without_onset(e, L, D, true), model) ==
          doctest::Approx(conclusive).epsilon(1e-13));
  }
}

TEST_CASE("no illness: dead-inconclusive reduces to the direct-death term") {
  const auto model = no_illness_model();
  const double e = 62, L = 71, D = 80;
  const double expected = -b * (L - e) - b * (D - L) + std::log(b);
  CHECK(log_likelihood_contribution(dead_without_onset(e, L, D, false), model) ==
        doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("extended alive censoring adds the unobserved-onset term") {
  const auto model = constant_hazard_model(a, b, c);
  SubjectRecord r = healthy(60, 70);
  r.last_alive_age = 75;
  LikelihoodOptions opt;
  opt.extend_alive_censoring = true;
  const double stay = std::exp(-(a + b) * 5.0);
  const double oracle = -(a + b) * 10.0 + std::log(stay + constant_onset_integral(70, 75, 75));
  CHECK(log_likelihood_contribution(r, model, opt) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(log_likelihood_contribution(r, model) == doctest::Approx(-0.6));
}

TEST_CASE("likelihood properties") {
  std::mt19937_64 rng(101);
  auto model = testing::random_spline_model(rng, {});
  auto records = testing::random_records(rng, 60, false);
  for (const auto& r : records) {
    const double ll = log_likelihood_contribution(r, model);
    CHECK(std::isfinite(ll));
    CHECK(ll < 0.0 + 50.0);
  }

  SUBCASE("inflating the 0->2 intensity shrinks healthy-censored contributions") {
    auto inflated = model;
    for (auto& t : inflated.hazard(Transition::HealthyToDead).theta) t *= 1.2;
    for (const auto& r : records)
      if (classify_pattern(r) == ObservationPattern::HealthyCensored && r.last_healthy_age > r.entry_age)
        CHECK(log_likelihood_contribution(r, inflated) < log_likelihood_contribution(r, model));
  }

  SUBCASE("inconclusive death is at least as likely as a conclusive one") {
    for (auto r : records) {
      if (classify_pattern(r) != ObservationPattern::DeadInconclusive) continue;
      const double inconclusive = log_likelihood_contribution(r, model);
      r.dementia_conclusive_at_death = true;
      CHECK(inconclusive >= log_likelihood_contribution(r, model));
    }
  }

  SUBCASE("later entry raises the healthy-censored contribution toward 1") {
    SubjectRecord r = healthy(60, 80);
    double prev = log_likelihood_contribution(r, model);
    for (double e : {65.0, 70.0, 75.0, 79.0, 80.0}) {
      r.entry_age = e;
      const double cur = log_likelihood_contribution(r, model);
      CHECK(cur > prev);
      prev = cur;
    }
    CHECK(prev == doctest::Approx(0.0));
  }
}

TEST_CASE("shrinking the onset interval approaches the onset density") {
  std::mt19937_64 rng(7);
  auto model = testing::random_spline_model(rng, {});
  const double e = 62, L = 71, T = 83;
  const double width = 1e-4;
  auto rec = interval_onset(e, L, L + width, T, T);
  const double contrib = std::exp(log_likelihood_contribution(rec, model));
  const auto& h01 = model.hazard(Transition::HealthyToIll);
  const auto& h02 = model.hazard(Transition::HealthyToDead);
  const auto& h12 = model.hazard(Transition::IllToDead);
  const double limit = std::exp(-cumulative_intensity(h01, e, L, {}) - cumulative_intensity(h02, e, L, {})) *
                       intensity(h01, L, {}) * std::exp(-cumulative_intensity(h12, L, T, {})) *
                       intensity(h12, T, {});
  CHECK(contrib / width == doctest::Approx(limit).epsilon(1e-3));
}

TEST_CASE("total log-likelihood: empty, single, threaded reduction") {
  std::mt19937_64 rng(55);
  auto model = testing::random_spline_model(rng, {"sex", "x"});
  std::vector<SubjectRecord> none;
  CHECK(total_log_likelihood(none, model) == 0.0);
  auto records = testing::random_records(rng, 100);
  CHECK(total_log_likelihood(std::span(records.data(), 1), model) ==
        log_likelihood_contribution(records[0], model));

  LikelihoodEvaluator serial(records, model.covariates);
  double sequential = 0.0;
  for (double v : serial.contributions(model)) sequential += v;
  LikelihoodOptions threaded;
  threaded.threads = 8;
  const double parallel = total_log_likelihood(records, model, threaded);
  CHECK(std::abs(parallel - sequential) <= 1e-9);
  CHECK(parallel == total_log_likelihood(records, model));
}

TEST_CASE("non-finite contributions name the subject") {
  auto model = no_illness_model();
  auto r = interval_onset(60, 70, 72, 80.0, 80.0);
  r.id = "subject-42";
  try {
    log_likelihood_contribution(r, model);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("subject-42") != std::string::npos);
  }
}

TEST_CASE("doubling the quadrature nodes changes contributions by < 1e-8") {
  std::mt19937_64 rng(77);
  auto model = testing::random_spline_model(rng, {"sex", "x"});
  auto records = testing::random_records(rng, 120);
  LikelihoodOptions fine;
  fine.nodes_per_span = 60;
  LikelihoodEvaluator coarse_eval(records, model.covariates);
  LikelihoodEvaluator fine_eval(records, model.covariates, fine);
  auto c30 = coarse_eval.contributions(model);
  auto c60 = fine_eval.contributions(model);
  for (std::size_t i = 0; i < c30.size(); ++i) CHECK(std::abs(c30[i] - c60[i]) < 1e-8);
}

TEST_CASE("analytic gradient agrees with central differences") {
  std::mt19937_64 rng(91);
  auto records = testing::random_records(rng, 90);
  for (bool extend : {false, true}) {
    auto model = testing::random_spline_model(rng, {"sex", "x"});
    // mix in a parametric transition
    model.hazards[2] = HazardSpec::weibull(Transition::IllToDead, 3.0, 80.0, {0.2, -0.1});
    LikelihoodOptions opt;
    opt.extend_alive_censoring = extend;
    LikelihoodEvaluator eval(records, model.covariates, opt);
    Eigen::VectorXd grad;
    eval(model, &grad);
    const Eigen::VectorXd x = pack_parameters(model);
    REQUIRE(grad.size() == x.size());
    for (int p = 0; p < x.size(); ++p) {
      Eigen::VectorXd up = x, dn = x;
      up[p] += 1e-5;
      dn[p] -= 1e-5;
      const double fd = (eval(unpack_parameters(model, up)) - eval(unpack_parameters(model, dn))) / 2e-5;
      CHECK(std::abs(grad[p] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}
