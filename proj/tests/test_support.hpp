#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "idm/hazard_basis.hpp"
#include "idm/model.hpp"

namespace idm::testing {

// Records covering every observation pattern, with ages inside [60, 100].
inline std::vector<SubjectRecord> random_records(std::mt19937_64& rng, int n, bool with_covariates = true) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SubjectRecord> out;
  for (int i = 0; i < n; ++i) {
    SubjectRecord r;
    r.id = "s" + std::to_string(i);
    r.entry_age = 60.0 + 10.0 * u(rng);
    r.last_healthy_age = r.entry_age + 12.0 * u(rng);
    const int kind = i % 6;
    const double gap = 0.5 + 4.0 * u(rng);
    switch (kind) {
      case 0:  // healthy censored
        r.last_alive_age = r.last_healthy_age + 3.0 * u(rng);
        break;
      case 1:  // dead, conclusive review
        r.death_age = r.last_healthy_age + gap;
        r.last_alive_age = *r.death_age;
        r.dementia_conclusive_at_death = true;
        break;
      case 2:  // dead inconclusive
        r.death_age = r.last_healthy_age + gap;
        r.last_alive_age = *r.death_age;
        break;
      case 3:  // interval onset, alive
        r.onset = Onset::interval(r.last_healthy_age, r.last_healthy_age + gap);
        r.last_alive_age = r.onset->upper + 4.0 * u(rng);
        break;
      case 4:  // interval onset, dead
        r.onset = Onset::interval(r.last_healthy_age, r.last_healthy_age + gap);
        r.death_age = r.onset->upper + 5.0 * u(rng);
        r.last_alive_age = *r.death_age;
        break;
      case 5:  // exact onset, dead
        r.onset = Onset::at(r.last_healthy_age + gap * u(rng));
        r.death_age = r.onset->upper + 5.0 * u(rng);
        r.last_alive_age = *r.death_age;
        break;
    }
    r.last_assessment_age = r.onset ? r.onset->upper : r.last_healthy_age;
    if (with_covariates) {
      r.covariates["sex"] = u(rng) < 0.5 ? 0.0 : 1.0;
      r.covariates["x"] = u(rng) * 2.0 - 1.0;
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline IllnessDeathModel random_spline_model(std::mt19937_64& rng, std::vector<std::string> covariates) {
  std::normal_distribution<double> nd(0.0, 0.2);
  KnotGrid g = KnotGrid::equidistant(60.0, 95.0, 5, 4);
  IllnessDeathModel m;
  m.covariates = covariates;
  const double level[3] = {0.35, 0.45, 0.7};
  for (int h = 0; h < 3; ++h) {
    std::vector<double> theta(g.size());
    for (int i = 0; i < g.size(); ++i) theta[i] = level[h] * (1.0 + 0.1 * i) + nd(rng);
    std::vector<double> beta(covariates.size());
    for (auto& b : beta) b = nd(rng);
    m.hazards[h] = HazardSpec::spline(kTransitions[h], g, theta, beta);
  }
  return m;
}

// Exactly observed histories from constant intensities a, b, c scaled by
// exp(beta_h * x) with x ~ N(0, 1); entry U(60, 80), 20 years of follow-up.
inline std::vector<SubjectRecord> exact_constant_records(std::mt19937_64& rng, int n, double a, double b, double c,
                                                         std::array<double, 3> beta = {0.0, 0.0, 0.0}) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nz(0.0, 1.0);
  std::vector<SubjectRecord> out;
  for (int i = 0; i < n; ++i) {
    SubjectRecord r;
    r.id = "e" + std::to_string(i);
    const double x = nz(rng);
    r.covariates["x"] = x;
    r.entry_age = 60.0 + 20.0 * u(rng);
    const double end = r.entry_age + 20.0;
    const double t01 = -std::log(1.0 - u(rng)) / (a * std::exp(beta[0] * x));
    const double t02 = -std::log(1.0 - u(rng)) / (b * std::exp(beta[1] * x));
    const double t12 = -std::log(1.0 - u(rng)) / (c * std::exp(beta[2] * x));
    const double first = r.entry_age + std::min(t01, t02);
    if (first >= end) {
      r.last_healthy_age = r.last_alive_age = end;
    } else if (t02 <= t01) {
      r.last_healthy_age = r.last_alive_age = first;
      r.death_age = first;
      r.dementia_conclusive_at_death = true;
    } else {
      r.onset = Onset::at(first);
      r.last_healthy_age = first;
      const double death = first + t12;
      if (death < end)
        r.death_age = death;
      r.last_alive_age = std::min(death, end);
    }
    r.last_assessment_age = r.last_healthy_age;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace idm::testing
