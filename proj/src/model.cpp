#include "idm/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "idm/error.hpp"

namespace idm {

void SubjectRecord::validate() const {
  auto fail = [&](std::string_view what) {
    throw ConfigError(fmt::format("subject {}: {}", id, what));
  };
  for (double v : {entry_age, last_healthy_age, last_alive_age})
    if (!std::isfinite(v)) fail("non-finite age");
  if (entry_age > last_healthy_age) fail("entry age after last disease-free assessment");
  if (last_alive_age < last_healthy_age) fail("last known alive before last disease-free assessment");
  if (death_age) {
    if (!std::isfinite(*death_age)) fail("non-finite death age");
    if (*death_age < last_healthy_age) fail("death before last disease-free assessment");
    if (last_alive_age > *death_age) fail("last known alive after death");
  }
  if (onset) {
    if (onset->exact()) {
      if (onset->lower < last_healthy_age) fail("exact onset before last disease-free assessment");
    } else {
      if (onset->lower != last_healthy_age) fail("onset interval must start at the last disease-free assessment");
      if (!(onset->upper > onset->lower)) fail("empty onset interval");
    }
    if (onset->upper > terminal_age()) fail("onset after the last observation");
  }
}

std::string_view pattern_label(ObservationPattern p) {
  switch (p) {
    case ObservationPattern::HealthyCensored: return "healthy-censored";
    case ObservationPattern::IllCensored: return "ill-censored";
    case ObservationPattern::IllThenDead: return "ill-then-dead";
    case ObservationPattern::DeadInconclusive: return "dead-inconclusive";
    case ObservationPattern::HealthyThenDeadConclusive: return "healthy-then-dead-conclusive";
  }
  return "?";
}

ObservationPattern classify_pattern(const SubjectRecord& rec, bool dementia_conclusive_at_death) {
  if (rec.onset) return rec.dead() ? ObservationPattern::IllThenDead : ObservationPattern::IllCensored;
  if (!rec.dead()) return ObservationPattern::HealthyCensored;
  return dementia_conclusive_at_death ? ObservationPattern::HealthyThenDeadConclusive
                                      : ObservationPattern::DeadInconclusive;
}

void IllnessDeathModel::validate() const {
  for (Transition t : kTransitions) {
    const auto& h = hazard(t);
    if (h.transition != t)
      throw ConfigError(fmt::format("hazard in slot {} is labelled {}", transition_label(t),
                                    transition_label(h.transition)));
    h.validate();
    if (h.beta.size() != covariates.size())
      throw DimensionError(fmt::format("hazard {} has {} coefficients for {} covariates", transition_label(t),
                                       h.beta.size(), covariates.size()));
  }
}

std::vector<double> IllnessDeathModel::design_row(const SubjectRecord& rec) const {
  std::vector<double> z;
  z.reserve(covariates.size());
  for (const auto& name : covariates) {
    auto it = rec.covariates.find(name);
    if (it == rec.covariates.end() || !std::isfinite(it->second))
      throw ConfigError(fmt::format("subject {}: covariate '{}' missing", rec.id, name));
    z.push_back(it->second);
  }
  return z;
}

IllnessDeathModel constant_hazard_model(double a01, double a02, double a12) {
  return IllnessDeathModel{{HazardSpec::constant(Transition::HealthyToIll, a01),
                            HazardSpec::constant(Transition::HealthyToDead, a02),
                            HazardSpec::constant(Transition::IllToDead, a12)},
                           {}};
}

ParameterLayout ParameterLayout::of(const IllnessDeathModel& model) {
  ParameterLayout L;
  L.n_covariates = static_cast<int>(model.covariates.size());
  int off = 0;
  for (int h = 0; h < 3; ++h) {
    const auto& spec = model.hazards[h];
    L.base_offset[h] = off;
    L.base_size[h] = spec.form == HazardForm::Spline ? static_cast<int>(spec.theta.size()) : 2;
    off += L.base_size[h];
    L.beta_offset[h] = off;
    off += L.n_covariates;
  }
  L.size = off;
  return L;
}

Eigen::VectorXd pack_parameters(const IllnessDeathModel& model) {
  const auto L = ParameterLayout::of(model);
  Eigen::VectorXd x(L.size);
  for (int h = 0; h < 3; ++h) {
    const auto& spec = model.hazards[h];
    for (int i = 0; i < L.base_size[h]; ++i)
      x[L.base_offset[h] + i] = spec.form == HazardForm::Spline ? spec.theta[i] : std::log(spec.theta[i]);
    for (int j = 0; j < L.n_covariates; ++j) x[L.beta_offset[h] + j] = spec.beta[j];
  }
  return x;
}

IllnessDeathModel unpack_parameters(const IllnessDeathModel& shape, const Eigen::VectorXd& x) {
  const auto L = ParameterLayout::of(shape);
  if (x.size() != L.size)
    throw DimensionError(fmt::format("parameter vector has {} entries, model needs {}", x.size(), L.size));
  IllnessDeathModel out = shape;
  for (int h = 0; h < 3; ++h) {
    auto& spec = out.hazards[h];
    for (int i = 0; i < L.base_size[h]; ++i) {
      const double v = x[L.base_offset[h] + i];
      spec.theta[i] = spec.form == HazardForm::Spline ? v : std::exp(v);
    }
    for (int j = 0; j < L.n_covariates; ++j) spec.beta[j] = x[L.beta_offset[h] + j];
  }
  return out;
}

std::vector<std::string> parameter_names(const IllnessDeathModel& model) {
  const auto L = ParameterLayout::of(model);
  std::vector<std::string> names(L.size);
  for (int h = 0; h < 3; ++h) {
    const auto& spec = model.hazards[h];
    const auto tl = transition_label(spec.transition);
    for (int i = 0; i < L.base_size[h]; ++i) {
      if (spec.form == HazardForm::Spline)
        names[L.base_offset[h] + i] = fmt::format("theta{}[{}]", tl, i);
      else
        names[L.base_offset[h] + i] = fmt::format("{}{}", i == 0 ? "log_shape" : "log_scale", tl);
    }
    for (int j = 0; j < L.n_covariates; ++j)
      names[L.beta_offset[h] + j] = fmt::format("beta{}[{}]", tl, model.covariates[j]);
  }
  return names;
}

}  // namespace idm
