#include "idm/probabilities.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "idm/error.hpp"
#include "idm/likelihood.hpp"
#include "idm/parallel.hpp"
#include "idm/quadrature.hpp"

namespace idm {

namespace {

// Intensities of one covariate profile, evaluated through the anchored
// cumulative of each hazard.
class Intensities {
 public:
  Intensities(const IllnessDeathModel& model, std::span<const double> z) {
    kernels_.reserve(3);
    for (int h = 0; h < 3; ++h) {
      kernels_.emplace_back(model.hazards[h]);
      mult_[h] = std::exp(linear_predictor(model.hazards[h], z));
    }
  }
  double rate(int h, double t) const { return mult_[h] * kernels_[h].rate(t, nullptr); }
  double cum(int h, double t) const { return mult_[h] * kernels_[h].cum(t, nullptr); }

 private:
  std::vector<HazardKernel> kernels_;
  double mult_[3] = {1.0, 1.0, 1.0};
};

struct Rule {
  std::vector<double> nodes, weights;
};

Rule rule_on(const IllnessDeathModel& model, double a, double b, const ProbabilityOptions& opt) {
  Rule r;
  const auto bp = integration_breakpoints(model, a, b, opt.max_panel);
  composite_rule(bp, opt.nodes_per_span, r.nodes, r.weights);
  return r;
}

void check_order(double s, double t) {
  if (!(s <= t)) throw OrderingError(fmt::format("start age {} exceeds end age {}", s, t));
}

double p01_between(const Intensities& in, const IllnessDeathModel& model, double s, double t,
                   const ProbabilityOptions& opt) {
  if (t <= s) return 0.0;
  const double c01s = in.cum(0, s), c02s = in.cum(1, s), c12t = in.cum(2, t);
  const Rule r = rule_on(model, s, t, opt);
  double acc = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const double u = r.nodes[i];
    const double p00 = std::exp(-(in.cum(0, u) - c01s) - (in.cum(1, u) - c02s));
    acc += r.weights[i] * p00 * in.rate(0, u) * std::exp(-(c12t - in.cum(2, u)));
  }
  return acc;
}

double onset_between(const Intensities& in, const IllnessDeathModel& model, double base, double a, double b,
                     const ProbabilityOptions& opt) {
  if (b <= a) return 0.0;
  const double c01 = in.cum(0, base), c02 = in.cum(1, base);
  const Rule r = rule_on(model, a, b, opt);
  double acc = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const double u = r.nodes[i];
    acc += r.weights[i] * std::exp(-(in.cum(0, u) - c01) - (in.cum(1, u) - c02)) * in.rate(0, u);
  }
  return acc;
}

// Smallest upper boundary among the spline hazards (0 when none).
double support_limit(const IllnessDeathModel& model) {
  double hi = 0.0;
  for (const auto& h : model.hazards)
    if (h.form == HazardForm::Spline && h.grid) hi = hi == 0.0 ? h.grid->hi() : std::min(hi, h.grid->hi());
  return hi;
}

void check_ages(std::span<const double> ages, double base) {
  for (std::size_t i = 0; i < ages.size(); ++i) {
    if (!std::isfinite(ages[i])) throw ConfigError("non-finite evaluation age");
    if (ages[i] < base) throw ConfigError(fmt::format("evaluation age {} precedes the conditioning age {}", ages[i], base));
    if (i > 0 && ages[i] < ages[i - 1]) throw OrderingError("evaluation ages must be nondecreasing");
  }
}

CurveTable make_table(CurveQuantity q, const IllnessDeathModel& model, const CovariateProfile& profile,
                      std::span<const double> ages, double base) {
  check_ages(ages, base);
  CurveTable c;
  c.quantity = q;
  c.conditioning_age = base;
  c.ages.assign(ages.begin(), ages.end());
  c.profile = profile;
  c.extrapolation_age = support_limit(model);
  c.extrapolated = c.extrapolation_age > 0.0 && !ages.empty() && ages.back() > c.extrapolation_age;
  return c;
}

// Estimate of a curve without bands or metadata.
std::vector<double> curve_values(CurveQuantity q, const IllnessDeathModel& model, std::span<const double> z,
                                 std::span<const double> ages, double base, const ProbabilityOptions& opt,
                                 std::vector<std::string>* warnings) {
  const Intensities in(model, z);
  std::vector<double> out;
  out.reserve(ages.size());
  if (q == CurveQuantity::Prevalence) {
    const double c01 = in.cum(0, base), c02 = in.cum(1, base);
    for (double t : ages) {
      const double p00 = std::exp(-(in.cum(0, t) - c01) - (in.cum(1, t) - c02));
      const double p01 = p01_between(in, model, base, t, opt);
      const double denom = p00 + p01;
      if (!(denom > 1e-300)) {
        if (warnings)
          warnings->push_back(fmt::format("prevalence truncated at age {}: survival probability underflows", t));
        break;
      }
      out.push_back(std::clamp(p01 / denom, 0.0, 1.0));
    }
    return out;
  }
  // risk and conditional: accumulate the onset integral age by age
  double acc = 0.0, prev = base;
  for (double t : ages) {
    acc += onset_between(in, model, base, prev, t, opt);
    prev = t;
    out.push_back(std::clamp(acc, 0.0, 1.0));
  }
  return out;
}

}  // namespace

TransitionProbabilities transition_probabilities(const IllnessDeathModel& model, double s, double t,
                                                 std::span<const double> z, const ProbabilityOptions& opt) {
  check_order(s, t);
  if (s == t) return {1.0, 0.0, 0.0};
  const Intensities in(model, z);
  TransitionProbabilities p;
  p.p00 = std::exp(-(in.cum(0, t) - in.cum(0, s)) - (in.cum(1, t) - in.cum(1, s)));
  p.p01 = p01_between(in, model, s, t, opt);
  p.p02 = 1.0 - p.p00 - p.p01;
  return p;
}

double ill_survival(const IllnessDeathModel& model, double s, double t, std::span<const double> z) {
  check_order(s, t);
  return std::exp(-cumulative_intensity(model.hazard(Transition::IllToDead), s, t, z));
}

double onset_probability(const IllnessDeathModel& model, double s, double t, std::span<const double> z,
                         const ProbabilityOptions& opt) {
  check_order(s, t);
  const Intensities in(model, z);
  return onset_between(in, model, s, s, t, opt);
}

std::string_view quantity_label(CurveQuantity q) {
  switch (q) {
    case CurveQuantity::Prevalence: return "prevalence";
    case CurveQuantity::Risk: return "risk";
    case CurveQuantity::Conditional: return "conditional";
  }
  return "?";
}

CurveQuantity parse_quantity(std::string_view label) {
  for (auto q : {CurveQuantity::Prevalence, CurveQuantity::Risk, CurveQuantity::Conditional})
    if (quantity_label(q) == label) return q;
  throw ConfigError(fmt::format("unknown curve quantity '{}'", label));
}

std::vector<double> profile_vector(const IllnessDeathModel& model, const CovariateProfile& profile) {
  for (const auto& [name, v] : profile) {
    if (std::find(model.covariates.begin(), model.covariates.end(), name) == model.covariates.end())
      throw ConfigError(fmt::format("covariate '{}' is not in the model", name));
    if (!std::isfinite(v)) throw ConfigError(fmt::format("covariate '{}' has a non-finite value", name));
  }
  std::vector<double> z;
  z.reserve(model.covariates.size());
  for (const auto& name : model.covariates) {
    auto it = profile.find(name);
    z.push_back(it == profile.end() ? 0.0 : it->second);
  }
  return z;
}

std::string profile_label(const CovariateProfile& profile) {
  if (profile.empty()) return "baseline";
  std::string out;
  for (const auto& [name, v] : profile) {
    if (!out.empty()) out += ';';
    out += fmt::format("{}={:g}", name, v);
  }
  return out;
}

CurveTable prevalence_curve(const IllnessDeathModel& model, const CovariateProfile& profile,
                            std::span<const double> ages, double base_age, const ProbabilityOptions& opt) {
  CurveTable c = make_table(CurveQuantity::Prevalence, model, profile, ages, base_age);
  const auto z = profile_vector(model, profile);
  c.estimate = curve_values(c.quantity, model, z, ages, base_age, opt, &c.warnings);
  c.ages.resize(c.estimate.size());
  c.lo95 = c.hi95 = c.estimate;
  return c;
}

CurveTable risk_curve(const IllnessDeathModel& model, const CovariateProfile& profile, std::span<const double> ages,
                      double base_age, const ProbabilityOptions& opt) {
  CurveTable c = make_table(CurveQuantity::Risk, model, profile, ages, base_age);
  const auto z = profile_vector(model, profile);
  c.estimate = curve_values(c.quantity, model, z, ages, base_age, opt, nullptr);
  c.lo95 = c.hi95 = c.estimate;
  return c;
}

std::string Horizon::label() const { return years ? fmt::format("{:g}y", *years) : std::string("ever"); }

ConditionalValue conditional_probability(const IllnessDeathModel& model, const CovariateProfile& profile, double s,
                                         const Horizon& horizon, double ever_age, const ProbabilityOptions& opt) {
  if (horizon.years && !(*horizon.years >= 0.0)) throw ConfigError("horizon must be nonnegative");
  const double t = horizon.years ? s + *horizon.years : ever_age;
  if (t < s) throw ConfigError(fmt::format("'ever' horizon age {} precedes the conditioning age {}", ever_age, s));
  const auto z = profile_vector(model, profile);
  ConditionalValue v;
  v.value = std::clamp(onset_probability(model, s, t, z, opt), 0.0, 1.0);
  const double limit = support_limit(model);
  v.extrapolated = limit > 0.0 && t > limit;
  return v;
}

namespace {

std::vector<std::vector<std::optional<double>>> table_values(const IllnessDeathModel& model, std::span<const double> z,
                                                             std::span<const double> ages,
                                                             std::span<const Horizon> horizons, double ever_age,
                                                             std::optional<double> blank_beyond,
                                                             const ProbabilityOptions& opt) {
  const Intensities in(model, z);
  std::vector<std::vector<std::optional<double>>> out(ages.size(),
                                                      std::vector<std::optional<double>>(horizons.size()));
  for (std::size_t i = 0; i < ages.size(); ++i) {
    const double s = ages[i];
    for (std::size_t j = 0; j < horizons.size(); ++j) {
      const auto& h = horizons[j];
      const double t = h.years ? s + *h.years : ever_age;
      if (h.years && blank_beyond && t > *blank_beyond) continue;
      out[i][j] = std::clamp(onset_between(in, model, s, s, std::max(s, t), opt), 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

ConditionalTable conditional_table(const IllnessDeathModel& model, const CovariateProfile& profile,
                                   std::span<const double> ages, std::span<const Horizon> horizons, double ever_age,
                                   std::optional<double> blank_beyond, const ProbabilityOptions& opt) {
  ConditionalTable t;
  t.ages.assign(ages.begin(), ages.end());
  t.horizons.assign(horizons.begin(), horizons.end());
  t.ever_age = ever_age;
  t.profile = profile;
  for (const auto& h : horizons)
    if (h.years && !(*h.years >= 0.0)) throw ConfigError("horizon must be nonnegative");
  for (double s : ages)
    if (s > ever_age) throw ConfigError(fmt::format("'ever' horizon age {} precedes the conditioning age {}", ever_age, s));
  const auto z = profile_vector(model, profile);
  t.estimate = table_values(model, z, ages, horizons, ever_age, blank_beyond, opt);
  t.lo95 = t.hi95 = t.estimate;
  const double limit = support_limit(model);
  if (limit > 0.0 && ever_age > limit)
    t.warnings.push_back(fmt::format("'ever' integrates to {} beyond the spline support ending at {:.4g}; the "
                                     "intensities are extrapolated as constants",
                                     ever_age, limit));
  return t;
}

// ---------------------------------------------------------------------------

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= values.size()) return values.back();
  return values[i] + (pos - static_cast<double>(i)) * (values[i + 1] - values[i]);
}

std::vector<IllnessDeathModel> sample_models(const FittedModel& fitted, const BandOptions& opt, bool* repaired) {
  if (!fitted.has_covariance()) throw ConfigError("confidence bands need a fitted covariance matrix");
  if (opt.draws < 1) throw ConfigError("the number of draws must be positive");
  const Eigen::VectorXd center = pack_parameters(fitted.model);
  if (fitted.covariance.rows() != center.size() || fitted.covariance.cols() != center.size())
    throw DimensionError(fmt::format("covariance is {}x{}, parameter vector has {} entries", fitted.covariance.rows(),
                                     fitted.covariance.cols(), center.size()));
  const Eigen::MatrixXd sym = 0.5 * (fitted.covariance + fitted.covariance.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1e-300, ev.cwiseAbs().maxCoeff());
  bool fixed = false;
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i] < 0.0) {
      if (ev[i] < -1e-10 * scale) fixed = true;
      ev[i] = 0.0;
    }
  if (repaired) *repaired = fixed;
  const Eigen::MatrixXd L = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();

  std::vector<IllnessDeathModel> models(static_cast<std::size_t>(opt.draws));
  parallel_for(models.size(), opt.threads, [&](std::size_t d) {
    std::mt19937_64 rng(item_seed(opt.seed, d));
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd xi(center.size());
    for (int i = 0; i < xi.size(); ++i) xi[i] = nd(rng);
    models[d] = unpack_parameters(fitted.model, center + L * xi);
  });
  return models;
}

namespace {

void finish_band(std::vector<double>& draws, double est, double& lo, double& hi) {
  if (draws.empty()) {
    lo = hi = est;
    return;
  }
  lo = std::clamp(std::min(percentile(draws, 0.025), est), 0.0, 1.0);
  hi = std::clamp(std::max(percentile(draws, 0.975), est), 0.0, 1.0);
}

std::string repair_warning() { return "covariance was not positive semidefinite; nearest PSD repair applied"; }

}  // namespace

void confidence_bands(const FittedModel& fitted, CurveTable& curve, const BandOptions& opt,
                      const ProbabilityOptions& popt) {
  if (opt.draws < 200) throw ConfigError(fmt::format("confidence bands need at least 200 draws, got {}", opt.draws));
  bool repaired = false;
  const auto models = sample_models(fitted, opt, &repaired);
  if (repaired) curve.warnings.push_back(repair_warning());
  const auto z = profile_vector(fitted.model, curve.profile);
  const std::size_t n = curve.estimate.size();
  std::vector<std::vector<double>> values(models.size());
  parallel_for(models.size(), opt.threads, [&](std::size_t d) {
    try {
      auto v = curve_values(curve.quantity, models[d], z, std::span(curve.ages).first(n), curve.conditioning_age, popt,
                            nullptr);
      if (v.size() == n) values[d] = std::move(v);
    } catch (const NumericError&) {
    } catch (const DomainError&) {
    }
  });
  int failed = 0;
  for (const auto& v : values) failed += v.empty();
  if (failed > 0) curve.warnings.push_back(fmt::format("{} of {} draws could not be evaluated", failed, opt.draws));
  curve.lo95.assign(n, 0.0);
  curve.hi95.assign(n, 0.0);
  std::vector<double> column;
  for (std::size_t a = 0; a < n; ++a) {
    column.clear();
    for (const auto& v : values)
      if (!v.empty()) column.push_back(v[a]);
    finish_band(column, curve.estimate[a], curve.lo95[a], curve.hi95[a]);
  }
  curve.band_method = "mvn-resampling";
  curve.draws = opt.draws;
}

void confidence_bands(const FittedModel& fitted, ConditionalTable& table, const BandOptions& opt,
                      const ProbabilityOptions& popt) {
  if (opt.draws < 200) throw ConfigError(fmt::format("confidence bands need at least 200 draws, got {}", opt.draws));
  bool repaired = false;
  const auto models = sample_models(fitted, opt, &repaired);
  if (repaired) table.warnings.push_back(repair_warning());
  const auto z = profile_vector(fitted.model, table.profile);
  using Grid = std::vector<std::vector<std::optional<double>>>;
  std::vector<std::optional<Grid>> values(models.size());
  parallel_for(models.size(), opt.threads, [&](std::size_t d) {
    try {
      // Blank cells follow the point estimate's pattern.
      auto g = table_values(models[d], z, table.ages, table.horizons, table.ever_age, std::nullopt, popt);
      values[d] = std::move(g);
    } catch (const NumericError&) {
    } catch (const DomainError&) {
    }
  });
  std::vector<double> column;
  for (std::size_t i = 0; i < table.ages.size(); ++i)
    for (std::size_t j = 0; j < table.horizons.size(); ++j) {
      if (!table.estimate[i][j]) continue;
      column.clear();
      for (const auto& g : values)
        if (g && (*g)[i][j]) column.push_back(*(*g)[i][j]);
      double lo = 0.0, hi = 0.0;
      finish_band(column, *table.estimate[i][j], lo, hi);
      table.lo95[i][j] = lo;
      table.hi95[i][j] = hi;
    }
}

}  // namespace idm
