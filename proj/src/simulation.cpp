#include "idm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <string>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "idm/csv.hpp"
#include "idm/error.hpp"
#include "idm/parallel.hpp"

namespace idm {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Latent times are searched up to this age; beyond it the event never happens.
constexpr double kAgeCap = 200.0;

std::string_view distribution_label(CovariateDistribution d) {
  switch (d) {
    case CovariateDistribution::Normal: return "normal";
    case CovariateDistribution::Bernoulli: return "bernoulli";
    case CovariateDistribution::Uniform: return "uniform";
  }
  return "normal";
}

void reject_unknown(const json& j, const std::set<std::string>& known, std::string_view where) {
  if (!j.is_object()) throw ConfigError(fmt::format("simulation config: {} must be an object", where));
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError(fmt::format("simulation config: unknown key '{}' in {}", k, where));
}

HazardSpec hazard_from_json(Transition tr, const json& j) {
  const std::string where = fmt::format("hazards.{}", transition_label(tr));
  if (!j.is_object() || !j.contains("type")) throw ConfigError(fmt::format("simulation config: {} needs a type", where));
  const auto type = j.at("type").get<std::string>();
  if (type == "constant") {
    reject_unknown(j, {"type", "rate"}, where);
    return HazardSpec::constant(tr, j.at("rate").get<double>());
  }
  if (type == "weibull") {
    reject_unknown(j, {"type", "shape", "scale"}, where);
    return HazardSpec::weibull(tr, j.at("shape").get<double>(), j.at("scale").get<double>());
  }
  if (type == "piecewise") {
    reject_unknown(j, {"type", "breaks", "rates"}, where);
    return HazardSpec::piecewise_constant(tr, j.at("breaks").get<std::vector<double>>(),
                                          j.at("rates").get<std::vector<double>>());
  }
  throw ConfigError(fmt::format("simulation config: {} type '{}' is not constant, weibull or piecewise", where, type));
}

// Rates recovered from the stored parametrization carry rounding noise from
// the sqrt/square round trip; 15 significant digits give them back exactly.
double tidy(double v) { return std::stod(fmt::format("{:.15g}", v)); }

ojson hazard_to_json(const HazardSpec& h) {
  if (h.form == HazardForm::Weibull) {
    if (h.theta[0] == 1.0) return {{"type", "constant"}, {"rate", tidy(1.0 / h.theta[1])}};
    return {{"type", "weibull"}, {"shape", h.theta[0]}, {"scale", h.theta[1]}};
  }
  const auto breaks = h.grid->breakpoints();
  std::vector<double> rates(h.theta.size());
  for (std::size_t i = 0; i < rates.size(); ++i) rates[i] = tidy(h.theta[i] * h.theta[i] / (breaks[i + 1] - breaks[i]));
  return {{"type", "piecewise"}, {"breaks", breaks}, {"rates", rates}};
}

bool is_piecewise(const HazardSpec& h) { return h.form == HazardForm::Spline && h.grid->order() == 1; }

// Smallest t >= from with target <= F(t), F nondecreasing and F(from) = 0;
// nullopt when F(kAgeCap) < target.
template <class F>
std::optional<double> invert(F&& cum, double from, double target) {
  double lo = from, hi = from + 1.0;
  while (cum(hi) < target) {
    if (hi >= kAgeCap) return std::nullopt;
    lo = hi;
    hi = std::min(kAgeCap, from + 2.0 * (hi - from));
  }
  for (int it = 0; it < 200 && hi - lo > 1e-10 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (cum(mid) < target ? lo : hi) = mid;
  }
  return hi;
}

struct SubjectDraw {
  std::vector<RawExamRow> rows;
  TruthRow truth;
};

}  // namespace

// ---------------------------------------------------------------------------
// Config

void SimulationConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("simulation config: " + m); };
  if (n < 1) fail(fmt::format("n must be at least 1, got {}", n));
  if (!seed) fail("seed is required");
  for (int h = 0; h < 3; ++h) {
    const auto& spec = hazards[h];
    if (spec.transition != kTransitions[h]) fail(fmt::format("hazard {} is stored in the wrong slot", h));
    if (!spec.beta.empty()) fail("baseline hazards carry no coefficients; give hazard ratios per covariate");
    if (spec.form == HazardForm::Spline && !is_piecewise(spec)) fail("truth hazards are constant, weibull or piecewise");
    spec.validate();
    if (spec.form == HazardForm::Spline && spec.grid->lo() > entry_age_min)
      fail(fmt::format("piecewise hazard {} starts at {} after the earliest entry age {}",
                       transition_label(spec.transition), spec.grid->lo(), entry_age_min));
  }
  std::set<std::string> names;
  const auto& fixed = exam_csv_columns();
  for (const auto& c : covariates) {
    if (c.name.empty()) fail("covariate names must be nonempty");
    if (!names.insert(c.name).second) fail(fmt::format("duplicate covariate '{}'", c.name));
    if (std::find(fixed.begin(), fixed.end(), c.name) != fixed.end())
      fail(fmt::format("covariate '{}' clashes with an exam column", c.name));
    switch (c.distribution) {
      case CovariateDistribution::Normal:
        if (!(c.b > 0.0) || !std::isfinite(c.a) || !std::isfinite(c.b)) fail(fmt::format("covariate '{}': sd must be positive", c.name));
        break;
      case CovariateDistribution::Bernoulli:
        if (!(c.a >= 0.0 && c.a <= 1.0)) fail(fmt::format("covariate '{}': p must lie in [0, 1]", c.name));
        break;
      case CovariateDistribution::Uniform:
        if (!(c.a < c.b) || !std::isfinite(c.a) || !std::isfinite(c.b)) fail(fmt::format("covariate '{}': needs min < max", c.name));
        break;
    }
    for (double hr : c.hazard_ratio)
      if (!(hr > 0.0 && std::isfinite(hr))) fail(fmt::format("covariate '{}': hazard ratios must be positive", c.name));
  }
  if (!(entry_age_min >= 0.0 && entry_age_min <= entry_age_max && std::isfinite(entry_age_max)))
    fail("entry ages need 0 <= min <= max");
  if (!(follow_up_years > 0.0 && std::isfinite(follow_up_years))) fail("follow_up_years must be positive");
  if (!(max_age > entry_age_max && std::isfinite(max_age))) fail("max_age must exceed the largest entry age");
  if (!(exams.interval > 0.0 && std::isfinite(exams.interval))) fail("exam interval must be positive");
  if (!(exams.jitter >= 0.0 && exams.jitter < 0.5 * exams.interval)) fail("exam jitter must lie in [0, interval/2)");
  if (!(exams.miss_probability >= 0.0 && exams.miss_probability <= 1.0)) fail("miss_probability must lie in [0, 1]");
  if (!(conclusive_at_death >= 0.0 && conclusive_at_death <= 1.0)) fail("conclusive_at_death must lie in [0, 1]");
  if (birth_year_min > birth_year_max) fail("birth_year min exceeds max");
}

SimulationConfig SimulationConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("simulation config: {}", e.what()));
  }
  reject_unknown(j, {"n", "seed", "hazards", "covariates", "entry_age", "follow_up_years", "max_age", "exams",
                     "birth_year", "conclusive_at_death", "exact_onset"},
                 "the top level");
  SimulationConfig c;
  try {
    c.n = j.value("n", c.n);
    if (j.contains("seed") && !j.at("seed").is_null()) {
      if (!j.at("seed").is_number_unsigned()) throw ConfigError("simulation config: seed must be a nonnegative integer");
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("hazards")) {
      const auto& h = j.at("hazards");
      reject_unknown(h, {"01", "02", "12"}, "hazards");
      for (int k = 0; k < 3; ++k) {
        const auto label = std::string(transition_label(kTransitions[k]));
        if (h.contains(label)) c.hazards[k] = hazard_from_json(kTransitions[k], h.at(label));
      }
    }
    if (j.contains("covariates")) {
      for (const auto& cj : j.at("covariates")) {
        SimulatedCovariate cov;
        cov.name = cj.at("name").get<std::string>();
        const auto dist = cj.value("distribution", std::string("normal"));
        const std::string where = "covariate '" + cov.name + "'";
        if (dist == "normal") {
          reject_unknown(cj, {"name", "distribution", "mean", "sd", "hr"}, where);
          cov.distribution = CovariateDistribution::Normal;
          cov.a = cj.value("mean", 0.0);
          cov.b = cj.value("sd", 1.0);
        } else if (dist == "bernoulli") {
          reject_unknown(cj, {"name", "distribution", "p", "hr"}, where);
          cov.distribution = CovariateDistribution::Bernoulli;
          cov.a = cj.value("p", 0.5);
        } else if (dist == "uniform") {
          reject_unknown(cj, {"name", "distribution", "min", "max", "hr"}, where);
          cov.distribution = CovariateDistribution::Uniform;
          cov.a = cj.value("min", 0.0);
          cov.b = cj.value("max", 1.0);
        } else {
          throw ConfigError(fmt::format("simulation config: {} distribution '{}' is not normal, bernoulli or uniform",
                                        where, dist));
        }
        if (cj.contains("hr")) {
          const auto& hr = cj.at("hr");
          reject_unknown(hr, {"01", "02", "12"}, where + " hr");
          for (int k = 0; k < 3; ++k) {
            const auto label = std::string(transition_label(kTransitions[k]));
            if (hr.contains(label)) cov.hazard_ratio[k] = hr.at(label).get<double>();
          }
        }
        c.covariates.push_back(std::move(cov));
      }
    }
    if (j.contains("entry_age")) {
      reject_unknown(j.at("entry_age"), {"min", "max"}, "entry_age");
      c.entry_age_min = j.at("entry_age").value("min", c.entry_age_min);
      c.entry_age_max = j.at("entry_age").value("max", c.entry_age_max);
    }
    c.follow_up_years = j.value("follow_up_years", c.follow_up_years);
    c.max_age = j.value("max_age", c.max_age);
    if (j.contains("exams")) {
      reject_unknown(j.at("exams"), {"interval", "jitter", "miss_probability"}, "exams");
      c.exams.interval = j.at("exams").value("interval", c.exams.interval);
      c.exams.jitter = j.at("exams").value("jitter", c.exams.jitter);
      c.exams.miss_probability = j.at("exams").value("miss_probability", c.exams.miss_probability);
    }
    if (j.contains("birth_year")) {
      reject_unknown(j.at("birth_year"), {"min", "max"}, "birth_year");
      c.birth_year_min = j.at("birth_year").value("min", c.birth_year_min);
      c.birth_year_max = j.at("birth_year").value("max", c.birth_year_max);
    }
    c.conclusive_at_death = j.value("conclusive_at_death", c.conclusive_at_death);
    c.exact_onset = j.value("exact_onset", c.exact_onset);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("simulation config: {}", e.what()));
  }
  c.validate();
  return c;
}

std::string SimulationConfig::to_json() const {
  ojson j;
  j["n"] = n;
  j["seed"] = seed ? ojson(*seed) : ojson(nullptr);
  ojson h;
  for (int k = 0; k < 3; ++k) h[std::string(transition_label(kTransitions[k]))] = hazard_to_json(hazards[k]);
  j["hazards"] = h;
  j["covariates"] = ojson::array();
  for (const auto& c : covariates) {
    ojson cj;
    cj["name"] = c.name;
    cj["distribution"] = distribution_label(c.distribution);
    switch (c.distribution) {
      case CovariateDistribution::Normal: cj["mean"] = c.a; cj["sd"] = c.b; break;
      case CovariateDistribution::Bernoulli: cj["p"] = c.a; break;
      case CovariateDistribution::Uniform: cj["min"] = c.a; cj["max"] = c.b; break;
    }
    ojson hr;
    for (int k = 0; k < 3; ++k) hr[std::string(transition_label(kTransitions[k]))] = c.hazard_ratio[k];
    cj["hr"] = hr;
    j["covariates"].push_back(cj);
  }
  j["entry_age"] = {{"min", entry_age_min}, {"max", entry_age_max}};
  j["follow_up_years"] = follow_up_years;
  j["max_age"] = max_age;
  j["exams"] = {{"interval", exams.interval}, {"jitter", exams.jitter}, {"miss_probability", exams.miss_probability}};
  j["birth_year"] = {{"min", birth_year_min}, {"max", birth_year_max}};
  j["conclusive_at_death"] = conclusive_at_death;
  j["exact_onset"] = exact_onset;
  return j.dump(2);
}

IllnessDeathModel SimulationConfig::truth_model() const {
  IllnessDeathModel m;
  for (const auto& c : covariates) m.covariates.push_back(c.name);
  for (int k = 0; k < 3; ++k) {
    m.hazards[k] = hazards[k];
    m.hazards[k].beta.clear();
    for (const auto& c : covariates) m.hazards[k].beta.push_back(std::log(c.hazard_ratio[k]));
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Sampling

SimulationResult simulate_cohort(const SimulationConfig& config, int threads) {
  config.validate();
  SimulationResult out;
  out.truth_model = config.truth_model();
  out.covariate_names = out.truth_model.covariates;
  const auto& model = out.truth_model;
  const std::array<HazardKernel, 3> kernel = {HazardKernel(model.hazards[0]), HazardKernel(model.hazards[1]),
                                              HazardKernel(model.hazards[2])};
  const std::size_t p = config.covariates.size();

  std::vector<SubjectDraw> draws(config.n);
  parallel_for(static_cast<std::size_t>(config.n), threads, [&](std::size_t i) {
    std::mt19937_64 rng(item_seed(*config.seed, i));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto u = [&] { return unif(rng); };

    TruthRow t;
    t.subject_id = fmt::format("S{:06d}", i + 1);
    t.covariates.resize(p);
    for (std::size_t c = 0; c < p; ++c) {
      const auto& g = config.covariates[c];
      switch (g.distribution) {
        case CovariateDistribution::Normal: t.covariates[c] = std::normal_distribution<double>(g.a, g.b)(rng); break;
        case CovariateDistribution::Bernoulli: t.covariates[c] = u() < g.a ? 1.0 : 0.0; break;
        case CovariateDistribution::Uniform: t.covariates[c] = g.a + (g.b - g.a) * u(); break;
      }
    }
    t.birth_year = std::uniform_int_distribution<int>(config.birth_year_min, config.birth_year_max)(rng);
    t.entry_age = config.entry_age_min + (config.entry_age_max - config.entry_age_min) * u();
    t.end_age = std::min(t.entry_age + config.follow_up_years, config.max_age);
    // Fixed draw order keeps every subject's stream aligned whatever happens.
    const double u_exit = u(), u_split = u(), u_death = u();

    std::array<double, 3> mult;
    for (int k = 0; k < 3; ++k) mult[k] = std::exp(linear_predictor(model.hazards[k], t.covariates));
    const double E = t.entry_age;
    const double c01 = kernel[0].cum(E, nullptr), c02 = kernel[1].cum(E, nullptr);
    const auto exit = invert(
        [&](double a) { return mult[0] * (kernel[0].cum(a, nullptr) - c01) + mult[1] * (kernel[1].cum(a, nullptr) - c02); },
        E, -std::log1p(-u_exit));
    if (exit) {
      const double r01 = mult[0] * kernel[0].rate(*exit, nullptr);
      const double r02 = mult[1] * kernel[1].rate(*exit, nullptr);
      if (r01 + r02 > 0.0 && u_split * (r01 + r02) < r01) {
        t.onset = *exit;
        const double c12 = kernel[2].cum(*exit, nullptr);
        t.death = invert([&](double a) { return mult[2] * (kernel[2].cum(a, nullptr) - c12); }, *exit,
                         -std::log1p(-u_death));
      } else {
        t.death = *exit;
      }
    }

    // Observation layer.
    const bool died = t.death && *t.death <= t.end_age;
    const double stop = died ? *t.death : t.end_age;
    RawExamRow base;
    base.subject_id = t.subject_id;
    base.birth_year = t.birth_year;
    base.exam1_year = t.birth_year + E;
    base.exam1_age = E;
    if (died) {
      base.death_age = *t.death;
      base.conclusive_at_death = false;
    } else {
      base.last_contact_age = t.end_age;
    }
    for (std::size_t c = 0; c < p; ++c) base.extra[config.covariates[c].name] = t.covariates[c];

    std::vector<RawExamRow> rows;
    auto add = [&](double age, CogStatus st) {
      RawExamRow r = base;
      r.exam_age = age;
      r.status = st;
      if (st == CogStatus::Dementia && config.exact_onset) r.onset_age = t.onset;
      rows.push_back(std::move(r));
    };
    bool diagnosed = false;
    add(E, CogStatus::Normal);
    for (int k = 1;; ++k) {
      const double jit = config.exams.jitter * (2.0 * u() - 1.0);
      const bool missed = u() < config.exams.miss_probability;
      const double a = E + k * config.exams.interval + jit;
      if (a >= stop) break;
      if (missed) continue;
      const bool ill = t.onset && *t.onset <= a;
      add(a, ill ? CogStatus::Dementia : CogStatus::Normal);
      if (ill) {
        diagnosed = true;
        break;
      }
    }
    const bool reviewed = u() < config.conclusive_at_death;
    if (died && !diagnosed && reviewed) {
      for (auto& r : rows) r.conclusive_at_death = true;
      base.conclusive_at_death = true;
      if (t.onset) add(*t.death, CogStatus::Dementia);
    }
    draws[i] = {std::move(rows), std::move(t)};
  });

  for (auto& d : draws) {
    out.rows.insert(out.rows.end(), std::make_move_iterator(d.rows.begin()), std::make_move_iterator(d.rows.end()));
    out.truth.push_back(std::move(d.truth));
  }
  return out;
}

std::vector<SubjectRecord> simulated_records(const SimulationResult& sim, const SimulationConfig& config) {
  CohortRules rules;
  const bool covered = config.birth_year_min >= rules.cohorts.front().first_year &&
                       config.birth_year_max <= rules.cohorts.back().last_year;
  if (!covered) rules.cohorts = {{1, config.birth_year_min, config.birth_year_max}};
  rules.min_age = std::min(rules.min_age, config.entry_age_min);
  rules.first_assessment_year =
      std::min(rules.first_assessment_year, config.birth_year_min + static_cast<int>(std::floor(config.entry_age_min)));
  const auto data = group_exam_rows(sim.rows, sim.covariate_names);
  if (!data.rejects.empty())
    throw NumericError(fmt::format("simulated subject {} failed coherence checks: {}", data.rejects.front().subject_id,
                                   data.rejects.front().reason));
  const auto flow = apply_flowchart(data, rules);
  std::vector<SubjectRecord> out;
  out.reserve(flow.eligible.size());
  for (const auto& s : flow.eligible) out.push_back(derive_subject_record(s, rules));
  return out;
}

void write_truth_csv(std::ostream& out, const SimulationResult& sim) {
  std::vector<std::string> header = {"subject_id", "birth_year", "entry_age", "end_age", "latent_onset", "latent_death"};
  header.insert(header.end(), sim.covariate_names.begin(), sim.covariate_names.end());
  csv::write_row(out, header);
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_number(*v) : std::string(); };
  for (const auto& t : sim.truth) {
    std::vector<std::string> row = {t.subject_id,
                                    std::to_string(t.birth_year),
                                    csv::format_number(t.entry_age),
                                    csv::format_number(t.end_age),
                                    opt(t.onset),
                                    opt(t.death)};
    for (double z : t.covariates) row.push_back(csv::format_number(z));
    csv::write_row(out, row);
  }
}

// ---------------------------------------------------------------------------
// Naive comparator and recovery

CurveTable naive_risk_estimate(std::span<const SubjectRecord> records, std::span<const double> ages, double base_age) {
  struct Spell {
    double entry, exit;
    bool event;
  };
  std::vector<Spell> spells;
  spells.reserve(records.size());
  for (const auto& r : records) {
    Spell s{r.entry_age, 0.0, false};
    if (r.onset) {
      s.exit = 0.5 * (r.onset->lower + r.onset->upper);
      s.event = true;
    } else {
      s.exit = r.dead() ? *r.death_age : r.last_healthy_age;
    }
    if (s.exit > s.entry) spells.push_back(s);
  }
  std::vector<double> times;
  for (const auto& s : spells)
    if (s.event && s.exit > base_age) times.push_back(s.exit);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  // Survival just after each event time.
  std::vector<double> surv(times.size());
  double S = 1.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double u = times[k];
    int at_risk = 0, events = 0;
    for (const auto& s : spells) {
      if (s.entry < u && u <= s.exit) ++at_risk;
      if (s.event && s.exit == u) ++events;
    }
    if (at_risk > 0) S *= 1.0 - static_cast<double>(events) / at_risk;
    surv[k] = S;
  }

  CurveTable c;
  c.quantity = CurveQuantity::Risk;
  c.conditioning_age = base_age;
  c.stratum = "naive";
  c.ages.assign(ages.begin(), ages.end());
  for (double a : ages) {
    const auto it = std::upper_bound(times.begin(), times.end(), a);
    const double s_a = it == times.begin() ? 1.0 : surv[static_cast<std::size_t>(it - times.begin()) - 1];
    c.estimate.push_back(1.0 - s_a);
  }
  c.lo95 = c.hi95 = c.estimate;
  return c;
}

CurveError compare_curves(const CurveTable& estimate, const CurveTable& truth) {
  if (estimate.ages.size() != truth.ages.size())
    throw ConfigError(fmt::format("curve age grids differ in length ({} vs {})", estimate.ages.size(), truth.ages.size()));
  if (estimate.ages.empty()) throw ConfigError("curve age grids are empty");
  for (std::size_t i = 0; i < estimate.ages.size(); ++i)
    if (std::abs(estimate.ages[i] - truth.ages[i]) > 1e-9)
      throw ConfigError(fmt::format("curve age grids differ at position {} ({} vs {})", i, estimate.ages[i], truth.ages[i]));
  if (estimate.estimate.size() != truth.estimate.size())
    throw ConfigError("curve estimates do not cover the same ages (a curve was truncated)");
  CurveError e;
  for (std::size_t i = 0; i < estimate.estimate.size(); ++i) {
    const double d = estimate.estimate[i] - truth.estimate[i];
    e.max_abs = std::max(e.max_abs, std::abs(d));
    e.mean_abs += std::abs(d);
    e.mean_signed += d;
  }
  e.mean_abs /= static_cast<double>(estimate.estimate.size());
  e.mean_signed /= static_cast<double>(estimate.estimate.size());
  return e;
}

RecoveryReport evaluate_recovery(const FittedModel& fitted, const IllnessDeathModel& truth, std::span<const double> ages,
                                 double base_age) {
  RecoveryReport rep;
  rep.ages.assign(ages.begin(), ages.end());
  rep.risk = compare_curves(risk_curve(fitted.model, {}, ages, base_age), risk_curve(truth, {}, ages, base_age));
  rep.prevalence =
      compare_curves(prevalence_curve(fitted.model, {}, ages, base_age), prevalence_curve(truth, {}, ages, base_age));
  for (const auto& row : hazard_ratios(fitted)) {
    HazardRatioError h{row.transition, row.covariate, 1.0, row.hr};
    const auto it = std::find(truth.covariates.begin(), truth.covariates.end(), row.covariate);
    if (it != truth.covariates.end())
      h.true_hr = std::exp(truth.hazard(row.transition).beta[static_cast<std::size_t>(it - truth.covariates.begin())]);
    rep.hazard_ratios.push_back(h);
  }
  return rep;
}

}  // namespace idm
