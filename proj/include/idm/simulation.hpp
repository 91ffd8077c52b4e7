#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idm/cohort.hpp"
#include "idm/estimation.hpp"
#include "idm/model.hpp"
#include "idm/probabilities.hpp"

namespace idm {

enum class CovariateDistribution { Normal, Bernoulli, Uniform };

/// A covariate generator. Normal uses (a, b) = (mean, sd), Bernoulli uses
/// a = p, Uniform draws from [a, b]. The hazard ratio per transition is the
/// true exp(beta).
struct SimulatedCovariate {
  std::string name;
  CovariateDistribution distribution = CovariateDistribution::Normal;
  double a = 0.0;
  double b = 1.0;
  std::array<double, 3> hazard_ratio{1.0, 1.0, 1.0};
};

struct ExamSchedule {
  /// Years between scheduled exams after the entry exam.
  double interval = 2.0;
  /// Each scheduled exam is moved by U(-jitter, jitter) years.
  double jitter = 0.0;
  /// Probability that a scheduled exam after entry is missed.
  double miss_probability = 0.0;
};

struct SimulationConfig {
  int n = 2000;
  /// Required; there is no implicit default seed.
  std::optional<std::uint64_t> seed;
  /// Baseline truths for 0->1, 0->2, 1->2 (covariate effects come from
  /// `covariates`). Constant, Weibull or piecewise-constant.
  std::array<HazardSpec, 3> hazards = {HazardSpec::weibull(Transition::HealthyToIll, 9.0, 92.0),
                                       HazardSpec::weibull(Transition::HealthyToDead, 9.0, 100.0),
                                       HazardSpec::weibull(Transition::IllToDead, 3.0, 35.0)};
  std::vector<SimulatedCovariate> covariates;
  double entry_age_min = 60.0;
  double entry_age_max = 75.0;
  double follow_up_years = 30.0;
  /// Administrative end age; follow-up stops at min(entry + follow_up, max_age).
  double max_age = 100.0;
  ExamSchedule exams{};
  int birth_year_min = 1915;
  int birth_year_max = 1944;
  /// Probability that a death without diagnosis is reviewed post mortem.
  double conclusive_at_death = 0.0;
  /// Diagnosing rows carry the latent onset age (exact onset observation).
  bool exact_onset = false;

  /// Throws ConfigError on any invalid field.
  void validate() const;
  static SimulationConfig from_json(std::string_view text);
  std::string to_json() const;
  /// The generating model: baseline hazards with beta = log(HR).
  IllnessDeathModel truth_model() const;
};

/// Latent history of one simulated subject. Ages beyond the end of follow-up
/// are kept; `onset`/`death` are empty only when the event never happens.
struct TruthRow {
  std::string subject_id;
  int birth_year = 0;
  double entry_age = 0.0;
  double end_age = 0.0;
  std::optional<double> onset;
  std::optional<double> death;
  std::vector<double> covariates;
};

struct SimulationResult {
  std::vector<RawExamRow> rows;
  std::vector<TruthRow> truth;
  std::vector<std::string> covariate_names;
  IllnessDeathModel truth_model;
};

/// Draws latent histories by inversion of the cumulative intensities and
/// overlays the exam schedule. Subject i uses its own RNG stream seeded from
/// (seed, i), so the output does not depend on `threads`.
SimulationResult simulate_cohort(const SimulationConfig& config, int threads = 1);

/// Runs the simulated exam rows through grouping, the flowchart and record
/// derivation. Cohort bounds are widened to the configured birth years.
std::vector<SubjectRecord> simulated_records(const SimulationResult& sim, const SimulationConfig& config);

void write_truth_csv(std::ostream& out, const SimulationResult& sim);

/// One minus the left-truncated product-limit estimate of onset: onset
/// imputed at the interval midpoint, deaths without diagnosis censored at the
/// death age, living undiagnosed subjects censored at their last healthy exam.
CurveTable naive_risk_estimate(std::span<const SubjectRecord> records, std::span<const double> ages,
                               double base_age = 60.0);

struct CurveError {
  double max_abs = 0.0;
  double mean_abs = 0.0;
  /// Mean of estimate minus truth.
  double mean_signed = 0.0;
};

/// Pointwise errors between two curves; ConfigError when their ages differ.
CurveError compare_curves(const CurveTable& estimate, const CurveTable& truth);

struct HazardRatioError {
  Transition transition;
  std::string covariate;
  double true_hr = 1.0;
  double estimated_hr = 1.0;
};

struct RecoveryReport {
  std::vector<double> ages;
  CurveError risk;
  CurveError prevalence;
  std::vector<HazardRatioError> hazard_ratios;
};

/// Compares the fitted risk and prevalence curves (reference profile) with
/// those of the generating model on `ages`, and every fitted HR with its truth.
RecoveryReport evaluate_recovery(const FittedModel& fitted, const IllnessDeathModel& truth,
                                 std::span<const double> ages, double base_age = 60.0);

}  // namespace idm
