#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "idm/hazard_basis.hpp"

namespace idm {

/// Onset information for a diagnosed subject: the interval (lower, upper]
/// between the last disease-free assessment and the diagnosing assessment, or
/// an exact onset age when lower == upper.
struct Onset {
  double lower = 0.0;
  double upper = 0.0;
  bool exact() const { return lower == upper; }

  static Onset interval(double last_healthy, double diagnosed) { return {last_healthy, diagnosed}; }
  static Onset at(double age) { return {age, age}; }
};

/// One participant's observed history on the age scale.
struct SubjectRecord {
  std::string id;
  /// First disease-free assessment used for left truncation.
  double entry_age = 0.0;
  /// Last assessment known to be disease-free.
  double last_healthy_age = 0.0;
  std::optional<Onset> onset;
  std::optional<double> death_age;
  /// Last age known alive (death age for the dead).
  double last_alive_age = 0.0;
  /// Latest cognitive assessment of any outcome; drives the status census.
  double last_assessment_age = 0.0;
  /// Post-mortem review ruled dementia in or out.
  bool dementia_conclusive_at_death = false;
  std::map<std::string, double> covariates;
  int birth_year = 0;
  /// 0 when no birth cohort was assigned.
  int birth_cohort = 0;

  bool dead() const { return death_age.has_value(); }
  /// Death age for the dead, last_alive_age otherwise.
  double terminal_age() const { return death_age ? *death_age : last_alive_age; }
  /// Throws ConfigError naming the subject when an ordering invariant fails.
  void validate() const;
};

enum class ObservationPattern {
  HealthyCensored,
  IllCensored,
  IllThenDead,
  DeadInconclusive,
  HealthyThenDeadConclusive,
};

std::string_view pattern_label(ObservationPattern p);

/// Pattern implied by the record and the post-mortem review outcome.
ObservationPattern classify_pattern(const SubjectRecord& rec, bool dementia_conclusive_at_death);
inline ObservationPattern classify_pattern(const SubjectRecord& rec) {
  return classify_pattern(rec, rec.dementia_conclusive_at_death);
}

/// Three transition intensities sharing one covariate list.
struct IllnessDeathModel {
  std::array<HazardSpec, 3> hazards;
  std::vector<std::string> covariates;

  const HazardSpec& hazard(Transition t) const { return hazards[static_cast<int>(t)]; }
  HazardSpec& hazard(Transition t) { return hazards[static_cast<int>(t)]; }
  void validate() const;
  /// Covariate vector of a record in model order; throws ConfigError on a missing value.
  std::vector<double> design_row(const SubjectRecord& rec) const;
};

/// Exponential hazards with no covariates; the closed-form test case.
IllnessDeathModel constant_hazard_model(double a01, double a02, double a12);

/// Offsets of each transition's block in the optimizer parameter vector:
/// [base_01, beta_01, base_02, beta_02, base_12, beta_12]. Spline bases are
/// the raw theta; Weibull bases are (log shape, log scale).
struct ParameterLayout {
  std::array<int, 3> base_offset{};
  std::array<int, 3> base_size{};
  std::array<int, 3> beta_offset{};
  int n_covariates = 0;
  int size = 0;

  static ParameterLayout of(const IllnessDeathModel& model);
};

Eigen::VectorXd pack_parameters(const IllnessDeathModel& model);
IllnessDeathModel unpack_parameters(const IllnessDeathModel& shape, const Eigen::VectorXd& x);
std::vector<std::string> parameter_names(const IllnessDeathModel& model);

}  // namespace idm
