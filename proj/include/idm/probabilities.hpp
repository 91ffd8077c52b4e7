#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idm/estimation.hpp"
#include "idm/model.hpp"

namespace idm {

struct ProbabilityOptions {
  int nodes_per_span = 30;
  double max_panel = 10.0;
};

struct TransitionProbabilities {
  double p00 = 1.0;
  double p01 = 0.0;
  double p02 = 0.0;
};

/// Occupation probabilities at t for a subject healthy at s. P02 is the
/// complement, so the three always sum to one.
TransitionProbabilities transition_probabilities(const IllnessDeathModel& model, double s, double t,
                                                 std::span<const double> z = {}, const ProbabilityOptions& opt = {});

/// P11(s, t) = exp(-A12(s, t)).
double ill_survival(const IllnessDeathModel& model, double s, double t, std::span<const double> z = {});

/// Probability of onset in (s, t] for a subject healthy at s:
/// integral_s^t P00(s, u) alpha01(u) du.
double onset_probability(const IllnessDeathModel& model, double s, double t, std::span<const double> z = {},
                         const ProbabilityOptions& opt = {});

enum class CurveQuantity { Prevalence, Risk, Conditional };
std::string_view quantity_label(CurveQuantity q);
CurveQuantity parse_quantity(std::string_view label);

using CovariateProfile = std::map<std::string, double>;

/// Covariate vector in model order; absent names take 0 (the reference level).
/// Throws ConfigError for names the model does not know.
std::vector<double> profile_vector(const IllnessDeathModel& model, const CovariateProfile& profile);
/// "name=value;..." in name order, or "baseline" when empty.
std::string profile_label(const CovariateProfile& profile);

struct CurveTable {
  CurveQuantity quantity = CurveQuantity::Risk;
  double conditioning_age = 60.0;
  std::vector<double> ages;
  std::vector<double> estimate;
  std::vector<double> lo95;
  std::vector<double> hi95;
  CovariateProfile profile;
  /// Free-form stratum label carried into CSV and plots.
  std::string stratum;
  bool extrapolated = false;
  /// Largest age the spline intensities are supported on (0 when parametric).
  double extrapolation_age = 0.0;
  std::string band_method = "none";
  int draws = 0;
  std::vector<std::string> warnings;
};

/// prevalence(t) = P01(a, t) / (P00(a, t) + P01(a, t)), a = base_age.
CurveTable prevalence_curve(const IllnessDeathModel& model, const CovariateProfile& profile,
                            std::span<const double> ages, double base_age = 60.0,
                            const ProbabilityOptions& opt = {});
/// risk(t) = onset_probability(a, t), a = base_age.
CurveTable risk_curve(const IllnessDeathModel& model, const CovariateProfile& profile, std::span<const double> ages,
                      double base_age = 60.0, const ProbabilityOptions& opt = {});

/// Horizon of a conditional probability: w years, or "ever" up to ever_age.
struct Horizon {
  std::optional<double> years;
  std::string label() const;
  static Horizon within(double w) { return {w}; }
  static Horizon ever() { return {}; }
};

struct ConditionalValue {
  double value = 0.0;
  /// s + w lies beyond the spline support.
  bool extrapolated = false;
};

ConditionalValue conditional_probability(const IllnessDeathModel& model, const CovariateProfile& profile, double s,
                                         const Horizon& horizon, double ever_age = 110.0,
                                         const ProbabilityOptions& opt = {});

/// Rows of ages by horizon columns. A cell is empty when s + w exceeds
/// `blank_beyond` (for "ever": never blank).
struct ConditionalTable {
  std::vector<double> ages;
  std::vector<Horizon> horizons;
  double ever_age = 110.0;
  CovariateProfile profile;
  std::string stratum;
  std::vector<std::vector<std::optional<double>>> estimate, lo95, hi95;
  std::vector<std::string> warnings;
};

ConditionalTable conditional_table(const IllnessDeathModel& model, const CovariateProfile& profile,
                                   std::span<const double> ages, std::span<const Horizon> horizons,
                                   double ever_age = 110.0, std::optional<double> blank_beyond = std::nullopt,
                                   const ProbabilityOptions& opt = {});

struct BandOptions {
  int draws = 2000;
  std::uint64_t seed = 20240601;
  int threads = 1;
};

/// One parameter vector per draw from N(x_hat, covariance), with draw i seeded
/// from (seed, i) alone. The covariance is repaired to the nearest PSD matrix
/// (negative eigenvalues zeroed) when needed; the repair is reported through
/// `repaired`.
std::vector<IllnessDeathModel> sample_models(const FittedModel& fitted, const BandOptions& opt, bool* repaired = nullptr);

/// Fills lo95/hi95 of `curve` from 2.5/97.5 percentiles of the curve
/// recomputed for each draw. Bounds are widened to contain the estimate.
void confidence_bands(const FittedModel& fitted, CurveTable& curve, const BandOptions& opt = {},
                      const ProbabilityOptions& popt = {});
void confidence_bands(const FittedModel& fitted, ConditionalTable& table, const BandOptions& opt = {},
                      const ProbabilityOptions& popt = {});

/// Linear-interpolation percentile of an unsorted sample (q in [0, 1]).
double percentile(std::vector<double> values, double q);

}  // namespace idm
