#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idm/likelihood.hpp"
#include "idm/model.hpp"
#include "idm/optimizer.hpp"

namespace idm {

/// Per-transition smoothing weights; zero means unpenalized.
struct PenaltyWeights {
  double kappa01 = 0.0;
  double kappa02 = 0.0;
  double kappa12 = 0.0;

  double operator[](Transition t) const;
  double& operator[](Transition t);
  /// Throws ConfigError when any weight is negative or not finite.
  void validate() const;
  bool operator==(const PenaltyWeights&) const = default;
};

/// Sum over spline transitions of kappa_h * c_h' P_h c_h with c = theta^2.
/// Parametric transitions contribute nothing.
double penalty_value(const IllnessDeathModel& model, const PenaltyWeights& w);

/// penalized log-likelihood = log-likelihood - penalty_value.
double penalized_loglik(std::span<const SubjectRecord> records, const IllnessDeathModel& model,
                        const PenaltyWeights& weights, const LikelihoodOptions& opt = {});

/// Penalized objective and gradient in ParameterLayout coordinates, with the
/// per-subject preprocessing done once.
class PenalizedObjective {
 public:
  PenalizedObjective(std::span<const SubjectRecord> records, IllnessDeathModel shape, PenaltyWeights weights,
                     LikelihoodOptions opt = {});

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad = nullptr) const;
  /// Unpenalized log-likelihood at x.
  double loglik(const Eigen::VectorXd& x) const;
  /// Exact Hessian of the penalty term at x (positive semidefinite part of
  /// the objective's curvature that LCV subtracts back out).
  Eigen::MatrixXd penalty_hessian(const Eigen::VectorXd& x) const;
  const IllnessDeathModel& shape() const { return shape_; }
  const PenaltyWeights& weights() const { return weights_; }

 private:
  LikelihoodEvaluator eval_;
  IllnessDeathModel shape_;
  PenaltyWeights weights_;
  ParameterLayout layout_;
  std::array<Eigen::MatrixXd, 3> P_;
};

/// Knot placement shared by the three transitions: lo = min(60, earliest
/// entry), hi = the given quantile of per-subject terminal ages, equidistant
/// interior knots.
KnotGrid default_knot_grid(std::span<const SubjectRecord> records, int n_interior = 7, int order = 4,
                           double quantile = 0.99, double base_age = 60.0);

/// Observed transition counts (0->1 onsets, 0->2 conclusive or possible
/// direct deaths, 1->2 deaths after onset).
std::array<int, 3> observed_transition_counts(std::span<const SubjectRecord> records, const LikelihoodOptions& opt = {});

struct FitConfig {
  HazardForm form = HazardForm::Spline;
  /// Explicit grid; the default grid is derived from the records otherwise.
  std::optional<KnotGrid> grid;
  int n_interior_knots = 7;
  int order = 4;
  double knot_quantile = 0.99;
  PenaltyWeights weights{};
  std::vector<std::string> covariates;
  LikelihoodOptions likelihood{};
  OptimizerOptions optimizer{};
  /// Compare the analytic gradient with central differences at the optimum.
  bool verify_gradient = true;
  /// Warm start; replaces the Weibull pre-fit when its shape matches.
  std::optional<IllnessDeathModel> start;
};

struct ConvergenceInfo {
  int iterations = 0;
  double gradient_norm = 0.0;
  std::string status;
};

struct FittedModel {
  IllnessDeathModel model;
  PenaltyWeights weights;
  double logpl = 0.0;
  double loglik = 0.0;
  /// Inverse of minus the penalized Hessian over the full parameter vector.
  Eigen::MatrixXd covariance;
  /// Set when the Hessian was singular and a pseudo-inverse was used.
  bool covariance_pseudo_inverse = false;
  /// Minus the Hessian of the penalized objective and of the log-likelihood
  /// alone at the optimum.
  Eigen::MatrixXd information_penalized;
  Eigen::MatrixXd information_loglik;
  ConvergenceInfo convergence;
  std::array<bool, 3> weakly_identified{};
  std::array<int, 3> transition_counts{};
  /// Largest central-difference vs analytic gradient discrepancy at the optimum.
  double gradient_check_error = 0.0;
  int n_subjects = 0;

  std::vector<std::string> parameter_names() const { return idm::parameter_names(model); }
  bool has_covariance() const { return covariance.size() > 0; }
  /// Approximate leave-one-out score: loglik - tr(I_pl^-1 I_l).
  double lcv() const;
};

/// Weibull intensities fitted per transition with midpoint-imputed onsets;
/// returns (shape, scale) for 0->1, 0->2, 1->2.
std::array<std::pair<double, double>, 3> weibull_prefit(std::span<const SubjectRecord> records);

/// Least-squares projection of a Weibull intensity onto the spline basis of
/// `grid`, returned as theta (non-negative square roots).
std::vector<double> project_weibull(const KnotGrid& grid, double shape, double scale);

/// Penalized maximum-likelihood fit. Throws ConvergenceError on
/// non-convergence and NumericError when the gradient check fails.
FittedModel fit(std::span<const SubjectRecord> records, const FitConfig& config);

struct SmoothingCandidate {
  PenaltyWeights weights;
  double score = 0.0;
  bool converged = false;
  std::string message;
};

struct SmoothingSelection {
  PenaltyWeights weights;
  std::vector<SmoothingCandidate> evaluated;
  std::optional<FittedModel> best;
};

struct SmoothingOptions {
  /// Searched coordinate-wise unless full_grid is set.
  std::vector<double> grid = {1e-2, 1e-1, 1, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6};
  int sweeps = 3;
  bool full_grid = false;
};

/// Picks the weights maximizing the LCV score; ties go to the largest kappa.
/// `base` supplies the grid, covariates and optimizer options.
SmoothingSelection select_smoothing(std::span<const SubjectRecord> records, const SmoothingOptions& options,
                                    const FitConfig& base);

struct HazardRatioRow {
  Transition transition;
  std::string covariate;
  double beta = 0.0;
  /// Empty when the covariance is unavailable.
  std::optional<double> se;
  double hr = 0.0;
  std::optional<double> lo95;
  std::optional<double> hi95;
};

std::vector<HazardRatioRow> hazard_ratios(const FittedModel& fitted);
/// "0.85 [0.73, 0.98]" or "0.85 [unavailable]".
std::string format_hazard_ratio(const HazardRatioRow& row, int digits = 2);

}  // namespace idm
