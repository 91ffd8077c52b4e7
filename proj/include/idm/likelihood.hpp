#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "idm/model.hpp"

namespace idm {

struct LikelihoodOptions {
  /// Gauss-Legendre nodes per knot span for the onset integrals.
  int nodes_per_span = 30;
  /// Panels without knots (parametric hazards, extrapolated tails) are split
  /// into pieces no longer than this many years.
  double max_panel = 10.0;
  /// Censor alive disease-free subjects at last_alive_age with an
  /// unobserved-onset term instead of at the last disease-free assessment.
  bool extend_alive_censoring = false;
  int threads = 1;
};

/// Sorted breakpoints covering [a, b]: a, every spline knot strictly inside,
/// b, with knot-free stretches split to at most `max_panel` years.
std::vector<double> integration_breakpoints(const IllnessDeathModel& model, double a, double b,
                                            double max_panel);

/// Log-likelihood of one subject, conditional on being alive and disease-free
/// at its entry age.
double log_likelihood_contribution(const SubjectRecord& rec, const IllnessDeathModel& model,
                                   const LikelihoodOptions& opt = {});

/// Sum of contributions, reduced over fixed blocks so serial and threaded
/// evaluation agree.
double total_log_likelihood(std::span<const SubjectRecord> records, const IllnessDeathModel& model,
                            const LikelihoodOptions& opt = {});

/// Repeated evaluation of the log-likelihood and its gradient in the
/// optimizer coordinates of ParameterLayout. Records are classified and their
/// covariate rows extracted once.
class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(std::span<const SubjectRecord> records, std::vector<std::string> covariates,
                      LikelihoodOptions opt = {});

  std::size_t size() const { return subjects_.size(); }
  const LikelihoodOptions& options() const { return opt_; }

  /// Log-likelihood of `model`; when grad is non-null it is resized to the
  /// parameter count and filled with the gradient.
  double operator()(const IllnessDeathModel& model, Eigen::VectorXd* grad = nullptr) const;

  /// Per-subject contributions, in record order.
  std::vector<double> contributions(const IllnessDeathModel& model) const;

  struct Subject {
    const SubjectRecord* rec;
    ObservationPattern pattern;
    std::vector<double> z;
  };

 private:
  std::vector<Subject> subjects_;
  std::vector<std::string> covariates_;
  LikelihoodOptions opt_;
};

}  // namespace idm
