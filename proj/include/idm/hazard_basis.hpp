#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace idm {

/// The three transitions of the illness-death model: healthy (0), ill (1), dead (2).
enum class Transition : int { HealthyToIll = 0, HealthyToDead = 1, IllToDead = 2 };

inline constexpr Transition kTransitions[3] = {Transition::HealthyToIll, Transition::HealthyToDead,
                                               Transition::IllToDead};

/// "01", "02" or "12".
std::string_view transition_label(Transition t);
Transition parse_transition(std::string_view label);

/// Clamped knot sequence for an M-spline basis on [lo, hi].
///
/// The boundary knots are repeated `order` times, so the basis has
/// `interior().size() + order` functions. An augmented sequence with one more
/// boundary knot on each side is kept for the integrated (I-spline) basis.
class KnotGrid {
 public:
  KnotGrid(double lo, double hi, std::vector<double> interior, int order = 4);

  /// `n_interior` equally spaced interior knots strictly inside (lo, hi).
  static KnotGrid equidistant(double lo, double hi, int n_interior, int order = 4);

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& interior() const { return interior_; }
  int order() const { return order_; }
  int size() const { return static_cast<int>(interior_.size()) + order_; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& augmented_knots() const { return aug_knots_; }

  /// Distinct knot values, lo and hi included.
  std::vector<double> breakpoints() const;
  bool contains(double t) const { return t >= lo_ && t <= hi_; }

  /// Index s with knots[s] <= t < knots[s+1]; t == hi maps to the last span.
  int find_span(double t) const;

  bool operator==(const KnotGrid&) const = default;

 private:
  double lo_;
  double hi_;
  std::vector<double> interior_;
  int order_;
  std::vector<double> knots_;
  std::vector<double> aug_knots_;
};

/// M-spline basis values M_i(t), i = 0..size()-1.
std::vector<double> eval_mspline_basis(const KnotGrid& grid, double t);

/// I-spline values I_i(t) = integral of M_i from lo to t.
std::vector<double> eval_ispline_basis(const KnotGrid& grid, double t);

/// Second derivatives M_i''(t).
std::vector<double> eval_mspline_second_derivative(const KnotGrid& grid, double t);

/// Roughness matrix P_ij = integral of M_i'' M_j'' over [lo, hi]. Needs order >= 3.
Eigen::MatrixXd penalty_matrix(const KnotGrid& grid);

namespace detail {
// Non-zero normalized B-splines of order k on `knots` at t within span s:
// out[j] = B_{s-k+1+j}(t), j = 0..k-1.
void bspline_nonzero(std::span<const double> knots, int k, int span, double t, double* out);
// Writes I_i(t) for all basis functions into out (grid.size() entries), t in [lo, hi].
void ispline_values(const KnotGrid& grid, double t, double* out);
// Writes M_i(t) for all basis functions (dense), t in [lo, hi].
void mspline_values(const KnotGrid& grid, double t, double* out);
}  // namespace detail

enum class HazardForm { Spline, Weibull };

/// One transition intensity alpha(t | z) = alpha_0(t) exp(beta . z).
///
/// Spline form: alpha_0(t) = sum_i theta_i^2 M_i(t), held constant at its value
/// at grid().hi() beyond the upper boundary. Weibull form: theta = {shape, scale}
/// and alpha_0(t) = (shape/scale) (t/scale)^(shape-1).
struct HazardSpec {
  Transition transition = Transition::HealthyToIll;
  HazardForm form = HazardForm::Weibull;
  std::vector<double> theta;
  std::vector<double> beta;
  std::optional<KnotGrid> grid;

  static HazardSpec spline(Transition tr, KnotGrid grid, std::vector<double> theta,
                           std::vector<double> beta = {});
  static HazardSpec weibull(Transition tr, double shape, double scale,
                            std::vector<double> beta = {});
  /// Exponential hazard, stored as a Weibull with shape 1.
  static HazardSpec constant(Transition tr, double rate, std::vector<double> beta = {});
  /// Piecewise-constant hazard on breaks[0] < ... < breaks[m], stored as an
  /// order-1 spline (M_i = 1/width, so theta_i = sqrt(rate_i * width_i)).
  static HazardSpec piecewise_constant(Transition tr, const std::vector<double>& breaks,
                                       const std::vector<double>& rates,
                                       std::vector<double> beta = {});

  /// Throws ConfigError when sizes or values are inconsistent.
  void validate() const;
  /// True for spline hazards evaluated past the upper boundary.
  bool extrapolates(double t) const;
};

double linear_predictor(const HazardSpec& spec, std::span<const double> z);
double baseline_intensity(const HazardSpec& spec, double t);
/// Baseline cumulative intensity between s and t (s <= t).
double baseline_cumulative(const HazardSpec& spec, double s, double t);
double intensity(const HazardSpec& spec, double t, std::span<const double> z);
double cumulative_intensity(const HazardSpec& spec, double s, double t, std::span<const double> z);
/// c' P c with c_i = theta_i^2; zero for parametric forms.
double roughness(const HazardSpec& spec);

/// Fast evaluation of one baseline hazard together with derivatives with
/// respect to its optimizer coordinates: theta for splines, (log shape, log
/// scale) for Weibull.
class HazardKernel {
 public:
  explicit HazardKernel(const HazardSpec& spec);

  int n_base() const { return n_base_; }
  HazardForm form() const { return form_; }
  const HazardSpec& spec() const { return *spec_; }

  /// Baseline rate a(t); writes da/dp into grad when non-null.
  double rate(double t, double* grad) const;
  /// Anchored cumulative C(t) with C(t) - C(s) = baseline cumulative on [s, t].
  double cum(double t, double* grad) const;

 private:
  void check(double t) const;

  const HazardSpec* spec_;
  HazardForm form_;
  int n_base_;
  std::vector<double> coef_;      // theta^2
  std::vector<double> two_theta_; // 2 theta
  std::vector<double> m_hi_;      // M_i(hi)
  double shape_ = 1.0;
  double scale_ = 1.0;
};

}  // namespace idm
