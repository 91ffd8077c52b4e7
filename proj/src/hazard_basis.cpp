#include "idm/hazard_basis.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

#include "idm/error.hpp"
#include "idm/quadrature.hpp"

namespace idm {

namespace {

constexpr int kMaxOrder = 10;
constexpr int kMaxBasis = 64;

void check_grid_arg(const KnotGrid& grid, double t) {
  if (!std::isfinite(t) || !grid.contains(t))
    throw DomainError(fmt::format("age {} outside knot grid [{}, {}]", t, grid.lo(), grid.hi()));
}

// Derivatives up to `nd` of the non-zero B-splines of order k (NURBS book A2.3).
// ders[d][j] is the d-th derivative of B_{span-k+1+j}.
void bspline_derivatives(std::span<const double> U, int k, int span, double t, int nd,
                         double ders[][kMaxOrder]) {
  const int p = k - 1;
  double ndu[kMaxOrder][kMaxOrder];
  double left[kMaxOrder], right[kMaxOrder];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - U[span + 1 - j];
    right[j] = U[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
  double a[2][kMaxOrder];
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int d = 1; d <= nd; ++d) {
      double sum = 0.0;
      const int rk = r - d, pk = p - d;
      if (r >= d) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        sum = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? d - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        sum += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][d] = -a[s1][d - 1] / ndu[pk + 1][r];
        sum += a[s2][d] * ndu[r][pk];
      }
      ders[d][r] = sum;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int d = 1; d <= nd; ++d) {
    for (int j = 0; j <= p; ++j) ders[d][j] *= factor;
    factor *= (p - d);
  }
}

}  // namespace

std::string_view transition_label(Transition t) {
  switch (t) {
    case Transition::HealthyToIll: return "01";
    case Transition::HealthyToDead: return "02";
    case Transition::IllToDead: return "12";
  }
  return "??";
}

Transition parse_transition(std::string_view label) {
  if (label == "01") return Transition::HealthyToIll;
  if (label == "02") return Transition::HealthyToDead;
  if (label == "12") return Transition::IllToDead;
  throw ConfigError(fmt::format("unknown transition '{}' (expected 01, 02 or 12)", label));
}

// ---------------------------------------------------------------------------
// KnotGrid

KnotGrid::KnotGrid(double lo, double hi, std::vector<double> interior, int order)
    : lo_(lo), hi_(hi), interior_(std::move(interior)), order_(order) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
    throw ConfigError(fmt::format("knot grid needs finite lo < hi, got [{}, {}]", lo, hi));
  if (order < 1 || order > kMaxOrder - 1)
    throw ConfigError(fmt::format("spline order {} outside [1, {}]", order, kMaxOrder - 1));
  for (std::size_t i = 0; i < interior_.size(); ++i) {
    const double k = interior_[i];
    if (!(k > lo && k < hi))
      throw ConfigError(fmt::format("interior knot {} not inside ({}, {})", k, lo, hi));
    if (i > 0 && k < interior_[i - 1]) throw ConfigError("interior knots must be nondecreasing");
  }
  for (std::size_t i = 0; i < interior_.size();) {
    std::size_t j = i;
    while (j < interior_.size() && interior_[j] == interior_[i]) ++j;
    if (static_cast<int>(j - i) > order)
      throw ConfigError(fmt::format("knot {} repeated more than order {} times", interior_[i], order));
    i = j;
  }
  if (size() > kMaxBasis)
    throw ConfigError(fmt::format("at most {} basis functions supported", kMaxBasis));
  knots_.assign(order, lo);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), order, hi);
  aug_knots_.reserve(knots_.size() + 2);
  aug_knots_.push_back(lo);
  aug_knots_.insert(aug_knots_.end(), knots_.begin(), knots_.end());
  aug_knots_.push_back(hi);
}

KnotGrid KnotGrid::equidistant(double lo, double hi, int n_interior, int order) {
  if (n_interior < 0) throw ConfigError("negative interior knot count");
  std::vector<double> interior;
  interior.reserve(n_interior);
  for (int i = 1; i <= n_interior; ++i) interior.push_back(lo + (hi - lo) * i / (n_interior + 1));
  return KnotGrid(lo, hi, std::move(interior), order);
}

std::vector<double> KnotGrid::breakpoints() const {
  std::vector<double> out{lo_};
  for (double k : interior_)
    if (k != out.back()) out.push_back(k);
  out.push_back(hi_);
  return out;
}

int KnotGrid::find_span(double t) const {
  const int n = size();
  auto it = std::upper_bound(knots_.begin(), knots_.begin() + n, t);
  int span = static_cast<int>(it - knots_.begin()) - 1;
  return std::clamp(span, order_ - 1, n - 1);
}

// ---------------------------------------------------------------------------
// basis evaluation

namespace detail {

void bspline_nonzero(std::span<const double> U, int k, int span, double t, double* out) {
  double left[kMaxOrder + 1], right[kMaxOrder + 1];
  out[0] = 1.0;
  for (int j = 1; j < k; ++j) {
    left[j] = t - U[span + 1 - j];
    right[j] = U[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

void mspline_values(const KnotGrid& grid, double t, double* out) {
  const int k = grid.order();
  const int n = grid.size();
  const auto& U = grid.knots();
  const int span = grid.find_span(t);
  double b[kMaxOrder];
  bspline_nonzero(U, k, span, t, b);
  std::fill(out, out + n, 0.0);
  const int first = span - k + 1;
  for (int j = 0; j < k; ++j) {
    const int i = first + j;
    out[i] = k * b[j] / (U[i + k] - U[i]);
  }
}

void ispline_values(const KnotGrid& grid, double t, double* out) {
  const int k = grid.order();
  const int n = grid.size();
  const auto& V = grid.augmented_knots();
  // In the augmented sequence the span index shifts by one.
  const int span = grid.find_span(t) + 1;
  double b[kMaxOrder + 1];
  bspline_nonzero(V, k + 1, span, t, b);
  // I_i = sum_{j = i+1}^{n} B'_j; the non-zero B' are B'_{first..span}, b[q] = B'_{first+q}.
  const int first = span - k;
  double tail = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    const int j = i + 1;
    if (j > span) {
      out[i] = 0.0;
    } else if (j <= first) {
      out[i] = 1.0;
    } else {
      tail += b[j - first];
      out[i] = tail;
    }
  }
}

}  // namespace detail

std::vector<double> eval_mspline_basis(const KnotGrid& grid, double t) {
  check_grid_arg(grid, t);
  std::vector<double> out(grid.size());
  detail::mspline_values(grid, t, out.data());
  return out;
}

std::vector<double> eval_ispline_basis(const KnotGrid& grid, double t) {
  check_grid_arg(grid, t);
  std::vector<double> out(grid.size());
  detail::ispline_values(grid, t, out.data());
  return out;
}

std::vector<double> eval_mspline_second_derivative(const KnotGrid& grid, double t) {
  check_grid_arg(grid, t);
  const int k = grid.order();
  std::vector<double> out(grid.size(), 0.0);
  if (k < 3) return out;
  const auto& U = grid.knots();
  const int span = grid.find_span(t);
  double ders[3][kMaxOrder];
  bspline_derivatives(U, k, span, t, 2, ders);
  const int first = span - k + 1;
  for (int j = 0; j < k; ++j) {
    const int i = first + j;
    out[i] = k * ders[2][j] / (U[i + k] - U[i]);
  }
  return out;
}

Eigen::MatrixXd penalty_matrix(const KnotGrid& grid) {
  const int k = grid.order();
  if (k < 3)
    throw UnsupportedError(fmt::format("roughness penalty needs spline order >= 3, got {}", k));
  const int n = grid.size();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  // M'' has degree k-3 on each span, so a k-point rule is exact for the products.
  const auto& rule = gauss_legendre(std::max(k, 2));
  const auto bp = grid.breakpoints();
  const auto& U = grid.knots();
  double ders[3][kMaxOrder];
  for (std::size_t s = 1; s < bp.size(); ++s) {
    const double a = bp[s - 1], b = bp[s];
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double t = mid + half * rule.nodes[q];
      const double w = half * rule.weights[q];
      const int span = grid.find_span(t);
      bspline_derivatives(U, k, span, t, 2, ders);
      const int first = span - k + 1;
      double m2[kMaxOrder];
      for (int j = 0; j < k; ++j) m2[j] = k * ders[2][j] / (U[first + j + k] - U[first + j]);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) P(first + i, first + j) += w * m2[i] * m2[j];
    }
  }
  return 0.5 * (P + P.transpose());
}

// ---------------------------------------------------------------------------
// HazardSpec

HazardSpec HazardSpec::spline(Transition tr, KnotGrid grid, std::vector<double> theta,
                              std::vector<double> beta) {
  HazardSpec s;
  s.transition = tr;
  s.form = HazardForm::Spline;
  s.theta = std::move(theta);
  s.beta = std::move(beta);
  s.grid = std::move(grid);
  s.validate();
  return s;
}

HazardSpec HazardSpec::weibull(Transition tr, double shape, double scale, std::vector<double> beta) {
  HazardSpec s;
  s.transition = tr;
  s.form = HazardForm::Weibull;
  s.theta = {shape, scale};
  s.beta = std::move(beta);
  s.validate();
  return s;
}

HazardSpec HazardSpec::constant(Transition tr, double rate, std::vector<double> beta) {
  if (!(rate > 0.0 && std::isfinite(rate)))
    throw ConfigError(fmt::format("constant hazard rate must be positive, got {}", rate));
  return weibull(tr, 1.0, 1.0 / rate, std::move(beta));
}

HazardSpec HazardSpec::piecewise_constant(Transition tr, const std::vector<double>& breaks,
                                          const std::vector<double>& rates,
                                          std::vector<double> beta) {
  if (breaks.size() < 2 || rates.size() + 1 != breaks.size())
    throw ConfigError("piecewise hazard needs m+1 breaks for m rates");
  std::vector<double> interior(breaks.begin() + 1, breaks.end() - 1);
  KnotGrid grid(breaks.front(), breaks.back(), std::move(interior), 1);
  std::vector<double> theta(rates.size());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(rates[i] >= 0.0 && std::isfinite(rates[i])))
      throw ConfigError(fmt::format("piecewise hazard rate {} must be nonnegative", rates[i]));
    theta[i] = std::sqrt(rates[i] * (breaks[i + 1] - breaks[i]));
  }
  return spline(tr, std::move(grid), std::move(theta), std::move(beta));
}

void HazardSpec::validate() const {
  for (double b : beta)
    if (!std::isfinite(b)) throw ConfigError("non-finite covariate coefficient");
  if (form == HazardForm::Spline) {
    if (!grid) throw ConfigError("spline hazard without knot grid");
    if (static_cast<int>(theta.size()) != grid->size())
      throw ConfigError(fmt::format("spline hazard {} has {} coefficients for {} basis functions",
                                    transition_label(transition), theta.size(), grid->size()));
    for (double v : theta)
      if (!std::isfinite(v)) throw ConfigError("non-finite spline coefficient");
  } else {
    if (theta.size() != 2) throw ConfigError("weibull hazard needs {shape, scale}");
    if (!(theta[0] > 0.0 && theta[1] > 0.0 && std::isfinite(theta[0]) && std::isfinite(theta[1])))
      throw ConfigError(fmt::format("weibull shape and scale must be positive, got ({}, {})",
                                    theta[0], theta[1]));
  }
}

bool HazardSpec::extrapolates(double t) const {
  return form == HazardForm::Spline && grid && t > grid->hi();
}

double linear_predictor(const HazardSpec& spec, std::span<const double> z) {
  if (z.size() != spec.beta.size())
    throw DimensionError(fmt::format("covariate vector has {} entries, hazard {} expects {}",
                                     z.size(), transition_label(spec.transition), spec.beta.size()));
  double eta = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) eta += spec.beta[j] * z[j];
  return eta;
}

double baseline_intensity(const HazardSpec& spec, double t) {
  return HazardKernel(spec).rate(t, nullptr);
}

double baseline_cumulative(const HazardSpec& spec, double s, double t) {
  if (s > t) throw OrderingError(fmt::format("cumulative intensity needs s <= t, got s={} t={}", s, t));
  if (s == t) {
    HazardKernel(spec).rate(t, nullptr);  // domain check only
    return 0.0;
  }
  HazardKernel k(spec);
  return k.cum(t, nullptr) - k.cum(s, nullptr);
}

double intensity(const HazardSpec& spec, double t, std::span<const double> z) {
  return baseline_intensity(spec, t) * std::exp(linear_predictor(spec, z));
}

double cumulative_intensity(const HazardSpec& spec, double s, double t, std::span<const double> z) {
  const double eta = linear_predictor(spec, z);
  return baseline_cumulative(spec, s, t) * std::exp(eta);
}

double roughness(const HazardSpec& spec) {
  if (spec.form != HazardForm::Spline || spec.grid->order() < 3) return 0.0;
  const auto P = penalty_matrix(*spec.grid);
  Eigen::VectorXd c(spec.theta.size());
  for (std::size_t i = 0; i < spec.theta.size(); ++i) c[i] = spec.theta[i] * spec.theta[i];
  return c.dot(P * c);
}

// ---------------------------------------------------------------------------
// HazardKernel

HazardKernel::HazardKernel(const HazardSpec& spec) : spec_(&spec), form_(spec.form) {
  spec.validate();
  if (form_ == HazardForm::Spline) {
    const int n = spec.grid->size();
    n_base_ = n;
    coef_.resize(n);
    two_theta_.resize(n);
    for (int i = 0; i < n; ++i) {
      coef_[i] = spec.theta[i] * spec.theta[i];
      two_theta_[i] = 2.0 * spec.theta[i];
    }
    m_hi_.resize(n);
    detail::mspline_values(*spec.grid, spec.grid->hi(), m_hi_.data());
  } else {
    n_base_ = 2;
    shape_ = spec.theta[0];
    scale_ = spec.theta[1];
  }
}

void HazardKernel::check(double t) const {
  if (!std::isfinite(t))
    throw DomainError(fmt::format("non-finite age {} for hazard {}", t, transition_label(spec_->transition)));
  if (form_ == HazardForm::Spline) {
    if (t < spec_->grid->lo())
      throw DomainError(fmt::format("age {} below knot grid lower bound {} for hazard {}", t,
                                    spec_->grid->lo(), transition_label(spec_->transition)));
  } else if (t < 0.0) {
    throw DomainError(fmt::format("negative age {} for weibull hazard", t));
  }
}

double HazardKernel::rate(double t, double* grad) const {
  check(t);
  if (form_ == HazardForm::Spline) {
    const auto& grid = *spec_->grid;
    const int n = n_base_;
    std::array<double, kMaxBasis> m;
    if (t >= grid.hi()) {
      std::copy(m_hi_.begin(), m_hi_.end(), m.begin());
    } else {
      detail::mspline_values(grid, t, m.data());
    }
    double a = 0.0;
    for (int i = 0; i < n; ++i) a += coef_[i] * m[i];
    if (grad)
      for (int i = 0; i < n; ++i) grad[i] = two_theta_[i] * m[i];
    return a;
  }
  const double r = t / scale_;
  const double a = (shape_ / scale_) * std::pow(r, shape_ - 1.0);
  if (grad) {
    grad[0] = t > 0.0 ? a * (1.0 + shape_ * std::log(r)) : 0.0;
    grad[1] = -shape_ * a;
  }
  return a;
}

double HazardKernel::cum(double t, double* grad) const {
  check(t);
  if (form_ == HazardForm::Spline) {
    const auto& grid = *spec_->grid;
    const int n = n_base_;
    std::array<double, kMaxBasis> v;
    if (t >= grid.hi()) {
      const double excess = t - grid.hi();
      for (int i = 0; i < n; ++i) v[i] = 1.0 + m_hi_[i] * excess;
    } else {
      detail::ispline_values(grid, t, v.data());
    }
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += coef_[i] * v[i];
    if (grad)
      for (int i = 0; i < n; ++i) grad[i] = two_theta_[i] * v[i];
    return c;
  }
  if (t == 0.0) {
    if (grad) grad[0] = grad[1] = 0.0;
    return 0.0;
  }
  const double r = t / scale_;
  const double c = std::pow(r, shape_);
  if (grad) {
    grad[0] = shape_ * c * std::log(r);
    grad[1] = -shape_ * c;
  }
  return c;
}

}  // namespace idm
