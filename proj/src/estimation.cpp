#include "idm/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "idm/error.hpp"

namespace idm {

double PenaltyWeights::operator[](Transition t) const {
  switch (t) {
    case Transition::HealthyToIll: return kappa01;
    case Transition::HealthyToDead: return kappa02;
    case Transition::IllToDead: return kappa12;
  }
  return 0.0;
}

double& PenaltyWeights::operator[](Transition t) {
  switch (t) {
    case Transition::HealthyToIll: return kappa01;
    case Transition::HealthyToDead: return kappa02;
    default: return kappa12;
  }
}

void PenaltyWeights::validate() const {
  for (Transition t : kTransitions) {
    const double k = (*this)[t];
    if (!std::isfinite(k) || k < 0.0)
      throw ConfigError(fmt::format("smoothing weight for {} must be finite and >= 0, got {}", transition_label(t), k));
  }
}

namespace {

bool penalized(const HazardSpec& h) { return h.form == HazardForm::Spline && h.grid && h.grid->order() >= 3; }

}  // namespace

double penalty_value(const IllnessDeathModel& model, const PenaltyWeights& w) {
  double total = 0.0;
  for (Transition t : kTransitions) {
    const auto& h = model.hazard(t);
    if (w[t] != 0.0 && penalized(h)) total += w[t] * roughness(h);
  }
  return total;
}

double penalized_loglik(std::span<const SubjectRecord> records, const IllnessDeathModel& model,
                        const PenaltyWeights& weights, const LikelihoodOptions& opt) {
  weights.validate();
  return total_log_likelihood(records, model, opt) - penalty_value(model, weights);
}

// ---------------------------------------------------------------------------

PenalizedObjective::PenalizedObjective(std::span<const SubjectRecord> records, IllnessDeathModel shape,
                                       PenaltyWeights weights, LikelihoodOptions opt)
    : eval_(records, shape.covariates, opt),
      shape_(std::move(shape)),
      weights_(weights),
      layout_(ParameterLayout::of(shape_)) {
  weights_.validate();
  for (Transition t : kTransitions) {
    const auto& h = shape_.hazard(t);
    if (penalized(h)) P_[static_cast<int>(t)] = penalty_matrix(*h.grid);
  }
}

double PenalizedObjective::loglik(const Eigen::VectorXd& x) const { return eval_(unpack_parameters(shape_, x)); }

double PenalizedObjective::operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
  double value = eval_(unpack_parameters(shape_, x), grad);
  for (Transition t : kTransitions) {
    const int h = static_cast<int>(t);
    const double kappa = weights_[t];
    if (kappa == 0.0 || P_[h].size() == 0) continue;
    const auto theta = x.segment(layout_.base_offset[h], layout_.base_size[h]);
    const Eigen::VectorXd c = theta.array().square();
    const Eigen::VectorXd Pc = P_[h] * c;
    value -= kappa * c.dot(Pc);
    if (grad) grad->segment(layout_.base_offset[h], layout_.base_size[h]) -= 4.0 * kappa * theta.cwiseProduct(Pc);
  }
  return value;
}

Eigen::MatrixXd PenalizedObjective::penalty_hessian(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(x.size(), x.size());
  for (Transition t : kTransitions) {
    const int h = static_cast<int>(t);
    const double kappa = weights_[t];
    if (kappa == 0.0 || P_[h].size() == 0) continue;
    const Eigen::VectorXd theta = x.segment(layout_.base_offset[h], layout_.base_size[h]);
    const Eigen::VectorXd Pc = P_[h] * theta.array().square().matrix();
    Eigen::MatrixXd block = 8.0 * kappa * (theta * theta.transpose()).cwiseProduct(P_[h]);
    block.diagonal() += 4.0 * kappa * Pc;
    H.block(layout_.base_offset[h], layout_.base_offset[h], block.rows(), block.cols()) = block;
  }
  return H;
}

// ---------------------------------------------------------------------------

namespace {

// Linear-interpolated quantile of a sorted sample.
double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

}  // namespace

KnotGrid default_knot_grid(std::span<const SubjectRecord> records, int n_interior, int order, double quantile,
                           double base_age) {
  if (records.empty()) throw ConfigError("cannot place knots without records");
  if (!(quantile > 0.0 && quantile <= 1.0)) throw ConfigError(fmt::format("knot quantile {} not in (0, 1]", quantile));
  double lo = base_age;
  std::vector<double> ends;
  ends.reserve(records.size());
  for (const auto& r : records) {
    lo = std::min(lo, r.entry_age);
    ends.push_back(r.terminal_age());
  }
  std::sort(ends.begin(), ends.end());
  double hi = quantile_sorted(ends, quantile);
  if (hi <= lo + 1.0) hi = std::max(ends.back(), lo + 1.0);
  return KnotGrid::equidistant(lo, hi, n_interior, order);
}

std::array<int, 3> observed_transition_counts(std::span<const SubjectRecord> records, const LikelihoodOptions&) {
  std::array<int, 3> n{};
  for (const auto& r : records) {
    switch (classify_pattern(r)) {
      case ObservationPattern::IllCensored: ++n[0]; break;
      case ObservationPattern::IllThenDead: ++n[0]; ++n[2]; break;
      case ObservationPattern::DeadInconclusive:
      case ObservationPattern::HealthyThenDeadConclusive: ++n[1]; break;
      case ObservationPattern::HealthyCensored: break;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------

namespace {

struct Spell {
  double entry, exit;
  bool event;
};

// Left-truncated Weibull log-likelihood in (log shape, log scale).
double weibull_spell_loglik(const std::vector<Spell>& spells, const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
  const double k = std::exp(x[0]);
  const double v = x[1];
  double ll = 0.0, gu = 0.0, gv = 0.0;
  for (const auto& s : spells) {
    const double lt = std::log(s.exit) - v;
    const double Ht = std::exp(k * lt);
    ll -= Ht;
    gu -= Ht * k * lt;
    gv += k * Ht;
    if (s.entry > 0.0) {
      const double le = std::log(s.entry) - v;
      const double He = std::exp(k * le);
      ll += He;
      gu += He * k * le;
      gv -= k * He;
    }
    if (s.event) {
      ll += x[0] - v + (k - 1.0) * lt;
      gu += 1.0 + k * lt;
      gv -= k;
    }
  }
  if (grad) *grad = Eigen::Vector2d(gu, gv);
  return ll;
}

std::pair<double, double> fit_weibull_spells(const std::vector<Spell>& spells) {
  double exposure = 0.0;
  int events = 0;
  for (const auto& s : spells) {
    exposure += s.exit - s.entry;
    events += s.event;
  }
  // Essentially absent transition: a tiny constant intensity.
  if (events == 0 || exposure <= 0.0) return {1.0, 1e4};
  const double rate = events / exposure;
  Eigen::VectorXd x0(2);
  x0 << 0.0, std::log(1.0 / rate);
  OptimizerOptions opt;
  opt.objective_tolerance = 1e-8;
  opt.gradient_tolerance = 1e-6;
  opt.max_iterations = 200;
  try {
    const auto res = maximize([&](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return weibull_spell_loglik(spells, x, g); },
                              x0, opt);
    return {std::exp(res.x[0]), std::exp(res.x[1])};
  } catch (const ConvergenceError& e) {
    return {std::exp(e.last_iterate()[0]), std::exp(e.last_iterate()[1])};
  }
}

}  // namespace

std::array<std::pair<double, double>, 3> weibull_prefit(std::span<const SubjectRecord> records) {
  std::array<std::vector<Spell>, 3> spells;
  for (const auto& r : records) {
    const double e = r.entry_age;
    if (r.onset) {
      const double o = 0.5 * (r.onset->lower + r.onset->upper);
      if (o > e) {
        spells[0].push_back({e, o, true});
        spells[1].push_back({e, o, false});
      }
      const double T = r.terminal_age();
      if (T > o) spells[2].push_back({o, T, r.dead()});
    } else {
      const double exit = r.dead() ? *r.death_age : r.last_healthy_age;
      if (exit > e) {
        spells[0].push_back({e, exit, false});
        spells[1].push_back({e, exit, r.dead()});
      }
    }
  }
  return {fit_weibull_spells(spells[0]), fit_weibull_spells(spells[1]), fit_weibull_spells(spells[2])};
}

std::vector<double> project_weibull(const KnotGrid& grid, double shape, double scale) {
  const int n = grid.size();
  const int m = std::max(200, 20 * n);
  Eigen::MatrixXd A(m, n);
  Eigen::VectorXd y(m);
  const auto w = HazardSpec::weibull(Transition::HealthyToIll, shape, scale);
  for (int i = 0; i < m; ++i) {
    const double t = grid.lo() + (grid.hi() - grid.lo()) * (i + 0.5) / m;
    const auto row = eval_mspline_basis(grid, t);
    for (int j = 0; j < n; ++j) A(i, j) = row[static_cast<std::size_t>(j)];
    y[i] = baseline_intensity(w, t);
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
  const double floor = std::max(1e-12, 1e-3 * c.cwiseAbs().maxCoeff());
  std::vector<double> theta(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) theta[static_cast<std::size_t>(j)] = std::sqrt(std::max(c[j], floor));
  return theta;
}

// ---------------------------------------------------------------------------

namespace {

IllnessDeathModel initial_model(std::span<const SubjectRecord> records, const FitConfig& cfg,
                                const std::optional<KnotGrid>& grid) {
  const auto pre = weibull_prefit(records);
  const std::vector<double> zeros(cfg.covariates.size(), 0.0);
  IllnessDeathModel m;
  m.covariates = cfg.covariates;
  for (Transition t : kTransitions) {
    const auto [k, lam] = pre[static_cast<int>(t)];
    if (cfg.form == HazardForm::Weibull)
      m.hazard(t) = HazardSpec::weibull(t, k, lam, zeros);
    else
      m.hazard(t) = HazardSpec::spline(t, *grid, project_weibull(*grid, k, lam), zeros);
  }
  return m;
}

bool same_shape(const IllnessDeathModel& a, const IllnessDeathModel& b) {
  if (a.covariates != b.covariates) return false;
  for (int h = 0; h < 3; ++h) {
    const auto &x = a.hazards[h], &y = b.hazards[h];
    if (x.form != y.form || x.theta.size() != y.theta.size() || x.grid != y.grid) return false;
  }
  return true;
}

// Inverse of a symmetric information matrix; pseudo-inverse when singular.
Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info, bool& pseudo) {
  pseudo = false;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() == Eigen::Success) {
    const Eigen::VectorXd d = info.diagonal();
    // Reject numerically singular factorizations as well.
    const Eigen::VectorXd lf = llt.matrixL().toDenseMatrix().diagonal();
    if ((lf.array().square() > 1e-12 * d.cwiseAbs().maxCoeff()).all()) {
      Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
      return 0.5 * (cov + cov.transpose());
    }
  }
  pseudo = true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  Eigen::VectorXd inv(ev.size());
  for (int i = 0; i < ev.size(); ++i) inv[i] = ev[i] > tol ? 1.0 / ev[i] : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double FittedModel::lcv() const {
  if (!has_covariance()) return -std::numeric_limits<double>::infinity();
  return loglik - (covariance * information_loglik).trace();
}

FittedModel fit(std::span<const SubjectRecord> records, const FitConfig& config) {
  if (records.empty()) throw ConfigError("cannot fit a model to zero records");
  config.weights.validate();
  for (const auto& r : records) r.validate();

  std::optional<KnotGrid> grid = config.grid;
  if (config.form == HazardForm::Spline && !grid)
    grid = default_knot_grid(records, config.n_interior_knots, config.order, config.knot_quantile);

  IllnessDeathModel shape = initial_model(records, config, grid);
  if (config.start && same_shape(*config.start, shape)) shape = *config.start;

  FittedModel out;
  out.n_subjects = static_cast<int>(records.size());
  out.weights = config.weights;
  out.transition_counts = observed_transition_counts(records, config.likelihood);
  for (int h = 0; h < 3; ++h) out.weakly_identified[h] = out.transition_counts[h] == 0;

  const PenalizedObjective objective(records, shape, config.weights, config.likelihood);
  const ObjectiveFn f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return objective(x, g); };
  const OptimizerResult res = maximize(f, pack_parameters(shape), config.optimizer);

  out.model = unpack_parameters(shape, res.x);
  out.logpl = res.value;
  out.loglik = objective.loglik(res.x);
  out.convergence = {res.iterations, res.gradient_norm, res.status};

  if (config.verify_gradient) {
    const Eigen::VectorXd fd = fd_gradient(f, res.x, 1e-5);
    double worst = 0.0;
    for (int i = 0; i < fd.size(); ++i)
      worst = std::max(worst, std::abs(res.gradient[i] - fd[i]) / std::max(1.0, std::abs(fd[i])));
    out.gradient_check_error = worst;
    if (worst > 1e-3)
      throw NumericError(fmt::format("analytic and finite-difference gradients disagree at the optimum "
                                     "(relative error {:.3g})",
                                     worst));
  }

  out.information_penalized = -res.hessian;
  out.information_loglik = out.information_penalized - objective.penalty_hessian(res.x);
  out.covariance = invert_information(out.information_penalized, out.covariance_pseudo_inverse);
  return out;
}

// ---------------------------------------------------------------------------

SmoothingSelection select_smoothing(std::span<const SubjectRecord> records, const SmoothingOptions& options,
                                    const FitConfig& base) {
  if (options.grid.empty()) throw ConfigError("smoothing grid is empty");
  std::vector<double> grid = options.grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (double k : grid)
    if (!std::isfinite(k) || k < 0.0) throw ConfigError(fmt::format("invalid smoothing weight {}", k));

  FitConfig cfg = base;
  if (cfg.form == HazardForm::Spline && !cfg.grid)
    cfg.grid = default_knot_grid(records, cfg.n_interior_knots, cfg.order, cfg.knot_quantile);

  SmoothingSelection sel;
  std::vector<Transition> free;
  if (cfg.form == HazardForm::Spline && cfg.grid->order() >= 3) free.assign(std::begin(kTransitions), std::end(kTransitions));

  using Key = std::array<double, 3>;
  std::map<Key, std::size_t> seen;
  std::map<Key, FittedModel> fits;
  auto key_of = [](const PenaltyWeights& w) { return Key{w.kappa01, w.kappa02, w.kappa12}; };

  auto evaluate = [&](const PenaltyWeights& w) -> double {
    const Key key = key_of(w);
    if (auto it = seen.find(key); it != seen.end()) return sel.evaluated[it->second].score;
    SmoothingCandidate cand{w, -std::numeric_limits<double>::infinity(), false, {}};
    try {
      FitConfig c = cfg;
      c.weights = w;
      FittedModel fm = fit(records, c);
      cand.score = fm.lcv();
      cand.converged = true;
      fits.emplace(key, std::move(fm));
    } catch (const Error& e) {
      cand.message = e.what();
    }
    seen.emplace(key, sel.evaluated.size());
    sel.evaluated.push_back(cand);
    return cand.score;
  };

  // Largest kappa wins ties: scan ascending and accept >= .
  auto better = [](double s, double best) { return s >= best || (std::isfinite(s) && !std::isfinite(best)); };

  PenaltyWeights current = cfg.weights;
  if (free.empty()) {
    evaluate(current);
  } else if (options.full_grid) {
    double best = -std::numeric_limits<double>::infinity();
    for (double a : grid)
      for (double b : grid)
        for (double c : grid) {
          const PenaltyWeights w{a, b, c};
          const double s = evaluate(w);
          if (std::isfinite(s) && better(s, best)) {
            best = s;
            current = w;
          }
        }
  } else {
    const double mid = grid[grid.size() / 2];
    for (Transition t : free) current[t] = mid;
    for (int sweep = 0; sweep < std::max(1, options.sweeps); ++sweep) {
      const PenaltyWeights before = current;
      for (Transition t : free) {
        double best = -std::numeric_limits<double>::infinity();
        double pick = current[t];
        for (double k : grid) {
          PenaltyWeights w = current;
          w[t] = k;
          const double s = evaluate(w);
          if (std::isfinite(s) && better(s, best)) {
            best = s;
            pick = k;
          }
        }
        current[t] = pick;
      }
      if (current == before) break;
    }
  }

  const bool any = std::any_of(sel.evaluated.begin(), sel.evaluated.end(), [](const auto& c) { return c.converged; });
  if (!any) {
    std::string msg = "no smoothing candidate could be fitted:";
    for (const auto& c : sel.evaluated)
      msg += fmt::format("\n  kappa=({:g}, {:g}, {:g}): {}", c.weights.kappa01, c.weights.kappa02, c.weights.kappa12,
                         c.message);
    throw ConvergenceError(msg, {}, std::numeric_limits<double>::quiet_NaN());
  }
  sel.weights = current;
  if (auto it = fits.find(key_of(current)); it != fits.end()) sel.best = std::move(it->second);
  return sel;
}

// ---------------------------------------------------------------------------

std::vector<HazardRatioRow> hazard_ratios(const FittedModel& fitted) {
  const auto layout = ParameterLayout::of(fitted.model);
  std::vector<HazardRatioRow> rows;
  for (Transition t : kTransitions) {
    const int h = static_cast<int>(t);
    for (int j = 0; j < layout.n_covariates; ++j) {
      HazardRatioRow row{t, fitted.model.covariates[static_cast<std::size_t>(j)], 0.0, {}, 0.0, {}, {}};
      row.beta = fitted.model.hazards[h].beta[static_cast<std::size_t>(j)];
      row.hr = std::exp(row.beta);
      const int p = layout.beta_offset[h] + j;
      if (fitted.has_covariance() && fitted.covariance(p, p) >= 0.0) {
        const double se = std::sqrt(fitted.covariance(p, p));
        row.se = se;
        row.lo95 = std::exp(row.beta - 1.96 * se);
        row.hi95 = std::exp(row.beta + 1.96 * se);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string format_hazard_ratio(const HazardRatioRow& row, int digits) {
  if (!row.lo95 || !row.hi95) return fmt::format("{:.{}f} [unavailable]", row.hr, digits);
  return fmt::format("{:.{}f} [{:.{}f}, {:.{}f}]", row.hr, digits, *row.lo95, digits, *row.hi95, digits);
}

}  // namespace idm
