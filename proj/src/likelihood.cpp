#include "idm/likelihood.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "idm/error.hpp"
#include "idm/parallel.hpp"
#include "idm/quadrature.hpp"

namespace idm {

namespace {

constexpr std::size_t kBlock = 32;
constexpr int kMaxBase = 64;

std::vector<double> model_knots(const IllnessDeathModel& model) {
  std::vector<double> knots;
  for (const auto& h : model.hazards)
    if (h.form == HazardForm::Spline)
      for (double b : h.grid->breakpoints()) knots.push_back(b);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  return knots;
}

std::vector<double> breakpoints_from(const std::vector<double>& knots, double a, double b, double max_panel) {
  std::vector<double> raw{a};
  for (double k : knots)
    if (k > a && k < b) raw.push_back(k);
  raw.push_back(b);
  std::vector<double> out{a};
  for (std::size_t i = 1; i < raw.size(); ++i) {
    const double width = raw[i] - raw[i - 1];
    const int pieces = std::max(1, static_cast<int>(std::ceil(width / max_panel - 1e-12)));
    for (int p = 1; p < pieces; ++p) out.push_back(raw[i - 1] + width * p / pieces);
    out.push_back(raw[i]);
  }
  return out;
}

struct Workspace {
  explicit Workspace(int n) : a(n), b(n), integral(n) {}
  Eigen::VectorXd a, b, integral;
};

// Evaluates one subject's log contribution and (optionally) accumulates its
// gradient. Quantities are kept on the linear scale after factoring out the
// survival from entry to the last disease-free age.
class Engine {
 public:
  Engine(const IllnessDeathModel& model, const LikelihoodOptions& opt)
      : kern_{HazardKernel(model.hazards[0]), HazardKernel(model.hazards[1]), HazardKernel(model.hazards[2])},
        layout_(ParameterLayout::of(model)),
        opt_(opt),
        knots_(model_knots(model)),
        rule_(&gauss_legendre(opt.nodes_per_span)) {
    for (int h = 0; h < 3; ++h) beta_[h] = &model.hazards[h].beta;
  }

  int n_params() const { return layout_.size; }

  double subject(const LikelihoodEvaluator::Subject& s, double* grad, Workspace& ws) const {
    try {
      return subject_impl(s, grad, ws);
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("subject {}: {}", s.rec->id, e.what()));
    } catch (const DomainError& e) {
      throw DomainError(fmt::format("subject {}: {}", s.rec->id, e.what()));
    }
  }

 private:
  double subject_impl(const LikelihoodEvaluator::Subject& s, double* grad, Workspace& ws) const {
    const auto& r = *s.rec;
    for (int h = 0; h < 3; ++h) {
      double eta = 0.0;
      for (std::size_t j = 0; j < s.z.size(); ++j) eta += (*beta_[h])[j] * s.z[j];
      eff_[h] = std::exp(eta);
    }
    z_ = &s.z;
    const double e = r.entry_age;
    const double L = r.last_healthy_age;
    double ll = 0.0;
    switch (s.pattern) {
      case ObservationPattern::HealthyCensored: {
        const double C = r.last_alive_age;
        if (opt_.extend_alive_censoring && C > L) {
          ll = log_s00(e, L, grad);
          ll += log_censored_tail(L, C, grad, ws);
        } else {
          ll = log_s00(e, L, grad);
        }
        break;
      }
      case ObservationPattern::HealthyThenDeadConclusive: {
        const double D = *r.death_age;
        ll = log_s00(e, D, grad) + log_rate(1, D, 1.0, grad);
        break;
      }
      case ObservationPattern::DeadInconclusive: {
        const double D = *r.death_age;
        if (D < L) throw OrderingError(fmt::format("subject {}: death before last disease-free age", r.id));
        ll = log_s00(e, L, grad) + log_dead_inconclusive(L, D, grad, ws);
        break;
      }
      case ObservationPattern::IllCensored:
      case ObservationPattern::IllThenDead: {
        const bool dead = s.pattern == ObservationPattern::IllThenDead;
        const double T = r.terminal_age();
        if (r.onset->exact()) {
          const double x = r.onset->lower;
          ll = log_s00(e, x, grad) + log_rate(0, x, 1.0, grad) - cum_diff(2, x, T, -1.0, grad);
        } else {
          const double R = r.onset->upper;
          if (!(R > L)) throw OrderingError(fmt::format("subject {}: empty onset interval", r.id));
          ll = log_s00(e, L, grad);
          ws.integral.setZero();
          const double I = onset_integral(L, R, T, grad ? ws.integral.data() : nullptr);
          if (!(I > 0.0) || !std::isfinite(I))
            throw NumericError(fmt::format("onset integral is {}", I));
          ll += std::log(I);
          if (grad)
            for (int p = 0; p < layout_.size; ++p) grad[p] += ws.integral[p] / I;
        }
        if (dead) ll += log_rate(2, T, 1.0, grad);
        break;
      }
    }
    if (!std::isfinite(ll)) throw NumericError(fmt::format("log-likelihood is {}", ll));
    return ll;
  }

  // e_h * (C_h(b) - C_h(a)); adds coef * gradient.
  double cum_diff(int h, double a, double b, double coef, double* grad) const {
    const int nb = layout_.base_size[h];
    double ga[kMaxBase], gb[kMaxBase];
    const double ca = kern_[h].cum(a, grad ? ga : nullptr);
    const double cb = kern_[h].cum(b, grad ? gb : nullptr);
    const double d = eff_[h] * (cb - ca);
    if (grad) {
      double* base = grad + layout_.base_offset[h];
      for (int i = 0; i < nb; ++i) base[i] += coef * eff_[h] * (gb[i] - ga[i]);
      double* beta = grad + layout_.beta_offset[h];
      for (std::size_t j = 0; j < z_->size(); ++j) beta[j] += coef * d * (*z_)[j];
    }
    return d;
  }

  double log_s00(double a, double b, double* grad) const {
    return -cum_diff(0, a, b, -1.0, grad) - cum_diff(1, a, b, -1.0, grad);
  }

  // log alpha_h(t); adds coef * gradient.
  double log_rate(int h, double t, double coef, double* grad) const {
    const int nb = layout_.base_size[h];
    double g[kMaxBase];
    const double a = kern_[h].rate(t, grad ? g : nullptr);
    if (!(a > 0.0) || !std::isfinite(a))
      throw NumericError(fmt::format("intensity {} is {} at age {}", transition_label(kTransitions[h]), a, t));
    if (grad) {
      double* base = grad + layout_.base_offset[h];
      for (int i = 0; i < nb; ++i) base[i] += coef * g[i] / a;
      double* beta = grad + layout_.beta_offset[h];
      for (std::size_t j = 0; j < z_->size(); ++j) beta[j] += coef * (*z_)[j];
    }
    return std::log(eff_[h]) + std::log(a);
  }

  // integral_L^R S00(L,u) alpha01(u) S11(u,T) du; writes its gradient into gI
  // (not the gradient of the log).
  double onset_integral(double L, double R, double T, double* gI) const {
    if (R <= L) return 0.0;
    const auto bp = breakpoints_from(knots_, L, R, opt_.max_panel);
    const auto& rule = *rule_;
    const int n01 = layout_.base_size[0], n02 = layout_.base_size[1], n12 = layout_.base_size[2];
    double g01L[kMaxBase], g02L[kMaxBase], g12T[kMaxBase];
    double g01[kMaxBase], g02[kMaxBase], g12[kMaxBase], ga01[kMaxBase];
    const double c01L = kern_[0].cum(L, gI ? g01L : nullptr);
    const double c02L = kern_[1].cum(L, gI ? g02L : nullptr);
    const double c12T = kern_[2].cum(T, gI ? g12T : nullptr);
    double total = 0.0, sb01 = 0.0, sb02 = 0.0, sb12 = 0.0;
    double* b01 = gI ? gI + layout_.base_offset[0] : nullptr;
    double* b02 = gI ? gI + layout_.base_offset[1] : nullptr;
    double* b12 = gI ? gI + layout_.base_offset[2] : nullptr;
    for (std::size_t p = 1; p < bp.size(); ++p) {
      const double mid = 0.5 * (bp[p - 1] + bp[p]), half = 0.5 * (bp[p] - bp[p - 1]);
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double u = mid + half * rule.nodes[q];
        const double w = half * rule.weights[q];
        const double A01 = eff_[0] * (kern_[0].cum(u, gI ? g01 : nullptr) - c01L);
        const double A02 = eff_[1] * (kern_[1].cum(u, gI ? g02 : nullptr) - c02L);
        const double A12 = eff_[2] * (c12T - kern_[2].cum(u, gI ? g12 : nullptr));
        const double a01 = kern_[0].rate(u, gI ? ga01 : nullptr);
        const double E = std::exp(-A01 - A02 - A12);
        const double f = E * eff_[0] * a01;
        total += w * f;
        if (gI) {
          const double wf = w * f;
          for (int i = 0; i < n01; ++i) b01[i] += -wf * eff_[0] * g01[i] + w * E * eff_[0] * ga01[i];
          for (int i = 0; i < n02; ++i) b02[i] += -wf * eff_[1] * g02[i];
          for (int i = 0; i < n12; ++i) b12[i] += wf * eff_[2] * g12[i];
          sb01 += wf * (1.0 - A01);
          sb02 -= wf * A02;
          sb12 -= wf * A12;
        }
      }
    }
    if (gI) {
      for (int i = 0; i < n01; ++i) b01[i] += eff_[0] * g01L[i] * total;
      for (int i = 0; i < n02; ++i) b02[i] += eff_[1] * g02L[i] * total;
      for (int i = 0; i < n12; ++i) b12[i] -= eff_[2] * g12T[i] * total;
      for (std::size_t j = 0; j < z_->size(); ++j) {
        gI[layout_.beta_offset[0] + j] += sb01 * (*z_)[j];
        gI[layout_.beta_offset[1] + j] += sb02 * (*z_)[j];
        gI[layout_.beta_offset[2] + j] += sb12 * (*z_)[j];
      }
    }
    return total;
  }

  // log[ S00(L,D) alpha02(D) + alpha12(D) * integral_L^D S00 alpha01 S11(.,D) ].
  double log_dead_inconclusive(double L, double D, double* grad, Workspace& ws) const {
    double* gA = nullptr;
    double* gB = nullptr;
    double* gI = nullptr;
    if (grad) {
      ws.a.setZero();
      ws.b.setZero();
      ws.integral.setZero();
      gA = ws.a.data();
      gB = ws.b.data();
      gI = ws.integral.data();
    }
    const double log_direct = log_s00(L, D, gA) + log_rate(1, D, 1.0, gA);
    const double direct = std::exp(log_direct);
    const double I = onset_integral(L, D, D, gI);
    const double log_a12 = log_rate(2, D, 1.0, gB);
    const double a12 = std::exp(log_a12);
    const double V = direct + a12 * I;
    if (!(V > 0.0) || !std::isfinite(V)) throw NumericError(fmt::format("dead-inconclusive term is {}", V));
    if (grad)
      for (int p = 0; p < layout_.size; ++p) grad[p] += (direct * gA[p] + a12 * gI[p] + a12 * I * gB[p]) / V;
    return std::log(V);
  }

  // log[ S00(L,C) + integral_L^C S00 alpha01 S11(.,C) ] for the extended censoring rule.
  double log_censored_tail(double L, double C, double* grad, Workspace& ws) const {
    double* gA = nullptr;
    double* gI = nullptr;
    if (grad) {
      ws.a.setZero();
      ws.integral.setZero();
      gA = ws.a.data();
      gI = ws.integral.data();
    }
    const double stay = std::exp(log_s00(L, C, gA));
    const double I = onset_integral(L, C, C, gI);
    const double V = stay + I;
    if (!(V > 0.0) || !std::isfinite(V)) throw NumericError(fmt::format("censoring term is {}", V));
    if (grad)
      for (int p = 0; p < layout_.size; ++p) grad[p] += (stay * gA[p] + gI[p]) / V;
    return std::log(V);
  }

  std::array<HazardKernel, 3> kern_;
  std::array<const std::vector<double>*, 3> beta_{};
  ParameterLayout layout_;
  LikelihoodOptions opt_;
  std::vector<double> knots_;
  const GaussLegendreRule* rule_;
  // per-subject state
  mutable std::array<double, 3> eff_{};
  mutable const std::vector<double>* z_ = nullptr;
};

}  // namespace

std::vector<double> integration_breakpoints(const IllnessDeathModel& model, double a, double b,
                                            double max_panel) {
  if (a > b) throw OrderingError(fmt::format("integration range [{}, {}] reversed", a, b));
  return breakpoints_from(model_knots(model), a, b, max_panel);
}

LikelihoodEvaluator::LikelihoodEvaluator(std::span<const SubjectRecord> records,
                                         std::vector<std::string> covariates, LikelihoodOptions opt)
    : covariates_(std::move(covariates)), opt_(opt) {
  IllnessDeathModel names_only;
  names_only.covariates = covariates_;
  subjects_.reserve(records.size());
  for (const auto& r : records) {
    r.validate();
    subjects_.push_back({&r, classify_pattern(r), names_only.design_row(r)});
  }
}

double LikelihoodEvaluator::operator()(const IllnessDeathModel& model, Eigen::VectorXd* grad) const {
  model.validate();
  if (model.covariates != covariates_)
    throw DimensionError("model covariates differ from the evaluator's covariate list");
  const int np = ParameterLayout::of(model).size;
  if (grad) {
    struct Partial {
      double value = 0.0;
      Eigen::VectorXd grad;
    };
    Partial zero{0.0, Eigen::VectorXd::Zero(np)};
    auto result = deterministic_reduce(
        subjects_.size(), kBlock, opt_.threads, zero,
        [&](std::size_t b, std::size_t e) {
          Engine engine(model, opt_);
          Workspace ws(np);
          Partial p{0.0, Eigen::VectorXd::Zero(np)};
          for (std::size_t i = b; i < e; ++i) p.value += engine.subject(subjects_[i], p.grad.data(), ws);
          return p;
        },
        [](Partial a, const Partial& b) {
          a.value += b.value;
          a.grad += b.grad;
          return a;
        });
    *grad = std::move(result.grad);
    return result.value;
  }
  return deterministic_reduce(
      subjects_.size(), kBlock, opt_.threads, 0.0,
      [&](std::size_t b, std::size_t e) {
        Engine engine(model, opt_);
        Workspace ws(np);
        double sum = 0.0;
        for (std::size_t i = b; i < e; ++i) sum += engine.subject(subjects_[i], nullptr, ws);
        return sum;
      },
      [](double a, double b) { return a + b; });
}

std::vector<double> LikelihoodEvaluator::contributions(const IllnessDeathModel& model) const {
  model.validate();
  Engine engine(model, opt_);
  Workspace ws(ParameterLayout::of(model).size);
  std::vector<double> out;
  out.reserve(subjects_.size());
  for (const auto& s : subjects_) out.push_back(engine.subject(s, nullptr, ws));
  return out;
}

double log_likelihood_contribution(const SubjectRecord& rec, const IllnessDeathModel& model,
                                   const LikelihoodOptions& opt) {
  LikelihoodEvaluator eval(std::span(&rec, 1), model.covariates, opt);
  return eval(model);
}

double total_log_likelihood(std::span<const SubjectRecord> records, const IllnessDeathModel& model,
                            const LikelihoodOptions& opt) {
  LikelihoodEvaluator eval(records, model.covariates, opt);
  return eval(model);
}

}  // namespace idm
