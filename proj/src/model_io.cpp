#include "idm/model_io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "idm/error.hpp"

namespace idm {

namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

ojson model_json(const IllnessDeathModel& m) {
  ojson j;
  j["covariates"] = m.covariates;
  ojson hazards = ojson::array();
  for (const auto& h : m.hazards) {
    ojson hj;
    hj["transition"] = transition_label(h.transition);
    hj["form"] = h.form == HazardForm::Spline ? "spline" : "weibull";
    if (h.form == HazardForm::Spline) {
      hj["lo"] = h.grid->lo();
      hj["hi"] = h.grid->hi();
      hj["order"] = h.grid->order();
      hj["interior_knots"] = h.grid->interior();
    }
    hj["theta"] = h.theta;
    hj["beta"] = h.beta;
    hazards.push_back(hj);
  }
  j["hazards"] = hazards;
  return j;
}

IllnessDeathModel model_of(const json& j) {
  IllnessDeathModel m;
  m.covariates = j.at("covariates").get<std::vector<std::string>>();
  const auto& hs = j.at("hazards");
  if (!hs.is_array() || hs.size() != 3) throw ConfigError("model JSON: expected three hazards");
  for (int k = 0; k < 3; ++k) {
    const auto& h = hs[k];
    const Transition tr = parse_transition(h.at("transition").get<std::string>());
    if (tr != kTransitions[k]) throw ConfigError("model JSON: hazards must be listed as 01, 02, 12");
    auto theta = h.at("theta").get<std::vector<double>>();
    auto beta = h.at("beta").get<std::vector<double>>();
    const auto form = h.at("form").get<std::string>();
    if (form == "spline") {
      KnotGrid grid(h.at("lo").get<double>(), h.at("hi").get<double>(), h.at("interior_knots").get<std::vector<double>>(),
                    h.at("order").get<int>());
      m.hazards[k] = HazardSpec::spline(tr, std::move(grid), std::move(theta), std::move(beta));
    } else if (form == "weibull") {
      if (theta.size() != 2) throw ConfigError("model JSON: weibull theta must be [shape, scale]");
      m.hazards[k] = HazardSpec::weibull(tr, theta[0], theta[1], std::move(beta));
    } else {
      throw ConfigError(fmt::format("model JSON: unknown hazard form '{}'", form));
    }
  }
  m.validate();
  return m;
}

template <class F>
auto guarded(std::string_view what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{} JSON: {}", what, e.what()));
  }
}

json parse(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{} JSON: {}", what, e.what()));
  }
}

}  // namespace

std::string model_to_json(const IllnessDeathModel& model, int indent) { return model_json(model).dump(indent); }

IllnessDeathModel model_from_json(std::string_view text) {
  const auto j = parse(text, "model");
  return guarded("model", [&] { return model_of(j); });
}

std::string fitted_to_json(const FittedModel& f, int indent) {
  ojson j;
  j["model"] = model_json(f.model);
  j["smoothing"] = {{"01", f.weights.kappa01}, {"02", f.weights.kappa02}, {"12", f.weights.kappa12}};
  const auto names = f.parameter_names();
  const auto x = pack_parameters(f.model);
  j["parameter_names"] = names;
  j["parameters"] = std::vector<double>(x.data(), x.data() + x.size());
  ojson cov = ojson::array();
  for (Eigen::Index r = 0; r < f.covariance.rows(); ++r) {
    std::vector<double> row(f.covariance.cols());
    for (Eigen::Index c = 0; c < f.covariance.cols(); ++c) row[c] = f.covariance(r, c);
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["covariance_pseudo_inverse"] = f.covariance_pseudo_inverse;
  j["loglik"] = f.loglik;
  j["logpl"] = f.logpl;
  j["lcv"] = f.information_loglik.size() > 0 ? ojson(f.lcv()) : ojson(nullptr);
  j["n_subjects"] = f.n_subjects;
  j["transition_counts"] = f.transition_counts;
  j["weakly_identified"] = f.weakly_identified;
  j["convergence"] = {{"iterations", f.convergence.iterations},
                      {"gradient_norm", f.convergence.gradient_norm},
                      {"status", f.convergence.status}};
  j["gradient_check_error"] = f.gradient_check_error;
  ojson hrs = ojson::array();
  for (const auto& r : hazard_ratios(f)) {
    ojson h;
    h["transition"] = transition_label(r.transition);
    h["covariate"] = r.covariate;
    h["beta"] = r.beta;
    h["se"] = r.se ? ojson(*r.se) : ojson(nullptr);
    h["hr"] = r.hr;
    h["lo95"] = r.lo95 ? ojson(*r.lo95) : ojson(nullptr);
    h["hi95"] = r.hi95 ? ojson(*r.hi95) : ojson(nullptr);
    hrs.push_back(h);
  }
  j["hazard_ratios"] = hrs;
  return j.dump(indent);
}

FittedModel fitted_from_json(std::string_view text) {
  const auto j = parse(text, "fit");
  return guarded("fit", [&] {
    FittedModel f;
    f.model = model_of(j.at("model"));
    const auto& s = j.at("smoothing");
    f.weights = {s.at("01").get<double>(), s.at("02").get<double>(), s.at("12").get<double>()};
    const auto x = j.at("parameters").get<std::vector<double>>();
    const int p = ParameterLayout::of(f.model).size;
    if (static_cast<int>(x.size()) != p)
      throw ConfigError(fmt::format("fit JSON: {} parameters for a model with {}", x.size(), p));
    const auto& cov = j.at("covariance");
    if (!cov.empty()) {
      if (static_cast<int>(cov.size()) != p) throw ConfigError("fit JSON: covariance does not match the parameters");
      f.covariance.resize(p, p);
      for (int r = 0; r < p; ++r) {
        const auto row = cov[r].get<std::vector<double>>();
        if (static_cast<int>(row.size()) != p) throw ConfigError("fit JSON: covariance is not square");
        for (int c = 0; c < p; ++c) f.covariance(r, c) = row[c];
      }
    }
    f.covariance_pseudo_inverse = j.value("covariance_pseudo_inverse", false);
    f.loglik = j.at("loglik").get<double>();
    f.logpl = j.at("logpl").get<double>();
    f.n_subjects = j.value("n_subjects", 0);
    if (j.contains("transition_counts")) f.transition_counts = j.at("transition_counts").get<std::array<int, 3>>();
    if (j.contains("weakly_identified")) f.weakly_identified = j.at("weakly_identified").get<std::array<bool, 3>>();
    if (j.contains("convergence")) {
      const auto& c = j.at("convergence");
      f.convergence = {c.value("iterations", 0), c.value("gradient_norm", 0.0), c.value("status", std::string())};
    }
    f.gradient_check_error = j.value("gradient_check_error", 0.0);
    return f;
  });
}

}  // namespace idm
