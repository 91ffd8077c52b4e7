// Python module idmfit._core.
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "idm/cohort.hpp"
#include "idm/error.hpp"
#include "idm/estimation.hpp"
#include "idm/hazard_basis.hpp"
#include "idm/model_io.hpp"
#include "idm/optimizer.hpp"
#include "idm/probabilities.hpp"
#include "idm/simulation.hpp"

namespace py = pybind11;
using namespace idm;

namespace {

CovariateProfile profile_of(const std::optional<CovariateProfile>& p) { return p.value_or(CovariateProfile{}); }

py::dict curve_dict(const CurveTable& c) {
  py::dict d;
  d["quantity"] = std::string(quantity_label(c.quantity));
  d["conditioning_age"] = c.conditioning_age;
  d["profile"] = profile_label(c.profile);
  d["ages"] = c.ages;
  d["estimate"] = c.estimate;
  d["lo95"] = c.lo95;
  d["hi95"] = c.hi95;
  d["band_method"] = c.band_method;
  d["warnings"] = c.warnings;
  return d;
}

CurveTable curve_of(CurveQuantity q, const IllnessDeathModel& m, const std::vector<double>& ages, double base,
                    const std::optional<CovariateProfile>& profile) {
  return q == CurveQuantity::Risk ? risk_curve(m, profile_of(profile), ages, base)
                                  : prevalence_curve(m, profile_of(profile), ages, base);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Illness-death model: spline bases, penalized fits and transition probabilities";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<KnotGrid>(m, "KnotGrid")
      .def(py::init<double, double, std::vector<double>, int>(), py::arg("lo"), py::arg("hi"), py::arg("interior"),
           py::arg("order") = 4)
      .def_static("equidistant", &KnotGrid::equidistant, py::arg("lo"), py::arg("hi"), py::arg("n_interior"),
                  py::arg("order") = 4)
      .def_property_readonly("lo", &KnotGrid::lo)
      .def_property_readonly("hi", &KnotGrid::hi)
      .def_property_readonly("order", &KnotGrid::order)
      .def_property_readonly("size", &KnotGrid::size)
      .def_property_readonly("interior", &KnotGrid::interior);

  m.def("mspline_basis", &eval_mspline_basis, py::arg("grid"), py::arg("t"), "M-spline basis values at t.");
  m.def("ispline_basis", &eval_ispline_basis, py::arg("grid"), py::arg("t"), "I-spline basis values at t.");
  m.def("penalty_matrix", &penalty_matrix, py::arg("grid"), "Integrated squared second derivatives of the M-splines.");

  py::class_<IllnessDeathModel>(m, "Model")
      .def_readonly("covariates", &IllnessDeathModel::covariates)
      .def("to_json", [](const IllnessDeathModel& x) { return model_to_json(x); })
      .def_static("from_json", [](const std::string& s) { return model_from_json(s); });

  m.def("constant_hazard_model", &constant_hazard_model, py::arg("a01"), py::arg("a02"), py::arg("a12"));

  m.def(
      "transition_probabilities",
      [](const IllnessDeathModel& model, double s, double t, const std::optional<CovariateProfile>& profile) {
        const auto z = profile_vector(model, profile_of(profile));
        const auto p = transition_probabilities(model, s, t, z);
        return py::make_tuple(p.p00, p.p01, p.p02);
      },
      py::arg("model"), py::arg("s"), py::arg("t"), py::arg("profile") = py::none(),
      "(P00, P01, P02) at t for a subject healthy at s.");

  m.def(
      "risk_curve",
      [](const IllnessDeathModel& model, const std::vector<double>& ages, double base_age,
         const std::optional<CovariateProfile>& profile) {
        return curve_dict(curve_of(CurveQuantity::Risk, model, ages, base_age, profile));
      },
      py::arg("model"), py::arg("ages"), py::arg("base_age") = 60.0, py::arg("profile") = py::none());
  m.def(
      "prevalence_curve",
      [](const IllnessDeathModel& model, const std::vector<double>& ages, double base_age,
         const std::optional<CovariateProfile>& profile) {
        return curve_dict(curve_of(CurveQuantity::Prevalence, model, ages, base_age, profile));
      },
      py::arg("model"), py::arg("ages"), py::arg("base_age") = 60.0, py::arg("profile") = py::none());
  m.def(
      "conditional_probability",
      [](const IllnessDeathModel& model, double s, std::optional<double> years, double ever_age,
         const std::optional<CovariateProfile>& profile) {
        const Horizon h = years ? Horizon::within(*years) : Horizon::ever();
        return conditional_probability(model, profile_of(profile), s, h, ever_age).value;
      },
      py::arg("model"), py::arg("s"), py::arg("years") = py::none(), py::arg("ever_age") = 110.0,
      py::arg("profile") = py::none(),
      "Probability of onset within `years` (or ever, up to ever_age) given healthy at s.");

  py::class_<FittedModel>(m, "FittedModel")
      .def_readonly("model", &FittedModel::model)
      .def_readonly("loglik", &FittedModel::loglik)
      .def_readonly("logpl", &FittedModel::logpl)
      .def_readonly("covariance", &FittedModel::covariance)
      .def_readonly("gradient_check_error", &FittedModel::gradient_check_error)
      .def_property_readonly("kappa",
                             [](const FittedModel& f) {
                               return py::make_tuple(f.weights.kappa01, f.weights.kappa02, f.weights.kappa12);
                             })
      .def("lcv", &FittedModel::lcv)
      .def("hazard_ratios",
           [](const FittedModel& f) {
             py::list out;
             for (const auto& r : hazard_ratios(f)) {
               py::dict d;
               d["transition"] = std::string(transition_label(r.transition));
               d["covariate"] = r.covariate;
               d["beta"] = r.beta;
               d["se"] = r.se;
               d["hr"] = r.hr;
               d["lo95"] = r.lo95;
               d["hi95"] = r.hi95;
               out.append(d);
             }
             return out;
           })
      .def("to_json", [](const FittedModel& f) { return fitted_to_json(f); })
      .def_static("from_json", [](const std::string& s) { return fitted_from_json(s); })
      .def(
          "curve_with_bands",
          [](const FittedModel& f, const std::string& quantity, const std::vector<double>& ages, double base_age,
             const std::optional<CovariateProfile>& profile, int draws, std::uint64_t seed) {
            auto c = curve_of(parse_quantity(quantity), f.model, ages, base_age, profile);
            confidence_bands(f, c, {draws, seed, 1});
            return curve_dict(c);
          },
          py::arg("quantity"), py::arg("ages"), py::arg("base_age") = 60.0, py::arg("profile") = py::none(),
          py::arg("draws") = 2000, py::arg("seed") = 20240601);

  m.def(
      "fit_records_csv",
      [](const std::string& text, const std::vector<std::string>& covariates, std::vector<double> kappa, int knots,
         const std::string& form) {
        const auto records = parse_records_csv(text);
        FitConfig cfg;
        cfg.covariates = covariates;
        cfg.n_interior_knots = knots;
        if (form == "weibull") cfg.form = HazardForm::Weibull;
        else if (form != "spline") throw ConfigError("form must be 'spline' or 'weibull'");
        if (kappa.size() == 1) kappa.assign(3, kappa[0]);
        if (kappa.size() != 3) throw ConfigError("kappa takes one value or three");
        cfg.weights = {kappa[0], kappa[1], kappa[2]};
        py::gil_scoped_release release;
        return fit(records, cfg);
      },
      py::arg("records_csv"), py::arg("covariates") = std::vector<std::string>{},
      py::arg("kappa") = std::vector<double>{1000.0}, py::arg("knots") = 7, py::arg("form") = "spline",
      "Penalized fit of a records.csv text (see FORMATS.md).");

  m.def(
      "simulate",
      [](const std::string& config_json) {
        const auto cfg = SimulationConfig::from_json(config_json);
        const auto sim = simulate_cohort(cfg);
        std::ostringstream exams, truth, records;
        write_exam_csv(exams, sim.rows, sim.covariate_names);
        write_truth_csv(truth, sim);
        write_records_csv(records, simulated_records(sim, cfg));
        py::dict d;
        d["exams_csv"] = exams.str();
        d["truth_csv"] = truth.str();
        d["records_csv"] = records.str();
        d["truth_model"] = sim.truth_model;
        return d;
      },
      py::arg("config_json"), "Simulates a cohort; the config must contain a seed.");
}
