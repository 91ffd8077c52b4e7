// idmfit: command-line front end for the illness-death pipeline.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "idm/cohort.hpp"
#include "idm/csv.hpp"
#include "idm/error.hpp"
#include "idm/estimation.hpp"
#include "idm/model_io.hpp"
#include "idm/optimizer.hpp"
#include "idm/parallel.hpp"
#include "idm/probabilities.hpp"
#include "idm/report.hpp"
#include "idm/simulation.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace idm;
using idmfit::RunManifest;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kIo = 3, kMissing = 4, kNoConvergence = 5 };

struct MissingUpstream : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FitFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path require(const fs::path& path, std::string_view hint) {
  if (!fs::exists(path)) throw MissingUpstream(fmt::format("missing input '{}': {}", path.generic_string(), hint));
  return path;
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError(fmt::format("cannot create output directory '{}'{}", dir.generic_string(),
                              ec ? ": " + ec.message() : std::string()));
}

double parse_double(const std::string& s, std::string_view what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) throw ConfigError(fmt::format("{}: '{}' is not a number", what, s));
  return v;
}

std::vector<std::string> split(const std::string& s, std::string_view seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (seps.find(c) != std::string_view::npos) {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// "60:95:1" (inclusive range) or "60,65,70".
std::vector<double> parse_ages(const std::string& spec, std::string_view what) {
  std::vector<double> ages;
  if (spec.find(':') != std::string::npos) {
    const auto p = split(spec, ":");
    if (p.size() != 3) throw ConfigError(fmt::format("{}: range must be start:stop:step, got '{}'", what, spec));
    const double a = parse_double(p[0], what), b = parse_double(p[1], what), step = parse_double(p[2], what);
    if (!(step > 0.0) || b < a) throw ConfigError(fmt::format("{}: range '{}' needs start <= stop and step > 0", what, spec));
    const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    if (n > 100000) throw ConfigError(fmt::format("{}: range '{}' has too many points", what, spec));
    for (long i = 0; i <= n; ++i) ages.push_back(a + static_cast<double>(i) * step);
  } else {
    for (const auto& s : split(spec, ",")) ages.push_back(parse_double(s, what));
  }
  for (std::size_t i = 1; i < ages.size(); ++i)
    if (ages[i] < ages[i - 1]) throw ConfigError(fmt::format("{}: ages must be nondecreasing", what));
  return ages;
}

std::vector<Horizon> parse_horizons(const std::string& spec) {
  std::vector<Horizon> out;
  for (const auto& s : split(spec, ",")) {
    if (s == "ever") out.push_back(Horizon::ever());
    else {
      const double w = parse_double(s, "--horizons");
      if (w <= 0.0) throw ConfigError("--horizons: horizons must be positive");
      out.push_back(Horizon::within(w));
    }
  }
  return out;
}

// "name=value,name=value"; "baseline" is the empty profile.
CovariateProfile parse_profile(const std::string& spec) {
  CovariateProfile p;
  if (spec == "baseline" || spec.empty()) return p;
  for (const auto& item : split(spec, ",;")) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(fmt::format("--profile: '{}' is not name=value", item));
    p[item.substr(0, eq)] = parse_double(item.substr(eq + 1), "--profile");
  }
  return p;
}

PenaltyWeights parse_kappa(const std::string& spec) {
  const auto p = split(spec, ",");
  PenaltyWeights w;
  if (p.size() == 1) {
    const double k = parse_double(p[0], "--kappa");
    w = {k, k, k};
  } else if (p.size() == 3) {
    w = {parse_double(p[0], "--kappa"), parse_double(p[1], "--kappa"), parse_double(p[2], "--kappa")};
  } else {
    throw ConfigError("--kappa takes one value or three (01,02,12)");
  }
  w.validate();
  return w;
}

std::string to_text(const auto& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

// Smallest upper knot among spline hazards; nullopt for parametric models.
std::optional<double> spline_upper_limit(const IllnessDeathModel& m) {
  std::optional<double> hi;
  for (const auto& h : m.hazards)
    if (h.form == HazardForm::Spline) hi = hi ? std::min(*hi, h.grid->hi()) : h.grid->hi();
  return hi;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  std::optional<int> n;
};

void run_simulate(const SimulateArgs& a, int threads, RunManifest& m) {
  const auto text = idmfit::read_input(m, require(a.config, "pass a simulation config JSON (see FORMATS.md)"), true);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", a.config, e.what()));
  }
  if (!j.is_object()) throw ConfigError(fmt::format("{}: expected a JSON object", a.config));
  // Command-line values win over the file.
  j["seed"] = a.seed;
  if (a.n) j["n"] = *a.n;
  const auto cfg = SimulationConfig::from_json(j.dump());
  m.seed = a.seed;
  m.settings = ordered_json::parse(cfg.to_json());
  prepare_out(a.out);
  const auto sim = simulate_cohort(cfg, threads);
  idmfit::write_output(m, a.out, "exams.csv",
                       to_text([&](std::ostream& o) { write_exam_csv(o, sim.rows, sim.covariate_names); }));
  idmfit::write_output(m, a.out, "truth.csv", to_text([&](std::ostream& o) { write_truth_csv(o, sim); }));
  idmfit::write_output(m, a.out, "truth_model.json", model_to_json(sim.truth_model) + "\n");
  idmfit::write_output(m, a.out, "simulation.json", cfg.to_json() + "\n");
  std::cerr << fmt::format("simulated {} subjects, {} exam rows\n", sim.truth.size(), sim.rows.size());
}

// ---------------------------------------------------------------------------

struct BuildArgs {
  std::string exams, rules, out;
};

void run_build_cohorts(const BuildArgs& a, RunManifest& m) {
  CohortRules rules;
  if (!a.rules.empty()) rules = CohortRules::from_json(idmfit::read_input(m, require(a.rules, "pass an existing rules JSON"), true));
  m.settings = ordered_json::parse(rules.to_json());
  const auto text =
      idmfit::read_input(m, require(a.exams, "run `idmfit simulate` first or pass an exam CSV (see FORMATS.md)"));
  ExamDataset data;
  try {
    data = parse_exam_csv(text);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", a.exams, e.what()));
  }
  const auto flow = apply_flowchart(data, rules);
  std::vector<SubjectRecord> records;
  records.reserve(flow.eligible.size());
  for (const auto& s : flow.eligible) records.push_back(derive_subject_record(s, rules));

  prepare_out(a.out);
  idmfit::write_output(m, a.out, "records.csv", to_text([&](std::ostream& o) { write_records_csv(o, records); }));
  idmfit::write_output(m, a.out, "flowchart.csv",
                       to_text([&](std::ostream& o) { write_flowchart_csv(o, flow.report, rules); }));
  idmfit::write_output(m, a.out, "exclusions.csv", to_text([&](std::ostream& o) {
                         csv::write_row(o, {"subject_id", "step", "reason"});
                         for (const auto& [id, step] : flow.exclusions)
                           csv::write_row(o, {id, std::to_string(static_cast<int>(step) + 1), exclusion_label(step, rules)});
                       }));
  idmfit::write_output(m, a.out, "rejects.csv", to_text([&](std::ostream& o) { write_rejects_csv(o, data.rejects); }));
  idmfit::write_output(m, a.out, "rules.json", rules.to_json() + "\n");
  std::cerr << fmt::format("{} of {} subjects included, {} rejected for schema or coherence problems\n",
                           records.size(), flow.report.initial_n, data.rejects.size());
}

struct CohortInputs {
  std::vector<SubjectRecord> records;
  CohortRules rules;
};

CohortInputs read_cohorts(const fs::path& dir, RunManifest& m) {
  const std::string hint = "run `idmfit build-cohorts --out " + dir.generic_string() + "` first";
  CohortInputs in;
  in.rules = CohortRules::from_json(idmfit::read_input(m, require(dir / "rules.json", hint)));
  const auto path = require(dir / "records.csv", hint);
  const auto text = idmfit::read_input(m, path);
  try {
    in.records = parse_records_csv(text);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.generic_string(), e.what()));
  }
  return in;
}

// ---------------------------------------------------------------------------

struct CensusArgs {
  std::string cohorts, out;
  std::optional<int> horizon_year;
  std::optional<double> window;
};

void run_census(const CensusArgs& a, RunManifest& m) {
  auto in = read_cohorts(a.cohorts, m);
  if (a.horizon_year) in.rules.horizon_year = a.horizon_year;
  if (a.window) in.rules.inconclusive_window = *a.window;
  in.rules.validate();
  m.settings = ordered_json::parse(in.rules.to_json());
  const auto census = status_census(in.records, in.rules);
  prepare_out(a.out);
  idmfit::write_output(m, a.out, "census.csv", to_text([&](std::ostream& o) { write_census_csv(o, census); }));
  idmfit::write_output(m, a.out, "census.txt", census_text(census));
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string cohorts, out, config, covariates, stratify_by, kappa, form;
  bool select_smoothing = false;
  std::optional<int> knots;
  std::optional<int> max_iterations;
};

struct FitSettings {
  HazardForm form = HazardForm::Spline;
  int knots = 7;
  int order = 4;
  double knot_quantile = 0.99;
  PenaltyWeights kappa{1000.0, 1000.0, 1000.0};
  bool select = false;
  SmoothingOptions smoothing;
  std::vector<std::string> covariates;
  std::string stratify_by;
  int max_iterations = 500;
  bool extend_alive_censoring = false;

  ordered_json to_json() const {
    ordered_json j;
    j["form"] = form == HazardForm::Spline ? "spline" : "weibull";
    j["knots"] = knots;
    j["order"] = order;
    j["knot_quantile"] = knot_quantile;
    j["kappa"] = {{"01", kappa.kappa01}, {"02", kappa.kappa02}, {"12", kappa.kappa12}};
    j["select_smoothing"] = select ? ordered_json{{"grid", smoothing.grid}, {"sweeps", smoothing.sweeps}} : ordered_json(false);
    j["covariates"] = covariates;
    j["stratify_by"] = stratify_by.empty() ? ordered_json(nullptr) : ordered_json(stratify_by);
    j["max_iterations"] = max_iterations;
    j["extend_alive_censoring"] = extend_alive_censoring;
    return j;
  }
};

HazardForm parse_form(const std::string& s) {
  if (s == "spline") return HazardForm::Spline;
  if (s == "weibull") return HazardForm::Weibull;
  throw ConfigError(fmt::format("form '{}' is not spline or weibull", s));
}

FitSettings fit_settings_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("fit config: {}", e.what()));
  }
  if (!j.is_object()) throw ConfigError("fit config: expected an object");
  static const std::set<std::string> known = {"form",      "knots",      "order",          "knot_quantile",
                                              "kappa",     "covariates", "stratify_by",    "select_smoothing",
                                              "max_iterations", "extend_alive_censoring"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError(fmt::format("fit config: unknown key '{}'", k));
  FitSettings s;
  try {
    if (j.contains("form")) s.form = parse_form(j.at("form").get<std::string>());
    s.knots = j.value("knots", s.knots);
    s.order = j.value("order", s.order);
    s.knot_quantile = j.value("knot_quantile", s.knot_quantile);
    if (j.contains("kappa")) {
      const auto& k = j.at("kappa");
      if (k.is_number()) s.kappa = {k.get<double>(), k.get<double>(), k.get<double>()};
      else s.kappa = {k.at("01").get<double>(), k.at("02").get<double>(), k.at("12").get<double>()};
    }
    s.covariates = j.value("covariates", s.covariates);
    if (j.contains("stratify_by") && !j.at("stratify_by").is_null()) s.stratify_by = j.at("stratify_by").get<std::string>();
    if (j.contains("select_smoothing")) {
      const auto& ss = j.at("select_smoothing");
      if (ss.is_boolean()) s.select = ss.get<bool>();
      else {
        s.select = true;
        s.smoothing.grid = ss.value("grid", s.smoothing.grid);
        s.smoothing.sweeps = ss.value("sweeps", s.smoothing.sweeps);
      }
    }
    s.max_iterations = j.value("max_iterations", s.max_iterations);
    s.extend_alive_censoring = j.value("extend_alive_censoring", s.extend_alive_censoring);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("fit config: {}", e.what()));
  }
  return s;
}

struct Stratum {
  std::string label;
  std::vector<SubjectRecord> records;
};

std::vector<Stratum> stratify(const std::vector<SubjectRecord>& records, const std::string& by, const CohortRules& rules) {
  if (by.empty()) return {{"all", records}};
  std::map<double, Stratum> groups;
  for (const auto& r : records) {
    double key = 0.0;
    std::string label;
    if (by == "birth_cohort") {
      key = r.birth_cohort;
      const auto it = std::find_if(rules.cohorts.begin(), rules.cohorts.end(),
                                   [&](const CohortBounds& b) { return b.id == r.birth_cohort; });
      label = it != rules.cohorts.end() ? it->label() : fmt::format("cohort {}", r.birth_cohort);
    } else {
      const auto it = r.covariates.find(by);
      if (it == r.covariates.end())
        throw ConfigError(fmt::format("--stratify-by: subject {} has no value for '{}'", r.id, by));
      key = it->second;
      label = fmt::format("{}={:g}", by, key);
    }
    auto& g = groups[key];
    g.label = label;
    g.records.push_back(r);
  }
  std::vector<Stratum> out;
  for (auto& [k, g] : groups) out.push_back(std::move(g));
  return out;
}

void run_fit(const FitArgs& a, int threads, RunManifest& m) {
  FitSettings s;
  if (!a.config.empty()) s = fit_settings_from_json(idmfit::read_input(m, require(a.config, "pass an existing fit config"), true));
  if (!a.form.empty()) s.form = parse_form(a.form);
  if (a.knots) s.knots = *a.knots;
  if (!a.kappa.empty()) s.kappa = parse_kappa(a.kappa);
  if (a.select_smoothing) s.select = true;
  if (!a.covariates.empty()) {
    s.covariates.clear();
    for (const auto& c : split(a.covariates, ",")) s.covariates.push_back(c);
  }
  if (!a.stratify_by.empty()) s.stratify_by = a.stratify_by;
  if (a.max_iterations) s.max_iterations = *a.max_iterations;
  if (s.knots < 0 || s.order < 1 || s.max_iterations < 1) throw ConfigError("knots >= 0, order >= 1 and max_iterations >= 1 required");
  s.kappa.validate();
  std::erase(s.covariates, s.stratify_by);
  m.settings = s.to_json();

  const auto in = read_cohorts(a.cohorts, m);
  prepare_out(a.out);

  ordered_json out;
  out["format"] = "idmfit-fit";
  out["format_version"] = 1;
  out["stratify_by"] = s.stratify_by.empty() ? ordered_json(nullptr) : ordered_json(s.stratify_by);
  out["strata"] = ordered_json::array();
  std::ostringstream hr_csv;
  csv::write_row(hr_csv, {"stratum", "transition", "covariate", "beta", "se", "hr", "lo95", "hi95", "formatted"});

  for (const auto& st : stratify(in.records, s.stratify_by, in.rules)) {
    FitConfig cfg;
    cfg.form = s.form;
    cfg.n_interior_knots = s.knots;
    cfg.order = s.order;
    cfg.knot_quantile = s.knot_quantile;
    cfg.weights = s.kappa;
    cfg.covariates = s.covariates;
    cfg.likelihood.threads = threads;
    cfg.likelihood.extend_alive_censoring = s.extend_alive_censoring;
    cfg.optimizer.max_iterations = s.max_iterations;
    std::cerr << fmt::format("fitting stratum '{}' ({} subjects)\n", st.label, st.records.size());
    FittedModel fitted;
    try {
      if (s.select && s.form == HazardForm::Spline) {
        auto sel = select_smoothing(st.records, s.smoothing, cfg);
        fitted = std::move(*sel.best);
      } else {
        fitted = fit(st.records, cfg);
      }
    } catch (const ConvergenceError& e) {
      ordered_json d;
      d["stratum"] = st.label;
      d["message"] = e.what();
      d["gradient_norm"] = e.gradient_norm();
      const auto& x = e.last_iterate();
      d["last_iterate"] = std::vector<double>(x.data(), x.data() + x.size());
      d["settings"] = s.to_json();
      d["hint"] = "raise --max-iterations, increase --kappa or reduce --knots";
      const auto path = idmfit::write_output(m, a.out, "diagnostics.json", d.dump(2) + "\n");
      idmfit::write_manifest(m, a.out);
      throw FitFailure(fmt::format("stratum '{}' did not converge: {}; diagnostics in {}", st.label, e.what(),
                                   path.generic_string()));
    } catch (const NumericError& e) {
      ordered_json d;
      d["stratum"] = st.label;
      d["message"] = e.what();
      d["settings"] = s.to_json();
      const auto path = idmfit::write_output(m, a.out, "diagnostics.json", d.dump(2) + "\n");
      idmfit::write_manifest(m, a.out);
      throw FitFailure(fmt::format("stratum '{}' failed numerically: {}; diagnostics in {}", st.label, e.what(),
                                   path.generic_string()));
    }
    for (int k = 0; k < 3; ++k)
      if (fitted.weakly_identified[k])
        std::cerr << fmt::format("warning: stratum '{}': transition {} is weakly identified ({} observed events)\n",
                                 st.label, transition_label(kTransitions[k]), fitted.transition_counts[k]);
    ordered_json sj;
    sj["stratum"] = st.label;
    sj["fit"] = ordered_json::parse(fitted_to_json(fitted));
    out["strata"].push_back(sj);
    for (const auto& r : hazard_ratios(fitted)) {
      auto opt = [](const std::optional<double>& v) { return v ? csv::format_number(*v) : std::string(); };
      csv::write_row(hr_csv, {st.label, std::string(transition_label(r.transition)), r.covariate, csv::format_number(r.beta),
                              opt(r.se), csv::format_number(r.hr), opt(r.lo95), opt(r.hi95), format_hazard_ratio(r)});
    }
  }
  idmfit::write_output(m, a.out, "fit.json", out.dump(2) + "\n");
  idmfit::write_output(m, a.out, "hazard_ratios.csv", hr_csv.str());
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string fit, out;
  std::string ages = "60:95:1";
  std::string table_ages = "60:80:5";
  std::string horizons = "10,20,ever";
  std::vector<std::string> profiles;
  double base_age = 60.0;
  std::optional<double> ever_age;
  int draws = 2000;
  std::uint64_t seed = 20240601;
};

void run_predict(const PredictArgs& a, int threads, RunManifest& m) {
  const auto ages = parse_ages(a.ages, "--ages");
  const auto table_ages = parse_ages(a.table_ages, "--table-ages");
  const auto horizons = parse_horizons(a.horizons);
  std::vector<CovariateProfile> profiles;
  for (const auto& p : a.profiles) profiles.push_back(parse_profile(p));
  if (profiles.empty()) profiles.emplace_back();
  if (a.draws != 0 && a.draws < 200) throw ConfigError("--draws must be 0 (no bands) or at least 200");
  ordered_json settings;
  settings["ages"] = ages;
  settings["base_age"] = a.base_age;
  settings["table_ages"] = table_ages;
  settings["horizons"] = a.horizons;
  settings["profiles"] = ordered_json::array();
  for (const auto& p : profiles) settings["profiles"].push_back(profile_label(p));
  settings["ever_age"] = a.ever_age ? ordered_json(*a.ever_age) : ordered_json("upper knot");
  settings["draws"] = a.draws;
  m.settings = settings;
  m.seed = a.seed;

  const auto fit_path = require(fs::path(a.fit) / "fit.json", "run `idmfit fit --out " + a.fit + "` first");
  json fj;
  try {
    fj = json::parse(idmfit::read_input(m, fit_path));
    if (fj.value("format", std::string()) != "idmfit-fit") throw ConfigError("not an idmfit fit file");
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", fit_path.generic_string(), e.what()));
  }
  prepare_out(a.out);

  std::vector<CurveTable> curves;
  std::vector<ConditionalTable> tables;
  std::vector<std::string> warnings;
  const BandOptions bands{a.draws, a.seed, threads};
  for (const auto& sj : fj.at("strata")) {
    const std::string stratum = sj.at("stratum").get<std::string>();
    const FittedModel f = fitted_from_json(sj.at("fit").dump());
    const bool with_bands = a.draws > 0 && f.has_covariance();
    if (a.draws > 0 && !f.has_covariance()) warnings.push_back(fmt::format("stratum '{}': no covariance, bands omitted", stratum));
    const auto limit = spline_upper_limit(f.model);
    const double ever_age = a.ever_age.value_or(limit.value_or(100.0));
    for (const auto& profile : profiles) {
      for (auto q : {CurveQuantity::Prevalence, CurveQuantity::Risk}) {
        auto c = q == CurveQuantity::Prevalence ? prevalence_curve(f.model, profile, ages, a.base_age)
                                                : risk_curve(f.model, profile, ages, a.base_age);
        c.stratum = stratum;
        if (with_bands) confidence_bands(f, c, bands);
        for (const auto& w : c.warnings) warnings.push_back(fmt::format("stratum '{}': {}", stratum, w));
        curves.push_back(std::move(c));
      }
      auto t = conditional_table(f.model, profile, table_ages, horizons, ever_age, limit);
      t.stratum = stratum;
      if (with_bands) confidence_bands(f, t, bands);
      for (const auto& w : t.warnings) warnings.push_back(fmt::format("stratum '{}': {}", stratum, w));
      tables.push_back(std::move(t));
    }
  }
  idmfit::write_output(m, a.out, "curves.csv", to_text([&](std::ostream& o) { write_curves_csv(o, curves); }));
  idmfit::write_output(m, a.out, "conditional.csv", to_text([&](std::ostream& o) { write_conditional_csv(o, tables); }));
  std::string wtext;
  for (const auto& w : warnings) {
    std::cerr << "warning: " << w << "\n";
    wtext += w + "\n";
  }
  idmfit::write_output(m, a.out, "warnings.txt", wtext);
}

// ---------------------------------------------------------------------------

struct PlotArgs {
  std::string predict, out;
  int width = 720;
  int height = 440;
};

void run_plot(const PlotArgs& a, RunManifest& m) {
  if (a.width < 200 || a.height < 150) throw ConfigError("plot size must be at least 200 x 150");
  m.settings = {{"width", a.width}, {"height", a.height}};
  const auto path = require(fs::path(a.predict) / "curves.csv", "run `idmfit predict --out " + a.predict + "` first");
  std::vector<CurveTable> curves;
  try {
    curves = parse_curves_csv(idmfit::read_input(m, path));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.generic_string(), e.what()));
  }
  prepare_out(a.out);
  for (auto q : {CurveQuantity::Prevalence, CurveQuantity::Risk}) {
    std::vector<CurveTable> sel;
    for (const auto& c : curves)
      if (c.quantity == q) sel.push_back(c);
    if (sel.empty()) continue;
    PlotOptions po;
    po.width = a.width;
    po.height = a.height;
    po.title = fmt::format("{} given disease-free at {:g}", q == CurveQuantity::Prevalence ? "Prevalence" : "Cumulative risk",
                           sel.front().conditioning_age);
    idmfit::write_output(m, a.out, fmt::format("{}.svg", quantity_label(q)), render_svg(sel, po));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Illness-death pipeline: birth cohorts, penalized spline fits of interval-censored\n"
               "onset with death as a competing event, and prevalence / risk curves with bands."};
  app.name("idmfit");
  app.require_subcommand(1);
  app.fallthrough();
  app.get_formatter()->column_width(34);
  app.set_version_flag("--version", IDMFIT_VERSION);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads")
      ->envname("IDM_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate exam records and latent truth from known intensities");
  c_sim->add_option("--config", sim.config, "Simulation config JSON")->required();
  c_sim->add_option("--seed", sim.seed, "Random seed (required)")->required();
  c_sim->add_option("--out", sim.out, "Output directory")->required();
  c_sim->add_option("--n", sim.n, "Override the number of subjects")->check(CLI::PositiveNumber);

  BuildArgs build;
  auto* c_build = app.add_subcommand("build-cohorts", "Apply the exclusion flowchart and derive subject records");
  c_build->add_option("--exams", build.exams, "Exam CSV (one row per subject and exam)")->required();
  c_build->add_option("--rules", build.rules, "Cohort rules JSON (defaults when omitted)");
  c_build->add_option("--out", build.out, "Output directory")->required();

  CensusArgs census;
  auto* c_census = app.add_subcommand("census", "Status census by birth cohort");
  c_census->add_option("--cohorts", census.cohorts, "Output directory of build-cohorts")->required();
  c_census->add_option("--out", census.out, "Output directory")->required();
  c_census->add_option("--horizon-year", census.horizon_year, "Calendar year the census is taken at (default: rules)");
  c_census->add_option("--window", census.window, "Years without assessment before the horizon that make status inconclusive");

  FitArgs fit_args;
  auto* c_fit = app.add_subcommand("fit", "Penalized likelihood fit of the illness-death model");
  c_fit->add_option("--cohorts", fit_args.cohorts, "Output directory of build-cohorts")->required();
  c_fit->add_option("--out", fit_args.out, "Output directory")->required();
  c_fit->add_option("--config", fit_args.config, "Fit config JSON; flags below override it");
  c_fit->add_option("--covariates", fit_args.covariates, "Comma-separated covariate columns");
  c_fit->add_option("--stratify-by", fit_args.stratify_by, "birth_cohort or a covariate; one fit per value");
  c_fit->add_option("--kappa", fit_args.kappa, "Smoothing weight, or three (01,02,12) [default: 1000]");
  c_fit->add_flag("--select-smoothing", fit_args.select_smoothing, "Choose the weights by approximate cross-validation");
  c_fit->add_option("--knots", fit_args.knots, "Interior knots per intensity [default: 7]");
  c_fit->add_option("--form", fit_args.form, "spline or weibull [default: spline]");
  c_fit->add_option("--max-iterations", fit_args.max_iterations, "Optimizer iteration limit [default: 500]");

  PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "Prevalence, risk and conditional-probability tables with bands");
  c_pred->add_option("--fit", pred.fit, "Output directory of fit")->required();
  c_pred->add_option("--out", pred.out, "Output directory")->required();
  c_pred->add_option("--ages", pred.ages, "Curve ages, start:stop:step or a list")->capture_default_str();
  c_pred->add_option("--base-age", pred.base_age, "Age the curves condition on")->capture_default_str();
  c_pred->add_option("--profile", pred.profiles, "Covariate profile name=value,... (repeatable) [default: baseline]");
  c_pred->add_option("--table-ages", pred.table_ages, "Rows of the conditional table")->capture_default_str();
  c_pred->add_option("--horizons", pred.horizons, "Columns of the conditional table")->capture_default_str();
  c_pred->add_option("--ever-age", pred.ever_age, "End age of the 'ever' horizon [default: upper knot]");
  c_pred->add_option("--draws", pred.draws, "Parameter draws for the bands (0 disables)")->capture_default_str();
  c_pred->add_option("--seed", pred.seed, "Seed of the parameter draws")->capture_default_str();

  PlotArgs plot;
  auto* c_plot = app.add_subcommand("plot", "SVG figures of predicted curves");
  c_plot->add_option("--predict", plot.predict, "Output directory of predict")->required();
  c_plot->add_option("--out", plot.out, "Output directory")->required();
  c_plot->add_option("--width", plot.width, "Figure width in pixels")->capture_default_str();
  c_plot->add_option("--height", plot.height, "Figure height in pixels")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  RunManifest manifest;
  manifest.started_at = idmfit::timestamp_now();
  for (int i = 1; i < argc; ++i) manifest.arguments.emplace_back(argv[i]);
  std::string out_dir;
  try {
    if (c_sim->parsed()) {
      manifest.command = "simulate";
      out_dir = sim.out;
      run_simulate(sim, threads, manifest);
    } else if (c_build->parsed()) {
      manifest.command = "build-cohorts";
      out_dir = build.out;
      run_build_cohorts(build, manifest);
    } else if (c_census->parsed()) {
      manifest.command = "census";
      out_dir = census.out;
      run_census(census, manifest);
    } else if (c_fit->parsed()) {
      manifest.command = "fit";
      out_dir = fit_args.out;
      run_fit(fit_args, threads, manifest);
    } else if (c_pred->parsed()) {
      manifest.command = "predict";
      out_dir = pred.out;
      run_predict(pred, threads, manifest);
    } else if (c_plot->parsed()) {
      manifest.command = "plot";
      out_dir = plot.out;
      run_plot(plot, manifest);
    }
    idmfit::write_manifest(manifest, out_dir);
    return kOk;
  } catch (const MissingUpstream& e) {
    std::cerr << "idmfit: " << e.what() << "\n";
    return kMissing;
  } catch (const FitFailure& e) {
    std::cerr << "idmfit: " << e.what() << "\n";
    return kNoConvergence;
  } catch (const IoError& e) {
    std::cerr << "idmfit: I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const ConvergenceError& e) {
    std::cerr << "idmfit: " << e.what() << "\n";
    return kNoConvergence;
  } catch (const Error& e) {
    std::cerr << "idmfit: configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "idmfit: internal error: " << e.what() << "\n";
    return kInternal;
  }
}
