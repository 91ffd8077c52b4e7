// Acceptance suite: one PASS/FAIL line per headline criterion.
//
//   idm_acceptance [--only NAME]... [--idmfit PATH] [--report FILE]
//
// Exit status is 0 only when every selected criterion passes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <unistd.h>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "idm/cohort.hpp"
#include "idm/csv.hpp"
#include "idm/estimation.hpp"
#include "idm/hazard_basis.hpp"
#include "idm/likelihood.hpp"
#include "idm/optimizer.hpp"
#include "idm/parallel.hpp"
#include "idm/probabilities.hpp"
#include "idm/quadrature.hpp"
#include "idm/simulation.hpp"

namespace fs = std::filesystem;
using namespace idm;
using Clock = std::chrono::steady_clock;

namespace {

// Smoothing weights (01, 02, 12) for the simulation criteria. They were chosen
// once by LCV on a separate replicate (simulation seed 777) and then held fixed.
constexpr PenaltyWeights kSimulationKappa{1e5, 10.0, 1e5};
constexpr int kSimulationKnots = 7;

struct Outcome {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
};

struct Settings {
  fs::path source_dir = IDM_SOURCE_DIR;
  std::string idmfit;
  int threads = 1;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<double> age_grid(double lo, double hi) {
  std::vector<double> a;
  for (double t = lo; t <= hi + 1e-9; t += 1.0) a.push_back(t);
  return a;
}

SimulationConfig load_scenario(const Settings& s, const std::string& name) {
  return SimulationConfig::from_json(csv::read_text((s.source_dir / "data" / "scenarios" / name).string()));
}

FitConfig simulation_fit_config(int threads) {
  FitConfig fc;
  fc.covariates = {"x"};
  fc.n_interior_knots = kSimulationKnots;
  fc.weights = kSimulationKappa;
  fc.likelihood.threads = threads;
  return fc;
}

// ---------------------------------------------------------------------------
// Closed forms for constant intensities a (0->1), b (0->2), c (1->2) over a
// window of w years, derived by hand:
//   P00 = e^{-(a+b)w}
//   P01 = a/(a+b-c) (e^{-cw} - e^{-(a+b)w})
//   risk = a/(a+b) (1 - e^{-(a+b)w})
//   prevalence = P01 / (P00 + P01)

Outcome closed_form(const Settings&) {
  const auto t0 = Clock::now();
  const double a = 0.04, b = 0.02, c = 0.10, w = 10.0;
  const double p00 = std::exp(-(a + b) * w);
  const double p01 = a / (a + b - c) * (std::exp(-c * w) - std::exp(-(a + b) * w));
  const double risk = a / (a + b) * (1.0 - std::exp(-(a + b) * w));
  const double prev = p01 / (p00 + p01);

  const auto m = constant_hazard_model(a, b, c);
  const auto tp = transition_probabilities(m, 60.0, 70.0);
  const std::vector<double> at70{70.0};
  const double r = risk_curve(m, {}, at70).estimate[0];
  const double pv = prevalence_curve(m, {}, at70).estimate[0];
  const double secs = seconds_since(t0);

  auto rel = [](double x, double ref) { return std::abs(x - ref) / std::abs(ref); };
  const double worst = std::max({rel(tp.p00, p00), rel(tp.p01, p01), rel(r, risk), rel(pv, prev)});
  Outcome o{"closed-form"};
  o.pass = worst <= 1e-6 && secs < 1.0;
  o.seconds = secs;
  o.detail = fmt::format("P00={:.4f} P01={:.4f} risk={:.4f} prev={:.4f}; max rel err {:.2e}; {:.3f} s", tp.p00, tp.p01,
                         r, pv, worst, secs);
  o.metrics = {{"p00", tp.p00}, {"p01", tp.p01}, {"risk70", r}, {"prevalence70", pv}, {"max_rel_error", worst}};
  return o;
}

// ---------------------------------------------------------------------------
// Conservation: P02 is integrated on its own from the flow equation
//   P02(s,t) = int_s^t P00(s,u) a02(u) + P01(s,u) a12(u) du
// rather than taken as the complement, then P00 + P01 + P02 is compared with 1.

std::vector<FittedModel> conservation_models(const Settings& s) {
  auto cfg = load_scenario(s, "recovery.json");
  cfg.n = 1000;
  std::vector<FittedModel> out;
  for (std::uint64_t k = 0; k < 2; ++k) {
    auto c = cfg;
    c.seed = item_seed(*cfg.seed, 1000 + k);
    const auto sim = simulate_cohort(c, s.threads);
    out.push_back(fit(simulated_records(sim, c), simulation_fit_config(s.threads)));
  }
  return out;
}

double p02_by_flow(const IllnessDeathModel& m, std::span<const double> z, double s, double t) {
  const auto bp = integration_breakpoints(m, s, t, 1.0);
  std::vector<double> x, w;
  composite_rule(bp, 12, x, w);
  double sum = 0.0;
  for (std::size_t q = 0; q < x.size(); ++q) {
    const auto p = transition_probabilities(m, s, x[q], z);
    sum += w[q] * (p.p00 * intensity(m.hazards[1], x[q], z) + p.p01 * intensity(m.hazards[2], x[q], z));
  }
  return sum;
}

Outcome conservation(const Settings& s) {
  const auto t0 = Clock::now();
  const auto models = conservation_models(s);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> age(60.0, 100.0);
  std::normal_distribution<double> zd(0.0, 1.0);
  double worst_sum = 0.0, worst_ck = 0.0;
  int pairs = 0;
  for (const auto& f : models) {
    for (int i = 0; i < 500; ++i, ++pairs) {
      double a = age(rng), b = age(rng);
      if (a > b) std::swap(a, b);
      const std::vector<double> z{zd(rng)};
      const auto p = transition_probabilities(f.model, a, b, z);
      worst_sum = std::max(worst_sum, std::abs(p.p00 + p.p01 + p02_by_flow(f.model, z, a, b) - 1.0));

      double v[3] = {age(rng), age(rng), age(rng)};
      std::sort(v, v + 3);
      const auto st = transition_probabilities(f.model, v[0], v[1], z);
      const auto tu = transition_probabilities(f.model, v[1], v[2], z);
      const auto su = transition_probabilities(f.model, v[0], v[2], z);
      const double ck01 = st.p00 * tu.p01 + st.p01 * ill_survival(f.model, v[1], v[2], z);
      worst_ck = std::max({worst_ck, std::abs(su.p01 - ck01), std::abs(su.p00 - st.p00 * tu.p00)});
    }
  }
  Outcome o{"conservation"};
  o.seconds = seconds_since(t0);
  o.pass = worst_sum <= 1e-8 && worst_ck <= 1e-6;
  o.detail = fmt::format("{} pairs on {} fitted spline models: max |P00+P01+P02-1| {:.2e}, max Chapman-Kolmogorov gap {:.2e}",
                         pairs, models.size(), worst_sum, worst_ck);
  o.metrics = {{"pairs", pairs}, {"max_sum_error", worst_sum}, {"max_ck_error", worst_ck}};
  return o;
}

// ---------------------------------------------------------------------------

Outcome gradient(const Settings& s) {
  auto cfg = load_scenario(s, "recovery.json");
  cfg.n = 500;
  cfg.seed = item_seed(*cfg.seed, 2000);
  const auto sim = simulate_cohort(cfg, s.threads);
  const auto records = simulated_records(sim, cfg);
  const auto grid = default_knot_grid(records, kSimulationKnots);
  IllnessDeathModel shape;
  shape.covariates = {"x"};
  for (int h = 0; h < 3; ++h) {
    const auto& truth = sim.truth_model.hazards[h];
    shape.hazards[h] = HazardSpec::spline(kTransitions[h], grid, project_weibull(grid, truth.theta[0], truth.theta[1]),
                                          {0.0});
  }
  LikelihoodOptions lo;
  lo.threads = s.threads;
  const PenalizedObjective objective(records, shape, {1e3, 1e3, 1e3}, lo);
  const Eigen::VectorXd centre = pack_parameters(shape);

  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int point = 0; point < 10; ++point) {
    Eigen::VectorXd x = centre;
    for (int i = 0; i < x.size(); ++i) x[i] += 0.25 * nd(rng) * std::max(std::abs(centre[i]), 0.1);
    Eigen::VectorXd g;
    objective(x, &g);
    Eigen::VectorXd fd(x.size());
    for (int i = 0; i < x.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
      Eigen::VectorXd up = x, dn = x;
      up[i] += h;
      dn[i] -= h;
      fd[i] = (objective(up) - objective(dn)) / (2.0 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-12));
  }
  Outcome o{"gradient"};
  o.seconds = seconds_since(t0);
  o.pass = worst <= 1e-4 && o.seconds < 10.0;
  o.detail = fmt::format("10 random points, {} parameters, {} subjects: max relative error {:.2e}; {:.1f} s",
                         centre.size(), records.size(), worst, o.seconds);
  o.metrics = {{"max_rel_error", worst}, {"parameters", centre.size()}};
  return o;
}

// ---------------------------------------------------------------------------

Outcome recovery(const Settings& s) {
  const auto t0 = Clock::now();
  const auto cfg = load_scenario(s, "recovery.json");
  const auto ages = age_grid(60.0, 95.0);
  const int reps = 20;
  std::vector<double> mae;
  std::vector<double> hrs;
  int hits = 0, failures = 0;
  for (int r = 0; r < reps; ++r) {
    auto c = cfg;
    c.seed = item_seed(*cfg.seed, static_cast<std::uint64_t>(r));
    const auto sim = simulate_cohort(c, s.threads);
    const auto records = simulated_records(sim, c);
    try {
      const auto f = fit(records, simulation_fit_config(s.threads));
      const auto rep = evaluate_recovery(f, sim.truth_model, ages);
      mae.push_back(rep.risk.mean_abs);
      for (const auto& h : rep.hazard_ratios)
        if (h.transition == Transition::HealthyToIll && h.covariate == "x") {
          hrs.push_back(h.estimated_hr);
          if (h.estimated_hr >= 1.8 && h.estimated_hr <= 2.2) ++hits;
        }
    } catch (const Error& e) {
      ++failures;
      std::cerr << fmt::format("recovery replicate {}: {}\n", r, e.what());
    }
    std::cerr << fmt::format("  recovery {}/{}: MAE {:.4f}, HR01 {:.3f}\n", r + 1, reps, mae.empty() ? NAN : mae.back(),
                             hrs.empty() ? NAN : hrs.back());
  }
  const double mean_mae = mae.empty() ? INFINITY : std::accumulate(mae.begin(), mae.end(), 0.0) / mae.size();
  const double worst_mae = mae.empty() ? INFINITY : *std::max_element(mae.begin(), mae.end());
  const double rate = static_cast<double>(hits) / reps;
  Outcome o{"recovery"};
  o.seconds = seconds_since(t0);
  o.pass = failures == 0 && mean_mae <= 0.03 && rate >= 0.95 && o.seconds < 1800.0;
  o.detail = fmt::format("{} replicates: risk MAE over 60-95 mean {:.4f} (worst {:.4f}); HR01 in [1.8, 2.2] in {}/{} "
                         "(range {:.3f}-{:.3f}); {} failed fits; {:.0f} s",
                         reps, mean_mae, worst_mae, hits, reps, hrs.empty() ? NAN : *std::min_element(hrs.begin(), hrs.end()),
                         hrs.empty() ? NAN : *std::max_element(hrs.begin(), hrs.end()), failures, o.seconds);
  o.metrics = {{"replicates", reps}, {"mean_mae", mean_mae}, {"worst_mae", worst_mae}, {"hr_hits", hits},
               {"hr_estimates", hrs},  {"mae", mae},           {"failed_fits", failures}};
  return o;
}

// ---------------------------------------------------------------------------
// Without post-mortem reviews, subjects who died undiagnosed count as
// dementia-free at their last visit, so censoring them at death undercounts
// onsets. The naive curve is a population average, so it is compared with the
// truth averaged over the cohort's covariate values; the multistate fit is
// averaged over the same values.

double marginal_risk(const IllnessDeathModel& m, std::span<const SubjectRecord> records, double age) {
  const std::vector<double> ages{age};
  double sum = 0.0;
  for (const auto& r : records) sum += risk_curve(m, {{"x", r.covariates.at("x")}}, ages).estimate[0];
  return sum / static_cast<double>(records.size());
}

Outcome mdid(const Settings& s) {
  const auto t0 = Clock::now();
  const auto cfg = load_scenario(s, "mdid.json");
  const int reps = 50;
  const std::vector<double> ages{60.0, 85.0};
  int under = 0, failures = 0;
  std::vector<double> naive_err, ms_err;
  for (int r = 0; r < reps; ++r) {
    auto c = cfg;
    c.seed = item_seed(*cfg.seed, static_cast<std::uint64_t>(r));
    const auto sim = simulate_cohort(c, s.threads);
    const auto records = simulated_records(sim, c);
    const double truth = marginal_risk(sim.truth_model, records, 85.0);
    const double naive = naive_risk_estimate(records, ages).estimate[1];
    naive_err.push_back(naive - truth);
    if (naive < truth) ++under;
    try {
      const auto f = fit(records, simulation_fit_config(s.threads));
      ms_err.push_back(marginal_risk(f.model, records, 85.0) - truth);
    } catch (const Error& e) {
      ++failures;
      std::cerr << fmt::format("mdid replicate {}: {}\n", r, e.what());
    }
    std::cerr << fmt::format("  mdid {}/{}: truth {:.4f}, naive {:+.4f}, multistate {:+.4f}\n", r + 1, reps, truth,
                             naive_err.back(), ms_err.empty() ? NAN : ms_err.back());
  }
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? NAN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const double rate = static_cast<double>(under) / reps;
  const double centre = mean(ms_err);
  Outcome o{"mdid-bias"};
  o.seconds = seconds_since(t0);
  o.pass = failures == 0 && rate >= 0.90 && std::abs(centre) <= 0.02;
  o.detail = fmt::format("{} replicates, no post-mortem reviews: naive below truth at 85 in {}/{} (mean error {:+.4f}); "
                         "multistate mean signed error {:+.4f}; {} failed fits; {:.0f} s",
                         reps, under, reps, mean(naive_err), centre, failures, o.seconds);
  o.metrics = {{"replicates", reps},           {"naive_under", under},      {"naive_mean_error", mean(naive_err)},
               {"multistate_mean_error", centre}, {"naive_errors", naive_err}, {"multistate_errors", ms_err},
               {"failed_fits", failures}};
  return o;
}

// ---------------------------------------------------------------------------

Outcome fixtures(const Settings& s) {
  const auto t0 = Clock::now();
  const fs::path dir = s.source_dir / "tests" / "fixtures";
  auto slurp = [](const fs::path& p) { return csv::read_text(p.string()); };
  std::vector<std::string> problems;

  {
    const CohortRules rules;
    const auto data = read_exam_csv((dir / "flowchart_exams.csv").string());
    const auto res = apply_flowchart(data, rules);
    std::ostringstream out;
    write_flowchart_csv(out, res.report, rules);
    if (out.str() != slurp(dir / "flowchart_expected.csv")) problems.push_back("flowchart counts differ");
    if (res.report.initial_n != res.report.total_excluded() + res.report.total_included())
      problems.push_back("flowchart does not conserve subjects");
  }
  {
    const auto rules = CohortRules::from_json(slurp(dir / "census_rules.json"));
    const auto data = read_exam_csv((dir / "census_exams.csv").string());
    const auto res = apply_flowchart(data, rules);
    std::vector<SubjectRecord> recs;
    for (const auto& subj : res.eligible) recs.push_back(derive_subject_record(subj, rules));
    std::ostringstream out;
    write_census_csv(out, status_census(recs, rules));
    if (out.str() != slurp(dir / "census_expected.csv")) problems.push_back("census counts differ");
  }
  {
    // 731 diagnosed, 662 of whom died: the subgroup share is of the diagnosed.
    std::vector<SubjectRecord> recs(800);
    for (int i = 0; i < 800; ++i) {
      auto& r = recs[i];
      r.id = std::to_string(i);
      r.birth_year = 1930;
      r.birth_cohort = 2;
      r.entry_age = 60;
      r.last_healthy_age = 66;
      r.last_assessment_age = 68;
      r.last_alive_age = 75;
      if (i < 731) r.onset = Onset::interval(66, 68);
      if (i < 662) r.death_age = 75;
    }
    std::ostringstream out;
    write_census_csv(out, status_census(recs, CohortRules{}));
    if (percent_text(662, 731) != "90.6" ||
        out.str().find("subgroup of diagnosed),0,0.0,662,90.6") == std::string::npos)
      problems.push_back("subgroup percentage is not 662/731 = 90.6");
  }
  Outcome o{"fixtures"};
  o.seconds = seconds_since(t0);
  o.pass = problems.empty();
  o.detail = problems.empty() ? "flowchart and census fixtures match exactly; 662/731 -> 90.6%"
                              : fmt::format("{}", fmt::join(problems, "; "));
  return o;
}

// ---------------------------------------------------------------------------

Outcome splines(const Settings&) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double pou = 0.0, ends = 0.0, linear = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int order = 2 + rep % 4;
    const double lo = 55.0 + 10.0 * u(rng), hi = lo + 30.0 + 15.0 * u(rng);
    std::vector<double> interior;
    for (int i = 0; i < 3 + rep % 6; ++i) interior.push_back(lo + (hi - lo) * (0.05 + 0.9 * u(rng)));
    std::sort(interior.begin(), interior.end());
    const KnotGrid g(lo, hi, interior, order);
    const auto& U = g.knots();
    const int k = g.order();
    for (int q = 0; q <= 200; ++q) {
      const double t = lo + (hi - lo) * q / 200.0;
      const auto m = eval_mspline_basis(g, t);
      double sum = 0.0;  // B_i = M_i (U[i+k] - U[i]) / k
      for (int i = 0; i < g.size(); ++i) sum += m[i] * (U[i + k] - U[i]) / k;
      pou = std::max(pou, std::abs(sum - 1.0));
    }
    const auto i0 = eval_ispline_basis(g, lo), i1 = eval_ispline_basis(g, hi);
    for (int i = 0; i < g.size(); ++i) ends = std::max({ends, std::abs(i0[i]), std::abs(i1[i] - 1.0)});
    if (k >= 3) {
      // Coefficients of a linear intensity via Greville abscissae.
      const Eigen::MatrixXd P = penalty_matrix(g);
      Eigen::VectorXd c(g.size());
      const double a0 = 0.01 * u(rng), a1 = 0.002 * u(rng);
      for (int i = 0; i < g.size(); ++i) {
        double xi = 0.0;
        for (int j = 1; j < k; ++j) xi += U[i + j];
        xi /= (k - 1);
        c[i] = (a0 + a1 * (xi - lo)) * (U[i + k] - U[i]) / k;
      }
      linear = std::max(linear, std::abs(c.dot(P * c)));
    }
  }
  Outcome o{"splines"};
  o.seconds = seconds_since(t0);
  o.pass = pou <= 1e-12 && ends <= 1e-12 && linear <= 1e-12;
  o.detail = fmt::format("20 random grids (orders 2-5): partition of unity {:.1e}, I-spline endpoints {:.1e}, "
                         "penalty on linear intensities {:.1e}",
                         pou, ends, linear);
  o.metrics = {{"partition_of_unity", pou}, {"ispline_endpoints", ends}, {"linear_penalty", linear}};
  return o;
}

// ---------------------------------------------------------------------------

std::string quote(const std::string& s) { return "'" + s + "'"; }

Outcome cli_chain(const Settings& s) {
  const auto t0 = Clock::now();
  Outcome o{"cli-chain"};
  if (s.idmfit.empty() || !fs::exists(s.idmfit)) {
    o.detail = "idmfit binary not found (pass --idmfit)";
    return o;
  }
  const std::string idmfit = fs::absolute(s.idmfit).string();
  const fs::path config = fs::absolute(s.source_dir / "tests" / "cli" / "small.json");
  const fs::path work = fs::temp_directory_path() / fmt::format("idm_acceptance_chain_{}", ::getpid());
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  const std::vector<std::string> steps = {
      fmt::format("simulate --config {} --seed 11 --out sim", quote(config.string())),
      "build-cohorts --exams sim/exams.csv --out coh",
      "census --cohorts coh --out cen",
      "fit --cohorts coh --out fit --covariates x --knots 3",
      "predict --fit fit --out pred --draws 200 --profile x=0 --profile x=1",
      "plot --predict pred --out plot"};
  std::string failure;
  for (const char* run : {"a", "b"}) {
    const fs::path root = work / run;
    fs::create_directories(root);
    for (const auto& step : steps) {
      const std::string cmd =
          fmt::format("cd {} && {} {} > /dev/null 2>&1", quote(root.string()), quote(idmfit), step);
      const int rc = std::system(cmd.c_str());
      if (rc != 0 && failure.empty()) failure = fmt::format("`idmfit {}` exited with status {}", step, rc);
    }
  }
  int files = 0;
  if (failure.empty()) {
    for (const auto& e : fs::recursive_directory_iterator(work / "a")) {
      if (!e.is_regular_file()) continue;
      ++files;
      const auto rel = fs::relative(e.path(), work / "a");
      const fs::path other = work / "b" / rel;
      if (!fs::exists(other) || csv::read_text(e.path().string()) != csv::read_text(other.string())) {
        failure = fmt::format("{} differs between two runs", rel.generic_string());
        break;
      }
    }
  }
  std::error_code ec;
  fs::remove_all(work, ec);
  o.seconds = seconds_since(t0);
  o.pass = failure.empty() && files > 0;
  o.detail = failure.empty() ? fmt::format("6 subcommands exit 0; {} output files byte-identical across two runs", files)
                             : failure;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria of the illness-death toolkit"};
  Settings settings;
  std::vector<std::string> only;
  std::string report;
  app.add_option("--only", only, "Run only these criteria (repeatable)");
  app.add_option("--idmfit", settings.idmfit, "Path of the idmfit binary for the CLI criterion");
  app.add_option("--source-dir", settings.source_dir, "Repository root (data/, tests/)");
  app.add_option("--threads", settings.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--report", report, "Also write the results as JSON");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome(const Settings&)>>> criteria = {
      {"closed-form", closed_form}, {"conservation", conservation}, {"gradient", gradient},
      {"recovery", recovery},       {"mdid-bias", mdid},             {"fixtures", fixtures},
      {"splines", splines},         {"cli-chain", cli_chain}};
  for (const auto& name : only)
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
      std::cerr << "unknown criterion '" << name << "'\n";
      return 2;
    }

  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  bool all = true;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = run(settings);
    } catch (const std::exception& e) {
      o = Outcome{name, false, fmt::format("error: {}", e.what())};
    }
    all = all && o.pass;
    std::cout << fmt::format("{} {}: {}\n", o.pass ? "PASS" : "FAIL", o.name, o.detail) << std::flush;
    results.push_back({{"criterion", o.name}, {"pass", o.pass}, {"detail", o.detail}, {"seconds", o.seconds},
                       {"metrics", o.metrics}});
  }
  if (!report.empty()) std::ofstream(report) << results.dump(2) << "\n";
  return all ? 0 : 1;
}
