#include "idm/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "idm/csv.hpp"
#include "idm/error.hpp"

namespace idm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Empty -> nullopt; malformed -> ConfigError.
std::optional<double> parse_number(std::string_view text, std::string_view column) {
  const std::string s = trim(text);
  if (s.empty() || s == "NA") return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(fmt::format("column {}: '{}' is not a number", column, s));
  return v;
}

std::optional<int> parse_year(std::string_view text, std::string_view column) {
  const auto v = parse_number(text, column);
  if (!v) return std::nullopt;
  if (*v != std::floor(*v)) throw ConfigError(fmt::format("column {}: '{}' is not a whole year", column, trim(text)));
  return static_cast<int>(*v);
}

std::optional<bool> parse_flag(std::string_view text, std::string_view column) {
  const std::string s = lower(trim(text));
  if (s.empty() || s == "na") return std::nullopt;
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  throw ConfigError(fmt::format("column {}: '{}' is not a 0/1 flag", column, s));
}

CogStatus parse_status(std::string_view text) {
  const std::string s = lower(trim(text));
  if (s.empty() || s == "na") return CogStatus::Missing;
  if (s == "normal") return CogStatus::Normal;
  if (s == "inconclusive") return CogStatus::Inconclusive;
  if (s == "dementia") return CogStatus::Dementia;
  throw ConfigError(fmt::format("column cog_status: unknown status '{}'", s));
}

std::string parse_sex(std::string_view text) {
  const std::string s = trim(text);
  const std::string l = lower(s);
  if (l.empty()) return {};
  if (l == "m" || l == "male") return "M";
  if (l == "f" || l == "female") return "F";
  throw ConfigError(fmt::format("column sex: unknown value '{}'", s));
}

std::string opt_text(const std::optional<double>& v) { return v ? csv::format_number(*v) : std::string(); }

// Merges a subject-level value seen on several rows; conflicting non-empty
// values are an error.
template <class T>
void merge(std::optional<T>& into, const std::optional<T>& v, std::string_view what) {
  if (!v) return;
  if (into && *into != *v) throw ConfigError(fmt::format("conflicting {} values across rows", what));
  into = v;
}

void merge_text(std::string& into, const std::string& v, std::string_view what) {
  if (v.empty()) return;
  if (!into.empty() && into != v) throw ConfigError(fmt::format("conflicting {} values across rows", what));
  into = v;
}

}  // namespace

std::string_view cog_status_label(CogStatus s) {
  switch (s) {
    case CogStatus::Missing: return "";
    case CogStatus::Normal: return "normal";
    case CogStatus::Inconclusive: return "inconclusive";
    case CogStatus::Dementia: return "dementia";
  }
  return "";
}

const std::vector<std::string>& exam_csv_columns() {
  static const std::vector<std::string> cols = {
      "subject_id", "birth_year", "exam1_year",       "exam1_age", "exam_age",  "cog_status",
      "onset_age",  "death_age",  "last_contact_age", "sex",       "education", "conclusive_at_death"};
  return cols;
}

std::optional<bool> high_education(std::string_view value) {
  const std::string s = lower(trim(value));
  if (s.empty() || s == "na") return std::nullopt;
  if (s.find_first_not_of("0123456789.") == std::string::npos) {
    const auto years = parse_number(s, "education");
    return *years > 12.0;
  }
  static const std::set<std::string> low = {"none", "primary", "secondary", "high_school", "highschool", "low"};
  static const std::set<std::string> high = {"college", "tertiary", "university", "graduate", "high"};
  if (low.count(s)) return false;
  if (high.count(s)) return true;
  throw ConfigError(fmt::format("column education: unknown category '{}'", s));
}

// ---------------------------------------------------------------------------

ExamDataset group_exam_rows(std::vector<RawExamRow> rows, std::vector<std::string> extra_columns) {
  ExamDataset out;
  out.extra_columns = std::move(extra_columns);
  std::map<std::string, std::size_t> index;
  std::vector<SubjectRows> subjects;
  std::map<std::string, std::string> broken;  // id -> reason
  for (auto& r : rows) {
    auto [it, fresh] = index.try_emplace(r.subject_id, subjects.size());
    if (fresh) subjects.push_back(SubjectRows{r.subject_id, {}, {}, {}, {}, {}, {}, false, {}});
    subjects[it->second].rows.push_back(std::move(r));
  }
  for (auto& s : subjects) {
    std::stable_sort(s.rows.begin(), s.rows.end(), [](const RawExamRow& a, const RawExamRow& b) {
      const double x = a.exam_age.value_or(INFINITY), y = b.exam_age.value_or(INFINITY);
      return x < y;
    });
    try {
      std::optional<bool> conclusive;
      for (const auto& r : s.rows) {
        merge(s.birth_year, r.birth_year, "birth_year");
        merge(s.death_age, r.death_age, "death_age");
        merge(s.last_contact_age, r.last_contact_age, "last_contact_age");
        merge(conclusive, r.conclusive_at_death, "conclusive_at_death");
        merge_text(s.sex, r.sex, "sex");
        merge_text(s.education, r.education, "education");
        for (const auto& [k, v] : r.extra) {
          std::optional<double> cur;
          if (auto e = s.extra.find(k); e != s.extra.end()) cur = e->second;
          merge(cur, std::optional<double>(v), k);
          s.extra[k] = *cur;
        }
      }
      s.conclusive_at_death = conclusive.value_or(false);
      for (const auto& r : s.rows) {
        if (r.exam_age && s.death_age && *r.exam_age > *s.death_age)
          throw ConfigError(fmt::format("line {}: exam at age {} after death at {}", r.line, *r.exam_age, *s.death_age));
        if (r.exam_age && s.last_contact_age && *r.exam_age > *s.last_contact_age)
          throw ConfigError(fmt::format("line {}: exam at age {} after last contact at {}", r.line, *r.exam_age,
                                        *s.last_contact_age));
        if (r.status != CogStatus::Missing && !r.exam_age)
          throw ConfigError(fmt::format("line {}: cognitive status without an exam age", r.line));
      }
      const RawExamRow* diag = nullptr;
      for (const auto& r : s.rows)
        if (r.status == CogStatus::Dementia) {
          diag = &r;
          break;
        }
      if (diag) {
        std::string lines;
        for (const auto& r : s.rows)
          if (r.status == CogStatus::Normal && *r.exam_age >= *diag->exam_age)
            lines += (lines.empty() ? "" : ", ") + std::to_string(r.line);
        if (!lines.empty())
          throw ConflictError(fmt::format("normal assessment on line(s) {} at or after the dementia diagnosis on line {}",
                                          lines, diag->line));
      }
      if (s.death_age && s.last_contact_age && *s.last_contact_age > *s.death_age)
        throw ConfigError(fmt::format("last contact at {} after death at {}", *s.last_contact_age, *s.death_age));
      if (!s.education.empty()) high_education(s.education);
    } catch (const ConfigError& e) {
      broken[s.id] = e.what();
    } catch (const ConflictError& e) {
      broken[s.id] = e.what();
    }
  }
  for (auto& s : subjects) {
    if (auto b = broken.find(s.id); b != broken.end()) {
      out.rejects.push_back({s.rows.empty() ? 0 : s.rows.front().line, s.id, b->second});
    } else {
      out.subjects.push_back(std::move(s));
    }
  }
  return out;
}

ExamDataset parse_exam_csv(std::string_view text) {
  const csv::Table t = csv::parse(text);
  for (const char* required : {"subject_id", "exam_age", "cog_status"})
    if (!t.column(required)) throw ConfigError(fmt::format("exam CSV lacks the required column '{}'", required));
  const auto& fixed = exam_csv_columns();
  std::vector<std::string> extras;
  for (const auto& h : t.header) {
    if (std::find(fixed.begin(), fixed.end(), h) == fixed.end()) {
      if (h.empty()) throw ConfigError("exam CSV has an empty column name");
      extras.push_back(h);
    }
  }
  auto get = [&](const std::vector<std::string>& row, const char* name) -> std::string_view {
    auto c = t.column(name);
    return c ? std::string_view(row[*c]) : std::string_view();
  };

  std::vector<RawExamRow> rows;
  std::vector<Reject> row_rejects;
  std::set<std::string> bad_subjects;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    RawExamRow r;
    r.line = t.lines[i];
    r.subject_id = trim(get(row, "subject_id"));
    try {
      if (r.subject_id.empty()) throw ConfigError("empty subject_id");
      r.birth_year = parse_year(get(row, "birth_year"), "birth_year");
      r.exam1_year = parse_number(get(row, "exam1_year"), "exam1_year");
      r.exam1_age = parse_number(get(row, "exam1_age"), "exam1_age");
      r.exam_age = parse_number(get(row, "exam_age"), "exam_age");
      r.status = parse_status(get(row, "cog_status"));
      r.onset_age = parse_number(get(row, "onset_age"), "onset_age");
      r.death_age = parse_number(get(row, "death_age"), "death_age");
      r.last_contact_age = parse_number(get(row, "last_contact_age"), "last_contact_age");
      r.sex = parse_sex(get(row, "sex"));
      r.education = trim(get(row, "education"));
      r.conclusive_at_death = parse_flag(get(row, "conclusive_at_death"), "conclusive_at_death");
      for (const auto& name : extras)
        if (auto v = parse_number(get(row, name.c_str()), name)) r.extra[name] = *v;
      for (const auto& v : {r.exam_age, r.onset_age, r.death_age, r.last_contact_age, r.exam1_age})
        if (v && *v < 0.0) throw ConfigError("negative age");
    } catch (const ConfigError& e) {
      row_rejects.push_back({r.line, r.subject_id, e.what()});
      if (!r.subject_id.empty()) bad_subjects.insert(r.subject_id);
      continue;
    }
    rows.push_back(std::move(r));
  }
  // A subject with any malformed row is rejected entirely.
  std::vector<RawExamRow> kept;
  for (auto& r : rows) {
    if (bad_subjects.count(r.subject_id))
      row_rejects.push_back({r.line, r.subject_id, "subject has a malformed row"});
    else
      kept.push_back(std::move(r));
  }
  ExamDataset out = group_exam_rows(std::move(kept), extras);
  out.rejects.insert(out.rejects.begin(), row_rejects.begin(), row_rejects.end());
  std::stable_sort(out.rejects.begin(), out.rejects.end(), [](const Reject& a, const Reject& b) { return a.line < b.line; });
  return out;
}

ExamDataset read_exam_csv(const std::string& path) {
  const std::string text = csv::read_text(path);
  try {
    return parse_exam_csv(text);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

void write_exam_csv(std::ostream& out, std::span<const RawExamRow> rows, std::span<const std::string> extra_columns) {
  std::vector<std::string> header = exam_csv_columns();
  header.insert(header.end(), extra_columns.begin(), extra_columns.end());
  csv::write_row(out, header);
  for (const auto& r : rows) {
    std::vector<std::string> f = {r.subject_id,
                                  r.birth_year ? std::to_string(*r.birth_year) : std::string(),
                                  opt_text(r.exam1_year),
                                  opt_text(r.exam1_age),
                                  opt_text(r.exam_age),
                                  std::string(cog_status_label(r.status)),
                                  opt_text(r.onset_age),
                                  opt_text(r.death_age),
                                  opt_text(r.last_contact_age),
                                  r.sex,
                                  r.education,
                                  r.conclusive_at_death ? (*r.conclusive_at_death ? "1" : "0") : ""};
    for (const auto& name : extra_columns) {
      auto it = r.extra.find(name);
      f.push_back(it == r.extra.end() ? std::string() : csv::format_number(it->second));
    }
    csv::write_row(out, f);
  }
}

// ---------------------------------------------------------------------------

std::string CohortBounds::label() const { return fmt::format("{}-{}", first_year, last_year); }

void CohortRules::validate() const {
  if (cohorts.empty()) throw ConfigError("rules: at least one birth cohort is required");
  std::set<int> ids;
  for (std::size_t i = 0; i < cohorts.size(); ++i) {
    const auto& c = cohorts[i];
    if (c.first_year > c.last_year) throw ConfigError(fmt::format("rules: cohort {} has first_year > last_year", c.id));
    if (c.id <= 0 || !ids.insert(c.id).second) throw ConfigError(fmt::format("rules: cohort id {} invalid or repeated", c.id));
    if (i > 0 && c.first_year != cohorts[i - 1].last_year + 1)
      throw ConfigError("rules: cohorts must be ordered and contiguous");
  }
  if (!(inconclusive_window > 0.0)) throw ConfigError("rules: inconclusive_window must be positive");
  if (!std::isfinite(min_age)) throw ConfigError("rules: min_age must be finite");
}

namespace {

std::string onset_label(OnsetHandling h) {
  switch (h) {
    case OnsetHandling::Auto: return "auto";
    case OnsetHandling::Exact: return "exact";
    case OnsetHandling::Interval: return "interval";
  }
  return "auto";
}

}  // namespace

CohortRules CohortRules::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("rules JSON: {}", e.what()));
  }
  if (!j.is_object()) throw ConfigError("rules JSON: expected an object");
  static const std::set<std::string> known = {"cohorts",        "first_assessment_year", "min_age",
                                              "onset_handling", "horizon_year",          "inconclusive_window"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError(fmt::format("rules JSON: unknown key '{}'", k));
  CohortRules r;
  try {
    if (j.contains("cohorts")) {
      r.cohorts.clear();
      int next_id = 1;
      for (const auto& c : j.at("cohorts")) {
        CohortBounds b;
        b.id = c.value("id", next_id);
        b.first_year = c.at("first_year").get<int>();
        b.last_year = c.at("last_year").get<int>();
        next_id = b.id + 1;
        r.cohorts.push_back(b);
      }
    }
    r.first_assessment_year = j.value("first_assessment_year", r.first_assessment_year);
    r.min_age = j.value("min_age", r.min_age);
    if (j.contains("onset_handling")) {
      const auto s = j.at("onset_handling").get<std::string>();
      if (s == "auto") r.onset_handling = OnsetHandling::Auto;
      else if (s == "exact") r.onset_handling = OnsetHandling::Exact;
      else if (s == "interval") r.onset_handling = OnsetHandling::Interval;
      else throw ConfigError(fmt::format("rules JSON: onset_handling '{}' is not auto, exact or interval", s));
    }
    if (j.contains("horizon_year") && !j.at("horizon_year").is_null()) r.horizon_year = j.at("horizon_year").get<int>();
    r.inconclusive_window = j.value("inconclusive_window", r.inconclusive_window);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("rules JSON: {}", e.what()));
  }
  r.validate();
  return r;
}

std::string CohortRules::to_json() const {
  nlohmann::ordered_json j;
  j["cohorts"] = nlohmann::ordered_json::array();
  for (const auto& c : cohorts) j["cohorts"].push_back({{"id", c.id}, {"first_year", c.first_year}, {"last_year", c.last_year}});
  j["first_assessment_year"] = first_assessment_year;
  j["min_age"] = min_age;
  j["onset_handling"] = onset_label(onset_handling);
  j["horizon_year"] = horizon_year ? nlohmann::ordered_json(*horizon_year) : nlohmann::ordered_json(nullptr);
  j["inconclusive_window"] = inconclusive_window;
  return j.dump(2);
}

std::string exclusion_label(ExclusionStep step, const CohortRules& rules) {
  switch (step) {
    case ExclusionStep::NoExam1Linkage: return "no Exam-1 linkage";
    case ExclusionStep::BornBeforeFirstCohort: return fmt::format("born before {}", rules.cohorts.front().first_year);
    case ExclusionStep::BornAfterLastCohort: return fmt::format("born after {}", rules.cohorts.back().last_year);
    case ExclusionStep::DiedBeforeFirstAssessmentYear: return fmt::format("died before {}", rules.first_assessment_year);
    case ExclusionStep::DiedBeforeMinAge: return fmt::format("died before {:g}", rules.min_age);
    case ExclusionStep::NoDementiaInformation: return "no dementia information";
    case ExclusionStep::DementiaBeforeMinAge: return fmt::format("dementia before {:g}", rules.min_age);
    case ExclusionStep::NoAssessmentAfterMinAge: return fmt::format("no assessment after {:g}", rules.min_age);
  }
  return "?";
}

CohortAssignment assign_birth_cohort(std::optional<int> birth_year, const CohortRules& rules) {
  if (!birth_year) return {0, ExclusionStep::NoExam1Linkage};
  if (*birth_year < rules.cohorts.front().first_year) return {0, ExclusionStep::BornBeforeFirstCohort};
  if (*birth_year > rules.cohorts.back().last_year) return {0, ExclusionStep::BornAfterLastCohort};
  for (const auto& c : rules.cohorts)
    if (*birth_year >= c.first_year && *birth_year <= c.last_year) return {c.id, std::nullopt};
  return {0, ExclusionStep::BornAfterLastCohort};  // unreachable for contiguous cohorts
}

std::optional<int> resolve_birth_year(const SubjectRows& s) {
  if (s.birth_year) return s.birth_year;
  for (const auto& r : s.rows)
    if (r.exam1_year && r.exam1_age) return static_cast<int>(std::floor(*r.exam1_year - *r.exam1_age));
  return std::nullopt;
}

int FlowchartReport::total_excluded() const { return std::accumulate(excluded.begin(), excluded.end(), 0); }
int FlowchartReport::total_included() const {
  int n = 0;
  for (const auto& [id, k] : included) n += k;
  return n;
}

namespace {

std::optional<ExclusionStep> first_failing_step(const SubjectRows& s, const CohortRules& rules, int& cohort) {
  const auto by = resolve_birth_year(s);
  const auto a = assign_birth_cohort(by, rules);
  if (a.excluded) return a.excluded;
  cohort = a.cohort;
  if (s.death_age && std::floor(*by + *s.death_age) < rules.first_assessment_year)
    return ExclusionStep::DiedBeforeFirstAssessmentYear;
  if (s.death_age && *s.death_age < rules.min_age) return ExclusionStep::DiedBeforeMinAge;
  const bool any_info =
      std::any_of(s.rows.begin(), s.rows.end(), [](const RawExamRow& r) { return r.status != CogStatus::Missing; });
  if (!any_info) return ExclusionStep::NoDementiaInformation;
  for (const auto& r : s.rows)
    if (r.status == CogStatus::Dementia && (*r.exam_age < rules.min_age || (r.onset_age && *r.onset_age < rules.min_age)))
      return ExclusionStep::DementiaBeforeMinAge;
  const bool normal_after = std::any_of(s.rows.begin(), s.rows.end(), [&](const RawExamRow& r) {
    return r.status == CogStatus::Normal && *r.exam_age >= rules.min_age;
  });
  if (!normal_after) return ExclusionStep::NoAssessmentAfterMinAge;
  return std::nullopt;
}

}  // namespace

FlowchartResult apply_flowchart(const ExamDataset& data, const CohortRules& rules) {
  rules.validate();
  FlowchartResult res;
  auto& rep = res.report;
  rep.initial_n = static_cast<int>(data.subjects.size());
  std::set<std::string> rejected_ids;
  for (const auto& r : data.rejects) rejected_ids.insert(r.subject_id);
  rep.schema_rejects = static_cast<int>(rejected_ids.size());
  for (int i = 0; i < kExclusionSteps; ++i) rep.step_labels.push_back(exclusion_label(static_cast<ExclusionStep>(i), rules));
  for (const auto& c : rules.cohorts) rep.included[c.id] = 0;
  for (const auto& s : data.subjects) {
    int cohort = 0;
    if (auto step = first_failing_step(s, rules, cohort)) {
      ++rep.excluded[static_cast<int>(*step)];
      res.exclusions.emplace_back(s.id, *step);
    } else {
      ++rep.included[cohort];
      res.eligible.push_back(s);
    }
  }
  if (rep.initial_n != rep.total_excluded() + rep.total_included())
    throw std::logic_error("flowchart conservation violated");
  return res;
}

// ---------------------------------------------------------------------------

SubjectRecord derive_subject_record(const SubjectRows& s, const CohortRules& rules) {
  SubjectRecord rec;
  rec.id = s.id;
  const auto by = resolve_birth_year(s);
  if (by) {
    rec.birth_year = *by;
    rec.birth_cohort = assign_birth_cohort(by, rules).cohort;
  }
  const RawExamRow* diagnosis = nullptr;
  for (const auto& r : s.rows)
    if (r.status == CogStatus::Dementia) {
      diagnosis = &r;
      break;
    }
  std::vector<int> conflict_lines;
  const RawExamRow* first_normal = nullptr;
  const RawExamRow* last_normal = nullptr;
  double last_assessment = -INFINITY;
  for (const auto& r : s.rows) {
    if (r.status != CogStatus::Missing) last_assessment = std::max(last_assessment, *r.exam_age);
    if (r.status != CogStatus::Normal || *r.exam_age < rules.min_age) continue;
    if (diagnosis && *r.exam_age >= *diagnosis->exam_age) {
      conflict_lines.push_back(r.line);
      continue;
    }
    if (!first_normal) first_normal = &r;
    last_normal = &r;
  }
  if (!conflict_lines.empty()) {
    std::string lines;
    for (int l : conflict_lines) lines += (lines.empty() ? "" : ", ") + std::to_string(l);
    throw ConflictError(fmt::format("subject {}: normal assessment at or after the dementia diagnosis on line {} "
                                    "(conflicting lines: {})",
                                    s.id, diagnosis->line, lines));
  }
  if (!first_normal)
    throw ConflictError(fmt::format("subject {}: no dementia-free assessment at or after {:g}", s.id, rules.min_age));
  rec.entry_age = *first_normal->exam_age;
  rec.last_healthy_age = *last_normal->exam_age;
  rec.last_assessment_age = last_assessment;
  if (diagnosis) {
    const double R = *diagnosis->exam_age;
    const auto onset_age = diagnosis->onset_age;
    if (onset_age && (*onset_age < rec.last_healthy_age || *onset_age > R))
      throw ConflictError(fmt::format("subject {}: recorded onset age {} outside ({}, {}] (line {})", s.id, *onset_age,
                                      rec.last_healthy_age, R, diagnosis->line));
    switch (rules.onset_handling) {
      case OnsetHandling::Auto:
        rec.onset = onset_age ? Onset::at(*onset_age) : Onset::interval(rec.last_healthy_age, R);
        break;
      case OnsetHandling::Exact: rec.onset = Onset::at(onset_age.value_or(R)); break;
      case OnsetHandling::Interval: rec.onset = Onset::interval(rec.last_healthy_age, R); break;
    }
  }
  rec.death_age = s.death_age;
  double alive = last_assessment;
  for (const auto& r : s.rows)
    if (r.exam_age) alive = std::max(alive, *r.exam_age);
  if (s.last_contact_age) alive = std::max(alive, *s.last_contact_age);
  rec.last_alive_age = s.death_age ? *s.death_age : alive;
  rec.dementia_conclusive_at_death = s.conclusive_at_death;
  if (s.sex == "M") rec.covariates["male"] = 1.0;
  if (s.sex == "F") rec.covariates["male"] = 0.0;
  if (auto hi = high_education(s.education)) rec.covariates["high_education"] = *hi ? 1.0 : 0.0;
  for (const auto& [k, v] : s.extra) rec.covariates[k] = v;
  try {
    rec.validate();
  } catch (const ConfigError& e) {
    throw ConflictError(e.what());
  }
  return rec;
}

// ---------------------------------------------------------------------------

std::string_view census_label(CensusCategory c) {
  switch (c) {
    case CensusCategory::AliveDementiaFree: return "alive and dementia-free";
    case CensusCategory::AliveInconclusive: return "alive and dementia inconclusive";
    case CensusCategory::DiagnosedDementia: return "diagnosed dementia";
    case CensusCategory::DeathWithoutDementia: return "death without dementia";
    case CensusCategory::DeathInconclusive: return "death and dementia inconclusive";
  }
  return "?";
}

CensusCategory census_category(const SubjectRecord& r, int horizon_year, double window) {
  if (r.onset) return CensusCategory::DiagnosedDementia;
  if (r.dead()) return r.dementia_conclusive_at_death ? CensusCategory::DeathWithoutDementia : CensusCategory::DeathInconclusive;
  const double age_at_horizon = static_cast<double>(horizon_year - r.birth_year);
  return r.last_assessment_age >= age_at_horizon - window ? CensusCategory::AliveDementiaFree
                                                          : CensusCategory::AliveInconclusive;
}

CohortCensus status_census(std::span<const SubjectRecord> records, const CohortRules& rules) {
  rules.validate();
  CohortCensus out;
  out.window = rules.inconclusive_window;
  if (rules.horizon_year) {
    out.horizon_year = *rules.horizon_year;
  } else {
    for (const auto& r : records)
      out.horizon_year = std::max(out.horizon_year, static_cast<int>(std::floor(r.birth_year + r.last_alive_age)));
  }
  for (const auto& c : rules.cohorts) out.cohorts.push_back({c.id, c.label(), 0, {}, 0});
  for (const auto& r : records) {
    auto it = std::find_if(out.cohorts.begin(), out.cohorts.end(), [&](const auto& c) { return c.cohort == r.birth_cohort; });
    if (it == out.cohorts.end()) continue;
    ++it->size;
    const auto cat = census_category(r, out.horizon_year, out.window);
    ++it->counts[static_cast<int>(cat)];
    if (cat == CensusCategory::DiagnosedDementia && r.dead()) ++it->died_after_diagnosis;
  }
  return out;
}

std::string percent_text(int part, int whole) {
  if (whole <= 0) return "0.0";
  // integer arithmetic avoids binary rounding at .x5 boundaries
  const long long tenths = (2000LL * part + whole) / (2LL * whole);
  return fmt::format("{}.{}", tenths / 10, tenths % 10);
}

void write_flowchart_csv(std::ostream& out, const FlowchartReport& report, const CohortRules& rules) {
  csv::write_row(out, {"step", "label", "count"});
  csv::write_row(out, {"0", "initial", std::to_string(report.initial_n)});
  for (int i = 0; i < kExclusionSteps; ++i)
    csv::write_row(out, {std::to_string(i + 1), report.step_labels.empty() ? exclusion_label(static_cast<ExclusionStep>(i), rules)
                                                                          : report.step_labels[static_cast<std::size_t>(i)],
                         std::to_string(report.excluded[static_cast<std::size_t>(i)])});
  for (const auto& c : rules.cohorts) {
    auto it = report.included.find(c.id);
    csv::write_row(out, {fmt::format("cohort{}", c.id), c.label(), std::to_string(it == report.included.end() ? 0 : it->second)});
  }
  csv::write_row(out, {"rejects", "schema or coherence rejects (outside N)", std::to_string(report.schema_rejects)});
}

void write_census_csv(std::ostream& out, const CohortCensus& census) {
  std::vector<std::string> header = {"category"};
  for (const auto& c : census.cohorts) {
    header.push_back(c.label + " n");
    header.push_back(c.label + " %");
  }
  csv::write_row(out, header);
  std::vector<std::string> size = {"cohort size"};
  for (const auto& c : census.cohorts) {
    size.push_back(std::to_string(c.size));
    size.push_back(c.size > 0 ? "100.0" : "0.0");
  }
  csv::write_row(out, size);
  for (int k = 0; k < kCensusCategories; ++k) {
    std::vector<std::string> row = {std::string(census_label(static_cast<CensusCategory>(k)))};
    for (const auto& c : census.cohorts) {
      row.push_back(std::to_string(c.counts[static_cast<std::size_t>(k)]));
      row.push_back(percent_text(c.counts[static_cast<std::size_t>(k)], c.size));
    }
    csv::write_row(out, row);
    if (static_cast<CensusCategory>(k) == CensusCategory::DiagnosedDementia) {
      std::vector<std::string> sub = {"death after dementia diagnosis (subgroup of diagnosed)"};
      for (const auto& c : census.cohorts) {
        sub.push_back(std::to_string(c.died_after_diagnosis));
        sub.push_back(percent_text(c.died_after_diagnosis, c.counts[static_cast<int>(CensusCategory::DiagnosedDementia)]));
      }
      csv::write_row(out, sub);
    }
  }
}

std::string census_text(const CohortCensus& census) {
  std::string out = fmt::format("Status census (horizon {}, window {:g} years)\n", census.horizon_year, census.window);
  out += fmt::format("{:<58}", "");
  for (const auto& c : census.cohorts) out += fmt::format("{:>18}", c.label);
  out += "\n";
  auto line = [&](std::string_view label, auto cell) {
    out += fmt::format("{:<58}", label);
    for (const auto& c : census.cohorts) out += fmt::format("{:>18}", cell(c));
    out += "\n";
  };
  line("cohort size", [](const CohortCensusRow& c) { return std::to_string(c.size); });
  for (int k = 0; k < kCensusCategories; ++k) {
    line(census_label(static_cast<CensusCategory>(k)), [&](const CohortCensusRow& c) {
      return fmt::format("{} ({}%)", c.counts[static_cast<std::size_t>(k)], percent_text(c.counts[static_cast<std::size_t>(k)], c.size));
    });
    if (static_cast<CensusCategory>(k) == CensusCategory::DiagnosedDementia)
      line("  death after dementia diagnosis*", [](const CohortCensusRow& c) {
        const int d = c.counts[static_cast<int>(CensusCategory::DiagnosedDementia)];
        return fmt::format("{} ({}%)", c.died_after_diagnosis, percent_text(c.died_after_diagnosis, d));
      });
  }
  out += "* subgroup of diagnosed dementia; percentage relative to the diagnosed count\n";
  return out;
}

void write_rejects_csv(std::ostream& out, std::span<const Reject> rejects) {
  csv::write_row(out, {"line", "subject_id", "reason"});
  for (const auto& r : rejects) csv::write_row(out, {std::to_string(r.line), r.subject_id, r.reason});
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kRecordColumns = {
    "subject_id",     "birth_year", "birth_cohort",   "entry_age",           "last_healthy_age",   "onset_lower",
    "onset_upper",    "death_age",  "last_alive_age", "last_assessment_age", "conclusive_at_death"};

}  // namespace

void write_records_csv(std::ostream& out, std::span<const SubjectRecord> records) {
  std::set<std::string> names;
  for (const auto& r : records)
    for (const auto& [k, v] : r.covariates) names.insert(k);
  std::vector<std::string> header = kRecordColumns;
  header.insert(header.end(), names.begin(), names.end());
  csv::write_row(out, header);
  for (const auto& r : records) {
    std::vector<std::string> f = {r.id,
                                  std::to_string(r.birth_year),
                                  std::to_string(r.birth_cohort),
                                  csv::format_number(r.entry_age),
                                  csv::format_number(r.last_healthy_age),
                                  r.onset ? csv::format_number(r.onset->lower) : "",
                                  r.onset ? csv::format_number(r.onset->upper) : "",
                                  opt_text(r.death_age),
                                  csv::format_number(r.last_alive_age),
                                  csv::format_number(r.last_assessment_age),
                                  r.dementia_conclusive_at_death ? "1" : "0"};
    for (const auto& n : names) {
      auto it = r.covariates.find(n);
      f.push_back(it == r.covariates.end() ? "" : csv::format_number(it->second));
    }
    csv::write_row(out, f);
  }
}

std::vector<SubjectRecord> parse_records_csv(std::string_view text) {
  const csv::Table t = csv::parse(text);
  for (const auto& c : kRecordColumns)
    if (!t.column(c)) throw ConfigError(fmt::format("records CSV lacks the column '{}'", c));
  std::vector<std::string> covs;
  for (const auto& h : t.header)
    if (std::find(kRecordColumns.begin(), kRecordColumns.end(), h) == kRecordColumns.end()) covs.push_back(h);
  std::vector<SubjectRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    auto cell = [&](const std::string& name) -> std::string_view { return row[*t.column(name)]; };
    try {
      SubjectRecord r;
      r.id = trim(cell("subject_id"));
      r.birth_year = parse_year(cell("birth_year"), "birth_year").value_or(0);
      r.birth_cohort = parse_year(cell("birth_cohort"), "birth_cohort").value_or(0);
      auto need = [&](const char* name) {
        auto v = parse_number(cell(name), name);
        if (!v) throw ConfigError(fmt::format("column {} is empty", name));
        return *v;
      };
      r.entry_age = need("entry_age");
      r.last_healthy_age = need("last_healthy_age");
      const auto lo = parse_number(cell("onset_lower"), "onset_lower");
      const auto hi = parse_number(cell("onset_upper"), "onset_upper");
      if (lo.has_value() != hi.has_value()) throw ConfigError("onset_lower and onset_upper must both be set or empty");
      if (lo) r.onset = Onset{*lo, *hi};
      r.death_age = parse_number(cell("death_age"), "death_age");
      r.last_alive_age = need("last_alive_age");
      r.last_assessment_age = need("last_assessment_age");
      r.dementia_conclusive_at_death = parse_flag(cell("conclusive_at_death"), "conclusive_at_death").value_or(false);
      for (const auto& c : covs)
        if (auto v = parse_number(cell(c), c)) r.covariates[c] = *v;
      r.validate();
      out.push_back(std::move(r));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("records CSV line {}: {}", t.lines[i], e.what()));
    }
  }
  return out;
}

std::vector<SubjectRecord> read_records_csv(const std::string& path) {
  const std::string text = csv::read_text(path);
  try {
    return parse_records_csv(text);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

}  // namespace idm
