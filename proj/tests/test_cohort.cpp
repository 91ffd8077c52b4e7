#include <fstream>
#include <sstream>

#include "doctest.h"
#include "idm/cohort.hpp"
#include "idm/csv.hpp"
#include "idm/error.hpp"

using namespace idm;

namespace {

std::string fixture(const std::string& name) { return std::string(IDM_FIXTURE_DIR) + "/" + name; }

std::string slurp(const std::string& path) { return csv::read_text(path); }

RawExamRow exam(const std::string& id, double age, CogStatus st) {
  RawExamRow r;
  r.subject_id = id;
  r.birth_year = 1920;
  r.exam_age = age;
  r.status = st;
  return r;
}

}  // namespace

TEST_CASE("csv reader") {
  const auto t = csv::parse("\xEF\xBB\xBF" "a,b\r\n1,\"x,\"\"y\"\"\"\n\n2,\"multi\nline\"\n");
  REQUIRE(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x,\"y\"");
  CHECK(t.rows[1][1] == "multi\nline");
  CHECK(t.lines == std::vector<int>{2, 4});
  CHECK_THROWS_AS(csv::parse("a,b\n1\n"), ConfigError);
  CHECK_THROWS_AS(csv::parse("a\n\"open\n"), ConfigError);
  std::ostringstream out;
  csv::write_row(out, {"p", "q,r", "s\"t"});
  CHECK(out.str() == "p,\"q,r\",\"s\"\"t\"\n");
  CHECK_THROWS_AS(csv::read_text("/nonexistent/file.csv"), IoError);
}

TEST_CASE("birth cohort assignment") {
  const CohortRules rules;
  CHECK(assign_birth_cohort(1915, rules).cohort == 1);
  CHECK(assign_birth_cohort(1924, rules).cohort == 1);
  CHECK(assign_birth_cohort(1925, rules).cohort == 2);
  CHECK(assign_birth_cohort(1944, rules).cohort == 3);
  CHECK(assign_birth_cohort(1945, rules).excluded == ExclusionStep::BornAfterLastCohort);
  CHECK(assign_birth_cohort(1914, rules).excluded == ExclusionStep::BornBeforeFirstCohort);
  CHECK(assign_birth_cohort(std::nullopt, rules).excluded == ExclusionStep::NoExam1Linkage);
}

TEST_CASE("rules JSON") {
  const auto r = CohortRules::from_json(slurp(fixture("census_rules.json")));
  CHECK(r.horizon_year == 2010);
  CHECK(r.cohorts.size() == 3);
  CHECK(CohortRules::from_json(r.to_json()).to_json() == r.to_json());
  CHECK_THROWS_AS(CohortRules::from_json("{\"min_age\": }"), ConfigError);
  CHECK_THROWS_AS(CohortRules::from_json("{\"bogus\": 1}"), ConfigError);
  CHECK_THROWS_AS(CohortRules::from_json("{\"onset_handling\": \"sometimes\"}"), ConfigError);
  CHECK_THROWS_AS(
      CohortRules::from_json(R"({"cohorts": [{"first_year": 1915, "last_year": 1920}, {"first_year": 1925, "last_year": 1930}]})"),
      ConfigError);
}

TEST_CASE("flowchart fixture reproduces its expected counts") {
  const auto data = read_exam_csv(fixture("flowchart_exams.csv"));
  const CohortRules rules;
  const auto res = apply_flowchart(data, rules);
  std::ostringstream out;
  write_flowchart_csv(out, res.report, rules);
  CHECK(out.str() == slurp(fixture("flowchart_expected.csv")));
  CHECK(res.report.initial_n == res.report.total_excluded() + res.report.total_included());
  REQUIRE(data.rejects.size() == 1);
  CHECK(data.rejects[0].subject_id == "S13");

  // each excluded subject fell at the step named after it
  const std::map<std::string, ExclusionStep> expected = {
      {"S01", ExclusionStep::NoExam1Linkage},          {"S02", ExclusionStep::BornBeforeFirstCohort},
      {"S03", ExclusionStep::BornAfterLastCohort},     {"S04", ExclusionStep::DiedBeforeFirstAssessmentYear},
      {"S05", ExclusionStep::DiedBeforeMinAge},        {"S06", ExclusionStep::NoDementiaInformation},
      {"S07", ExclusionStep::DementiaBeforeMinAge},    {"S08", ExclusionStep::NoAssessmentAfterMinAge}};
  for (const auto& [id, step] : res.exclusions) CHECK(expected.at(id) == step);
}

TEST_CASE("empty input") {
  const auto res = apply_flowchart(ExamDataset{}, CohortRules{});
  CHECK(res.report.initial_n == 0);
  CHECK(res.report.total_excluded() == 0);
  CHECK(res.eligible.empty());
}

TEST_CASE("derive_subject_record: field mapping and onset handling") {
  const auto data = read_exam_csv(fixture("flowchart_exams.csv"));
  const auto res = apply_flowchart(data, CohortRules{});
  std::map<std::string, SubjectRecord> recs;
  for (const auto& s : res.eligible) recs[s.id] = derive_subject_record(s);

  const auto& s9 = recs.at("S09");
  CHECK(s9.entry_age == 62);
  CHECK(s9.last_healthy_age == 70);
  REQUIRE(s9.onset);
  CHECK(s9.onset->lower == 70);
  CHECK(s9.onset->upper == 73);
  CHECK(s9.death_age == 80);
  CHECK(s9.birth_cohort == 1);
  CHECK(s9.covariates.at("male") == 1.0);
  CHECK(s9.covariates.at("high_education") == 0.0);
  CHECK(classify_pattern(s9) == ObservationPattern::IllThenDead);

  const auto& s10 = recs.at("S10");
  CHECK(s10.last_healthy_age == 75);
  CHECK(s10.last_alive_age == 81);
  CHECK(classify_pattern(s10) == ObservationPattern::HealthyCensored);
  CHECK(s10.covariates.at("high_education") == 1.0);

  CHECK(classify_pattern(recs.at("S11")) == ObservationPattern::HealthyThenDeadConclusive);
  CHECK(classify_pattern(recs.at("S12")) == ObservationPattern::DeadInconclusive);
  CHECK(recs.at("S12").last_assessment_age == 68);

  SubjectRows rows;
  rows.id = "x";
  rows.birth_year = 1920;
  rows.rows = {exam("x", 62, CogStatus::Normal), exam("x", 70, CogStatus::Normal), exam("x", 73, CogStatus::Dementia)};
  rows.rows[2].onset_age = 71.5;
  CohortRules rules;
  CHECK(derive_subject_record(rows, rules).onset->exact());
  CHECK(derive_subject_record(rows, rules).onset->lower == 71.5);
  rules.onset_handling = OnsetHandling::Interval;
  CHECK(derive_subject_record(rows, rules).onset->lower == 70);
  rules.onset_handling = OnsetHandling::Exact;
  rows.rows[2].onset_age.reset();
  CHECK(derive_subject_record(rows, rules).onset->lower == 73);

  // a normal assessment after the diagnosis is a conflict
  rows.rows.push_back(exam("x", 75, CogStatus::Normal));
  rows.rows.back().line = 99;
  try {
    derive_subject_record(rows, rules);
    FAIL("expected ConflictError");
  } catch (const ConflictError& e) {
    CHECK(std::string(e.what()).find("99") != std::string::npos);
  }
  auto grouped = group_exam_rows(rows.rows);
  CHECK(grouped.subjects.empty());
  CHECK(grouped.rejects.size() == 1);
}

TEST_CASE("education dichotomy") {
  CHECK(high_education("12") == false);
  CHECK(high_education("13") == true);
  CHECK(high_education("college") == true);
  CHECK(high_education("High_School") == false);
  CHECK_FALSE(high_education("").has_value());
  CHECK_THROWS_AS(high_education("wizardry"), ConfigError);
}

TEST_CASE("census fixture reproduces the expected table") {
  const auto rules = CohortRules::from_json(slurp(fixture("census_rules.json")));
  const auto data = read_exam_csv(fixture("census_exams.csv"));
  REQUIRE(data.rejects.empty());
  const auto res = apply_flowchart(data, rules);
  CHECK(res.report.total_included() == 15);
  std::vector<SubjectRecord> recs;
  for (const auto& s : res.eligible) recs.push_back(derive_subject_record(s, rules));
  const auto census = status_census(recs, rules);
  for (const auto& c : census.cohorts) {
    int sum = 0;
    for (int k : c.counts) sum += k;
    CHECK(sum == c.size);
  }
  std::ostringstream out;
  write_census_csv(out, census);
  CHECK(out.str() == slurp(fixture("census_expected.csv")));
  CHECK(census_text(census).find("death after dementia diagnosis*") != std::string::npos);
}

TEST_CASE("subgroup percentage semantics") {
  CHECK(percent_text(662, 731) == "90.6");
  CHECK(percent_text(1, 8) == "12.5");
  CHECK(percent_text(1, 3) == "33.3");
  CHECK(percent_text(2, 3) == "66.7");
  CHECK(percent_text(0, 0) == "0.0");

  // census over diagnosed subjects reports the subgroup against the diagnosed count
  std::vector<SubjectRecord> recs;
  for (int i = 0; i < 731; ++i) {
    SubjectRecord r;
    r.id = std::to_string(i);
    r.birth_year = 1920;
    r.birth_cohort = 1;
    r.entry_age = 60;
    r.last_healthy_age = 70;
    r.onset = Onset::interval(70, 72);
    r.last_assessment_age = 72;
    r.last_alive_age = 80;
    if (i < 662) r.death_age = 80;
    recs.push_back(r);
  }
  const auto census = status_census(recs, CohortRules{});
  CHECK(census.cohorts[0].died_after_diagnosis == 662);
  CHECK(census.cohorts[0].counts[static_cast<int>(CensusCategory::DiagnosedDementia)] == 731);
  std::ostringstream out;
  write_census_csv(out, census);
  CHECK(out.str().find("subgroup of diagnosed),662,90.6") != std::string::npos);
}

TEST_CASE("all alive with recent assessments gives one category") {
  std::vector<SubjectRecord> recs;
  for (int i = 0; i < 5; ++i) {
    SubjectRecord r;
    r.id = std::to_string(i);
    r.birth_year = 1930;
    r.birth_cohort = 2;
    r.entry_age = 62;
    r.last_healthy_age = r.last_assessment_age = r.last_alive_age = 79;
    recs.push_back(r);
  }
  CohortRules rules;
  rules.horizon_year = 2010;
  const auto c = status_census(recs, rules).cohorts[1];
  CHECK(c.counts[0] == 5);
  CHECK(c.counts[1] + c.counts[2] + c.counts[3] + c.counts[4] == 0);
}

TEST_CASE("records CSV round trip and exam CSV round trip") {
  const auto data = read_exam_csv(fixture("flowchart_exams.csv"));
  const auto res = apply_flowchart(data, CohortRules{});
  std::vector<SubjectRecord> recs;
  for (const auto& s : res.eligible) recs.push_back(derive_subject_record(s));
  std::ostringstream a;
  write_records_csv(a, recs);
  const auto back = parse_records_csv(a.str());
  std::ostringstream b;
  write_records_csv(b, back);
  CHECK(a.str() == b.str());

  std::vector<RawExamRow> rows;
  for (const auto& s : data.subjects) rows.insert(rows.end(), s.rows.begin(), s.rows.end());
  std::ostringstream e1;
  write_exam_csv(e1, rows, data.extra_columns);
  const auto again = parse_exam_csv(e1.str());
  CHECK(again.subjects.size() == data.subjects.size());
  CHECK(again.rejects.empty());
}
