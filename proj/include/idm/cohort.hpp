#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idm/model.hpp"

namespace idm {

enum class CogStatus { Missing, Normal, Inconclusive, Dementia };
std::string_view cog_status_label(CogStatus s);

/// One subject-exam row of the input CSV. Subject-level fields (birth year,
/// vital status, sex, education, review outcome) may be repeated on every row
/// or given on any one of them.
struct RawExamRow {
  std::string subject_id;
  std::optional<int> birth_year;
  std::optional<double> exam1_year;
  std::optional<double> exam1_age;
  /// Empty for rows that only carry vital status.
  std::optional<double> exam_age;
  CogStatus status = CogStatus::Missing;
  /// Onset age set by a diagnostic review (used for exact onsets).
  std::optional<double> onset_age;
  std::optional<double> death_age;
  std::optional<double> last_contact_age;
  std::string sex;
  std::string education;
  std::optional<bool> conclusive_at_death;
  std::map<std::string, double> extra;
  /// 1-based source line (0 for rows built in memory).
  int line = 0;
};

/// A row or subject that failed schema or coherence checks.
struct Reject {
  int line = 0;
  std::string subject_id;
  std::string reason;
};

/// All rows of one subject, sorted by exam age, with merged subject fields.
struct SubjectRows {
  std::string id;
  std::vector<RawExamRow> rows;
  std::optional<int> birth_year;
  std::optional<double> death_age;
  std::optional<double> last_contact_age;
  std::string sex;
  std::string education;
  bool conclusive_at_death = false;
  std::map<std::string, double> extra;
};

struct ExamDataset {
  /// Subjects in first-appearance order.
  std::vector<SubjectRows> subjects;
  std::vector<Reject> rejects;
  /// Names of the numeric covariate columns beyond the fixed schema.
  std::vector<std::string> extra_columns;
};

/// Fixed schema columns; subject_id, exam_age and cog_status are required.
const std::vector<std::string>& exam_csv_columns();

/// Parses exam rows and groups them by subject. A subject with any invalid
/// row or contradictory subject-level values is moved to `rejects` as a whole.
ExamDataset parse_exam_csv(std::string_view text);
ExamDataset read_exam_csv(const std::string& path);
/// Groups in-memory rows the same way.
ExamDataset group_exam_rows(std::vector<RawExamRow> rows, std::vector<std::string> extra_columns = {});
void write_exam_csv(std::ostream& out, std::span<const RawExamRow> rows, std::span<const std::string> extra_columns);

enum class OnsetHandling { Auto, Exact, Interval };

struct CohortBounds {
  int id = 0;
  int first_year = 0;
  int last_year = 0;
  std::string label() const;
};

struct CohortRules {
  std::vector<CohortBounds> cohorts = {{1, 1915, 1924}, {2, 1925, 1934}, {3, 1935, 1944}};
  int first_assessment_year = 1975;
  double min_age = 60.0;
  OnsetHandling onset_handling = OnsetHandling::Auto;
  /// Calendar year the census window is measured back from; latest observed
  /// calendar year when absent.
  std::optional<int> horizon_year;
  double inconclusive_window = 4.0;

  /// Throws ConfigError unless cohorts are nonempty, ordered and contiguous.
  void validate() const;
  static CohortRules from_json(std::string_view text);
  std::string to_json() const;
};

enum class ExclusionStep {
  NoExam1Linkage,
  BornBeforeFirstCohort,
  BornAfterLastCohort,
  DiedBeforeFirstAssessmentYear,
  DiedBeforeMinAge,
  NoDementiaInformation,
  DementiaBeforeMinAge,
  NoAssessmentAfterMinAge,
};
inline constexpr int kExclusionSteps = 8;
std::string exclusion_label(ExclusionStep step, const CohortRules& rules);

struct CohortAssignment {
  /// 0 when excluded.
  int cohort = 0;
  std::optional<ExclusionStep> excluded;
};

CohortAssignment assign_birth_cohort(std::optional<int> birth_year, const CohortRules& rules = {});

/// Birth year from the explicit column, else exam-1 year minus exam-1 age.
std::optional<int> resolve_birth_year(const SubjectRows& s);

struct FlowchartReport {
  int initial_n = 0;
  std::array<int, kExclusionSteps> excluded{};
  std::vector<std::string> step_labels;
  /// cohort id -> included subjects
  std::map<int, int> included;
  /// Subjects removed before the flowchart for schema or coherence problems.
  int schema_rejects = 0;

  int total_excluded() const;
  int total_included() const;
};

struct FlowchartResult {
  FlowchartReport report;
  std::vector<SubjectRows> eligible;
  /// (subject id, step) for every excluded subject.
  std::vector<std::pair<std::string, ExclusionStep>> exclusions;
};

/// Applies the exclusion steps in order; each subject is removed at its first
/// matching step. Asserts initial N = exclusions + included.
FlowchartResult apply_flowchart(const ExamDataset& data, const CohortRules& rules = {});

/// Builds the likelihood record of an eligible subject. Throws ConflictError
/// listing the offending source lines when assessments contradict each other.
SubjectRecord derive_subject_record(const SubjectRows& s, const CohortRules& rules = {});

/// "low"/"high" education from years of schooling or a category word.
std::optional<bool> high_education(std::string_view value);

enum class CensusCategory {
  AliveDementiaFree,
  AliveInconclusive,
  DiagnosedDementia,
  DeathWithoutDementia,
  DeathInconclusive,
};
inline constexpr int kCensusCategories = 5;
std::string_view census_label(CensusCategory c);

struct CohortCensusRow {
  int cohort = 0;
  std::string label;
  int size = 0;
  std::array<int, kCensusCategories> counts{};
  /// Diagnosed subjects who later died (subgroup of DiagnosedDementia).
  int died_after_diagnosis = 0;
};

struct CohortCensus {
  int horizon_year = 0;
  double window = 4.0;
  std::vector<CohortCensusRow> cohorts;
};

CensusCategory census_category(const SubjectRecord& r, int horizon_year, double window);
CohortCensus status_census(std::span<const SubjectRecord> records, const CohortRules& rules = {});

/// 100 * part / whole rounded to one decimal ("90.6"); "0.0" when whole is 0.
std::string percent_text(int part, int whole);

void write_flowchart_csv(std::ostream& out, const FlowchartReport& report, const CohortRules& rules);
void write_census_csv(std::ostream& out, const CohortCensus& census);
/// Table-1 style plain text.
std::string census_text(const CohortCensus& census);
void write_rejects_csv(std::ostream& out, std::span<const Reject> rejects);

/// Serializes SubjectRecords (one row per subject) and reads them back.
void write_records_csv(std::ostream& out, std::span<const SubjectRecord> records);
std::vector<SubjectRecord> read_records_csv(const std::string& path);
std::vector<SubjectRecord> parse_records_csv(std::string_view text);

}  // namespace idm
