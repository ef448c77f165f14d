#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "moocdb/schema.hpp"

namespace moocdb {

// Cohort predicate: a conjunction of terms over course_user rows.
//   all | certified | final_grade>=X | user_type=NAME | country=CODE
struct CohortTerm {
  enum class Kind { all, certified, min_final_grade, user_type, country };
  Kind kind = Kind::all;
  double threshold = 0.0;
  std::string value;
};

struct Cohort {
  std::vector<CohortTerm> terms;

  bool is_all() const;
  bool matches(const CourseUser& u) const;
  std::string to_string() const;

  // Throws AccessError for terms naming PII fields and std::invalid_argument
  // for anything else unparsable.
  static Cohort parse(std::string_view text);
};

struct SpaceSpec {
  enum class Kind { none, group_by_country, country_filter };
  Kind kind = Kind::none;
  std::string country;

  std::string to_string() const;
  // "none" | "by_country" | "country=CODE"
  static SpaceSpec parse(std::string_view text);
};

struct CutSpec {
  std::optional<Timestamp> from;  // inclusive
  std::optional<Timestamp> to;    // exclusive
  Cohort cohort;
  SpaceSpec space;

  bool in_window(Timestamp t) const;
  // Cuts on cohort or space need the course user table.
  bool needs_course_users() const;
};

enum class Aggregation { count, sum, mean, distribution };

std::string_view aggregation_name(Aggregation a);
std::optional<Aggregation> aggregation_from_name(std::string_view name);

// Per-user measures. Each one is the sum over one mode table's rows in the
// window of a per-row value.
enum class Measure {
  submissions,          // is_submitted rows, 1 each
  correct_submissions,  // is_submitted rows whose max grade is 1.0
  observed_events,      // 1 each
  observed_duration,    // duration seconds
  collaborations,       // 1 each
  feedbacks,            // 1 each
};

std::string_view measure_name(Measure m);
std::optional<Measure> measure_from_name(std::string_view name);
TableSet measure_tables(Measure m);

struct StatisticDef {
  std::string name;
  std::string description;
  Aggregation aggregation = Aggregation::count;
  Measure target = Measure::submissions;
  CutSpec default_cuts;
};

// Statistics shipped with the tool, read from the embedded definitions file.
const std::vector<StatisticDef>& builtin_statistics();
const StatisticDef* find_statistic(std::string_view name);
std::vector<StatisticDef> parse_statistics(const nlohmann::json& j);

struct GroupValue {
  double value = 0.0;
  std::size_t users = 0;  // contributing users
  std::size_t rows = 0;
};

// For distribution, keys are "<group>:<per-user value>" and value is the
// number of users with that value.
struct StatResult {
  std::string statistic;
  Aggregation aggregation = Aggregation::count;
  std::map<std::string, GroupValue> groups;
  std::size_t cohort_size = 0;  // users passing the cohort and space filters
  CutSpec cuts;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Group key used when the space axis is not grouped.
inline constexpr std::string_view kAllGroup = "all";

std::set<UserKey> select_cohort(const CourseStore& store, const Cohort& cohort);

// Only rows inside the window, from users inside the cohort, count. A group
// exists only when at least one of its rows passed the filters.
StatResult compute_statistic(const CourseStore& store, const StatisticDef& stat,
                             const CutSpec& cuts);

// Canonical text form of a per-user or aggregate value.
std::string format_value(double v);

struct CorrelationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorrelationPair {
  UserKey course_user_id = 0;
  double video_seconds = 0.0;
  std::int64_t submissions = 0;
  std::int64_t correct = 0;
};

struct CorrelationResult {
  Id problem_id = 0;
  std::int64_t week = 0;  // 1-based, counted from the earliest release
  Timestamp window_start;
  Timestamp window_end;  // inclusive
  std::vector<CorrelationPair> pairs;
  std::size_t n = 0;
  std::optional<double> r;
  // Set when r is undefined, e.g. "zero variance in video_seconds".
  std::string undefined_reason;

  nlohmann::json to_json() const;
};

// Time spent on the week's videos against correct homework submissions.
CorrelationResult video_homework_correlation(const CourseStore& store, Id homework_problem_id);

// Pearson correlation; nullopt when either column has zero variance or n < 2.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace moocdb
