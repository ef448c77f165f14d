#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "moocdb/timestamp.hpp"

namespace moocdb {

// Table primary keys are dense, per table, starting at 1. User keys in the
// mode tables are ledger-derived 63-bit values (see identity.hpp).
using Id = std::int64_t;
using UserKey = std::int64_t;

// Reserved grader id for automated assessment.
inline constexpr UserKey kAutomatedGrader = 0;

inline constexpr std::string_view kSchemaVersion = "moocdb-1";

struct DurationMs {
  std::int64_t ms = 0;
  friend constexpr auto operator<=>(const DurationMs&, const DurationMs&) = default;
};

inline constexpr std::array<std::string_view, 8> kResourceTypeNames = {
    "book", "wiki", "forums", "exercises", "video", "problems", "tutorials", "lecture"};

bool is_resource_type_name(std::string_view name);

// -- observing mode --------------------------------------------------------

struct ResourceType {
  Id resource_type_id = 0;
  std::string resource_type_name;
};

struct Resource {
  Id resource_id = 0;
  std::string resource_name;
  std::string resource_uri;
  Id resource_type_id = 0;
  std::optional<Id> resource_parent;
  std::optional<std::int64_t> resource_child_number;
};

struct Url {
  Id url_id = 0;
  std::string url;
};

struct ResourceUrlLink {
  Id resource_id = 0;
  Id url_id = 0;
};

struct ObservedEvent {
  Id observed_event_id = 0;
  UserKey user_id_observed = 0;
  Id resource_id = 0;
  Id url_id = 0;
  Timestamp observed_event_timestamp;
  DurationMs observed_event_duration;
  std::string observed_event_ip;
  std::string observed_event_os;
  std::string observed_event_agent;
};

// -- submitting mode -------------------------------------------------------

struct ProblemType {
  Id problem_type_id = 0;
  std::string problem_type_name;
};

struct Problem {
  Id problem_id = 0;
  std::optional<Id> problem_parent_id;
  std::optional<std::int64_t> order_id;
  std::string problem_name;
  Id problem_type_id = 0;
  std::optional<Timestamp> problem_release_timestamp;
  std::optional<Timestamp> problem_soft_deadline_timestamp;
  std::optional<Timestamp> problem_hard_deadline_timestamp;
  // Unset means unlimited.
  std::optional<std::int64_t> problem_max_submission;
};

struct Submission {
  Id submission_id = 0;
  UserKey user_id = 0;
  Id problem_id = 0;
  Timestamp submission_timestamp;
  std::string submission_answer;
  std::int64_t submission_attempt_number = 1;
  std::string submission_ip;
  std::string submission_os;
  std::string submission_agent;
  bool is_submitted = true;
};

struct Assessment {
  Id assessment_id = 0;
  Id submission_id = 0;
  UserKey assessment_grader_id = kAutomatedGrader;
  double assessment_grade = 0.0;
  std::string assessment_feedback;
  Timestamp assessment_timestamp;
};

// -- collaborating mode ----------------------------------------------------

struct CollaborationType {
  Id collaboration_type_id = 0;
  std::string collaboration_type_name;
};

struct Collaboration {
  Id collaboration_id = 0;
  UserKey user_id = 0;
  Id collaboration_type_id = 0;
  std::optional<Id> collaboration_parent_id;
  Timestamp collaboration_timestamp;
  std::string collaboration_content;
  std::string collaboration_ip;
  std::string collaboration_os;
  std::string collaboration_agent;
};

// -- feedback mode ---------------------------------------------------------

struct Feedback {
  Id feedback_id = 0;
  UserKey user_id = 0;
  Id question_id = 0;
  Id answer_id = 0;
  Timestamp feedback_timestamp;
};

struct Question {
  Id question_id = 0;
  std::string question_content;
  std::string question_type;
  std::optional<Id> question_reference;
  std::optional<Id> survey_id;
};

struct Answer {
  Id answer_id = 0;
  std::string answer_content;
};

struct Survey {
  Id survey_id = 0;
  Timestamp survey_start_timestamp;
  Timestamp survey_end_timestamp;
};

// -- course-level identity tables -----------------------------------------

struct CourseUser {
  UserKey course_user_id = 0;
  std::optional<double> final_grade;
  std::string user_type;
  // Space axis for analytics; coarse location, not the PII record.
  std::string country;
  bool certified = false;
  UserKey user_id_observed = 0;
  UserKey user_id_submissions = 0;
  UserKey user_id_collaborations = 0;
  UserKey user_id_feedback = 0;
};

struct GlobalUser {
  UserKey global_user_id = 0;
  std::string course_id;
  UserKey course_user_id = 0;
};

enum class Table : std::uint8_t {
  resource_types,
  resources,
  urls,
  resource_urls,
  observed_events,
  problem_types,
  problems,
  submissions,
  assessments,
  collaboration_types,
  collaborations,
  feedbacks,
  questions,
  answers,
  surveys,
  course_user,
  global_user,
};

inline constexpr std::size_t kTableCount = 17;

inline constexpr std::array<Table, kTableCount> kAllTables = {
    Table::resource_types, Table::resources,           Table::urls,
    Table::resource_urls,  Table::observed_events,     Table::problem_types,
    Table::problems,       Table::submissions,         Table::assessments,
    Table::collaboration_types, Table::collaborations, Table::feedbacks,
    Table::questions,      Table::answers,             Table::surveys,
    Table::course_user,    Table::global_user,
};

std::string_view table_name(Table t);
std::optional<Table> table_from_name(std::string_view name);

class TableSet {
 public:
  TableSet() = default;
  TableSet(std::initializer_list<Table> tables) {
    for (Table t : tables) insert(t);
  }
  static TableSet all() {
    TableSet s;
    s.bits_.set();
    return s;
  }

  void insert(Table t) { bits_.set(static_cast<std::size_t>(t)); }
  void erase(Table t) { bits_.reset(static_cast<std::size_t>(t)); }
  bool contains(Table t) const { return bits_.test(static_cast<std::size_t>(t)); }
  bool includes(const TableSet& other) const { return (other.bits_ & ~bits_).none(); }
  std::size_t size() const { return bits_.count(); }
  std::vector<Table> tables() const;
  std::vector<std::string> names() const;

  friend bool operator==(const TableSet&, const TableSet&) = default;

 private:
  std::bitset<kTableCount> bits_;
};

// The normalized container for one course. `present` records which tables
// were loaded; a store opened from a partition holds only a subset.
struct CourseStore {
  std::string course_id;
  std::string schema_version{kSchemaVersion};
  TableSet present = TableSet::all();

  std::vector<ResourceType> resource_types;
  std::vector<Resource> resources;
  std::vector<Url> urls;
  std::vector<ResourceUrlLink> resource_urls;
  std::vector<ObservedEvent> observed_events;
  std::vector<ProblemType> problem_types;
  std::vector<Problem> problems;
  std::vector<Submission> submissions;
  std::vector<Assessment> assessments;
  std::vector<CollaborationType> collaboration_types;
  std::vector<Collaboration> collaborations;
  std::vector<Feedback> feedbacks;
  std::vector<Question> questions;
  std::vector<Answer> answers;
  std::vector<Survey> surveys;
  std::vector<CourseUser> course_users;
  std::vector<GlobalUser> global_users;

  std::size_t row_count(Table t) const;
};

// Error raised when an operation needs a table the caller's view lacks.
struct CapabilityError : std::runtime_error {
  CapabilityError(Table t, const std::string& context)
      : std::runtime_error(context + ": requires table '" + std::string(table_name(t)) +
                           "' which is not available at this access level"),
        table(t) {}
  Table table;
};

void require_tables(const CourseStore& store, const TableSet& needed, const std::string& context);

}  // namespace moocdb
