#include "moocdb/schema.hpp"

#include <algorithm>

namespace moocdb {

namespace {

constexpr std::array<std::string_view, kTableCount> kTableNames = {
    "resource_types", "resources",   "urls",           "resource_urls", "observed_events",
    "problem_types",  "problems",    "submissions",    "assessments",   "collaboration_types",
    "collaborations", "feedbacks",   "questions",      "answers",       "surveys",
    "course_user",    "global_user",
};

}  // namespace

bool is_resource_type_name(std::string_view name) {
  return std::find(kResourceTypeNames.begin(), kResourceTypeNames.end(), name) !=
         kResourceTypeNames.end();
}

std::string_view table_name(Table t) { return kTableNames[static_cast<std::size_t>(t)]; }

std::optional<Table> table_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kTableCount; ++i) {
    if (kTableNames[i] == name) return static_cast<Table>(i);
  }
  return std::nullopt;
}

std::vector<Table> TableSet::tables() const {
  std::vector<Table> out;
  for (Table t : kAllTables) {
    if (contains(t)) out.push_back(t);
  }
  return out;
}

std::vector<std::string> TableSet::names() const {
  std::vector<std::string> out;
  for (Table t : tables()) out.emplace_back(table_name(t));
  return out;
}

std::size_t CourseStore::row_count(Table t) const {
  switch (t) {
    case Table::resource_types: return resource_types.size();
    case Table::resources: return resources.size();
    case Table::urls: return urls.size();
    case Table::resource_urls: return resource_urls.size();
    case Table::observed_events: return observed_events.size();
    case Table::problem_types: return problem_types.size();
    case Table::problems: return problems.size();
    case Table::submissions: return submissions.size();
    case Table::assessments: return assessments.size();
    case Table::collaboration_types: return collaboration_types.size();
    case Table::collaborations: return collaborations.size();
    case Table::feedbacks: return feedbacks.size();
    case Table::questions: return questions.size();
    case Table::answers: return answers.size();
    case Table::surveys: return surveys.size();
    case Table::course_user: return course_users.size();
    case Table::global_user: return global_users.size();
  }
  return 0;
}

void require_tables(const CourseStore& store, const TableSet& needed, const std::string& context) {
  for (Table t : needed.tables()) {
    if (!store.present.contains(t)) throw CapabilityError(t, context);
  }
}

}  // namespace moocdb
