#include "moocdb/export.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "moocdb/csv.hpp"
#include "moocdb/problem_tree.hpp"

namespace moocdb {

std::vector<FirstAttempt> first_graded_attempts(const CourseStore& store) {
  require_tables(store, {Table::submissions, Table::assessments}, "first_graded_attempts");
  std::unordered_map<Id, double> best;
  for (const auto& a : store.assessments) {
    auto [it, inserted] = best.emplace(a.submission_id, a.assessment_grade);
    if (!inserted) it->second = std::max(it->second, a.assessment_grade);
  }
  std::map<std::pair<UserKey, Id>, const Submission*> first;
  for (const auto& s : store.submissions) {
    if (!s.is_submitted || !best.contains(s.submission_id)) continue;
    auto [it, inserted] = first.emplace(std::pair(s.user_id, s.problem_id), &s);
    if (!inserted && s.submission_attempt_number < it->second->submission_attempt_number) it->second = &s;
  }
  std::vector<FirstAttempt> out;
  out.reserve(first.size());
  for (const auto& [key, s] : first) {
    out.push_back({key.first, key.second, s->submission_attempt_number,
                   best.at(s->submission_id) == 1.0, s->submission_timestamp});
  }
  std::sort(out.begin(), out.end(), [](const FirstAttempt& a, const FirstAttempt& b) {
    return std::tie(a.student, a.timestamp, a.problem_id) < std::tie(b.student, b.timestamp, b.problem_id);
  });
  return out;
}

IrtMatrix irt_matrix(const CourseStore& store) {
  require_tables(store, {Table::problems, Table::submissions, Table::assessments}, "irt_matrix");
  IrtMatrix m;
  m.problems = leaf_order(reconstruct_problem_tree(store.problems));
  std::unordered_map<Id, std::size_t> column;
  for (std::size_t i = 0; i < m.problems.size(); ++i) column.emplace(m.problems[i], i);

  auto attempts = first_graded_attempts(store);
  for (const auto& a : attempts) {
    if (m.students.empty() || m.students.back() != a.student) m.students.push_back(a.student);
  }
  std::unordered_map<UserKey, std::size_t> row;
  for (std::size_t i = 0; i < m.students.size(); ++i) row.emplace(m.students[i], i);
  m.cells.assign(m.students.size(), std::vector<std::optional<int>>(m.problems.size()));
  for (const auto& a : attempts) {
    auto c = column.find(a.problem_id);
    if (c == column.end()) continue;
    m.cells[row.at(a.student)][c->second] = a.correct ? 1 : 0;
  }
  return m;
}

std::string export_bkt(const CourseStore& store) {
  std::string out(kBktHeader);
  out += '\n';
  out += csv::format_row({"student_id", "problem_id", "attempt_index", "first_attempt_correct", "timestamp"});
  for (const auto& a : first_graded_attempts(store)) {
    out += csv::format_row({std::to_string(a.student), std::to_string(a.problem_id),
                            std::to_string(a.attempt_index), a.correct ? "1" : "0",
                            format_timestamp(a.timestamp)});
  }
  return out;
}

std::string export_irt(const CourseStore& store) {
  IrtMatrix m = irt_matrix(store);
  std::string out(kIrtHeader);
  out += '\n';
  csv::Row header{"student_id"};
  for (Id p : m.problems) header.push_back(std::to_string(p));
  out += csv::format_row(header);
  for (std::size_t i = 0; i < m.students.size(); ++i) {
    csv::Row r{std::to_string(m.students[i])};
    for (const auto& cell : m.cells[i]) r.push_back(cell ? std::to_string(*cell) : std::string());
    out += csv::format_row(r);
  }
  return out;
}

}  // namespace moocdb
