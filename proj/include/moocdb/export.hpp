#pragma once

#include <optional>
#include <string>
#include <vector>

#include "moocdb/schema.hpp"

namespace moocdb {

inline constexpr std::string_view kBktHeader = "# moocdb-bkt v1";
inline constexpr std::string_view kIrtHeader = "# moocdb-irt v1";

// The lowest-numbered submitted attempt of a (student, problem) pair that
// has at least one assessment. Correct when its best grade is 1.0.
struct FirstAttempt {
  UserKey student = 0;  // submissions-mode key
  Id problem_id = 0;
  std::int64_t attempt_index = 0;
  bool correct = false;
  Timestamp timestamp;
};

// Sorted by student, then timestamp, then problem_id.
std::vector<FirstAttempt> first_graded_attempts(const CourseStore& store);

struct IrtMatrix {
  std::vector<UserKey> students;  // ascending
  std::vector<Id> problems;       // leaves, depth-first order
  std::vector<std::vector<std::optional<int>>> cells;
};

IrtMatrix irt_matrix(const CourseStore& store);

// Version comment line, CSV header, rows.
//   student_id,problem_id,attempt_index,first_attempt_correct,timestamp
std::string export_bkt(const CourseStore& store);
//   student_id,<leaf problem_id>...   (blank cell: no graded attempt)
std::string export_irt(const CourseStore& store);

}  // namespace moocdb
