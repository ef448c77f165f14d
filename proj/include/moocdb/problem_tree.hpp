#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "moocdb/schema.hpp"

namespace moocdb {

// Raised for malformed hierarchies: cycles, dangling parents, duplicate
// sibling orders. `offending_id` names the row at fault (0 when the input
// had no ids yet).
struct StructureError : std::runtime_error {
  StructureError(const std::string& what, Id offending_id)
      : std::runtime_error(what), offending_id(offending_id) {}
  Id offending_id;
};

// One node of a problem module (homework, quiz, ...). The root identifies
// the module; leaves are what students submit against.
struct ProblemNode {
  std::string name;
  Id problem_type_id = 0;
  std::optional<Timestamp> release;
  std::optional<Timestamp> soft_deadline;
  std::optional<Timestamp> hard_deadline;
  std::optional<std::int64_t> max_submission;
  // Sibling position. When unset, the position among children (1-based) is
  // used.
  std::optional<std::int64_t> order;
  std::vector<ProblemNode> children;

  // Filled by reconstruct_problem_tree; ignored by structural comparison.
  Id problem_id = 0;

  std::size_t node_count() const;
};

// Compares everything except problem_id, matching children by effective
// sibling order.
bool structurally_equal(const ProblemNode& a, const ProblemNode& b);

// Numbers nodes depth-first, pre-order, starting at first_id. Each child
// row carries its parent's id and its order_id.
std::vector<Problem> number_problem_tree(const ProblemNode& root, Id first_id = 1);
std::vector<Problem> number_problem_forest(const std::vector<ProblemNode>& roots, Id first_id = 1);

// Inverse of number_problem_forest. Roots come back in problem_id order,
// children sorted by order_id.
std::vector<ProblemNode> reconstruct_problem_tree(const std::vector<Problem>& rows);

// Leaf ids of a forest in depth-first order.
std::vector<Id> leaf_order(const std::vector<ProblemNode>& forest);

struct ThreadNode {
  Collaboration post;
  std::vector<ThreadNode> replies;

  std::size_t size() const;
};

// Builds the reply tree under root_id; replies are ordered by timestamp,
// then by collaboration_id.
ThreadNode reconstruct_thread(const std::vector<Collaboration>& rows, Id root_id);

}  // namespace moocdb
