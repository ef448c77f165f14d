#include "moocdb/problem_tree.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace moocdb {

namespace {

std::int64_t effective_order(const ProblemNode& n, std::size_t index) {
  return n.order.value_or(static_cast<std::int64_t>(index) + 1);
}

// Children paired with their effective orders, sorted by order.
std::vector<std::pair<std::int64_t, const ProblemNode*>> ordered_children(const ProblemNode& n) {
  std::vector<std::pair<std::int64_t, const ProblemNode*>> out;
  out.reserve(n.children.size());
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    out.emplace_back(effective_order(n.children[i], i), &n.children[i]);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

void number_into(const ProblemNode& node, std::optional<Id> parent,
                 std::optional<std::int64_t> order, Id& next_id, std::vector<Problem>& out) {
  Problem row;
  row.problem_id = next_id++;
  row.problem_parent_id = parent;
  row.order_id = order;
  row.problem_name = node.name;
  row.problem_type_id = node.problem_type_id;
  row.problem_release_timestamp = node.release;
  row.problem_soft_deadline_timestamp = node.soft_deadline;
  row.problem_hard_deadline_timestamp = node.hard_deadline;
  row.problem_max_submission = node.max_submission;
  out.push_back(std::move(row));
  Id self = out.back().problem_id;

  auto kids = ordered_children(node);
  for (std::size_t i = 1; i < kids.size(); ++i) {
    if (kids[i].first == kids[i - 1].first) {
      throw StructureError("duplicate sibling order " + std::to_string(kids[i].first) +
                               " under '" + node.name + "'",
                           self);
    }
  }
  for (const auto& [ord, child] : kids) number_into(*child, self, ord, next_id, out);
}

}  // namespace

std::size_t ProblemNode::node_count() const {
  std::size_t n = 1;
  for (const auto& c : children) n += c.node_count();
  return n;
}

bool structurally_equal(const ProblemNode& a, const ProblemNode& b) {
  if (a.name != b.name || a.problem_type_id != b.problem_type_id || a.release != b.release ||
      a.soft_deadline != b.soft_deadline || a.hard_deadline != b.hard_deadline ||
      a.max_submission != b.max_submission || a.children.size() != b.children.size()) {
    return false;
  }
  auto ka = ordered_children(a);
  auto kb = ordered_children(b);
  for (std::size_t i = 0; i < ka.size(); ++i) {
    if (ka[i].first != kb[i].first || !structurally_equal(*ka[i].second, *kb[i].second)) {
      return false;
    }
  }
  return true;
}

std::vector<Problem> number_problem_tree(const ProblemNode& root, Id first_id) {
  std::vector<Problem> out;
  out.reserve(root.node_count());
  Id next = first_id;
  number_into(root, std::nullopt, std::nullopt, next, out);
  return out;
}

std::vector<Problem> number_problem_forest(const std::vector<ProblemNode>& roots, Id first_id) {
  std::vector<Problem> out;
  Id next = first_id;
  for (const auto& r : roots) number_into(r, std::nullopt, std::nullopt, next, out);
  return out;
}

std::vector<ProblemNode> reconstruct_problem_tree(const std::vector<Problem>& rows) {
  std::unordered_map<Id, const Problem*> by_id;
  for (const auto& r : rows) {
    if (!by_id.emplace(r.problem_id, &r).second) {
      throw StructureError("duplicate problem_id " + std::to_string(r.problem_id), r.problem_id);
    }
  }
  std::unordered_map<Id, std::vector<const Problem*>> children;
  std::vector<const Problem*> roots;
  for (const auto& r : rows) {
    if (!r.problem_parent_id) {
      roots.push_back(&r);
      continue;
    }
    if (*r.problem_parent_id == r.problem_id) {
      throw StructureError("problem " + std::to_string(r.problem_id) + " is its own parent",
                           r.problem_id);
    }
    if (!by_id.contains(*r.problem_parent_id)) {
      throw StructureError("problem " + std::to_string(r.problem_id) + " has dangling parent " +
                               std::to_string(*r.problem_parent_id),
                           r.problem_id);
    }
    children[*r.problem_parent_id].push_back(&r);
  }
  for (auto& [parent, kids] : children) {
    std::sort(kids.begin(), kids.end(), [](const Problem* a, const Problem* b) {
      return std::pair(a->order_id.value_or(0), a->problem_id) <
             std::pair(b->order_id.value_or(0), b->problem_id);
    });
    for (std::size_t i = 1; i < kids.size(); ++i) {
      if (kids[i]->order_id && kids[i]->order_id == kids[i - 1]->order_id) {
        throw StructureError("duplicate sibling order under problem " + std::to_string(parent),
                             kids[i]->problem_id);
      }
    }
  }
  std::sort(roots.begin(), roots.end(),
            [](const Problem* a, const Problem* b) { return a->problem_id < b->problem_id; });

  std::size_t visited = 0;
  auto build = [&](auto&& self, const Problem& row) -> ProblemNode {
    ++visited;
    ProblemNode n;
    n.problem_id = row.problem_id;
    n.name = row.problem_name;
    n.problem_type_id = row.problem_type_id;
    n.release = row.problem_release_timestamp;
    n.soft_deadline = row.problem_soft_deadline_timestamp;
    n.hard_deadline = row.problem_hard_deadline_timestamp;
    n.max_submission = row.problem_max_submission;
    n.order = row.order_id;
    if (auto it = children.find(row.problem_id); it != children.end()) {
      for (const Problem* kid : it->second) n.children.push_back(self(self, *kid));
    }
    return n;
  };
  std::vector<ProblemNode> forest;
  for (const Problem* r : roots) forest.push_back(build(build, *r));

  if (visited != rows.size()) {
    // Whatever was not reached from a root sits on (or under) a cycle.
    std::unordered_set<Id> reached;
    auto mark = [&](auto&& self, const ProblemNode& n) -> void {
      reached.insert(n.problem_id);
      for (const auto& c : n.children) self(self, c);
    };
    for (const auto& t : forest) mark(mark, t);
    Id worst = 0;
    for (const auto& r : rows) {
      if (!reached.contains(r.problem_id) && (worst == 0 || r.problem_id < worst)) {
        worst = r.problem_id;
      }
    }
    throw StructureError("problem " + std::to_string(worst) + " is part of a parent cycle", worst);
  }
  return forest;
}

std::vector<Id> leaf_order(const std::vector<ProblemNode>& forest) {
  std::vector<Id> out;
  auto walk = [&](auto&& self, const ProblemNode& n) -> void {
    if (n.children.empty()) {
      out.push_back(n.problem_id);
      return;
    }
    for (const auto& c : n.children) self(self, c);
  };
  for (const auto& t : forest) walk(walk, t);
  return out;
}

std::size_t ThreadNode::size() const {
  std::size_t n = 1;
  for (const auto& r : replies) n += r.size();
  return n;
}

ThreadNode reconstruct_thread(const std::vector<Collaboration>& rows, Id root_id) {
  std::unordered_map<Id, const Collaboration*> by_id;
  for (const auto& r : rows) by_id.emplace(r.collaboration_id, &r);
  auto root = by_id.find(root_id);
  if (root == by_id.end()) {
    throw StructureError("thread root " + std::to_string(root_id) + " not present", root_id);
  }
  std::unordered_map<Id, std::vector<const Collaboration*>> replies;
  for (const auto& r : rows) {
    if (!r.collaboration_parent_id) continue;
    if (!by_id.contains(*r.collaboration_parent_id)) {
      throw StructureError("collaboration " + std::to_string(r.collaboration_id) +
                               " has dangling parent " + std::to_string(*r.collaboration_parent_id),
                           r.collaboration_id);
    }
    replies[*r.collaboration_parent_id].push_back(&r);
  }
  for (auto& [parent, kids] : replies) {
    std::sort(kids.begin(), kids.end(), [](const Collaboration* a, const Collaboration* b) {
      return std::pair(a->collaboration_timestamp, a->collaboration_id) <
             std::pair(b->collaboration_timestamp, b->collaboration_id);
    });
  }
  std::unordered_set<Id> on_path;
  auto build = [&](auto&& self, const Collaboration& post) -> ThreadNode {
    if (!on_path.insert(post.collaboration_id).second) {
      throw StructureError("collaboration " + std::to_string(post.collaboration_id) +
                               " is part of a parent cycle",
                           post.collaboration_id);
    }
    ThreadNode node{post, {}};
    if (auto it = replies.find(post.collaboration_id); it != replies.end()) {
      for (const Collaboration* kid : it->second) node.replies.push_back(self(self, *kid));
    }
    return node;
  };
  return build(build, *root->second);
}

}  // namespace moocdb
