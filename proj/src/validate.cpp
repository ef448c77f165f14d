#include "moocdb/validate.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace moocdb {

namespace {

class Checker {
 public:
  explicit Checker(const CourseStore& s) : s_(s) {}

  ValidationReport run() {
    if (has(Table::resource_types)) check_resource_types();
    if (has(Table::resources)) check_resources();
    if (has(Table::urls)) check_urls();
    if (has(Table::resource_urls)) check_resource_urls();
    if (has(Table::observed_events)) check_observed();
    if (has(Table::problem_types)) unique_ids(Table::problem_types, s_.problem_types, &ProblemType::problem_type_id);
    if (has(Table::problems)) check_problems();
    if (has(Table::submissions)) check_submissions();
    if (has(Table::assessments)) check_assessments();
    if (has(Table::collaboration_types)) unique_ids(Table::collaboration_types, s_.collaboration_types, &CollaborationType::collaboration_type_id);
    if (has(Table::collaborations)) check_collaborations();
    if (has(Table::answers)) unique_ids(Table::answers, s_.answers, &Answer::answer_id);
    if (has(Table::surveys)) check_surveys();
    if (has(Table::questions)) check_questions();
    if (has(Table::feedbacks)) check_feedbacks();
    if (has(Table::course_user)) check_course_users();
    if (has(Table::global_user)) check_global_users();
    return std::move(report_);
  }

 private:
  bool has(Table t) const { return s_.present.contains(t); }

  void flag(Table t, Id key, std::string what) {
    report_.violations.push_back({t, std::to_string(key), std::move(what)});
  }
  void flag(Table t, std::string key, std::string what) {
    report_.violations.push_back({t, std::move(key), std::move(what)});
  }

  template <class Row, class Field>
  std::unordered_set<Id> unique_ids(Table t, const std::vector<Row>& rows, Field Row::*id) {
    std::unordered_set<Id> seen;
    for (const auto& r : rows) {
      if (r.*id < 0) flag(t, r.*id, "negative id");
      if (!seen.insert(r.*id).second) flag(t, r.*id, "duplicate primary key");
    }
    return seen;
  }

  void event_time(Table t, Id key, Timestamp ts) {
    if (!in_event_range(ts)) flag(t, key, "timestamp outside [2008-01-01, 2100-01-01)");
  }

  // Reports each dangling parent once and each cycle once (by its smallest
  // member), so a single corrupted pointer yields a single violation.
  void check_forest(Table t, const std::vector<std::pair<Id, std::optional<Id>>>& links) {
    std::unordered_map<Id, std::optional<Id>> parent;
    for (const auto& [id, p] : links) parent.emplace(id, p);
    enum class State { unseen, walking, done };
    std::unordered_map<Id, State> state;
    for (const auto& [start, unused] : links) {
      if (state[start] != State::unseen) continue;
      std::vector<Id> path;
      Id cur = start;
      for (;;) {
        auto& st = state[cur];
        if (st == State::done) break;
        if (st == State::walking) {
          auto it = std::find(path.begin(), path.end(), cur);
          Id smallest = *std::min_element(it, path.end());
          flag(t, smallest, "parent links form a cycle (" +
                                std::to_string(std::distance(it, path.end())) + " rows)");
          break;
        }
        st = State::walking;
        path.push_back(cur);
        const auto& p = parent[cur];
        if (!p) break;
        if (!parent.contains(*p)) {
          flag(t, cur, "parent " + std::to_string(*p) + " does not resolve");
          break;
        }
        cur = *p;
      }
      for (Id id : path) state[id] = State::done;
    }
  }

  template <class Row>
  void sibling_orders(Table t, const std::vector<Row>& rows, std::optional<Id> Row::*parent,
                      std::optional<std::int64_t> Row::*order, Id Row::*id) {
    std::set<std::pair<Id, std::int64_t>> seen;
    for (const auto& r : rows) {
      if (!(r.*order)) continue;
      if (*(r.*order) < 0) flag(t, r.*id, "negative sibling order");
      Id p = (r.*parent).value_or(-1);
      if (!seen.emplace(p, *(r.*order)).second) flag(t, r.*id, "duplicate sibling order");
    }
  }

  void check_resource_types() {
    unique_ids(Table::resource_types, s_.resource_types, &ResourceType::resource_type_id);
    std::unordered_set<std::string> names;
    for (const auto& r : s_.resource_types) {
      if (!is_resource_type_name(r.resource_type_name)) {
        flag(Table::resource_types, r.resource_type_id,
             "type name '" + r.resource_type_name + "' not in the closed set");
      }
      if (!names.insert(r.resource_type_name).second) {
        flag(Table::resource_types, r.resource_type_id, "duplicate type name");
      }
    }
  }

  void check_resources() {
    resource_ids_ = unique_ids(Table::resources, s_.resources, &Resource::resource_id);
    std::unordered_set<std::string> uris;
    std::unordered_set<Id> types;
    for (const auto& t : s_.resource_types) types.insert(t.resource_type_id);
    std::vector<std::pair<Id, std::optional<Id>>> links;
    for (const auto& r : s_.resources) {
      if (!uris.insert(r.resource_uri).second) flag(Table::resources, r.resource_id, "duplicate resource_uri");
      if (has(Table::resource_types) && !types.contains(r.resource_type_id)) {
        flag(Table::resources, r.resource_id, "resource_type_id does not resolve");
      }
      links.emplace_back(r.resource_id, r.resource_parent);
    }
    check_forest(Table::resources, links);
    sibling_orders(Table::resources, s_.resources, &Resource::resource_parent,
                   &Resource::resource_child_number, &Resource::resource_id);
  }

  void check_urls() {
    url_ids_ = unique_ids(Table::urls, s_.urls, &Url::url_id);
    std::unordered_set<std::string> seen;
    for (const auto& u : s_.urls) {
      if (!seen.insert(u.url).second) flag(Table::urls, u.url_id, "duplicate url");
    }
  }

  static std::string pair_key(Id a, Id b) { return std::to_string(a) + "/" + std::to_string(b); }

  void check_resource_urls() {
    for (const auto& l : s_.resource_urls) {
      if (!links_.emplace(l.resource_id, l.url_id).second) {
        flag(Table::resource_urls, pair_key(l.resource_id, l.url_id), "duplicate link");
      }
      if (has(Table::resources) && !resource_ids_.contains(l.resource_id)) {
        flag(Table::resource_urls, pair_key(l.resource_id, l.url_id), "resource_id does not resolve");
      }
      if (has(Table::urls) && !url_ids_.contains(l.url_id)) {
        flag(Table::resource_urls, pair_key(l.resource_id, l.url_id), "url_id does not resolve");
      }
    }
  }

  void check_observed() {
    unique_ids(Table::observed_events, s_.observed_events, &ObservedEvent::observed_event_id);
    for (const auto& e : s_.observed_events) {
      Id k = e.observed_event_id;
      if (e.observed_event_duration.ms < 0) flag(Table::observed_events, k, "negative duration");
      event_time(Table::observed_events, k, e.observed_event_timestamp);
      if (has(Table::resources) && !resource_ids_.contains(e.resource_id)) {
        flag(Table::observed_events, k, "resource_id does not resolve");
      }
      if (has(Table::urls) && !url_ids_.contains(e.url_id)) {
        flag(Table::observed_events, k, "url_id does not resolve");
      }
      if (has(Table::resource_urls) && !links_.contains({e.resource_id, e.url_id})) {
        flag(Table::observed_events, k, "(resource_id, url_id) pair missing from resource_urls");
      }
    }
  }

  void check_problems() {
    std::unordered_set<Id> ids = unique_ids(Table::problems, s_.problems, &Problem::problem_id);
    std::unordered_set<Id> types;
    for (const auto& t : s_.problem_types) types.insert(t.problem_type_id);
    std::vector<std::pair<Id, std::optional<Id>>> links;
    for (const auto& p : s_.problems) {
      Id k = p.problem_id;
      problems_.emplace(k, &p);
      if (p.problem_parent_id) has_children_.insert(*p.problem_parent_id);
      links.emplace_back(k, p.problem_parent_id);
      if (has(Table::problem_types) && !types.contains(p.problem_type_id)) {
        flag(Table::problems, k, "problem_type_id does not resolve");
      }
      const auto& rel = p.problem_release_timestamp;
      const auto& soft = p.problem_soft_deadline_timestamp;
      const auto& hard = p.problem_hard_deadline_timestamp;
      if (soft && hard && *soft > *hard) flag(Table::problems, k, "soft deadline after hard deadline");
      if (rel && soft && *rel > *soft) flag(Table::problems, k, "release after soft deadline");
      if (p.problem_max_submission && *p.problem_max_submission <= 0) {
        flag(Table::problems, k, "problem_max_submission must be positive");
      }
    }
    check_forest(Table::problems, links);
    sibling_orders(Table::problems, s_.problems, &Problem::problem_parent_id, &Problem::order_id,
                   &Problem::problem_id);
  }

  void check_submissions() {
    unique_ids(Table::submissions, s_.submissions, &Submission::submission_id);
    std::map<std::pair<UserKey, Id>, std::vector<const Submission*>> per_user_problem;
    for (const auto& sub : s_.submissions) {
      Id k = sub.submission_id;
      submissions_.emplace(k, &sub);
      event_time(Table::submissions, k, sub.submission_timestamp);
      if (sub.submission_attempt_number < 1) flag(Table::submissions, k, "attempt number must be positive");
      if (has(Table::problems)) {
        if (!problems_.contains(sub.problem_id)) {
          flag(Table::submissions, k, "problem_id does not resolve");
        } else if (has_children_.contains(sub.problem_id)) {
          flag(Table::submissions, k, "problem_id is not a leaf of the problem forest");
        }
      }
      per_user_problem[{sub.user_id, sub.problem_id}].push_back(&sub);
    }
    for (auto& [key, subs] : per_user_problem) {
      std::stable_sort(subs.begin(), subs.end(), [](const Submission* a, const Submission* b) {
        return std::tie(a->submission_timestamp, a->submission_attempt_number) <
               std::tie(b->submission_timestamp, b->submission_attempt_number);
      });
      for (std::size_t i = 1; i < subs.size(); ++i) {
        if (subs[i]->submission_attempt_number <= subs[i - 1]->submission_attempt_number) {
          flag(Table::submissions, subs[i]->submission_id,
               "attempt numbers not strictly increasing with timestamp");
        }
      }
      auto it = problems_.find(key.second);
      if (it != problems_.end() && it->second->problem_max_submission) {
        auto graded = std::count_if(subs.begin(), subs.end(), [](auto* s) { return s->is_submitted; });
        if (graded > *it->second->problem_max_submission) {
          flag(Table::submissions, subs.back()->submission_id,
               "submitted count exceeds problem_max_submission");
        }
      }
    }
  }

  void check_assessments() {
    unique_ids(Table::assessments, s_.assessments, &Assessment::assessment_id);
    for (const auto& a : s_.assessments) {
      Id k = a.assessment_id;
      if (!(a.assessment_grade >= 0.0 && a.assessment_grade <= 1.0)) {
        flag(Table::assessments, k, "grade out of [0,1]");
      }
      event_time(Table::assessments, k, a.assessment_timestamp);
      if (!has(Table::submissions)) continue;
      auto it = submissions_.find(a.submission_id);
      if (it == submissions_.end()) {
        flag(Table::assessments, k, "submission_id does not resolve");
      } else if (a.assessment_timestamp < it->second->submission_timestamp) {
        flag(Table::assessments, k, "assessment precedes its submission");
      }
    }
  }

  void check_collaborations() {
    unique_ids(Table::collaborations, s_.collaborations, &Collaboration::collaboration_id);
    std::unordered_set<Id> types;
    for (const auto& t : s_.collaboration_types) types.insert(t.collaboration_type_id);
    std::unordered_map<Id, const Collaboration*> by_id;
    std::vector<std::pair<Id, std::optional<Id>>> links;
    for (const auto& c : s_.collaborations) {
      by_id.emplace(c.collaboration_id, &c);
      links.emplace_back(c.collaboration_id, c.collaboration_parent_id);
      event_time(Table::collaborations, c.collaboration_id, c.collaboration_timestamp);
      if (has(Table::collaboration_types) && !types.contains(c.collaboration_type_id)) {
        flag(Table::collaborations, c.collaboration_id, "collaboration_type_id does not resolve");
      }
    }
    check_forest(Table::collaborations, links);
    for (const auto& c : s_.collaborations) {
      if (!c.collaboration_parent_id) continue;
      auto it = by_id.find(*c.collaboration_parent_id);
      if (it != by_id.end() && c.collaboration_timestamp < it->second->collaboration_timestamp) {
        flag(Table::collaborations, c.collaboration_id, "reply precedes its parent");
      }
    }
  }

  void check_surveys() {
    survey_ids_ = unique_ids(Table::surveys, s_.surveys, &Survey::survey_id);
    for (const auto& sv : s_.surveys) {
      if (sv.survey_start_timestamp > sv.survey_end_timestamp) {
        flag(Table::surveys, sv.survey_id, "survey starts after it ends");
      }
    }
  }

  void check_questions() {
    question_ids_ = unique_ids(Table::questions, s_.questions, &Question::question_id);
    for (const auto& q : s_.questions) {
      if (q.question_reference && has(Table::resources) && !resource_ids_.contains(*q.question_reference)) {
        flag(Table::questions, q.question_id, "question_reference does not resolve");
      }
      if (q.survey_id && has(Table::surveys) && !survey_ids_.contains(*q.survey_id)) {
        flag(Table::questions, q.question_id, "survey_id does not resolve");
      }
    }
  }

  void check_feedbacks() {
    unique_ids(Table::feedbacks, s_.feedbacks, &Feedback::feedback_id);
    std::unordered_set<Id> answers;
    for (const auto& a : s_.answers) answers.insert(a.answer_id);
    for (const auto& f : s_.feedbacks) {
      event_time(Table::feedbacks, f.feedback_id, f.feedback_timestamp);
      if (has(Table::questions) && !question_ids_.contains(f.question_id)) {
        flag(Table::feedbacks, f.feedback_id, "question_id does not resolve");
      }
      if (has(Table::answers) && !answers.contains(f.answer_id)) {
        flag(Table::feedbacks, f.feedback_id, "answer_id does not resolve");
      }
    }
  }

  void check_course_users() {
    std::unordered_set<UserKey> course_ids;
    std::unordered_set<UserKey> observed, submissions, collaborations, feedback;
    std::unordered_set<UserKey> all_keys;
    for (const auto& u : s_.course_users) {
      Id k = u.course_user_id;
      if (!course_ids.insert(k).second) flag(Table::course_user, k, "duplicate course_user_id");
      if (u.final_grade && !(*u.final_grade >= 0.0 && *u.final_grade <= 1.0)) {
        flag(Table::course_user, k, "final_grade out of [0,1]");
      }
      observed.insert(u.user_id_observed);
      submissions.insert(u.user_id_submissions);
      collaborations.insert(u.user_id_collaborations);
      feedback.insert(u.user_id_feedback);
      for (UserKey key : {u.course_user_id, u.user_id_observed, u.user_id_submissions,
                          u.user_id_collaborations, u.user_id_feedback}) {
        if (!all_keys.insert(key).second) flag(Table::course_user, k, "user id namespaces overlap");
      }
    }
    course_user_ids_ = std::move(course_ids);

    auto resolve = [&](Table t, Id row, UserKey key, const std::unordered_set<UserKey>& ids) {
      if (has(t) && !ids.contains(key)) flag(t, row, "user id does not resolve in course_user");
    };
    for (const auto& e : s_.observed_events) resolve(Table::observed_events, e.observed_event_id, e.user_id_observed, observed);
    for (const auto& e : s_.submissions) resolve(Table::submissions, e.submission_id, e.user_id, submissions);
    for (const auto& e : s_.collaborations) resolve(Table::collaborations, e.collaboration_id, e.user_id, collaborations);
    for (const auto& e : s_.feedbacks) resolve(Table::feedbacks, e.feedback_id, e.user_id, feedback);
    for (const auto& a : s_.assessments) {
      if (a.assessment_grader_id != kAutomatedGrader && has(Table::assessments) &&
          !submissions.contains(a.assessment_grader_id)) {
        flag(Table::assessments, a.assessment_id, "grader id does not resolve in course_user");
      }
    }
  }

  void check_global_users() {
    std::set<std::pair<UserKey, UserKey>> seen;
    for (const auto& g : s_.global_users) {
      std::string key = std::to_string(g.global_user_id) + "/" + std::to_string(g.course_user_id);
      if (!seen.emplace(g.global_user_id, g.course_user_id).second) {
        flag(Table::global_user, key, "duplicate mapping");
      }
      if (has(Table::course_user) && g.course_id == s_.course_id &&
          !course_user_ids_.contains(g.course_user_id)) {
        flag(Table::global_user, key, "course_user_id does not resolve");
      }
    }
  }

  const CourseStore& s_;
  ValidationReport report_;
  std::unordered_set<Id> resource_ids_, url_ids_, survey_ids_, question_ids_;
  std::unordered_set<UserKey> course_user_ids_;
  std::set<std::pair<Id, Id>> links_;
  std::unordered_map<Id, const Problem*> problems_;
  std::unordered_set<Id> has_children_;
  std::unordered_map<Id, const Submission*> submissions_;
};

}  // namespace

std::size_t ValidationReport::count_for(Table t) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(), [t](const Violation& v) { return v.table == t; }));
}

ValidationReport validate_store(const CourseStore& store) { return Checker(store).run(); }

std::string to_string(const Violation& v) {
  return std::string(table_name(v.table)) + "[" + v.row_key + "]: " + v.invariant;
}

}  // namespace moocdb
