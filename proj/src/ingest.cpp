#include "moocdb/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <sstream>
#include <unordered_map>

#include "moocdb/problem_tree.hpp"
#include "moocdb/store_io.hpp"
#include "moocdb/validate.hpp"

namespace moocdb {

namespace fs = std::filesystem;
using json = nlohmann::json;

// -- configuration ---------------------------------------------------------

IngestConfig IngestConfig::from_json(const json& j) {
  IngestConfig c;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    if (j.contains("duration_cap_seconds")) {
      double secs = j.at("duration_cap_seconds").get<double>();
      if (!(secs > 0)) throw ConfigError("duration_cap_seconds must be positive");
      c.duration_cap = DurationMs{static_cast<std::int64_t>(secs * 1000.0 + 0.5)};
    }
    if (j.contains("type_mapping")) {
      for (const auto& [raw, mapped] : j.at("type_mapping").items()) {
        auto target = mapped.get<std::string>();
        if (!is_resource_type_name(target)) {
          throw ConfigError("type_mapping: '" + target + "' is not a resource type");
        }
        c.type_mapping[raw] = target;
      }
    }
    if (j.contains("orphan_types")) {
      for (const auto& [kind, type] : j.at("orphan_types").items()) {
        auto k = event_kind_from_name(kind);
        if (!k) throw ConfigError("orphan_types: unknown event kind '" + kind + "'");
        auto target = type.get<std::string>();
        if (!is_resource_type_name(target)) {
          throw ConfigError("orphan_types: '" + target + "' is not a resource type");
        }
        c.orphan_resource_type[*k] = target;
      }
    }
    if (j.contains("adapters")) {
      c.adapter_rules.clear();
      for (const auto& rule : j.at("adapters")) {
        auto suffix = rule.at("suffix").get<std::string>();
        auto name = rule.at("adapter").get<std::string>();
        if (!make_adapter(name)) throw ConfigError("unknown adapter '" + name + "'");
        c.adapter_rules.emplace_back(suffix, name);
      }
    }
    if (j.contains("default_adapter")) {
      c.default_adapter = j.at("default_adapter").get<std::string>();
      if (!make_adapter(c.default_adapter)) {
        throw ConfigError("unknown adapter '" + c.default_adapter + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

IngestConfig IngestConfig::load(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read config " + p.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + p.string() + " is not valid JSON");
  return from_json(j);
}

std::string IngestConfig::adapter_for(const fs::path& p) const {
  std::string name = p.filename().string();
  for (const auto& [suffix, adapter] : adapter_rules) {
    if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return adapter;
    }
  }
  return default_adapter;
}

std::string IngestConfig::map_type(const std::string& raw) const {
  if (is_resource_type_name(raw)) return raw;
  auto it = type_mapping.find(raw);
  if (it == type_mapping.end()) {
    throw ConfigError("resource type '" + raw + "' is not in the closed set and has no mapping");
  }
  return it->second;
}

// -- structure --------------------------------------------------------------

namespace {

std::optional<Timestamp> opt_time(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  auto t = parse_timestamp(it->get<std::string>());
  if (!t) throw ConfigError(std::string("structure: bad timestamp in '") + key + "'");
  return t;
}

Timestamp req_time(const json& j, const char* key) {
  auto t = opt_time(j, key);
  if (!t) throw ConfigError(std::string("structure: missing '") + key + "'");
  return *t;
}

ResourceSpec parse_resource(const json& j, const IngestConfig& config) {
  ResourceSpec r;
  r.uri = j.at("uri").get<std::string>();
  r.name = j.value("name", r.uri);
  r.type = config.map_type(j.at("type").get<std::string>());
  if (j.contains("urls")) r.urls = j.at("urls").get<std::vector<std::string>>();
  if (j.contains("children")) {
    for (const auto& c : j.at("children")) r.children.push_back(parse_resource(c, config));
  }
  return r;
}

ProblemSpec parse_problem(const json& j) {
  ProblemSpec p;
  p.handle = j.at("handle").get<std::string>();
  p.name = j.value("name", p.handle);
  p.type = j.value("type", "homework");
  p.release = opt_time(j, "release");
  p.soft_deadline = opt_time(j, "soft_deadline");
  p.hard_deadline = opt_time(j, "hard_deadline");
  if (j.contains("max_submissions") && !j.at("max_submissions").is_null()) {
    p.max_submissions = j.at("max_submissions").get<std::int64_t>();
  }
  if (j.contains("children")) {
    for (const auto& c : j.at("children")) p.children.push_back(parse_problem(c));
  }
  return p;
}

nlohmann::ordered_json resource_to_json(const ResourceSpec& r) {
  nlohmann::ordered_json j;
  j["uri"] = r.uri;
  j["name"] = r.name;
  j["type"] = r.type;
  j["urls"] = r.urls;
  if (!r.children.empty()) {
    nlohmann::ordered_json kids = nlohmann::ordered_json::array();
    for (const auto& c : r.children) kids.push_back(resource_to_json(c));
    j["children"] = kids;
  }
  return j;
}

nlohmann::ordered_json problem_to_json(const ProblemSpec& p) {
  nlohmann::ordered_json j;
  j["handle"] = p.handle;
  j["name"] = p.name;
  j["type"] = p.type;
  if (p.release) j["release"] = format_timestamp(*p.release);
  if (p.soft_deadline) j["soft_deadline"] = format_timestamp(*p.soft_deadline);
  if (p.hard_deadline) j["hard_deadline"] = format_timestamp(*p.hard_deadline);
  if (p.max_submissions) j["max_submissions"] = *p.max_submissions;
  if (!p.children.empty()) {
    nlohmann::ordered_json kids = nlohmann::ordered_json::array();
    for (const auto& c : p.children) kids.push_back(problem_to_json(c));
    j["children"] = kids;
  }
  return j;
}

}  // namespace

CourseStructure parse_structure(const json& j, const IngestConfig& config) {
  CourseStructure s;
  try {
    s.course_id = j.at("course_id").get<std::string>();
    for (const auto& r : j.value("resources", json::array())) s.resources.push_back(parse_resource(r, config));
    for (const auto& p : j.value("problems", json::array())) s.problems.push_back(parse_problem(p));
    for (const auto& sv : j.value("surveys", json::array())) {
      SurveySpec spec;
      spec.handle = sv.at("handle").get<std::string>();
      spec.start = req_time(sv, "start");
      spec.end = req_time(sv, "end");
      for (const auto& q : sv.value("questions", json::array())) {
        QuestionSpec qs;
        qs.handle = q.at("handle").get<std::string>();
        qs.content = q.value("content", "");
        qs.type = q.value("type", "");
        if (q.contains("reference") && !q.at("reference").is_null()) {
          qs.reference_uri = q.at("reference").get<std::string>();
        }
        spec.questions.push_back(std::move(qs));
      }
      s.surveys.push_back(std::move(spec));
    }
    for (const auto& u : j.value("roster", json::array())) {
      RosterEntry e;
      e.handle = u.at("handle").get<std::string>();
      e.user_type = u.value("user_type", "student");
      if (u.contains("final_grade") && !u.at("final_grade").is_null()) {
        e.final_grade = u.at("final_grade").get<double>();
      }
      e.certified = u.value("certified", false);
      e.country = u.value("country", "");
      s.roster.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("structure: ") + e.what());
  }
  return s;
}

CourseStructure load_structure(const fs::path& p, const IngestConfig& config) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read structure " + p.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("structure " + p.string() + " is not valid JSON");
  return parse_structure(j, config);
}

json structure_to_json(const CourseStructure& s) {
  nlohmann::ordered_json j;
  j["course_id"] = s.course_id;
  nlohmann::ordered_json resources = nlohmann::ordered_json::array();
  for (const auto& r : s.resources) resources.push_back(resource_to_json(r));
  j["resources"] = resources;
  nlohmann::ordered_json problems = nlohmann::ordered_json::array();
  for (const auto& p : s.problems) problems.push_back(problem_to_json(p));
  j["problems"] = problems;
  nlohmann::ordered_json surveys = nlohmann::ordered_json::array();
  for (const auto& sv : s.surveys) {
    nlohmann::ordered_json o;
    o["handle"] = sv.handle;
    o["start"] = format_timestamp(sv.start);
    o["end"] = format_timestamp(sv.end);
    nlohmann::ordered_json qs = nlohmann::ordered_json::array();
    for (const auto& q : sv.questions) {
      nlohmann::ordered_json qj;
      qj["handle"] = q.handle;
      qj["content"] = q.content;
      qj["type"] = q.type;
      if (q.reference_uri) qj["reference"] = *q.reference_uri;
      qs.push_back(qj);
    }
    o["questions"] = qs;
    surveys.push_back(o);
  }
  j["surveys"] = surveys;
  nlohmann::ordered_json roster = nlohmann::ordered_json::array();
  for (const auto& u : s.roster) {
    nlohmann::ordered_json o;
    o["handle"] = u.handle;
    o["user_type"] = u.user_type;
    if (u.final_grade) o["final_grade"] = *u.final_grade;
    o["certified"] = u.certified;
    o["country"] = u.country;
    roster.push_back(o);
  }
  j["roster"] = roster;
  return json::parse(j.dump());
}

// -- reference generation ------------------------------------------------------

namespace {

bool is_resource_kind(EventKind k) {
  switch (k) {
    case EventKind::page_view:
    case EventKind::video_play:
    case EventKind::forum_post:
    case EventKind::forum_vote:
    case EventKind::wiki_edit: return true;
    default: return false;
  }
}

// Kinds that yield an observed_events row.
bool is_observing_kind(EventKind k) { return is_resource_kind(k) && k != EventKind::wiki_edit; }

bool is_problem_kind(EventKind k) {
  return k == EventKind::problem_check || k == EventKind::problem_save;
}

class ReferenceBuilder {
 public:
  ReferenceBuilder(Dictionaries& d, const IngestConfig& config) : d_(d), config_(config) {}

  void user(const std::string& handle) {
    if (d_.user_index.emplace(handle, d_.users.size()).second) d_.users.push_back(handle);
  }

  Id url(const std::string& u) {
    auto [it, inserted] = d_.url_ids.emplace(u, static_cast<Id>(d_.urls.size() + 1));
    if (inserted) d_.urls.push_back({it->second, u});
    return it->second;
  }

  Id type_id(const std::string& closed_name) {
    for (const auto& t : d_.resource_types) {
      if (t.resource_type_name == closed_name) return t.resource_type_id;
    }
    throw ConfigError("unknown resource type '" + closed_name + "'");
  }

  void resource_tree(const ResourceSpec& spec, std::optional<Id> parent,
                     std::optional<std::int64_t> child_number) {
    if (d_.resource_ids.contains(spec.uri)) {
      throw ConfigError("structure: duplicate resource uri '" + spec.uri + "'");
    }
    Resource r;
    r.resource_id = static_cast<Id>(d_.resources.size() + 1);
    r.resource_name = spec.name;
    r.resource_uri = spec.uri;
    r.resource_type_id = type_id(spec.type);
    r.resource_parent = parent;
    r.resource_child_number = child_number;
    d_.resource_ids.emplace(spec.uri, r.resource_id);
    d_.resources.push_back(r);
    for (const auto& u : spec.urls) d_.resource_urls.emplace(r.resource_id, url(u));
    std::int64_t n = 0;
    for (const auto& c : spec.children) resource_tree(c, r.resource_id, ++n);
  }

  Id orphan_resource(const std::string& uri, EventKind kind) {
    if (auto it = d_.resource_ids.find(uri); it != d_.resource_ids.end()) return it->second;
    Resource r;
    r.resource_id = static_cast<Id>(d_.resources.size() + 1);
    r.resource_name = uri;
    r.resource_uri = uri;
    auto t = config_.orphan_resource_type.find(kind);
    r.resource_type_id = type_id(t == config_.orphan_resource_type.end() ? "lecture" : t->second);
    d_.resource_ids.emplace(uri, r.resource_id);
    d_.resources.push_back(r);
    d_.orphans.push_back("resource:" + uri);
    return r.resource_id;
  }

  Id problem_type(const std::string& name) {
    for (const auto& t : d_.problem_types) {
      if (t.problem_type_name == name) return t.problem_type_id;
    }
    Id id = static_cast<Id>(d_.problem_types.size() + 1);
    d_.problem_types.push_back({id, name});
    return id;
  }

  ProblemNode problem_node(const ProblemSpec& spec) {
    ProblemNode n;
    n.name = spec.name;
    n.problem_type_id = problem_type(spec.type);
    n.release = spec.release;
    n.soft_deadline = spec.soft_deadline;
    n.hard_deadline = spec.hard_deadline;
    n.max_submission = spec.max_submissions;
    for (const auto& c : spec.children) n.children.push_back(problem_node(c));
    return n;
  }

  void problems(const std::vector<ProblemSpec>& specs) {
    std::vector<ProblemNode> forest;
    for (const auto& s : specs) forest.push_back(problem_node(s));
    d_.problems = number_problem_forest(forest, 1);
    // Numbering is pre-order over positional children, so walking the specs
    // the same way lines handles up with rows.
    std::size_t i = 0;
    auto walk = [&](auto&& self, const ProblemSpec& s) -> void {
      Id id = d_.problems[i++].problem_id;
      if (!d_.problem_ids.emplace(s.handle, id).second) {
        throw ConfigError("structure: duplicate problem handle '" + s.handle + "'");
      }
      if (!s.children.empty()) d_.problems_with_children.insert(id);
      for (const auto& c : s.children) self(self, c);
    };
    for (const auto& s : specs) walk(walk, s);
  }

  void orphan_problem(const std::string& handle) {
    if (d_.problem_ids.contains(handle)) return;
    Problem p;
    p.problem_id = static_cast<Id>(d_.problems.size() + 1);
    p.problem_name = handle;
    p.problem_type_id = problem_type("orphan");
    d_.problem_ids.emplace(handle, p.problem_id);
    d_.problems.push_back(p);
    d_.orphans.push_back("problem:" + handle);
  }

  void question(const QuestionSpec& q, std::optional<Id> survey) {
    if (d_.question_ids.contains(q.handle)) {
      throw ConfigError("structure: duplicate question handle '" + q.handle + "'");
    }
    Question row;
    row.question_id = static_cast<Id>(d_.questions.size() + 1);
    row.question_content = q.content;
    row.question_type = q.type;
    if (q.reference_uri) {
      auto it = d_.resource_ids.find(*q.reference_uri);
      if (it == d_.resource_ids.end()) {
        throw ConfigError("structure: question '" + q.handle + "' references unknown uri");
      }
      row.question_reference = it->second;
    }
    row.survey_id = survey;
    d_.question_ids.emplace(q.handle, row.question_id);
    d_.questions.push_back(row);
  }

  void orphan_question(const std::string& handle) {
    if (d_.question_ids.contains(handle)) return;
    question(QuestionSpec{handle, handle, "", std::nullopt}, std::nullopt);
    d_.orphans.push_back("question:" + handle);
  }

  void answer(const std::string& content) {
    auto [it, inserted] = d_.answer_ids.emplace(content, static_cast<Id>(d_.answers.size() + 1));
    if (inserted) d_.answers.push_back({it->second, content});
  }

 private:
  Dictionaries& d_;
  const IngestConfig& config_;
};

std::string payload_string(const json& payload, const char* key) {
  auto it = payload.find(key);
  if (it == payload.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

}  // namespace

Dictionaries generate_references(const std::vector<SourcedEvent>& events,
                                 const CourseStructure& structure, const IngestConfig& config) {
  Dictionaries d;
  ReferenceBuilder b(d, config);

  for (std::size_t i = 0; i < kResourceTypeNames.size(); ++i) {
    d.resource_types.push_back({static_cast<Id>(i + 1), std::string(kResourceTypeNames[i])});
  }
  for (std::size_t i = 0; i < kCollaborationTypeNames.size(); ++i) {
    d.collaboration_types.push_back(
        {static_cast<Id>(i + 1), std::string(kCollaborationTypeNames[i])});
  }
  for (const auto& u : structure.roster) b.user(u.handle);
  std::int64_t n = 0;
  for (const auto& r : structure.resources) b.resource_tree(r, std::nullopt, ++n);
  b.problems(structure.problems);
  for (const auto& sv : structure.surveys) {
    Id sid = static_cast<Id>(d.surveys.size() + 1);
    d.surveys.push_back({sid, sv.start, sv.end});
    for (const auto& q : sv.questions) b.question(q, sid);
  }

  for (const auto& se : events) {
    const RawEvent& e = se.event;
    b.user(e.raw_user);
    if (!e.url.empty()) b.url(e.url);
    if (is_resource_kind(e.event_kind) && !e.uri.empty()) {
      Id rid = b.orphan_resource(e.uri, e.event_kind);
      if (is_observing_kind(e.event_kind) && !e.url.empty()) {
        d.resource_urls.emplace(rid, d.url_ids.at(e.url));
      }
    } else if (is_problem_kind(e.event_kind) && !e.uri.empty()) {
      b.orphan_problem(e.uri);
    } else if (e.event_kind == EventKind::survey_answer && !e.uri.empty()) {
      b.orphan_question(e.uri);
      b.answer(payload_string(e.payload, "answer"));
    }
  }
  return d;
}

// -- table population ------------------------------------------------------

PopulateResult populate_tables(const std::vector<SourcedEvent>& events, const Dictionaries& d,
                               const CourseStructure& structure, const IdentityLedger& ledger) {
  PopulateResult out;
  CourseStore& s = out.store;
  s.course_id = structure.course_id;
  s.resource_types = d.resource_types;
  s.resources = d.resources;
  s.urls = d.urls;
  for (const auto& [r, u] : d.resource_urls) s.resource_urls.push_back({r, u});
  s.problem_types = d.problem_types;
  s.problems = d.problems;
  s.collaboration_types = d.collaboration_types;
  s.surveys = d.surveys;
  s.questions = d.questions;
  s.answers = d.answers;

  std::unordered_map<std::string, const RosterEntry*> roster;
  for (const auto& u : structure.roster) roster.emplace(u.handle, &u);
  std::unordered_map<std::string, const CourseIdentity*> ids;
  for (const auto& handle : d.users) {
    const CourseIdentity* ci = ledger.course_identity(structure.course_id, handle);
    auto gid = ledger.global_id(handle);
    if (!ci || !gid) throw IngestError("ledger has no identity for a course user");
    ids.emplace(handle, ci);
    CourseUser cu;
    cu.course_user_id = ci->course_user_id;
    if (auto it = roster.find(handle); it != roster.end()) {
      cu.final_grade = it->second->final_grade;
      cu.user_type = it->second->user_type;
      cu.country = it->second->country;
      cu.certified = it->second->certified;
    } else {
      cu.user_type = "student";
    }
    cu.user_id_observed = ci->modes.observed;
    cu.user_id_submissions = ci->modes.submissions;
    cu.user_id_collaborations = ci->modes.collaborations;
    cu.user_id_feedback = ci->modes.feedback;
    s.course_users.push_back(cu);
    s.global_users.push_back({*gid, structure.course_id, ci->course_user_id});
  }

  std::unordered_map<Id, const Problem*> problems;
  for (const auto& p : s.problems) problems.emplace(p.problem_id, &p);
  std::map<std::pair<UserKey, Id>, std::int64_t> attempts;
  std::map<std::pair<UserKey, Id>, std::int64_t> submitted;
  std::unordered_map<std::string, Id> post_ids;

  auto reject = [&](const SourcedEvent& se, std::string reason) {
    out.rejects.push_back({std::to_string(se.source_index), se.line_no, std::move(reason)});
  };

  for (const auto& se : events) {
    const RawEvent& e = se.event;
    const CourseIdentity& who = *ids.at(e.raw_user);

    auto observe = [&](Id resource_id, Id url_id) {
      ObservedEvent o;
      o.observed_event_id = static_cast<Id>(s.observed_events.size() + 1);
      o.user_id_observed = who.modes.observed;
      o.resource_id = resource_id;
      o.url_id = url_id;
      o.observed_event_timestamp = e.timestamp;
      o.observed_event_ip = e.ip;
      o.observed_event_os = e.os;
      o.observed_event_agent = e.agent;
      s.observed_events.push_back(std::move(o));
    };

    switch (e.event_kind) {
      case EventKind::page_view:
      case EventKind::video_play: {
        if (e.uri.empty()) { reject(se, "missing_uri"); continue; }
        if (e.url.empty()) { reject(se, "missing_url"); continue; }
        observe(d.resource_ids.at(e.uri), d.url_ids.at(e.url));
        break;
      }
      case EventKind::problem_check:
      case EventKind::problem_save: {
        if (e.uri.empty()) { reject(se, "missing_problem"); continue; }
        Id pid = d.problem_ids.at(e.uri);
        if (d.problems_with_children.contains(pid)) { reject(se, "problem_not_leaf"); continue; }
        bool is_check = e.event_kind == EventKind::problem_check;
        std::optional<double> grade;
        if (is_check) {
          if (auto c = e.payload.find("correct"); c != e.payload.end() && c->is_boolean()) {
            grade = c->get<bool>() ? 1.0 : 0.0;
          } else if (auto g = e.payload.find("grade"); g != e.payload.end() && g->is_number()) {
            grade = g->get<double>();
          }
          if (grade && !(*grade >= 0.0 && *grade <= 1.0)) { reject(se, "grade_out_of_range"); continue; }
        }
        auto key = std::pair(who.modes.submissions, pid);
        const Problem* prob = problems.at(pid);
        if (is_check && prob->problem_max_submission &&
            submitted[key] >= *prob->problem_max_submission) {
          reject(se, "max_submissions_exceeded");
          continue;
        }
        Submission sub;
        sub.submission_id = static_cast<Id>(s.submissions.size() + 1);
        sub.user_id = who.modes.submissions;
        sub.problem_id = pid;
        sub.submission_timestamp = e.timestamp;
        sub.submission_answer = payload_string(e.payload, "answer");
        sub.submission_attempt_number = ++attempts[key];
        sub.submission_ip = e.ip;
        sub.submission_os = e.os;
        sub.submission_agent = e.agent;
        sub.is_submitted = is_check;
        if (is_check) ++submitted[key];
        s.submissions.push_back(sub);
        if (grade) {
          Assessment a;
          a.assessment_id = static_cast<Id>(s.assessments.size() + 1);
          a.submission_id = sub.submission_id;
          a.assessment_grader_id = kAutomatedGrader;
          a.assessment_grade = *grade;
          a.assessment_feedback = payload_string(e.payload, "feedback");
          a.assessment_timestamp = e.timestamp;
          s.assessments.push_back(std::move(a));
        }
        break;
      }
      case EventKind::forum_post:
      case EventKind::forum_vote:
      case EventKind::wiki_edit: {
        if (e.uri.empty()) { reject(se, "missing_uri"); continue; }
        bool observing = e.event_kind != EventKind::wiki_edit;
        if (observing && e.url.empty()) { reject(se, "missing_url"); continue; }
        std::optional<Id> parent;
        std::string parent_handle = payload_string(e.payload, "parent_id");
        if (!parent_handle.empty()) {
          auto it = post_ids.find(parent_handle);
          if (it == post_ids.end()) { reject(se, "dangling_parent"); continue; }
          parent = it->second;
        }
        std::string post_handle = payload_string(e.payload, "post_id");
        if (!post_handle.empty() && post_ids.contains(post_handle)) {
          reject(se, "duplicate_post_id");
          continue;
        }
        Collaboration c;
        c.collaboration_id = static_cast<Id>(s.collaborations.size() + 1);
        c.user_id = who.modes.collaborations;
        c.collaboration_parent_id = parent;
        c.collaboration_timestamp = e.timestamp;
        c.collaboration_ip = e.ip;
        c.collaboration_os = e.os;
        c.collaboration_agent = e.agent;
        std::string_view type;
        if (e.event_kind == EventKind::forum_post) {
          if (parent) {
            type = "forum_reply";
            c.collaboration_content = payload_string(e.payload, "body");
          } else {
            type = "forum_question";
            nlohmann::ordered_json content;
            content["title"] = payload_string(e.payload, "title");
            content["body"] = payload_string(e.payload, "body");
            c.collaboration_content = content.dump();
          }
        } else if (e.event_kind == EventKind::forum_vote) {
          type = "forum_vote";
          c.collaboration_content = payload_string(e.payload, "direction");
        } else {
          type = payload_string(e.payload, "action") == "delete" ? "wiki_deletion" : "wiki_edit";
          c.collaboration_content = payload_string(e.payload, "body");
        }
        for (const auto& t : s.collaboration_types) {
          if (t.collaboration_type_name == type) c.collaboration_type_id = t.collaboration_type_id;
        }
        if (!post_handle.empty()) post_ids.emplace(post_handle, c.collaboration_id);
        s.collaborations.push_back(std::move(c));
        // A forum access is an observation of the forum resource as well.
        if (observing) observe(d.resource_ids.at(e.uri), d.url_ids.at(e.url));
        break;
      }
      case EventKind::survey_answer: {
        if (e.uri.empty()) { reject(se, "missing_question"); continue; }
        Feedback f;
        f.feedback_id = static_cast<Id>(s.feedbacks.size() + 1);
        f.user_id = who.modes.feedback;
        f.question_id = d.question_ids.at(e.uri);
        f.answer_id = d.answer_ids.at(payload_string(e.payload, "answer"));
        f.feedback_timestamp = e.timestamp;
        s.feedbacks.push_back(f);
        break;
      }
    }
    ++out.events_emitted;
  }
  return out;
}

CourseStore& compute_durations(CourseStore& store, DurationMs cap) {
  std::unordered_map<UserKey, std::vector<ObservedEvent*>> by_user;
  for (auto& e : store.observed_events) by_user[e.user_id_observed].push_back(&e);
  for (auto& [user, evs] : by_user) {
    std::sort(evs.begin(), evs.end(), [](const ObservedEvent* a, const ObservedEvent* b) {
      return std::pair(a->observed_event_timestamp, a->observed_event_id) <
             std::pair(b->observed_event_timestamp, b->observed_event_id);
    });
    for (std::size_t i = 0; i < evs.size(); ++i) {
      if (i + 1 == evs.size()) {
        evs[i]->observed_event_duration = DurationMs{0};
        continue;
      }
      std::int64_t gap = evs[i + 1]->observed_event_timestamp.millis - evs[i]->observed_event_timestamp.millis;
      evs[i]->observed_event_duration = DurationMs{std::min(gap, cap.ms)};
    }
  }
  return store;
}

// -- whole pipeline ------------------------------------------------------

namespace {

struct ParsedSource {
  std::vector<SourcedEvent> events;
  std::vector<Reject> rejects;
  std::size_t lines = 0;
  std::uintmax_t bytes = 0;
};

ParsedSource parse_source(const Source& src, std::size_t index) {
  ParsedSource out;
  auto reader = src.adapter->open(src.path);
  std::size_t line = 0;
  while (auto item = reader->next()) {
    ++out.lines;
    if (auto* ev = std::get_if<RawEvent>(&*item)) {
      out.events.push_back({std::move(*ev), index, ++line});
    } else {
      auto& r = std::get<Reject>(*item);
      line = r.line_no;
      out.rejects.push_back(std::move(r));
    }
  }
  out.bytes = reader->bytes_read();
  return out;
}

}  // namespace

std::vector<SourcedEvent> read_and_merge(const std::vector<Source>& sources,
                                         std::vector<Reject>& rejects, std::size_t& lines_read,
                                         std::uintmax_t& bytes_read) {
  std::vector<std::future<ParsedSource>> futures;
  futures.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    futures.push_back(std::async(std::launch::async, parse_source, std::cref(sources[i]), i));
  }
  std::vector<ParsedSource> parsed;
  parsed.reserve(sources.size());
  // Drain every future before rethrowing so no task outlives its source.
  std::exception_ptr failure;
  for (auto& f : futures) {
    try {
      parsed.push_back(f.get());
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<SourcedEvent> merged;
  for (auto& p : parsed) {
    lines_read += p.lines;
    bytes_read += p.bytes;
    for (auto& r : p.rejects) rejects.push_back(std::move(r));
    for (auto& e : p.events) merged.push_back(std::move(e));
  }
  std::stable_sort(merged.begin(), merged.end(), [](const SourcedEvent& a, const SourcedEvent& b) {
    return std::tie(a.event.timestamp, a.source_index, a.line_no) <
           std::tie(b.event.timestamp, b.source_index, b.line_no);
  });
  return merged;
}

void write_rejects(const std::vector<Reject>& rejects, const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw io::StoreIoError("cannot write " + p.string());
  for (const auto& r : rejects) {
    nlohmann::ordered_json j;
    j["source"] = r.source;
    j["line_no"] = r.line_no;
    j["reason"] = r.reason;
    out << j.dump() << '\n';
  }
}

json IngestReport::to_json() const {
  nlohmann::ordered_json j;
  j["table_counts"] = table_counts;
  j["lines_read"] = lines_read;
  j["rows_emitted"] = rows_emitted;
  j["lines_rejected"] = lines_rejected;
  j["reject_reasons"] = reject_reasons;
  j["orphans"] = orphans;
  j["adapters"] = adapters;
  j["wall_seconds"] = wall_seconds;
  j["input_bytes"] = input_bytes;
  j["output_bytes"] = output_bytes;
  return json::parse(j.dump());
}

IngestResult ingest(const std::vector<Source>& sources, const CourseStructure& structure,
                    const IngestConfig& config, const SecretKey& key,
                    const std::optional<fs::path>& out) {
  auto started = std::chrono::steady_clock::now();
  IngestResult result;
  IngestReport& report = result.report;
  for (const auto& s : sources) report.adapters.push_back(s.adapter->describe());

  std::vector<Reject> parse_rejects;
  std::vector<SourcedEvent> events;
  try {
    events = read_and_merge(sources, parse_rejects, report.lines_read, report.input_bytes);
  } catch (const AdapterError& e) {
    throw IngestError(std::string("adapter failed, nothing written: ") + e.what());
  }
  // Reject sources are reported by index for parse-stage rejects too.
  for (auto& r : parse_rejects) {
    for (std::size_t i = 0; i < sources.size(); ++i) {
      if (sources[i].path.string() == r.source) r.source = std::to_string(i);
    }
  }

  Dictionaries dicts = generate_references(events, structure, config);
  add_course(result.ledger, structure.course_id, dicts.users, key);
  PopulateResult pop = populate_tables(events, dicts, structure, result.ledger);
  compute_durations(pop.store, config.duration_cap);

  ValidationReport v = validate_store(pop.store);
  if (!v.ok()) {
    throw IngestError("populated store violates invariants: " + to_string(v.violations.front()));
  }

  result.rejects = std::move(parse_rejects);
  for (auto& r : pop.rejects) result.rejects.push_back(std::move(r));
  std::stable_sort(result.rejects.begin(), result.rejects.end(), [](const Reject& a, const Reject& b) {
    return std::tie(a.source, a.line_no) < std::tie(b.source, b.line_no);
  });

  report.rows_emitted = pop.events_emitted;
  report.lines_rejected = result.rejects.size();
  for (const auto& r : result.rejects) ++report.reject_reasons[r.reason];
  report.orphans = dicts.orphans;
  for (Table t : kAllTables) report.table_counts[std::string(table_name(t))] = pop.store.row_count(t);
  result.store = std::move(pop.store);

  if (out) {
    io::save_store(result.store, *out);
    fs::path sidecar = *out;
    sidecar += ".rejects.jsonl";
    write_rejects(result.rejects, sidecar);
    report.output_bytes = io::disk_bytes(*out);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace moocdb
