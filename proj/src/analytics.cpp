#include "moocdb/analytics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include "moocdb/csv.hpp"
#include "moocdb/partition.hpp"
#include "moocdb/statistics_data.hpp"

namespace moocdb {

using json = nlohmann::json;

// -- cuts --------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool names_pii(std::string_view field) {
  std::string f = lower(field);
  return f == "age" || f == "ip" || f == "most_frequent_ip" || f == "pii" || f == "user_pii" ||
         f == "birth_year" || f == "email" || f == "name";
}

}  // namespace

bool Cohort::is_all() const {
  return std::all_of(terms.begin(), terms.end(),
                     [](const CohortTerm& t) { return t.kind == CohortTerm::Kind::all; });
}

bool Cohort::matches(const CourseUser& u) const {
  for (const auto& t : terms) {
    switch (t.kind) {
      case CohortTerm::Kind::all: break;
      case CohortTerm::Kind::certified:
        if (!u.certified) return false;
        break;
      case CohortTerm::Kind::min_final_grade:
        if (!u.final_grade || !(*u.final_grade >= t.threshold)) return false;
        break;
      case CohortTerm::Kind::user_type:
        if (u.user_type != t.value) return false;
        break;
      case CohortTerm::Kind::country:
        if (u.country != t.value) return false;
        break;
    }
  }
  return true;
}

std::string Cohort::to_string() const {
  if (terms.empty()) return "all";
  std::string out;
  for (const auto& t : terms) {
    if (!out.empty()) out += ',';
    switch (t.kind) {
      case CohortTerm::Kind::all: out += "all"; break;
      case CohortTerm::Kind::certified: out += "certified"; break;
      case CohortTerm::Kind::min_final_grade: out += "final_grade>=" + format_value(t.threshold); break;
      case CohortTerm::Kind::user_type: out += "user_type=" + t.value; break;
      case CohortTerm::Kind::country: out += "country=" + t.value; break;
    }
  }
  return out;
}

Cohort Cohort::parse(std::string_view text) {
  Cohort c;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    std::string_view term = trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    start = comma == std::string_view::npos ? text.size() + 1 : comma + 1;
    if (term.empty()) continue;

    std::size_t op = term.find_first_of("<>=!");
    std::string_view field = trim(term.substr(0, op));
    if (names_pii(field)) {
      throw AccessError("cohort predicate references PII field '" + std::string(field) +
                        "'; PII is never queryable");
    }
    CohortTerm t;
    if (op == std::string_view::npos) {
      if (field == "all") t.kind = CohortTerm::Kind::all;
      else if (field == "certified") t.kind = CohortTerm::Kind::certified;
      else throw std::invalid_argument("unknown cohort term '" + std::string(term) + "'");
    } else if (field == "final_grade" && term.substr(op, 2) == ">=") {
      std::string_view num = trim(term.substr(op + 2));
      double x = 0;
      auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), x);
      if (ec != std::errc{} || p != num.data() + num.size()) {
        throw std::invalid_argument("bad final_grade threshold '" + std::string(num) + "'");
      }
      t.kind = CohortTerm::Kind::min_final_grade;
      t.threshold = x;
    } else if ((field == "user_type" || field == "country") && term[op] == '=') {
      t.kind = field == "user_type" ? CohortTerm::Kind::user_type : CohortTerm::Kind::country;
      t.value = std::string(trim(term.substr(op + 1)));
    } else {
      throw std::invalid_argument("unknown cohort term '" + std::string(term) + "'");
    }
    c.terms.push_back(std::move(t));
  }
  return c;
}

std::string SpaceSpec::to_string() const {
  switch (kind) {
    case Kind::none: return "none";
    case Kind::group_by_country: return "by_country";
    case Kind::country_filter: return "country=" + country;
  }
  return "none";
}

SpaceSpec SpaceSpec::parse(std::string_view text) {
  text = trim(text);
  SpaceSpec s;
  if (text.empty() || text == "none" || text == "all") return s;
  if (text == "by_country" || text == "country") {
    s.kind = Kind::group_by_country;
    return s;
  }
  if (text.starts_with("country=")) {
    s.kind = Kind::country_filter;
    s.country = std::string(trim(text.substr(8)));
    return s;
  }
  throw std::invalid_argument("unknown space spec '" + std::string(text) + "'");
}

bool CutSpec::in_window(Timestamp t) const {
  return (!from || t >= *from) && (!to || t < *to);
}

bool CutSpec::needs_course_users() const {
  return !cohort.is_all() || space.kind != SpaceSpec::Kind::none;
}

// -- definitions ------------------------------------------------------------

std::string_view aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::count: return "count";
    case Aggregation::sum: return "sum";
    case Aggregation::mean: return "mean";
    case Aggregation::distribution: return "distribution";
  }
  return "?";
}

std::optional<Aggregation> aggregation_from_name(std::string_view name) {
  for (auto a : {Aggregation::count, Aggregation::sum, Aggregation::mean, Aggregation::distribution}) {
    if (aggregation_name(a) == name) return a;
  }
  return std::nullopt;
}

namespace {

constexpr std::array kMeasures = {Measure::submissions,     Measure::correct_submissions,
                                  Measure::observed_events, Measure::observed_duration,
                                  Measure::collaborations,  Measure::feedbacks};

}  // namespace

std::string_view measure_name(Measure m) {
  switch (m) {
    case Measure::submissions: return "submissions";
    case Measure::correct_submissions: return "correct_submissions";
    case Measure::observed_events: return "observed_events";
    case Measure::observed_duration: return "observed_duration";
    case Measure::collaborations: return "collaborations";
    case Measure::feedbacks: return "feedbacks";
  }
  return "?";
}

std::optional<Measure> measure_from_name(std::string_view name) {
  for (Measure m : kMeasures) {
    if (measure_name(m) == name) return m;
  }
  return std::nullopt;
}

TableSet measure_tables(Measure m) {
  switch (m) {
    case Measure::submissions: return {Table::submissions};
    case Measure::correct_submissions: return {Table::submissions, Table::assessments};
    case Measure::observed_events:
    case Measure::observed_duration: return {Table::observed_events};
    case Measure::collaborations: return {Table::collaborations};
    case Measure::feedbacks: return {Table::feedbacks};
  }
  return {};
}

std::vector<StatisticDef> parse_statistics(const json& j) {
  std::vector<StatisticDef> out;
  for (const auto& s : j.at("statistics")) {
    StatisticDef d;
    d.name = s.at("name").get<std::string>();
    d.description = s.value("description", "");
    auto agg = aggregation_from_name(s.at("aggregation").get<std::string>());
    if (!agg) throw std::invalid_argument("statistic " + d.name + ": unknown aggregation");
    d.aggregation = *agg;
    auto target = measure_from_name(s.at("target").get<std::string>());
    if (!target) throw std::invalid_argument("statistic " + d.name + ": unknown target");
    d.target = *target;
    const json cuts = s.value("cuts", json::object());
    d.default_cuts.cohort = Cohort::parse(cuts.value("cohort", "all"));
    d.default_cuts.space = SpaceSpec::parse(cuts.value("space", "none"));
    if (cuts.contains("from")) d.default_cuts.from = parse_timestamp(cuts.at("from").get<std::string>());
    if (cuts.contains("to")) d.default_cuts.to = parse_timestamp(cuts.at("to").get<std::string>());
    out.push_back(std::move(d));
  }
  return out;
}

const std::vector<StatisticDef>& builtin_statistics() {
  static const std::vector<StatisticDef> defs = parse_statistics(json::parse(kBuiltinStatisticsJson));
  return defs;
}

const StatisticDef* find_statistic(std::string_view name) {
  for (const auto& d : builtin_statistics()) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

// -- evaluation ----------------------------------------------------------------

std::string format_value(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::set<UserKey> select_cohort(const CourseStore& store, const Cohort& cohort) {
  require_tables(store, {Table::course_user}, "select_cohort");
  std::set<UserKey> out;
  for (const auto& u : store.course_users) {
    if (cohort.matches(u)) out.insert(u.course_user_id);
  }
  return out;
}

namespace {

// One row's contribution: user key in the measure's mode namespace, time,
// and integer units (1 per row, or milliseconds).
struct Contribution {
  UserKey user;
  Timestamp at;
  std::int64_t units;
};

template <typename F>
void for_each_contribution(const CourseStore& s, Measure m, F&& f) {
  switch (m) {
    case Measure::submissions:
      for (const auto& r : s.submissions) {
        if (r.is_submitted) f(Contribution{r.user_id, r.submission_timestamp, 1});
      }
      break;
    case Measure::correct_submissions: {
      std::unordered_map<Id, double> best;
      for (const auto& a : s.assessments) {
        auto [it, inserted] = best.emplace(a.submission_id, a.assessment_grade);
        if (!inserted) it->second = std::max(it->second, a.assessment_grade);
      }
      for (const auto& r : s.submissions) {
        if (!r.is_submitted) continue;
        auto it = best.find(r.submission_id);
        if (it != best.end() && it->second == 1.0) f(Contribution{r.user_id, r.submission_timestamp, 1});
      }
      break;
    }
    case Measure::observed_events:
      for (const auto& r : s.observed_events) f(Contribution{r.user_id_observed, r.observed_event_timestamp, 1});
      break;
    case Measure::observed_duration:
      for (const auto& r : s.observed_events) {
        f(Contribution{r.user_id_observed, r.observed_event_timestamp, r.observed_event_duration.ms});
      }
      break;
    case Measure::collaborations:
      for (const auto& r : s.collaborations) f(Contribution{r.user_id, r.collaboration_timestamp, 1});
      break;
    case Measure::feedbacks:
      for (const auto& r : s.feedbacks) f(Contribution{r.user_id, r.feedback_timestamp, 1});
      break;
  }
}

UserKey mode_key(const CourseUser& u, Measure m) {
  switch (m) {
    case Measure::submissions:
    case Measure::correct_submissions: return u.user_id_submissions;
    case Measure::observed_events:
    case Measure::observed_duration: return u.user_id_observed;
    case Measure::collaborations: return u.user_id_collaborations;
    case Measure::feedbacks: return u.user_id_feedback;
  }
  return 0;
}

double unit_scale(Measure m) { return m == Measure::observed_duration ? 1000.0 : 1.0; }

}  // namespace

StatResult compute_statistic(const CourseStore& store, const StatisticDef& stat, const CutSpec& cuts) {
  TableSet needed = measure_tables(stat.target);
  bool use_users = cuts.needs_course_users();
  if (use_users) needed.insert(Table::course_user);
  require_tables(store, needed, "statistic '" + stat.name + "'");

  StatResult res;
  res.statistic = stat.name;
  res.aggregation = stat.aggregation;
  res.cuts = cuts;

  // mode key -> group label, for users passing cohort and space filters
  std::unordered_map<UserKey, std::string> group_of;
  if (use_users) {
    for (const auto& u : store.course_users) {
      if (!cuts.cohort.matches(u)) continue;
      if (cuts.space.kind == SpaceSpec::Kind::country_filter && u.country != cuts.space.country) continue;
      std::string label = cuts.space.kind == SpaceSpec::Kind::none ? std::string(kAllGroup)
                          : u.country.empty()                     ? std::string("unknown")
                                                                  : u.country;
      group_of.emplace(mode_key(u, stat.target), std::move(label));
    }
    res.cohort_size = group_of.size();
  }

  struct Acc {
    std::size_t rows = 0;
    std::int64_t units = 0;
    std::map<UserKey, std::int64_t> per_user;
  };
  std::map<std::string, Acc> acc;
  for_each_contribution(store, stat.target, [&](const Contribution& c) {
    if (!cuts.in_window(c.at)) return;
    const std::string* group = nullptr;
    static const std::string all(kAllGroup);
    if (use_users) {
      auto it = group_of.find(c.user);
      if (it == group_of.end()) return;
      group = &it->second;
    } else {
      group = &all;
    }
    Acc& a = acc[*group];
    ++a.rows;
    a.units += c.units;
    a.per_user[c.user] += c.units;
  });

  double scale = unit_scale(stat.target);
  std::set<UserKey> contributing;
  for (const auto& [group, a] : acc) {
    for (const auto& [u, units] : a.per_user) contributing.insert(u);
    switch (stat.aggregation) {
      case Aggregation::count:
        res.groups[group] = {static_cast<double>(a.rows), a.per_user.size(), a.rows};
        break;
      case Aggregation::sum:
        res.groups[group] = {static_cast<double>(a.units) / scale, a.per_user.size(), a.rows};
        break;
      case Aggregation::mean:
        res.groups[group] = {static_cast<double>(a.units) / scale / static_cast<double>(a.per_user.size()),
                             a.per_user.size(), a.rows};
        break;
      case Aggregation::distribution: {
        std::map<std::int64_t, std::pair<std::size_t, std::size_t>> hist;  // units -> users, rows
        for (const auto& [u, units] : a.per_user) ++hist[units].first;
        for (const auto& [units, counts] : hist) {
          std::string key = group + ":" + format_value(static_cast<double>(units) / scale);
          res.groups[key] = {static_cast<double>(counts.first), counts.first, 0};
        }
        break;
      }
    }
  }
  if (!use_users) res.cohort_size = contributing.size();
  return res;
}

std::string StatResult::to_csv() const {
  std::string out = csv::format_row({"group", "value", "n"});
  for (const auto& [g, v] : groups) out += csv::format_row({g, format_value(v.value), std::to_string(v.users)});
  return out;
}

json StatResult::to_json() const {
  nlohmann::ordered_json j;
  j["statistic"] = statistic;
  j["aggregation"] = aggregation_name(aggregation);
  nlohmann::ordered_json meta;
  meta["cohort"] = cuts.cohort.to_string();
  meta["space"] = cuts.space.to_string();
  meta["from"] = cuts.from ? json(format_timestamp(*cuts.from)) : json(nullptr);
  meta["to"] = cuts.to ? json(format_timestamp(*cuts.to)) : json(nullptr);
  meta["cohort_size"] = cohort_size;
  j["metadata"] = meta;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& [g, v] : groups) {
    nlohmann::ordered_json r;
    r["group"] = g;
    r["value"] = v.value;
    r["n"] = v.users;
    rows.push_back(r);
  }
  j["groups"] = rows;
  return json::parse(j.dump());
}

// -- video / homework correlation -----------------------------------------

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  std::size_t n = x.size();
  if (n != y.size() || n < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationResult video_homework_correlation(const CourseStore& store, Id homework) {
  require_tables(store,
                 {Table::problems, Table::submissions, Table::assessments, Table::observed_events,
                  Table::resources, Table::resource_types, Table::resource_urls, Table::course_user},
                 "video_homework_correlation");
  auto hw = std::find_if(store.problems.begin(), store.problems.end(),
                         [&](const Problem& p) { return p.problem_id == homework; });
  if (hw == store.problems.end()) {
    throw CorrelationError("problem " + std::to_string(homework) + " does not exist");
  }
  auto deadline = hw->problem_soft_deadline_timestamp ? hw->problem_soft_deadline_timestamp
                                                      : hw->problem_hard_deadline_timestamp;
  if (!hw->problem_release_timestamp || !deadline) {
    throw CorrelationError("problem " + std::to_string(homework) + " ('" + hw->problem_name +
                           "') lacks a release timestamp or deadline");
  }

  CorrelationResult res;
  res.problem_id = homework;
  res.window_start = *hw->problem_release_timestamp;
  res.window_end = *deadline;
  auto in_window = [&](Timestamp t) { return t >= res.window_start && t <= res.window_end; };

  std::optional<Timestamp> earliest;
  for (const auto& p : store.problems) {
    if (p.problem_release_timestamp && (!earliest || *p.problem_release_timestamp < *earliest)) {
      earliest = p.problem_release_timestamp;
    }
  }
  res.week = (res.window_start.millis - earliest->millis) / (7LL * 86400000) + 1;

  // Step 2: video resources reachable through some url.
  std::set<Id> video_types;
  for (const auto& t : store.resource_types) {
    if (t.resource_type_name == "video") video_types.insert(t.resource_type_id);
  }
  std::set<Id> linked;
  for (const auto& l : store.resource_urls) linked.insert(l.resource_id);
  std::set<Id> videos;
  for (const auto& r : store.resources) {
    if (video_types.contains(r.resource_type_id) && linked.contains(r.resource_id)) videos.insert(r.resource_id);
  }

  // Leaves under the homework node.
  std::unordered_map<Id, std::vector<Id>> children;
  for (const auto& p : store.problems) {
    if (p.problem_parent_id) children[*p.problem_parent_id].push_back(p.problem_id);
  }
  std::set<Id> leaves;
  std::vector<Id> stack{homework};
  while (!stack.empty()) {
    Id id = stack.back();
    stack.pop_back();
    auto it = children.find(id);
    if (it == children.end() || it->second.empty()) {
      leaves.insert(id);
    } else {
      stack.insert(stack.end(), it->second.begin(), it->second.end());
    }
  }

  std::unordered_map<UserKey, UserKey> by_observed, by_submissions;
  for (const auto& u : store.course_users) {
    by_observed.emplace(u.user_id_observed, u.course_user_id);
    by_submissions.emplace(u.user_id_submissions, u.course_user_id);
  }
  std::map<UserKey, std::int64_t> video_ms;
  std::map<UserKey, std::pair<std::int64_t, std::int64_t>> subs;  // submitted, correct

  // Step 3.
  for (const auto& e : store.observed_events) {
    if (!videos.contains(e.resource_id) || !in_window(e.observed_event_timestamp)) continue;
    auto u = by_observed.find(e.user_id_observed);
    if (u != by_observed.end()) video_ms[u->second] += e.observed_event_duration.ms;
  }
  // Steps 4 and 5.
  std::unordered_map<Id, double> best;
  for (const auto& a : store.assessments) {
    auto [it, inserted] = best.emplace(a.submission_id, a.assessment_grade);
    if (!inserted) it->second = std::max(it->second, a.assessment_grade);
  }
  for (const auto& s : store.submissions) {
    if (!s.is_submitted || !leaves.contains(s.problem_id) || !in_window(s.submission_timestamp)) continue;
    auto u = by_submissions.find(s.user_id);
    if (u == by_submissions.end()) continue;
    auto& [submitted, correct] = subs[u->second];
    ++submitted;
    auto g = best.find(s.submission_id);
    if (g != best.end() && g->second == 1.0) ++correct;
  }

  std::set<UserKey> users;
  for (const auto& [u, ms] : video_ms) {
    if (ms > 0) users.insert(u);
  }
  for (const auto& [u, c] : subs) users.insert(u);
  std::vector<double> xs, ys;
  for (UserKey u : users) {
    CorrelationPair p;
    p.course_user_id = u;
    p.video_seconds = static_cast<double>(video_ms[u]) / 1000.0;
    if (auto it = subs.find(u); it != subs.end()) {
      p.submissions = it->second.first;
      p.correct = it->second.second;
    }
    xs.push_back(p.video_seconds);
    ys.push_back(static_cast<double>(p.correct));
    res.pairs.push_back(p);
  }
  res.n = res.pairs.size();
  res.r = pearson(xs, ys);
  if (!res.r) {
    if (res.n < 2) {
      res.undefined_reason = "fewer than two users";
    } else {
      bool flat_x = std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs.front(); });
      res.undefined_reason = flat_x ? "zero variance in video_seconds" : "zero variance in correct";
    }
  }
  return res;
}

json CorrelationResult::to_json() const {
  nlohmann::ordered_json j;
  j["problem_id"] = problem_id;
  j["week"] = week;
  j["window_start"] = format_timestamp(window_start);
  j["window_end"] = format_timestamp(window_end);
  j["n"] = n;
  j["r"] = r ? json(*r) : json(nullptr);
  if (!r) j["undefined_reason"] = undefined_reason;
  nlohmann::ordered_json ps = nlohmann::ordered_json::array();
  for (const auto& p : pairs) {
    ps.push_back({p.course_user_id, p.video_seconds, p.submissions, p.correct});
  }
  j["pairs"] = ps;
  return json::parse(j.dump());
}

}  // namespace moocdb
