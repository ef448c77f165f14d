#include <cstdlib>
#include <random>

#include "doctest.h"
#include "moocdb/identity.hpp"
#include "moocdb/ingest.hpp"
#include "moocdb/store_io.hpp"
#include "moocdb/validate.hpp"
#include "support.hpp"

using namespace moocdb;
using moocdb::testing::TempDir;
using moocdb::testing::test_key;
using json = nlohmann::json;

// -- identity ------------------------------------------------------------

TEST_CASE("one user in two courses gets one global, two course and eight mode ids") {
  IdentityLedger l = derive_identities({"alice"}, {"C1", "C2"}, test_key());
  CHECK(l.global_ids().size() == 1);
  const CourseIdentity* a = l.course_identity("C1", "alice");
  const CourseIdentity* b = l.course_identity("C2", "alice");
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a->course_user_id != b->course_user_id);
  std::set<UserKey> modes;
  for (const CourseIdentity* c : {a, b}) {
    modes.insert({c->modes.observed, c->modes.submissions, c->modes.collaborations, c->modes.feedback});
  }
  CHECK(modes.size() == 8);
  CHECK(l.mode_id_count() == 8);
  CHECK(l.handle_of(b->modes.feedback) == "alice");
  CHECK(id_space_of(a->modes.observed) == IdSpace::observed);
  CHECK(id_space_of(*l.global_id("alice")) == IdSpace::global);
}

TEST_CASE("ledger is deterministic for the same key and changes with the key") {
  std::vector<std::string> users{"u1", "u2", "u3"};
  IdentityLedger a = derive_identities(users, {"C"}, test_key());
  IdentityLedger b = derive_identities(users, {"C"}, test_key());
  CHECK(a.global_ids() == b.global_ids());
  CHECK(a.course_identity("C", "u2")->modes.observed == b.course_identity("C", "u2")->modes.observed);
  IdentityLedger c = derive_identities(users, {"C"}, SecretKey::from_hex("ffeeddccbbaa99887766554433221100"));
  CHECK(a.global_ids() != c.global_ids());
}

TEST_CASE("500 users in 3 courses get pairwise distinct mode ids") {
  std::vector<std::string> users;
  for (int i = 0; i < 500; ++i) users.push_back("user" + std::to_string(i));
  IdentityLedger l = derive_identities(users, {"A", "B", "C"}, test_key());
  std::set<UserKey> all;
  std::map<IdSpace, std::set<UserKey>> by_space;
  for (const auto& [course, people] : l.courses()) {
    for (const auto& [h, ci] : people) {
      for (UserKey k : {ci.modes.observed, ci.modes.submissions, ci.modes.collaborations, ci.modes.feedback}) {
        all.insert(k);
        CHECK(k > 0);
        by_space[id_space_of(k)].insert(k);
      }
      by_space[IdSpace::course].insert(ci.course_user_id);
    }
  }
  CHECK(all.size() == 500u * 3u * 4u);
  for (const auto& [g, k] : l.global_ids()) by_space[IdSpace::global].insert(k);
  // namespaces are disjoint
  std::set<UserKey> merged;
  std::size_t total = 0;
  for (const auto& [space, keys] : by_space) {
    merged.insert(keys.begin(), keys.end());
    total += keys.size();
  }
  CHECK(merged.size() == total);
}

TEST_CASE("short or malformed keys are refused") {
  CHECK_THROWS_AS(SecretKey::from_hex("00112233"), KeyError);
  CHECK_THROWS_AS(SecretKey::from_hex("zz112233445566778899aabbccddeeff"), KeyError);
  CHECK_NOTHROW(SecretKey::from_hex("00112233445566778899aabbccddeeff"));
}

TEST_CASE("keys load from the environment or a key file") {
  TempDir tmp;
  const char* prior = std::getenv("MOOCDB_SECRET_KEY");
  std::string saved = prior ? prior : "";
  ::unsetenv("MOOCDB_SECRET_KEY");
  CHECK_THROWS_AS(SecretKey::load(std::nullopt), KeyError);
  {
    std::ofstream(tmp / "key") << "00112233445566778899aabbccddeeff\n";
  }
  CHECK(SecretKey::load(tmp / "key").bytes().size() == 16);
  ::setenv("MOOCDB_SECRET_KEY", "ffeeddccbbaa99887766554433221100", 1);
  CHECK(SecretKey::load(std::nullopt).bytes()[0] == 0xff);
  if (prior) {
    ::setenv("MOOCDB_SECRET_KEY", saved.c_str(), 1);
  } else {
    ::unsetenv("MOOCDB_SECRET_KEY");
  }
}

// -- hand-built course -------------------------------------------------------

namespace {

const char* kUrlA = "https://c/a";
const char* kUrlF = "https://c/forum";

json small_structure(int extra_resources = 0) {
  json res = json::array();
  res.push_back({{"uri", "a"}, {"name", "A"}, {"type", "lecture"}, {"urls", {kUrlA}}});
  res.push_back({{"uri", "v"}, {"name", "V"}, {"type", "video"}, {"urls", {"https://c/v"}}});
  res.push_back({{"uri", "forum"}, {"name", "Forum"}, {"type", "forums"}, {"urls", {kUrlF}}});
  for (int i = 0; i < extra_resources; ++i) {
    std::string u = "x" + std::to_string(i);
    res.push_back({{"uri", u}, {"name", u}, {"type", "book"}, {"urls", {"https://c/" + u}}});
  }
  json problems = json::array();
  problems.push_back({{"handle", "hw1"},
                      {"name", "hw1"},
                      {"release", "2013-03-04T00:00:00Z"},
                      {"soft_deadline", "2013-03-11T00:00:00Z"},
                      {"children",
                       {{{"handle", "hw1-p1"}, {"name", "p1"}, {"max_submissions", 2}},
                        {{"handle", "hw1-p2"}, {"name", "p2"}}}}});
  json surveys = json::array();
  surveys.push_back({{"handle", "s"},
                     {"start", "2013-03-01T00:00:00Z"},
                     {"end", "2013-04-01T00:00:00Z"},
                     {"questions", {{{"handle", "q1"}, {"content", "ok?"}, {"type", "likert"}}}}});
  return {{"course_id", "Hand-1"}, {"resources", res}, {"problems", problems}, {"surveys", surveys}};
}

RawEvent ev(const std::string& user, EventKind k, const std::string& uri, const std::string& url, std::int64_t sec,
            json payload = json::object()) {
  RawEvent e;
  e.raw_user = user;
  e.event_kind = k;
  e.uri = uri;
  e.url = url;
  e.timestamp = Timestamp{1362384000000LL + sec * 1000};
  e.payload = std::move(payload);
  e.ip = "10.0.0.1";
  e.os = "Linux";
  e.agent = "test";
  return e;
}

struct HandRun {
  IngestResult result;
  std::filesystem::path log;
};

HandRun ingest_lines(const TempDir& tmp, const std::vector<std::string>& lines, const json& structure,
                     const IngestConfig& config = {}, bool persist = false) {
  HandRun h;
  h.log = tmp / "events.jsonl";
  {
    std::ofstream out(h.log);
    for (const auto& l : lines) out << l << '\n';
  }
  CourseStructure cs = parse_structure(structure, config);
  std::vector<Source> sources{{make_adapter("canonical"), h.log}};
  std::optional<std::filesystem::path> out;
  if (persist) out = tmp / "store";
  h.result = ingest(sources, cs, config, test_key(), out);
  return h;
}

std::vector<std::string> lines_of(const std::vector<RawEvent>& evs) {
  std::vector<std::string> out;
  for (const auto& e : evs) out.push_back(to_canonical_line(e));
  return out;
}

}  // namespace

TEST_CASE("canonical lines round trip") {
  RawEvent e = ev("bob", EventKind::forum_post, "forum", kUrlF, 5, {{"post_id", "p1"}, {"title", "t"}});
  auto back = parse_canonical_line(to_canonical_line(e));
  REQUIRE(std::holds_alternative<RawEvent>(back));
  const RawEvent& r = std::get<RawEvent>(back);
  CHECK(r.raw_user == "bob");
  CHECK(r.event_kind == EventKind::forum_post);
  CHECK(r.timestamp == e.timestamp);
  CHECK(r.payload == e.payload);
  CHECK(std::get<std::string>(parse_canonical_line("{\"raw_user\":\"x\",\"event_kind\":\"dance\"}")) ==
        "unknown_event_kind");
  CHECK(std::get<std::string>(parse_canonical_line("not json")) == "malformed_json");
}

TEST_CASE("three events from two users build a two-entry user dictionary") {
  TempDir tmp;
  auto h = ingest_lines(tmp, lines_of({ev("u1", EventKind::page_view, "a", kUrlA, 0),
                                       ev("u2", EventKind::page_view, "a", kUrlA, 1),
                                       ev("u1", EventKind::page_view, "a", kUrlA, 2)}),
                        small_structure());
  CHECK(h.result.store.course_users.size() == 2);
  CHECK(h.result.store.global_users.size() == 2);
}

TEST_CASE("the structure is authoritative for resources") {
  TempDir tmp;
  // eight declared resources, five touched
  json st = small_structure(5);
  std::vector<RawEvent> evs;
  for (int i = 0; i < 5; ++i) {
    std::string u = i < 3 ? "x" + std::to_string(i) : (i == 3 ? "a" : "v");
    std::string url = i < 3 ? "https://c/" + u : (i == 3 ? kUrlA : "https://c/v");
    evs.push_back(ev("u", EventKind::page_view, u, url, i));
  }
  auto h = ingest_lines(tmp, lines_of(evs), st);
  CHECK(h.result.store.resources.size() == 8);
  CHECK(h.result.report.orphans.empty());
}

TEST_CASE("uris missing from the structure become flagged orphans") {
  TempDir tmp;
  auto h = ingest_lines(tmp, lines_of({ev("u", EventKind::video_play, "mystery", "https://c/m", 0)}),
                        small_structure());
  CHECK(h.result.report.orphans == std::vector<std::string>{"resource:mystery"});
  const Resource& r = h.result.store.resources.back();
  CHECK(r.resource_uri == "mystery");
  std::string type;
  for (const auto& t : h.result.store.resource_types) {
    if (t.resource_type_id == r.resource_type_id) type = t.resource_type_name;
  }
  CHECK(type == "video");
  CHECK(validate_store(h.result.store).ok());
}

TEST_CASE("a correct problem check yields a submission and a full-grade assessment") {
  TempDir tmp;
  auto h = ingest_lines(tmp, lines_of({ev("u", EventKind::problem_check, "hw1-p2", kUrlA, 0, {{"correct", true}})}),
                        small_structure());
  REQUIRE(h.result.store.submissions.size() == 1);
  REQUIRE(h.result.store.assessments.size() == 1);
  CHECK(h.result.store.assessments[0].assessment_grade == 1.0);
  CHECK(h.result.store.assessments[0].assessment_grader_id == kAutomatedGrader);
  CHECK(h.result.store.submissions[0].is_submitted);
}

TEST_CASE("partial credit passes through and saves are drafts") {
  TempDir tmp;
  auto h = ingest_lines(tmp,
                        lines_of({ev("u", EventKind::problem_save, "hw1-p2", kUrlA, 0, {{"answer", "x"}}),
                                  ev("u", EventKind::problem_check, "hw1-p2", kUrlA, 1, {{"grade", 0.25}})}),
                        small_structure());
  REQUIRE(h.result.store.submissions.size() == 2);
  CHECK_FALSE(h.result.store.submissions[0].is_submitted);
  CHECK(h.result.store.submissions[0].submission_answer == "x");
  CHECK(h.result.store.submissions[1].submission_attempt_number == 2);
  REQUIRE(h.result.store.assessments.size() == 1);
  CHECK(h.result.store.assessments[0].assessment_grade == 0.25);
}

TEST_CASE("a forum post is both a collaboration and an observed event") {
  TempDir tmp;
  auto h = ingest_lines(
      tmp, lines_of({ev("u", EventKind::forum_post, "forum", kUrlF, 0, {{"post_id", "p1"}, {"title", "T"}, {"body", "B"}})}),
      small_structure());
  REQUIRE(h.result.store.collaborations.size() == 1);
  REQUIRE(h.result.store.observed_events.size() == 1);
  auto content = json::parse(h.result.store.collaborations[0].collaboration_content);
  CHECK(content["title"] == "T");
  CHECK(content["body"] == "B");
  const auto& o = h.result.store.observed_events[0];
  CHECK(h.result.store.resources[static_cast<std::size_t>(o.resource_id - 1)].resource_uri == "forum");
  CHECK(h.result.report.rows_emitted == 1);
}

TEST_CASE("durations follow the next event, capped, last one zero") {
  TempDir tmp;
  auto h = ingest_lines(tmp,
                        lines_of({ev("u", EventKind::page_view, "a", kUrlA, 0), ev("u", EventKind::page_view, "a", kUrlA, 100),
                                  ev("u", EventKind::page_view, "a", kUrlA, 200), ev("w", EventKind::page_view, "a", kUrlA, 50),
                                  ev("w", EventKind::page_view, "a", kUrlA, 50 + 7200)}),
                        small_structure());
  std::map<UserKey, std::vector<std::int64_t>> d;
  for (const auto& o : h.result.store.observed_events) d[o.user_id_observed].push_back(o.observed_event_duration.ms);
  std::multiset<std::vector<std::int64_t>> got;
  for (auto& [k, v] : d) got.insert(v);
  CHECK(got == std::multiset<std::vector<std::int64_t>>{{100000, 100000, 0}, {1800000, 0}});
}

TEST_CASE("duration cap is configurable") {
  TempDir tmp;
  IngestConfig cfg = IngestConfig::from_json({{"duration_cap_seconds", 60}});
  auto h = ingest_lines(tmp, lines_of({ev("u", EventKind::page_view, "a", kUrlA, 0), ev("u", EventKind::page_view, "a", kUrlA, 100)}),
                        small_structure(), cfg);
  CHECK(h.result.store.observed_events[0].observed_event_duration.ms == 60000);
}

TEST_CASE("random streams: per-user durations never exceed the span, and match it under the cap") {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 50; ++round) {
    CourseStore s;
    std::int64_t cap = 1800000;
    bool small_gaps = round % 2 == 0;
    std::map<UserKey, std::pair<std::int64_t, std::int64_t>> span;
    Id id = 1;
    for (UserKey u = 1; u <= 5; ++u) {
      std::int64_t t = 1362384000000LL + static_cast<std::int64_t>(rng() % 100000);
      std::size_t n = 1 + rng() % 30;
      span[u] = {t, t};
      for (std::size_t i = 0; i < n; ++i) {
        ObservedEvent o;
        o.observed_event_id = id++;
        o.user_id_observed = u;
        o.observed_event_timestamp = Timestamp{t};
        s.observed_events.push_back(o);
        span[u].second = t;
        std::int64_t limit = small_gaps ? cap - 1 : 3 * cap;
        t += static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(limit));
      }
    }
    std::shuffle(s.observed_events.begin(), s.observed_events.end(), rng);
    compute_durations(s, DurationMs{cap});
    std::map<UserKey, std::int64_t> total;
    for (const auto& o : s.observed_events) {
      CHECK(o.observed_event_duration.ms >= 0);
      CHECK(o.observed_event_duration.ms <= cap);
      total[o.user_id_observed] += o.observed_event_duration.ms;
    }
    for (const auto& [u, sp] : span) {
      CHECK(total[u] <= sp.second - sp.first);
      if (small_gaps) CHECK(total[u] == sp.second - sp.first);
    }
  }
}

TEST_CASE("empty source list gives an empty valid store") {
  CourseStructure cs;
  cs.course_id = "Empty";
  IngestResult r = ingest({}, cs, {}, test_key());
  CHECK(validate_store(r.store).ok());
  CHECK(r.report.lines_read == 0);
  CHECK(r.report.rows_emitted == 0);
  CHECK(r.store.submissions.empty());
  CHECK(r.store.course_users.empty());
}

TEST_CASE("bad lines are rejected with reasons and conservation holds") {
  TempDir tmp;
  std::vector<std::string> lines = lines_of({ev("u", EventKind::page_view, "a", kUrlA, 0),
                                             ev("u", EventKind::problem_check, "hw1", kUrlA, 1, {{"correct", true}}),
                                             ev("u", EventKind::problem_check, "hw1-p2", kUrlA, 2, {{"grade", 1.5}}),
                                             ev("u", EventKind::forum_post, "forum", kUrlF, 3, {{"parent_id", "nope"}})});
  lines.push_back("{\"raw_user\":\"u\",\"event_kind\":\"teleport\",\"timestamp\":\"2013-03-04T00:00:00Z\"}");
  lines.push_back("garbage");
  auto h = ingest_lines(tmp, lines, small_structure(), {}, true);
  const IngestReport& r = h.result.report;
  CHECK(r.lines_read == 6);
  CHECK(r.rows_emitted == 1);
  CHECK(r.lines_rejected == 5);
  CHECK(r.lines_read == r.rows_emitted + r.lines_rejected);
  CHECK(r.reject_reasons.at("problem_not_leaf") == 1);
  CHECK(r.reject_reasons.at("grade_out_of_range") == 1);
  CHECK(r.reject_reasons.at("dangling_parent") == 1);
  CHECK(r.reject_reasons.at("unknown_event_kind") == 1);
  CHECK(r.reject_reasons.at("malformed_json") == 1);
  std::string sidecar = moocdb::testing::slurp(tmp / "store.rejects.jsonl");
  std::size_t n = 0;
  std::set<std::size_t> line_nos;
  std::istringstream in(sidecar);
  for (std::string l; std::getline(in, l);) {
    json j = json::parse(l);
    line_nos.insert(j.at("line_no").get<std::size_t>());
    CHECK(j.contains("reason"));
    ++n;
  }
  CHECK(n == 5);
  CHECK(line_nos == std::set<std::size_t>{2, 3, 4, 5, 6});
}

TEST_CASE("submissions past the limit are rejected") {
  TempDir tmp;
  auto h = ingest_lines(tmp,
                        lines_of({ev("u", EventKind::problem_check, "hw1-p1", kUrlA, 0, {{"correct", false}}),
                                  ev("u", EventKind::problem_check, "hw1-p1", kUrlA, 1, {{"correct", false}}),
                                  ev("u", EventKind::problem_check, "hw1-p1", kUrlA, 2, {{"correct", true}})}),
                        small_structure());
  CHECK(h.result.store.submissions.size() == 2);
  CHECK(h.result.report.reject_reasons.at("max_submissions_exceeded") == 1);
}

TEST_CASE("parallel sources merge into time order") {
  TempDir tmp;
  std::vector<RawEvent> a{ev("u", EventKind::page_view, "a", kUrlA, 0), ev("u", EventKind::page_view, "a", kUrlA, 20)};
  std::vector<RawEvent> b{ev("u", EventKind::page_view, "a", kUrlA, 10), ev("u", EventKind::page_view, "a", kUrlA, 30)};
  {
    std::ofstream oa(tmp / "a.jsonl"), ob(tmp / "b.jsonl");
    for (const auto& l : lines_of(a)) oa << l << '\n';
    for (const auto& l : lines_of(b)) ob << l << '\n';
  }
  std::shared_ptr<const SourceAdapter> ad = make_adapter("canonical");
  CourseStructure cs = parse_structure(small_structure(), {});
  IngestResult r = ingest({{ad, tmp / "a.jsonl"}, {ad, tmp / "b.jsonl"}}, cs, {}, test_key());
  REQUIRE(r.store.observed_events.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.store.observed_events[i].observed_event_timestamp.millis == 1362384000000LL + 10000 * static_cast<std::int64_t>(i));
    CHECK(r.store.observed_events[i].observed_event_duration.ms == (i == 3 ? 0 : 10000));
  }
}

// -- synthetic corpora ---------------------------------------------------------

TEST_CASE("synthetic course with 120 users and 40 resources builds dictionaries of that size") {
  TempDir tmp;
  GenSpec spec;
  spec.users = 120;
  // one chapter with 20 lectures, 15 videos and exercises; forum, wiki, book
  spec.weeks = 1;
  spec.lectures_per_week = 20;
  spec.videos_per_week = 15;
  spec.events = 2400;
  auto p = moocdb::testing::run_pipeline(spec, tmp.path());
  std::size_t declared = 0;
  auto count = [&](auto&& self, const ResourceSpec& r) -> void {
    ++declared;
    for (const auto& c : r.children) self(self, c);
  };
  for (const auto& r : p.course.structure.resources) count(count, r);
  CHECK(declared == 40);
  CHECK(p.result.store.resources.size() == declared);
  CHECK(p.result.store.course_users.size() == 120);
}

TEST_CASE("10,000 synthetic events land in exactly the generated table counts") {
  TempDir tmp;
  GenSpec spec;
  spec.users = 250;
  spec.events = 10000;
  auto p = moocdb::testing::run_pipeline(spec, tmp.path());
  CHECK(p.result.report.lines_read == 10000);
  CHECK(p.result.report.lines_rejected == 0);
  CHECK(p.result.report.rows_emitted == 10000);
  for (Table t : kAllTables) {
    INFO(table_name(t));
    CHECK(p.result.store.row_count(t) == p.course.truth.table_counts.at(std::string(table_name(t))));
  }
  CHECK(validate_store(p.result.store).ok());
}

TEST_CASE("ingesting the same input twice gives byte-identical stores") {
  TempDir a, b;
  GenSpec spec;
  spec.users = 50;
  spec.events = 1500;
  moocdb::testing::run_pipeline(spec, a.path(), "store");
  moocdb::testing::run_pipeline(spec, b.path(), "store");
  for (Table t : kAllTables) {
    std::string f = std::string(table_name(t)) + ".csv";
    CHECK(moocdb::testing::slurp(a / "store" / f) == moocdb::testing::slurp(b / "store" / f));
  }
  CHECK(io::store_checksum(io::load_store(a / "store")) == io::store_checksum(io::load_store(b / "store")));
}

TEST_CASE("every input event can be traced back to its handle, resource and time") {
  TempDir tmp;
  GenSpec spec;
  spec.users = 20;
  spec.events = 600;
  auto p = moocdb::testing::run_pipeline(spec, tmp.path());
  const CourseStore& s = p.result.store;
  const IdentityLedger& ledger = p.result.ledger;
  std::multiset<std::tuple<std::string, std::string, std::int64_t>> want, got;
  for (const auto& e : p.course.events) {
    if (e.event_kind == EventKind::page_view || e.event_kind == EventKind::video_play ||
        e.event_kind == EventKind::forum_post || e.event_kind == EventKind::forum_vote) {
      want.emplace(e.raw_user, e.uri, e.timestamp.millis);
    }
  }
  for (const auto& o : s.observed_events) {
    got.emplace(*ledger.handle_of(o.user_id_observed),
                s.resources[static_cast<std::size_t>(o.resource_id - 1)].resource_uri,
                o.observed_event_timestamp.millis);
  }
  CHECK(got == want);
}

TEST_CASE("verbose logs ingest to the same store as canonical ones") {
  TempDir a, b;
  GenSpec spec;
  spec.users = 30;
  spec.events = 900;
  auto pc = moocdb::testing::run_pipeline(spec, a.path());
  spec.format = RawFormat::verbose;
  auto pv = moocdb::testing::run_pipeline(spec, b.path());
  CHECK(pv.files.log.filename() == "events.verbose.jsonl");
  CHECK(pv.result.report.lines_rejected == 0);
  CHECK(io::store_checksum(pc.result.store) == io::store_checksum(pv.result.store));
}

TEST_CASE("config file selects adapters and maps raw type names") {
  IngestConfig cfg = IngestConfig::from_json(
      {{"type_mapping", {{"screencast", "video"}}},
       {"adapters", {{{"suffix", ".log"}, {"adapter", "synthgen"}}}},
       {"default_adapter", "canonical"}});
  CHECK(cfg.map_type("screencast") == "video");
  CHECK(cfg.map_type("book") == "book");
  CHECK_THROWS_AS(cfg.map_type("hologram"), ConfigError);
  CHECK(cfg.adapter_for("x.log") == "synthgen");
  CHECK(cfg.adapter_for("x.txt") == "canonical");
}
