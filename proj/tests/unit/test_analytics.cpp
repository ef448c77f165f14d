#include <random>

#include "doctest.h"
#include "moocdb/analytics.hpp"
#include "moocdb/partition.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace moocdb;
using moocdb::testing::TempDir;

namespace {

const moocdb::testing::Pipeline& shared_course() {
  static TempDir dir;
  static moocdb::testing::Pipeline p = [] {
    GenSpec spec;
    spec.users = 100;
    spec.certificate_fraction = 0.37;
    spec.events = 4000;
    return moocdb::testing::run_pipeline(spec, dir.path());
  }();
  return p;
}

CourseStore without(CourseStore s, std::initializer_list<Table> drop) {
  for (Table t : drop) s.present.erase(t);
  return s;
}

}  // namespace

TEST_CASE("cohort parsing and PII refusal") {
  CHECK(Cohort::parse("all").is_all());
  Cohort c = Cohort::parse("certified,final_grade>=0.5,user_type=student,country=US");
  CHECK(c.terms.size() == 4);
  CHECK(Cohort::parse(c.to_string()).to_string() == c.to_string());
  CHECK_THROWS_AS(Cohort::parse("age>=30"), AccessError);
  CHECK_THROWS_AS(Cohort::parse("most_frequent_ip=1.2.3.4"), AccessError);
  CHECK_THROWS_AS(Cohort::parse("certified,birth_year=1990"), AccessError);
  CHECK_THROWS_AS(Cohort::parse("final_grade>=banana"), std::invalid_argument);
  CHECK_THROWS_AS(Cohort::parse("shoe_size=9"), std::invalid_argument);
  CHECK(SpaceSpec::parse("by_country").kind == SpaceSpec::Kind::group_by_country);
  CHECK(SpaceSpec::parse("country=MN").country == "MN");
  CHECK_THROWS_AS(SpaceSpec::parse("by_planet"), std::invalid_argument);
}

TEST_CASE("final_grade >= 0 selects every user") {
  const auto& p = shared_course();
  CHECK(select_cohort(p.result.store, Cohort::parse("final_grade>=0")).size() == 100);
}

TEST_CASE("the certificate predicate selects exactly the generated certified users") {
  const auto& p = shared_course();
  CHECK(p.course.truth.certified == 37);
  auto ids = select_cohort(p.result.store, Cohort::parse("certified"));
  CHECK(ids.size() == 37);
}

TEST_CASE("empty store yields an empty cohort") {
  CourseStore s;
  CHECK(select_cohort(s, Cohort::parse("all")).empty());
  CHECK_THROWS_AS(select_cohort(without(s, {Table::course_user}), Cohort::parse("all")), CapabilityError);
}

TEST_CASE("mean submissions per certified user by country matches a full scan") {
  const auto& p = shared_course();
  const StatisticDef* def = find_statistic("avg_submissions_by_country");
  REQUIRE(def);
  CHECK(def->aggregation == Aggregation::mean);
  CHECK(def->target == Measure::submissions);
  StatResult r = compute_statistic(p.result.store, *def, def->default_cuts);

  moocdb::testing::OracleCut cut;
  cut.certified = true;
  cut.space = 1;
  auto want = moocdb::testing::oracle_statistic(p.result.store, Aggregation::mean, Measure::submissions, cut);
  REQUIRE(r.groups.size() == want.size());
  for (const auto& [g, v] : want) {
    REQUIRE(r.groups.count(g));
    CHECK(moocdb::testing::close_relative(r.groups.at(g).value, v, 1e-9));
  }
  CHECK(r.cohort_size == 37);
}

TEST_CASE("count over an empty window is empty") {
  const auto& p = shared_course();
  const StatisticDef* def = find_statistic("total_submissions");
  REQUIRE(def);
  CutSpec cut;
  cut.from = Timestamp{1000};
  cut.to = Timestamp{1000};
  CHECK(compute_statistic(p.result.store, *def, cut).groups.empty());
  cut.from = Timestamp{1000};
  cut.to = Timestamp{2000};
  CHECK(compute_statistic(p.result.store, *def, cut).groups.empty());
}

TEST_CASE("mean of a group with no rows is absent, not zero") {
  const auto& p = shared_course();
  const StatisticDef* def = find_statistic("avg_submissions_by_country");
  CutSpec cut = def->default_cuts;
  cut.space = SpaceSpec::parse("country=ZZ");
  StatResult r = compute_statistic(p.result.store, *def, cut);
  CHECK(r.groups.empty());
  CHECK(r.to_csv() == "group,value,n\n");
}

TEST_CASE("statistics needing absent tables raise a capability error naming the table") {
  const auto& p = shared_course();
  CourseStore no_collab = without(p.result.store, {Table::collaborations, Table::collaboration_types});
  try {
    compute_statistic(no_collab, *find_statistic("forum_activity"), {});
    FAIL("expected capability error");
  } catch (const CapabilityError& e) {
    CHECK(e.table == Table::collaborations);
    CHECK(std::string(e.what()).find("collaborations") != std::string::npos);
  }
  CourseStore table_level = without(p.result.store, {Table::course_user, Table::global_user});
  CHECK_THROWS_AS(compute_statistic(table_level, *find_statistic("avg_submissions_by_country"),
                                    find_statistic("avg_submissions_by_country")->default_cuts),
                  CapabilityError);
  CHECK_NOTHROW(compute_statistic(table_level, *find_statistic("total_submissions"), {}));
}

TEST_CASE("every shipped statistic runs on a full store and is runnable on supersets") {
  const auto& p = shared_course();
  CHECK(builtin_statistics().size() >= 8);
  for (const auto& def : builtin_statistics()) {
    INFO(def.name);
    CHECK_NOTHROW(compute_statistic(p.result.store, def, def.default_cuts));
    // capability safety across the access lattice
    for (AccessLevel lo : kAccessLevels) {
      for (AccessLevel hi : kAccessLevels) {
        if (!tables_for(hi).includes(tables_for(lo))) continue;
        CourseStore a = p.result.store, b = p.result.store;
        a.present = tables_for(lo);
        b.present = tables_for(hi);
        bool ok_lo = true;
        try {
          compute_statistic(a, def, def.default_cuts);
        } catch (const CapabilityError&) {
          ok_lo = false;
        }
        if (ok_lo) CHECK_NOTHROW(compute_statistic(b, def, def.default_cuts));
      }
    }
  }
}

TEST_CASE("random statistic and cut pairs equal the brute-force oracle") {
  const auto& p = shared_course();
  std::mt19937_64 rng(99);
  const std::vector<Aggregation> aggs{Aggregation::count, Aggregation::sum, Aggregation::mean, Aggregation::distribution};
  const std::vector<Measure> measures{Measure::submissions, Measure::correct_submissions, Measure::observed_events,
                                      Measure::observed_duration, Measure::collaborations, Measure::feedbacks};
  for (int i = 0; i < 60; ++i) {
    StatisticDef def;
    def.name = "random";
    def.aggregation = aggs[rng() % aggs.size()];
    def.target = measures[rng() % measures.size()];
    auto cut = moocdb::testing::random_cut(rng, p.result.store);
    INFO(aggregation_name(def.aggregation), " ", measure_name(def.target), " ", cut.cohort_text(), " ",
         cut.space_text());
    StatResult got = compute_statistic(p.result.store, def, cut.to_cut());
    auto want = moocdb::testing::oracle_statistic(p.result.store, def.aggregation, def.target, cut);
    REQUIRE(got.groups.size() == want.size());
    for (const auto& [g, v] : want) {
      REQUIRE(got.groups.count(g));
      if (def.aggregation == Aggregation::mean) {
        CHECK(moocdb::testing::close_relative(got.groups.at(g).value, v, 1e-9));
      } else {
        CHECK(got.groups.at(g).value == v);
      }
    }
  }
}

TEST_CASE("enlarging the window never decreases a count") {
  const auto& p = shared_course();
  const StatisticDef* def = find_statistic("page_visits");
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) {
    auto c = moocdb::testing::random_cut(rng, p.result.store);
    CutSpec narrow = c.to_cut();
    CutSpec wide = narrow;
    if (wide.from) wide.from = Timestamp{wide.from->millis - 86400000};
    if (wide.to) wide.to = Timestamp{wide.to->millis + 86400000};
    auto a = compute_statistic(p.result.store, *def, narrow);
    auto b = compute_statistic(p.result.store, *def, wide);
    for (const auto& [g, v] : a.groups) {
      REQUIRE(b.groups.count(g));
      CHECK(b.groups.at(g).value >= v.value);
    }
  }
}

TEST_CASE("statistic results serialize as group,value,n and JSON with metadata") {
  const auto& p = shared_course();
  const StatisticDef* def = find_statistic("submissions_per_user");
  REQUIRE(def);
  StatResult r = compute_statistic(p.result.store, *def, def->default_cuts);
  std::string csv = r.to_csv();
  CHECK(csv.rfind("group,value,n\n", 0) == 0);
  double users = 0;
  for (const auto& [g, v] : r.groups) {
    CHECK(g.rfind("all:", 0) == 0);
    users += v.value;
  }
  CHECK(users == static_cast<double>(r.cohort_size));
  auto j = r.to_json();
  CHECK(j["statistic"] == "submissions_per_user");
  CHECK(j["metadata"].contains("cohort_size"));
}

TEST_CASE("statistic definitions load from JSON") {
  auto defs = parse_statistics(nlohmann::json::parse(R"({"statistics":[
    {"name":"x","aggregation":"sum","target":"observed_duration",
     "cuts":{"cohort":"certified","space":"by_country","from":"2013-03-04T00:00:00Z"}}]})"));
  REQUIRE(defs.size() == 1);
  CHECK(defs[0].aggregation == Aggregation::sum);
  CHECK(defs[0].target == Measure::observed_duration);
  CHECK(defs[0].default_cuts.space.kind == SpaceSpec::Kind::group_by_country);
  CHECK(defs[0].default_cuts.from);
}

// -- correlation ---------------------------------------------------------------

TEST_CASE("pearson is bounded and undefined without variance") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}).value() == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {6, 4, 2}).value() == doctest::Approx(-1.0));
  CHECK_FALSE(pearson({1, 1, 1}, {1, 2, 3}));
  CHECK_FALSE(pearson({1}, {1}));
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x(5), y(5);
    for (int k = 0; k < 5; ++k) x[k] = n(rng), y[k] = x[k] * 3 + 1e-12 * n(rng);
    auto r = pearson(x, y);
    REQUIRE(r);
    CHECK(*r <= 1.0);
    CHECK(*r >= -1.0);
  }
}

namespace {

moocdb::testing::Pipeline planted(Plant plant, std::size_t users, const TempDir& dir, std::uint64_t seed = 7) {
  GenSpec spec;
  spec.seed = seed;
  spec.users = users;
  spec.plant = plant;
  spec.events = users * 24;
  return moocdb::testing::run_pipeline(spec, dir.path());
}

}  // namespace

TEST_CASE("exact linear watch time gives r = 1") {
  TempDir dir;
  auto p = planted(Plant::linear, 150, dir);
  auto res = video_homework_correlation(p.result.store, p.course.truth.study->homework_problem_id);
  REQUIRE(res.r);
  CHECK(std::fabs(*res.r - 1.0) <= 1e-9);
  CHECK(res.week == 1);
  CHECK(res.n == 150);
}

TEST_CASE("identical watch time is signalled as undefined") {
  TempDir dir;
  auto p = planted(Plant::constant, 80, dir);
  auto res = video_homework_correlation(p.result.store, p.course.truth.study->homework_problem_id);
  CHECK_FALSE(res.r);
  CHECK(res.undefined_reason.find("video_seconds") != std::string::npos);
  auto j = res.to_json();
  CHECK(j["r"].is_null());
  CHECK(j["undefined_reason"] == res.undefined_reason);
}

TEST_CASE("pipeline r equals the recomputation from generated ground truth") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    TempDir dir;
    auto p = planted(Plant::noisy, 120, dir, seed);
    const auto& study = *p.course.truth.study;
    auto res = video_homework_correlation(p.result.store, study.homework_problem_id);
    std::vector<double> x, y;
    for (const auto& [h, pr] : study.pairs) {
      x.push_back(static_cast<double>(pr.first) / 1000.0);
      y.push_back(static_cast<double>(pr.second));
    }
    auto want = moocdb::testing::oracle_pearson(x, y);
    REQUIRE(want);
    REQUIRE(res.r);
    CHECK(std::fabs(*res.r - *want) <= 1e-9);
    CHECK(res.n == study.pairs.size());
    for (const auto& pr : res.pairs) {
      auto h = p.result.ledger.handle_of(pr.course_user_id);
      REQUIRE(h);
      CHECK(std::llround(pr.video_seconds * 1000.0) == study.pairs.at(*h).first);
      CHECK(pr.correct == study.pairs.at(*h).second);
    }
  }
}

TEST_CASE("correlation refuses problems without deadlines and missing tables") {
  TempDir dir;
  auto p = planted(Plant::linear, 40, dir);
  CourseStore s = p.result.store;
  Id hw = p.course.truth.study->homework_problem_id;
  for (auto& pr : s.problems) {
    if (pr.problem_id == hw) {
      pr.problem_soft_deadline_timestamp.reset();
      pr.problem_hard_deadline_timestamp.reset();
    }
  }
  try {
    video_homework_correlation(s, hw);
    FAIL("expected a correlation error");
  } catch (const CorrelationError& e) {
    CHECK(std::string(e.what()).find(std::to_string(hw)) != std::string::npos);
  }
  CHECK_THROWS_AS(video_homework_correlation(p.result.store, 99999), CorrelationError);
  CourseStore tl = p.result.store;
  tl.present = tables_for({false, Linkage::table_level});
  CHECK_THROWS_AS(video_homework_correlation(tl, hw), CapabilityError);
}
