#include "moocdb/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "moocdb/hash.hpp"
#include "moocdb/store_io.hpp"

namespace moocdb {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view plant_name(Plant p) {
  switch (p) {
    case Plant::none: return "none";
    case Plant::noisy: return "noisy";
    case Plant::linear: return "linear";
    case Plant::constant: return "constant";
  }
  return "?";
}

std::optional<Plant> plant_from_name(std::string_view name) {
  for (Plant p : {Plant::none, Plant::noisy, Plant::linear, Plant::constant}) {
    if (plant_name(p) == name) return p;
  }
  return std::nullopt;
}

json GenSpec::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["course_id"] = course_id;
  j["users"] = users;
  j["weeks"] = weeks;
  j["videos_per_week"] = videos_per_week;
  j["lectures_per_week"] = lectures_per_week;
  j["problems_per_homework"] = problems_per_homework;
  j["certificate_fraction"] = certificate_fraction;
  j["countries"] = countries;
  j["events"] = events ? json(*events) : json(nullptr);
  j["plant"] = plant_name(plant);
  j["planted_r"] = planted_r;
  j["study_week"] = study_week;
  j["format"] = format == RawFormat::canonical ? "canonical" : "verbose";
  return json::parse(j.dump());
}

namespace {

constexpr std::int64_t kHour = 3600 * 1000;
constexpr std::int64_t kDay = 24 * kHour;
constexpr std::int64_t kWeek = 7 * kDay;
constexpr std::int64_t kVideoChunk = 1200 * 1000;
constexpr std::int64_t kLinearMsPerCorrect = 300 * 1000;
constexpr std::int64_t kConstantWatch = 1800 * 1000;

// Distribution helpers over the raw engine output, so a seed yields the same
// course with any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}

  double uniform() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do x = g_();
    while (x >= limit);
    return x % n;
  }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  bool chance(double p) { return uniform() < p; }
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }
  std::size_t weighted(const std::vector<double>& w) {
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    double x = uniform() * total;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (x < w[i]) return i;
      x -= w[i];
    }
    return w.size() - 1;
  }
  std::uint64_t bits() { return g_(); }

 private:
  std::mt19937_64 g_;
};

const std::vector<std::string> kOs = {"Windows", "macOS", "Linux", "Android", "iOS"};
const std::vector<std::string> kAgents = {
    "Mozilla/5.0 (Windows NT 6.1; WOW64) AppleWebKit/537.22 Chrome/25.0.1364.172 Safari/537.22",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_8_2) AppleWebKit/536.26.17 Version/6.0.2 Safari/536.26.17",
    "Mozilla/5.0 (X11; Linux x86_64; rv:19.0) Gecko/20100101 Firefox/19.0",
    "Mozilla/5.0 (Linux; Android 4.1.2) AppleWebKit/535.19 Chrome/18.0.1025.166 Mobile Safari/535.19",
};
const std::vector<std::string> kWords = {
    "circuit", "voltage", "current", "resistor", "node",  "mesh",    "thevenin", "norton",
    "power",   "signal",  "filter",  "amplifier", "gain", "ground", "source",   "capacitor",
    "inductor", "phase",  "diode",   "mosfet",    "loop", "bias",   "lab",      "question"};
const std::vector<std::string> kSurveyAnswers = {"strongly agree", "agree", "neutral", "disagree",
                                                 "strongly disagree"};

std::string words(Rng& rng, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += rng.pick(kWords);
  }
  return s;
}

struct Item {
  RawEvent event;
  std::size_t user = 0;
  std::size_t seq = 0;
};

struct UserProfile {
  std::string handle;
  std::string ip;
  std::string os;
  std::string agent;
  double ability = 0.5;
};

struct Layout {
  Timestamp start;
  std::string base_url;
  std::vector<std::string> page_resources;   // non-video, non-collaborative
  std::vector<std::string> video_resources;
  std::map<std::string, std::vector<std::string>> urls;  // uri -> urls
  std::vector<std::string> chapter_of_week;
  std::vector<std::vector<std::string>> videos_of_week;
  std::vector<std::vector<std::string>> leaves_of_week;
  std::vector<std::string> questions;
};

Layout build_structure(const GenSpec& spec, CourseStructure& s) {
  Layout L;
  L.start = *parse_timestamp("2013-03-04T00:00:00Z");
  L.base_url = "https://courses.example.org/courses/" + spec.course_id + "/";
  s.course_id = spec.course_id;

  auto add_urls = [&](ResourceSpec& r, std::vector<std::string> us) {
    r.urls = us;
    L.urls[r.uri] = std::move(us);
  };
  for (std::size_t w = 1; w <= spec.weeks; ++w) {
    std::string wk = "week-" + std::to_string(w);
    std::string chapter_url = L.base_url + "courseware/" + wk + "/";
    ResourceSpec chapter{wk, "Week " + std::to_string(w), "lecture", {}, {}};
    add_urls(chapter, {chapter_url});
    L.page_resources.push_back(wk);
    L.chapter_of_week.push_back(wk);
    L.videos_of_week.emplace_back();
    for (std::size_t k = 1; k <= spec.lectures_per_week; ++k) {
      std::string uri = wk + "/lecture-" + std::to_string(k);
      ResourceSpec r{uri, "Lecture " + std::to_string(w) + "." + std::to_string(k), "lecture", {}, {}};
      add_urls(r, {L.base_url + "courseware/" + uri + "/"});
      L.page_resources.push_back(uri);
      chapter.children.push_back(std::move(r));
    }
    for (std::size_t k = 1; k <= spec.videos_per_week; ++k) {
      std::string uri = wk + "/video-" + std::to_string(k);
      ResourceSpec r{uri, "Video " + std::to_string(w) + "." + std::to_string(k), "video", {}, {}};
      // Videos are embedded on the chapter page as well as their own.
      add_urls(r, {L.base_url + "courseware/" + uri + "/", chapter_url});
      L.video_resources.push_back(uri);
      L.videos_of_week.back().push_back(uri);
      chapter.children.push_back(std::move(r));
    }
    std::string ex = wk + "/exercises";
    ResourceSpec exr{ex, "Homework " + std::to_string(w), "exercises", {}, {}};
    add_urls(exr, {L.base_url + "courseware/" + ex + "/"});
    L.page_resources.push_back(ex);
    chapter.children.push_back(std::move(exr));
    s.resources.push_back(std::move(chapter));
  }
  ResourceSpec forum{"forum", "Discussion", "forums", {}, {}};
  add_urls(forum, {L.base_url + "discussion/forum/", L.base_url + "discussion/"});
  s.resources.push_back(std::move(forum));
  ResourceSpec wiki{"wiki", "Course wiki", "wiki", {}, {}};
  add_urls(wiki, {L.base_url + "wiki/"});
  s.resources.push_back(std::move(wiki));
  ResourceSpec book{"book", "Textbook", "book", {}, {}};
  add_urls(book, {L.base_url + "book/"});
  L.page_resources.push_back("book");
  s.resources.push_back(std::move(book));

  for (std::size_t w = 1; w <= spec.weeks; ++w) {
    Timestamp release{L.start.millis + static_cast<std::int64_t>(w - 1) * kWeek};
    ProblemSpec hw;
    hw.handle = "hw" + std::to_string(w);
    hw.name = hw.handle;
    hw.type = "homework";
    hw.release = release;
    hw.soft_deadline = Timestamp{release.millis + kWeek};
    hw.hard_deadline = Timestamp{release.millis + kWeek + 2 * kDay};
    L.leaves_of_week.emplace_back();
    for (std::size_t k = 1; k <= spec.problems_per_homework; ++k) {
      ProblemSpec leaf;
      leaf.handle = hw.handle + "-p" + std::to_string(k);
      leaf.name = leaf.handle;
      leaf.type = "homework";
      leaf.release = hw.release;
      leaf.soft_deadline = hw.soft_deadline;
      leaf.hard_deadline = hw.hard_deadline;
      leaf.max_submissions = 3;
      L.leaves_of_week.back().push_back(leaf.handle);
      hw.children.push_back(std::move(leaf));
    }
    s.problems.push_back(std::move(hw));
  }

  SurveySpec survey;
  survey.handle = "exit-survey";
  survey.start = Timestamp{L.start.millis + static_cast<std::int64_t>(spec.weeks) * kWeek};
  survey.end = Timestamp{survey.start.millis + kWeek};
  const char* prompts[] = {"The lectures were clear", "The homework matched the lectures",
                           "The forum was helpful"};
  for (int q = 0; q < 3; ++q) {
    QuestionSpec qs{"exit-q" + std::to_string(q + 1), prompts[q], "likert", std::nullopt};
    if (q == 2) qs.reference_uri = "forum";
    L.questions.push_back(qs.handle);
    survey.questions.push_back(std::move(qs));
  }
  s.surveys.push_back(std::move(survey));
  return L;
}

void validate_spec(const GenSpec& spec) {
  if (spec.users == 0 && spec.events && *spec.events > 0) {
    throw SpecError("events requested for a course with no users");
  }
  if (spec.weeks == 0) throw SpecError("a course needs at least one week");
  if (spec.problems_per_homework == 0) throw SpecError("homeworks need at least one problem");
  if (spec.videos_per_week == 0 && spec.plant != Plant::none) {
    throw SpecError("a planted study needs videos");
  }
  if (!(spec.certificate_fraction >= 0.0 && spec.certificate_fraction <= 1.0)) {
    throw SpecError("certificate_fraction must lie in [0, 1]");
  }
  if (!(spec.planted_r >= -1.0 && spec.planted_r <= 1.0)) throw SpecError("planted_r must lie in [-1, 1]");
  if (spec.plant != Plant::none && (spec.study_week < 1 || spec.study_week > spec.weeks)) {
    throw SpecError("study_week outside the course");
  }
  if (spec.plant != Plant::none && spec.problems_per_homework > 20) {
    throw SpecError("a planted study supports at most 20 problems per homework");
  }
  if (spec.countries.empty()) throw SpecError("country distribution is empty");
  for (const auto& [c, w] : spec.countries) {
    if (!(w >= 0.0) || c.empty()) throw SpecError("bad country weight for '" + c + "'");
  }
  std::size_t leaves = spec.weeks * spec.problems_per_homework;
  std::size_t events = spec.events.value_or(spec.users * 20);
  if (spec.users > 0 && events < leaves) {
    throw SpecError("infeasible: " + std::to_string(leaves) + " problems but only " +
                    std::to_string(events) + " events; every problem gets at least one attempt");
  }
}

}  // namespace

GeneratedCourse generate(const GenSpec& spec) {
  validate_spec(spec);
  GeneratedCourse out;
  out.spec = spec;
  Rng rng(spec.seed);
  Layout L = build_structure(spec, out.structure);
  const std::size_t n_users = spec.users;
  const std::size_t total_events = spec.events.value_or(n_users * 20);
  const std::size_t P = spec.problems_per_homework;

  // Roster, profiles, PII sentinels.
  std::vector<UserProfile> profiles(n_users);
  std::vector<std::size_t> order(n_users);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n_users; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::size_t certified = static_cast<std::size_t>(std::llround(spec.certificate_fraction * static_cast<double>(n_users)));
  std::vector<bool> is_certified(n_users, false);
  for (std::size_t i = 0; i < certified; ++i) is_certified[order[i]] = true;
  std::vector<double> country_w;
  for (const auto& [c, w] : spec.countries) country_w.push_back(w);
  for (std::size_t u = 0; u < n_users; ++u) {
    char handle[32];
    std::snprintf(handle, sizeof handle, "learner%06zu", u + 1);
    UserProfile& p = profiles[u];
    p.handle = handle;
    p.ip = "10." + std::to_string(rng.below(256)) + "." + std::to_string(rng.below(256)) + "." +
           std::to_string(1 + rng.below(254));
    p.os = rng.pick(kOs);
    p.agent = rng.pick(kAgents);
    p.ability = rng.uniform(0.15, 0.95);
    RosterEntry e;
    e.handle = p.handle;
    e.user_type = rng.chance(0.95) ? "student" : "auditor";
    e.certified = is_certified[u];
    e.final_grade = e.certified ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.6);
    e.country = spec.countries[rng.weighted(country_w)].first;
    out.structure.roster.push_back(e);
    PiiRecord pii;
    pii.handle = p.handle;
    pii.age = rng.between(16, 75);
    pii.country = std::string("X") + static_cast<char>('A' + rng.below(26));
    pii.most_frequent_ip = "240." + std::to_string(rng.below(256)) + "." + std::to_string(rng.below(256)) +
                           "." + std::to_string(1 + rng.below(254));
    out.pii.push_back(std::move(pii));
  }
  out.truth.users.reserve(n_users);
  for (const auto& p : profiles) out.truth.users.push_back(p.handle);
  out.truth.certified = certified;

  auto make_event = [&](const UserProfile& p, EventKind kind, Timestamp t) {
    RawEvent e;
    e.raw_user = p.handle;
    e.event_kind = kind;
    e.timestamp = t;
    e.ip = p.ip;
    e.os = p.os;
    e.agent = p.agent;
    return e;
  };
  auto url_of = [&](const std::string& uri) { return rng.pick(L.urls.at(uri)); };

  std::vector<Item> items;
  items.reserve(total_events);

  // Planted study: per-user watch time and correct counts.
  std::vector<std::int64_t> plant_correct(n_users, 0), plant_ms(n_users, 0);
  if (spec.plant != Plant::none && n_users > 0) {
    for (std::size_t u = 0; u < n_users; ++u) {
      for (std::size_t k = 0; k < P; ++k) plant_correct[u] += rng.chance(profiles[u].ability);
    }
    double mean = 0, var = 0;
    for (auto c : plant_correct) mean += static_cast<double>(c);
    mean /= static_cast<double>(n_users);
    for (auto c : plant_correct) var += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
    double sd = std::sqrt(var / static_cast<double>(n_users));
    for (std::size_t u = 0; u < n_users; ++u) {
      switch (spec.plant) {
        case Plant::noisy: {
          double z = sd > 0 ? (static_cast<double>(plant_correct[u]) - mean) / sd : 0.0;
          double r = spec.planted_r;
          double secs = 2400.0 + 600.0 * (r * z + std::sqrt(1.0 - r * r) * rng.normal());
          plant_ms[u] = std::llround(std::max(secs, 30.0) * 1000.0);
          break;
        }
        case Plant::linear: plant_ms[u] = kLinearMsPerCorrect * plant_correct[u]; break;
        case Plant::constant: plant_ms[u] = kConstantWatch; break;
        case Plant::none: break;
      }
    }
  }

  std::vector<std::size_t> filler_weeks;  // 0-based; index weeks == wrap-up week
  for (std::size_t w = 0; w <= spec.weeks; ++w) {
    if (spec.plant != Plant::none && w + 1 == spec.study_week) continue;
    filler_weeks.push_back(w);
  }
  std::vector<std::string> filler_leaves;
  for (std::size_t w = 0; w < spec.weeks; ++w) {
    if (spec.plant != Plant::none && w + 1 == spec.study_week) continue;
    for (const auto& l : L.leaves_of_week[w]) filler_leaves.push_back(l);
  }
  std::size_t next_uncovered = 0;

  const std::vector<double> kind_w = {30, 25, 18, 5, 9, 5, 3, 5};
  std::set<std::pair<std::size_t, std::string>> graded_pairs;

  for (std::size_t u = 0; u < n_users; ++u) {
    const UserProfile& p = profiles[u];
    std::size_t quota = total_events / n_users + (u < total_events % n_users ? 1 : 0);
    std::size_t seq = 0;
    std::size_t used = 0;
    auto push = [&](RawEvent e) {
      items.push_back({std::move(e), u, seq++});
      ++used;
    };

    if (spec.plant != Plant::none) {
      std::size_t w = spec.study_week - 1;
      Timestamp week_start{L.start.millis + static_cast<std::int64_t>(w) * kWeek};
      std::int64_t t = week_start.millis + kHour + rng.between(0, 2 * kDay);
      std::int64_t remaining = plant_ms[u];
      std::size_t chunks = static_cast<std::size_t>((remaining + kVideoChunk - 1) / kVideoChunk);
      std::size_t needed = chunks + 1 + P + static_cast<std::size_t>(plant_correct[u]);
      if (needed > quota) {
        throw SpecError("infeasible: the planted study needs up to " + std::to_string(needed) +
                        " events for one user but the volume allows " + std::to_string(quota));
      }
      for (std::size_t c = 0; c < chunks; ++c) {
        std::int64_t len = std::min(remaining, kVideoChunk);
        const std::string& video = L.videos_of_week[w][c % L.videos_of_week[w].size()];
        RawEvent e = make_event(p, EventKind::video_play, Timestamp{t});
        e.uri = video;
        e.url = url_of(video);
        push(std::move(e));
        t += len;
        remaining -= len;
      }
      RawEvent close = make_event(p, EventKind::page_view, Timestamp{t});
      close.uri = L.chapter_of_week[w];
      close.url = url_of(close.uri);
      push(std::move(close));
      for (std::size_t k = 0; k < P; ++k) {
        bool solve = static_cast<std::int64_t>(k) < plant_correct[u];
        const std::string& leaf = L.leaves_of_week[w][k];
        bool warmup = solve && rng.chance(0.3) && used + 1 < quota;
        auto attempt = [&](bool correct) {
          t += rng.between(2 * 60 * 1000, 2 * kHour);
          RawEvent e = make_event(p, EventKind::problem_check, Timestamp{t});
          e.uri = leaf;
          e.url = url_of(L.chapter_of_week[w] + "/exercises");
          e.payload = {{"answer", "choice-" + std::to_string(rng.below(5))}, {"correct", correct}};
          push(std::move(e));
          graded_pairs.emplace(u, leaf);
        };
        if (warmup) attempt(false);
        attempt(solve);
      }
      out.truth.study = out.truth.study.value_or(StudyTruth{});
      out.truth.study->pairs[p.handle] = {plant_ms[u], plant_correct[u]};
    }

    std::size_t filler = quota - used;
    std::vector<std::int64_t> times(filler);
    for (auto& t : times) {
      std::size_t w = filler_weeks[rng.below(filler_weeks.size())];
      t = L.start.millis + static_cast<std::int64_t>(w) * kWeek + kHour + rng.between(0, kWeek - 2 * kHour);
    }
    std::sort(times.begin(), times.end());
    for (std::size_t i = 1; i < times.size(); ++i) times[i] = std::max(times[i], times[i - 1] + 1);

    std::map<std::string, int> checks;
    for (std::int64_t t : times) {
      auto kind = static_cast<EventKind>(rng.weighted(kind_w));
      std::string forced_leaf;
      if (next_uncovered < filler_leaves.size()) {
        kind = EventKind::problem_check;
        forced_leaf = filler_leaves[next_uncovered++];
      }
      if ((kind == EventKind::problem_check || kind == EventKind::problem_save) && filler_leaves.empty()) {
        kind = EventKind::page_view;
      }
      RawEvent e = make_event(p, kind, Timestamp{t});
      switch (kind) {
        case EventKind::page_view:
          e.uri = rng.pick(L.page_resources);
          e.url = url_of(e.uri);
          break;
        case EventKind::video_play:
          e.uri = rng.pick(L.video_resources.empty() ? L.page_resources : L.video_resources);
          if (L.video_resources.empty()) e.event_kind = EventKind::page_view;
          e.url = url_of(e.uri);
          break;
        case EventKind::problem_check:
        case EventKind::problem_save: {
          std::string leaf = forced_leaf.empty() ? rng.pick(filler_leaves) : forced_leaf;
          e.uri = leaf;
          e.url = url_of("week-" + leaf.substr(2, leaf.find('-') - 2) + "/exercises");
          e.payload = {{"answer", "choice-" + std::to_string(rng.below(5))}};
          if (kind == EventKind::problem_check && checks[leaf] >= 3) e.event_kind = EventKind::problem_save;
          if (e.event_kind == EventKind::problem_check) {
            ++checks[leaf];
            if (rng.chance(0.1)) {
              e.payload["grade"] = static_cast<double>(rng.between(1, 3)) / 4.0;
            } else {
              e.payload["correct"] = rng.chance(p.ability);
            }
            graded_pairs.emplace(u, leaf);
          }
          break;
        }
        case EventKind::forum_post:
        case EventKind::forum_vote:
          e.uri = "forum";
          e.url = url_of("forum");
          break;
        case EventKind::wiki_edit:
          e.uri = "wiki";
          e.url = url_of("wiki");
          e.payload = {{"action", rng.chance(0.9) ? "edit" : "delete"}, {"body", words(rng, 6)}};
          break;
        case EventKind::survey_answer:
          e.uri = rng.pick(L.questions);
          e.payload = {{"answer", rng.pick(kSurveyAnswers)}};
          break;
      }
      push(std::move(e));
    }
  }

  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return std::tie(a.event.timestamp, a.user, a.seq) < std::tie(b.event.timestamp, b.user, b.seq);
  });

  // Thread topology, assigned in time order so parents always precede
  // replies strictly.
  struct Post {
    std::string handle;
    Id id;
    Timestamp at;
  };
  std::vector<Post> posts;
  Id next_collab = 0;
  for (auto& it : items) {
    RawEvent& e = it.event;
    if (e.event_kind != EventKind::forum_post && e.event_kind != EventKind::forum_vote &&
        e.event_kind != EventKind::wiki_edit) {
      continue;
    }
    ++next_collab;
    if (e.event_kind == EventKind::wiki_edit) {
      out.truth.collaboration_parents.emplace_back(next_collab, std::nullopt);
      continue;
    }
    std::size_t earlier = static_cast<std::size_t>(
        std::partition_point(posts.begin(), posts.end(), [&](const Post& p) { return p.at < e.timestamp; }) -
        posts.begin());
    if (e.event_kind == EventKind::forum_vote && earlier == 0) e.event_kind = EventKind::forum_post;
    if (e.event_kind == EventKind::forum_vote) {
      const Post& target = posts[rng.below(earlier)];
      e.payload = {{"parent_id", target.handle}, {"direction", rng.chance(0.8) ? "up" : "down"}};
      out.truth.collaboration_parents.emplace_back(next_collab, target.id);
      continue;
    }
    std::string handle = "post-" + std::to_string(posts.size() + 1);
    if (earlier > 0 && rng.chance(0.55)) {
      const Post& parent = posts[rng.below(earlier)];
      e.payload = {{"post_id", handle}, {"parent_id", parent.handle}, {"body", words(rng, 12)}};
      out.truth.collaboration_parents.emplace_back(next_collab, parent.id);
    } else {
      e.payload = {{"post_id", handle}, {"title", words(rng, 4)}, {"body", words(rng, 16)}};
      out.truth.collaboration_parents.emplace_back(next_collab, std::nullopt);
    }
    posts.push_back({handle, next_collab, e.timestamp});
  }

  // Ground truth counts.
  GroundTruth& gt = out.truth;
  gt.total_events = items.size();
  std::set<std::string> answers;
  std::size_t observed = 0, submissions = 0, assessments = 0, collaborations = 0, feedbacks = 0;
  for (const auto& it : items) {
    const RawEvent& e = it.event;
    ++gt.events_by_kind[std::string(event_kind_name(e.event_kind))];
    switch (e.event_kind) {
      case EventKind::page_view:
      case EventKind::video_play: ++observed; break;
      case EventKind::problem_check: ++submissions, ++assessments; break;
      case EventKind::problem_save: ++submissions; break;
      case EventKind::forum_post:
      case EventKind::forum_vote: ++collaborations, ++observed; break;
      case EventKind::wiki_edit: ++collaborations; break;
      case EventKind::survey_answer:
        ++feedbacks;
        answers.insert(e.payload.at("answer").get<std::string>());
        break;
    }
  }
  std::size_t resources = 0, links = 0, problems = 0;
  std::set<std::string> urls;
  auto count_resources = [&](auto&& self, const ResourceSpec& r) -> void {
    ++resources;
    links += r.urls.size();
    urls.insert(r.urls.begin(), r.urls.end());
    for (const auto& c : r.children) self(self, c);
  };
  for (const auto& r : out.structure.resources) count_resources(count_resources, r);
  for (const auto& h : out.structure.problems) problems += 1 + h.children.size();
  std::size_t questions = 0;
  for (const auto& s : out.structure.surveys) questions += s.questions.size();

  gt.table_counts = {
      {"resource_types", kResourceTypeNames.size()},
      {"resources", resources},
      {"urls", urls.size()},
      {"resource_urls", links},
      {"observed_events", observed},
      {"problem_types", out.structure.problems.empty() ? 0 : 1},
      {"problems", problems},
      {"submissions", submissions},
      {"assessments", assessments},
      {"collaboration_types", kCollaborationTypeNames.size()},
      {"collaborations", collaborations},
      {"feedbacks", feedbacks},
      {"questions", questions},
      {"answers", answers.size()},
      {"surveys", out.structure.surveys.size()},
      {"course_user", n_users},
      {"global_user", n_users},
  };
  gt.first_graded_pairs = graded_pairs.size();

  if (gt.study) {
    gt.study->homework_handle = "hw" + std::to_string(spec.study_week);
    gt.study->homework_problem_id = static_cast<Id>(1 + (spec.study_week - 1) * (P + 1));
    gt.study->plant = spec.plant;
    gt.study->planted_r = spec.plant == Plant::noisy ? spec.planted_r : spec.plant == Plant::linear ? 1.0 : 0.0;
  }

  out.events.reserve(items.size());
  for (auto& it : items) out.events.push_back(std::move(it.event));
  return out;
}

json GroundTruth::to_json() const {
  nlohmann::ordered_json j;
  j["total_events"] = total_events;
  j["events_by_kind"] = events_by_kind;
  j["table_counts"] = table_counts;
  j["users"] = users;
  j["certified"] = certified;
  j["first_graded_pairs"] = first_graded_pairs;
  nlohmann::ordered_json parents = nlohmann::ordered_json::array();
  for (const auto& [id, parent] : collaboration_parents) {
    parents.push_back({id, parent ? json(*parent) : json(nullptr)});
  }
  j["collaboration_parents"] = parents;
  if (study) {
    nlohmann::ordered_json s;
    s["homework_handle"] = study->homework_handle;
    s["homework_problem_id"] = study->homework_problem_id;
    s["plant"] = plant_name(study->plant);
    s["planted_r"] = study->planted_r;
    nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
    for (const auto& [h, v] : study->pairs) pairs.push_back({h, v.first, v.second});
    s["pairs"] = pairs;
    j["study"] = s;
  } else {
    j["study"] = nullptr;
  }
  return json::parse(j.dump());
}

GroundTruth GroundTruth::from_json(const json& j) {
  GroundTruth g;
  g.total_events = j.at("total_events").get<std::size_t>();
  g.events_by_kind = j.at("events_by_kind").get<std::map<std::string, std::size_t>>();
  g.table_counts = j.at("table_counts").get<std::map<std::string, std::size_t>>();
  g.users = j.at("users").get<std::vector<std::string>>();
  g.certified = j.at("certified").get<std::size_t>();
  g.first_graded_pairs = j.at("first_graded_pairs").get<std::size_t>();
  for (const auto& p : j.at("collaboration_parents")) {
    std::optional<Id> parent;
    if (!p.at(1).is_null()) parent = p.at(1).get<Id>();
    g.collaboration_parents.emplace_back(p.at(0).get<Id>(), parent);
  }
  if (!j.at("study").is_null()) {
    const json& s = j.at("study");
    StudyTruth st;
    st.homework_handle = s.at("homework_handle").get<std::string>();
    st.homework_problem_id = s.at("homework_problem_id").get<Id>();
    st.plant = plant_from_name(s.at("plant").get<std::string>()).value_or(Plant::none);
    st.planted_r = s.at("planted_r").get<double>();
    for (const auto& p : s.at("pairs")) {
      st.pairs[p.at(0).get<std::string>()] = {p.at(1).get<std::int64_t>(), p.at(2).get<std::int64_t>()};
    }
    g.study = std::move(st);
  }
  return g;
}

// -- output ------------------------------------------------------------------

std::string verbose_line(const RawEvent& e, const std::string& course_id, std::size_t user_number) {
  // edX tracking-log shape: timestamps with microseconds and an offset,
  // context block, request noise.
  std::string time = format_timestamp(e.timestamp);
  time = time.substr(0, time.size() - 1) + "000+00:00";
  std::string session = sha256_hex(e.raw_user + "|" + time.substr(0, 10)).substr(0, 32);
  nlohmann::ordered_json j;
  j["username"] = e.raw_user;
  j["event_type"] = verbose_event_type(e.event_kind);
  j["name"] = verbose_event_type(e.event_kind);
  j["time"] = time;
  j["event_source"] = e.event_kind == EventKind::problem_check ? "server" : "browser";
  j["page"] = e.url;
  j["host"] = "courses.example.org";
  j["referer"] = "https://courses.example.org/courses/" + course_id + "/courseware/";
  j["ip"] = e.ip;
  j["agent"] = e.agent;
  j["accept_language"] = "en-US,en;q=0.8";
  j["session"] = session;
  nlohmann::ordered_json ctx;
  ctx["course_id"] = "course-v1:" + course_id;
  ctx["org_id"] = course_id.substr(0, course_id.find('-'));
  ctx["user_id"] = user_number;
  ctx["path"] = "/event";
  ctx["module"] = {{"usage_key", e.uri}, {"display_name", e.uri}};
  ctx["client"] = {{"os", e.os}, {"browser", e.agent.substr(0, e.agent.find(' '))}};
  j["context"] = ctx;
  j["event"] = e.payload;
  return j.dump();
}

GeneratedFiles write_generated(const GeneratedCourse& course, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io::StoreIoError("cannot create " + dir.string() + ": " + ec.message());
  GeneratedFiles files;
  files.structure = dir / "structure.json";
  files.log = dir / (course.spec.format == RawFormat::verbose ? "events.verbose.jsonl" : "events.jsonl");
  files.pii = dir / "pii.jsonl";
  files.ground_truth = dir / "ground_truth.json";

  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw io::StoreIoError("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(files.structure);
    out << structure_to_json(course.structure).dump(2) << '\n';
  }
  {
    auto out = open(files.log);
    std::map<std::string, std::size_t> number;
    for (std::size_t i = 0; i < course.truth.users.size(); ++i) number[course.truth.users[i]] = i + 1;
    std::string buf;
    for (const auto& e : course.events) {
      buf += course.spec.format == RawFormat::verbose
                 ? verbose_line(e, course.structure.course_id, number[e.raw_user])
                 : to_canonical_line(e);
      buf += '\n';
      if (buf.size() > (1u << 20)) {
        out << buf;
        buf.clear();
      }
    }
    out << buf;
  }
  {
    auto out = open(files.pii);
    for (const auto& p : course.pii) {
      nlohmann::ordered_json j;
      j["handle"] = p.handle;
      j["age"] = p.age;
      j["country"] = p.country;
      j["most_frequent_ip"] = p.most_frequent_ip;
      out << j.dump() << '\n';
    }
  }
  {
    auto out = open(files.ground_truth);
    nlohmann::ordered_json j;
    j["spec"] = course.spec.to_json();
    j["truth"] = course.truth.to_json();
    out << j.dump(2) << '\n';
  }
  return files;
}

std::vector<PiiRecord> load_pii(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw io::StoreIoError("cannot read " + p.string());
  std::vector<PiiRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw io::StoreIoError(p.string() + ": malformed PII line");
    out.push_back({j.at("handle").get<std::string>(), j.at("age").get<std::int64_t>(),
                   j.at("country").get<std::string>(), j.at("most_frequent_ip").get<std::string>()});
  }
  return out;
}

}  // namespace moocdb
