#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "moocdb/ingest.hpp"
#include "moocdb/raw_event.hpp"

namespace moocdb {

enum class RawFormat { canonical, verbose };

// How watch time in the study week relates to correct homework submissions.
//   noisy:    standardized correct count, mixed with noise to a target r
//   linear:   watch seconds = 300 * correct count exactly
//   constant: everyone watches the same amount
enum class Plant { none, noisy, linear, constant };

std::string_view plant_name(Plant p);
std::optional<Plant> plant_from_name(std::string_view name);

struct GenSpec {
  std::uint64_t seed = 7;
  std::string course_id = "SynthX-101";
  std::size_t users = 100;
  std::size_t weeks = 4;
  std::size_t videos_per_week = 3;
  std::size_t lectures_per_week = 2;
  std::size_t problems_per_homework = 4;
  double certificate_fraction = 0.3;
  std::vector<std::pair<std::string, double>> countries = {
      {"US", 0.28}, {"IN", 0.2}, {"BR", 0.1}, {"GB", 0.1}, {"CN", 0.1},
      {"ES", 0.1},  {"NG", 0.07}, {"MN", 0.05}};
  // Total raw events; unset means 20 per user.
  std::optional<std::size_t> events;
  Plant plant = Plant::none;
  double planted_r = 0.8;
  std::size_t study_week = 1;
  RawFormat format = RawFormat::canonical;

  nlohmann::json to_json() const;
};

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stand-in for the PII record, keyed by raw handle. Values are sentinels
// that never occur in event data.
struct PiiRecord {
  std::string handle;
  std::int64_t age = 0;
  std::string country;
  std::string most_frequent_ip;
};

struct StudyTruth {
  std::string homework_handle;
  Id homework_problem_id = 0;
  Plant plant = Plant::none;
  double planted_r = 0.0;
  // handle -> (video milliseconds in the window, correct submissions)
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> pairs;
};

struct GroundTruth {
  std::size_t total_events = 0;
  std::map<std::string, std::size_t> events_by_kind;
  std::map<std::string, std::size_t> table_counts;
  std::vector<std::string> users;
  std::size_t certified = 0;
  std::size_t first_graded_pairs = 0;
  // (collaboration id, parent id) in emission order
  std::vector<std::pair<Id, std::optional<Id>>> collaboration_parents;
  std::optional<StudyTruth> study;

  nlohmann::json to_json() const;
  static GroundTruth from_json(const nlohmann::json& j);
};

struct GeneratedCourse {
  GenSpec spec;
  CourseStructure structure;
  std::vector<RawEvent> events;  // in emission (timestamp) order
  std::vector<PiiRecord> pii;
  GroundTruth truth;
};

// Deterministic per spec. Throws SpecError for infeasible specs.
GeneratedCourse generate(const GenSpec& spec);

// Canonical or verbose line for one event, per the spec's format.
std::string verbose_line(const RawEvent& e, const std::string& course_id, std::size_t user_number);

struct GeneratedFiles {
  std::filesystem::path structure;
  std::filesystem::path log;
  std::filesystem::path pii;
  std::filesystem::path ground_truth;
};

// Writes structure.json, events.jsonl or events.verbose.jsonl, pii.jsonl and
// ground_truth.json under dir.
GeneratedFiles write_generated(const GeneratedCourse& course, const std::filesystem::path& dir);

std::vector<PiiRecord> load_pii(const std::filesystem::path& p);

}  // namespace moocdb
