#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "moocdb/identity.hpp"
#include "moocdb/raw_event.hpp"
#include "moocdb/schema.hpp"

namespace moocdb {

// -- course structure ------------------------------------------------------

struct ResourceSpec {
  std::string uri;
  std::string name;
  std::string type;  // one of kResourceTypeNames after mapping
  std::vector<std::string> urls;
  std::vector<ResourceSpec> children;
};

struct ProblemSpec {
  std::string handle;
  std::string name;
  std::string type;
  std::optional<Timestamp> release;
  std::optional<Timestamp> soft_deadline;
  std::optional<Timestamp> hard_deadline;
  std::optional<std::int64_t> max_submissions;
  std::vector<ProblemSpec> children;
};

struct QuestionSpec {
  std::string handle;
  std::string content;
  std::string type;
  std::optional<std::string> reference_uri;
};

struct SurveySpec {
  std::string handle;
  Timestamp start;
  Timestamp end;
  std::vector<QuestionSpec> questions;
};

// Non-PII per-user course attributes.
struct RosterEntry {
  std::string handle;
  std::string user_type = "student";
  std::optional<double> final_grade;
  bool certified = false;
  std::string country;
};

struct CourseStructure {
  std::string course_id;
  std::vector<ResourceSpec> resources;
  std::vector<ProblemSpec> problems;
  std::vector<SurveySpec> surveys;
  std::vector<RosterEntry> roster;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// -- configuration -----------------------------------------------------------

struct IngestConfig {
  DurationMs duration_cap{1800 * 1000};
  // Raw resource type names -> closed-set names. Closed-set names map to
  // themselves implicitly.
  std::map<std::string, std::string> type_mapping;
  // Type assigned to resources that appear only in events.
  std::map<EventKind, std::string> orphan_resource_type = {
      {EventKind::page_view, "lecture"}, {EventKind::video_play, "video"},
      {EventKind::forum_post, "forums"}, {EventKind::forum_vote, "forums"},
      {EventKind::wiki_edit, "wiki"}};
  // File-name suffix -> adapter name; first match wins.
  std::vector<std::pair<std::string, std::string>> adapter_rules = {
      {".verbose.jsonl", "synthgen"}, {".jsonl", "canonical"}};
  std::string default_adapter = "canonical";

  static IngestConfig from_json(const nlohmann::json& j);
  static IngestConfig load(const std::filesystem::path& p);

  std::string adapter_for(const std::filesystem::path& p) const;
  // Maps a raw type to the closed set; throws ConfigError when unmapped.
  std::string map_type(const std::string& raw) const;
};

CourseStructure parse_structure(const nlohmann::json& j, const IngestConfig& config);
CourseStructure load_structure(const std::filesystem::path& p, const IngestConfig& config);
nlohmann::json structure_to_json(const CourseStructure& s);

// -- reference generation ------------------------------------------------------

inline constexpr std::array<std::string_view, 5> kCollaborationTypeNames = {
    "forum_question", "forum_reply", "forum_vote", "wiki_edit", "wiki_deletion"};

struct Dictionaries {
  std::vector<std::string> users;  // first-seen order: roster, then events
  std::map<std::string, std::size_t> user_index;

  std::vector<ResourceType> resource_types;
  std::vector<Resource> resources;
  std::map<std::string, Id> resource_ids;
  std::vector<Url> urls;
  std::map<std::string, Id> url_ids;
  std::set<std::pair<Id, Id>> resource_urls;

  std::vector<ProblemType> problem_types;
  std::vector<Problem> problems;
  std::map<std::string, Id> problem_ids;
  std::set<Id> problems_with_children;

  std::vector<CollaborationType> collaboration_types;

  std::vector<Survey> surveys;
  std::vector<Question> questions;
  std::map<std::string, Id> question_ids;
  std::vector<Answer> answers;
  std::map<std::string, Id> answer_ids;

  // Handles seen only in events, as "<kind>:<handle>".
  std::vector<std::string> orphans;
};

Dictionaries generate_references(const std::vector<SourcedEvent>& events,
                                 const CourseStructure& structure, const IngestConfig& config);

// -- table population ------------------------------------------------------

struct PopulateResult {
  CourseStore store;
  std::size_t events_emitted = 0;
  std::vector<Reject> rejects;
};

// Maps every event to its mode table. User keys come from the ledger, which
// must already hold this course.
PopulateResult populate_tables(const std::vector<SourcedEvent>& events, const Dictionaries& dicts,
                               const CourseStructure& structure, const IdentityLedger& ledger);

// Per user: duration(e_i) = min(t_{i+1} - t_i, cap); the user's last event
// gets 0.
CourseStore& compute_durations(CourseStore& store, DurationMs cap);

// -- whole pipeline ------------------------------------------------------

struct Source {
  std::shared_ptr<const SourceAdapter> adapter;
  std::filesystem::path path;
};

struct IngestReport {
  std::map<std::string, std::size_t> table_counts;
  std::size_t lines_read = 0;
  std::size_t rows_emitted = 0;  // events that produced their mode row
  std::size_t lines_rejected = 0;
  std::map<std::string, std::size_t> reject_reasons;
  std::vector<std::string> orphans;
  std::vector<std::string> adapters;
  double wall_seconds = 0.0;
  std::uintmax_t input_bytes = 0;
  std::uintmax_t output_bytes = 0;

  nlohmann::json to_json() const;
};

struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IngestResult {
  CourseStore store;
  IngestReport report;
  IdentityLedger ledger;
  std::vector<Reject> rejects;
};

// Parses sources (in parallel), merges by (timestamp, source order, line),
// then runs reference generation, population and durations. When `out` is
// set the store is written there and rejects go to "<out>.rejects.jsonl".
IngestResult ingest(const std::vector<Source>& sources, const CourseStructure& structure,
                    const IngestConfig& config, const SecretKey& key,
                    const std::optional<std::filesystem::path>& out = std::nullopt);

// Opens every source and merges them into one ordered stream.
std::vector<SourcedEvent> read_and_merge(const std::vector<Source>& sources,
                                         std::vector<Reject>& rejects, std::size_t& lines_read,
                                         std::uintmax_t& bytes_read);

void write_rejects(const std::vector<Reject>& rejects, const std::filesystem::path& p);

}  // namespace moocdb
