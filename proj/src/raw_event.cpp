#include "moocdb/raw_event.hpp"

#include <array>
#include <fstream>

namespace moocdb {

namespace {

constexpr std::array<std::string_view, 8> kKindNames = {
    "page_view", "video_play", "problem_check", "problem_save",
    "forum_post", "forum_vote", "wiki_edit", "survey_answer"};

constexpr std::array<std::string_view, 8> kVerboseTypes = {
    "seq_goto",
    "play_video",
    "problem_check",
    "problem_save",
    "edx.forum.post.created",
    "edx.forum.post.voted",
    "edx.wiki.page.edited",
    "edx.survey.response.submitted"};

using json = nlohmann::json;

std::string string_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

}  // namespace

std::string_view event_kind_name(EventKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<EventKind> event_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

std::string_view verbose_event_type(EventKind k) { return kVerboseTypes[static_cast<std::size_t>(k)]; }

std::string to_canonical_line(const RawEvent& e) {
  nlohmann::ordered_json j;
  j["raw_user"] = e.raw_user;
  j["event_kind"] = event_kind_name(e.event_kind);
  j["uri"] = e.uri;
  j["url"] = e.url;
  j["timestamp"] = format_timestamp(e.timestamp);
  j["payload"] = e.payload;
  j["ip"] = e.ip;
  j["os"] = e.os;
  j["agent"] = e.agent;
  return j.dump();
}

std::variant<RawEvent, std::string> parse_canonical_line(std::string_view line) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::string("malformed_json");
  RawEvent e;
  e.raw_user = string_field(j, "raw_user");
  if (e.raw_user.empty()) return std::string("missing_user");
  auto kind = event_kind_from_name(string_field(j, "event_kind"));
  if (!kind) return std::string("unknown_event_kind");
  e.event_kind = *kind;
  auto ts = parse_timestamp(string_field(j, "timestamp"));
  if (!ts) return std::string("bad_timestamp");
  if (!in_event_range(*ts)) return std::string("timestamp_out_of_range");
  e.timestamp = *ts;
  e.uri = string_field(j, "uri");
  e.url = string_field(j, "url");
  if (auto p = j.find("payload"); p != j.end() && p->is_object()) e.payload = std::move(*p);
  e.ip = string_field(j, "ip");
  e.os = string_field(j, "os");
  e.agent = string_field(j, "agent");
  return e;
}

std::variant<RawEvent, std::string> parse_verbose_line(std::string_view line) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::string("malformed_json");
  RawEvent e;
  e.raw_user = string_field(j, "username");
  if (e.raw_user.empty()) return std::string("missing_user");
  std::string type = string_field(j, "event_type");
  std::optional<EventKind> kind;
  for (std::size_t i = 0; i < kVerboseTypes.size(); ++i) {
    if (kVerboseTypes[i] == type) kind = static_cast<EventKind>(i);
  }
  if (!kind) return std::string("unknown_event_kind");
  e.event_kind = *kind;
  auto ts = parse_timestamp(string_field(j, "time"));
  if (!ts) return std::string("bad_timestamp");
  if (!in_event_range(*ts)) return std::string("timestamp_out_of_range");
  e.timestamp = *ts;
  e.url = string_field(j, "page");
  e.ip = string_field(j, "ip");
  e.agent = string_field(j, "agent");
  if (auto ctx = j.find("context"); ctx != j.end() && ctx->is_object()) {
    if (auto mod = ctx->find("module"); mod != ctx->end() && mod->is_object()) {
      e.uri = string_field(*mod, "usage_key");
    }
    if (auto client = ctx->find("client"); client != ctx->end() && client->is_object()) {
      e.os = string_field(*client, "os");
    }
  }
  if (auto p = j.find("event"); p != j.end() && p->is_object()) e.payload = std::move(*p);
  return e;
}

JsonLinesReader::JsonLinesReader(std::filesystem::path path, Converter convert)
    : path_(std::move(path)), convert_(std::move(convert)) {
  auto in = std::make_unique<std::ifstream>(path_, std::ios::binary);
  if (!*in) throw AdapterError(path_.string(), 0, "cannot open source");
  in_ = std::move(in);
}

std::optional<EventReader::Item> JsonLinesReader::next() {
  std::string line;
  while (std::getline(*in_, line)) {
    ++line_no_;
    bytes_ += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto parsed = convert_(line);
    if (auto* ev = std::get_if<RawEvent>(&parsed)) return Item{std::move(*ev)};
    return Item{Reject{path_.string(), line_no_, std::get<std::string>(parsed)}};
  }
  if (in_->bad()) throw AdapterError(path_.string(), line_no_ + 1, "read error");
  return std::nullopt;
}

std::unique_ptr<EventReader> CanonicalJsonLinesAdapter::open(const std::filesystem::path& path) const {
  return std::make_unique<JsonLinesReader>(path, parse_canonical_line);
}

std::unique_ptr<EventReader> SynthgenVerboseAdapter::open(const std::filesystem::path& path) const {
  return std::make_unique<JsonLinesReader>(path, parse_verbose_line);
}

std::unique_ptr<SourceAdapter> make_adapter(std::string_view name) {
  if (name == "canonical") return std::make_unique<CanonicalJsonLinesAdapter>();
  if (name == "synthgen") return std::make_unique<SynthgenVerboseAdapter>();
  return nullptr;
}

}  // namespace moocdb
