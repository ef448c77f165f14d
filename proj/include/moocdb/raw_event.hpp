#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "moocdb/timestamp.hpp"

namespace moocdb {

enum class EventKind : std::uint8_t {
  page_view,
  video_play,
  problem_check,
  problem_save,
  forum_post,
  forum_vote,
  wiki_edit,
  survey_answer,
};

std::string_view event_kind_name(EventKind k);
std::optional<EventKind> event_kind_from_name(std::string_view name);

// One line of canonical raw input, before normalization.
struct RawEvent {
  std::string raw_user;
  EventKind event_kind = EventKind::page_view;
  std::string uri;
  std::string url;
  Timestamp timestamp;
  nlohmann::json payload = nlohmann::json::object();
  std::string ip;
  std::string os;
  std::string agent;
};

// Canonical JSON-lines codec.
std::string to_canonical_line(const RawEvent& e);

// A line the adapter could read but not turn into a RawEvent.
struct Reject {
  std::string source;
  std::size_t line_no = 0;
  std::string reason;
};

// Parses one canonical line; returns the reason code on failure.
std::variant<RawEvent, std::string> parse_canonical_line(std::string_view line);

// Raised by an adapter that cannot continue (unreadable input, I/O error).
struct AdapterError : std::runtime_error {
  AdapterError(const std::string& source, std::size_t line_no, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line_no) + ": " + what),
        source(source),
        line_no(line_no) {}
  std::string source;
  std::size_t line_no;
};

struct SourcedEvent {
  RawEvent event;
  std::size_t source_index = 0;
  std::size_t line_no = 0;
};

// Iterator over one opened source. next() yields an event, a reject, or
// nothing at end of input.
class EventReader {
 public:
  virtual ~EventReader() = default;
  using Item = std::variant<RawEvent, Reject>;
  virtual std::optional<Item> next() = 0;
  virtual std::size_t bytes_read() const = 0;
};

// Isolates a concrete raw format from the pipeline.
class SourceAdapter {
 public:
  virtual ~SourceAdapter() = default;
  virtual std::string describe() const = 0;
  virtual std::unique_ptr<EventReader> open(const std::filesystem::path& path) const = 0;
};

// Line-oriented reader helper: feeds each non-empty line to a converter.
class JsonLinesReader : public EventReader {
 public:
  using Converter = std::function<std::variant<RawEvent, std::string>(std::string_view)>;
  JsonLinesReader(std::filesystem::path path, Converter convert);

  std::optional<Item> next() override;
  std::size_t bytes_read() const override { return bytes_; }

 private:
  std::filesystem::path path_;
  std::unique_ptr<std::istream> in_;
  Converter convert_;
  std::size_t line_no_ = 0;
  std::size_t bytes_ = 0;
};

class CanonicalJsonLinesAdapter : public SourceAdapter {
 public:
  std::string describe() const override { return "canonical-jsonl 1"; }
  std::unique_ptr<EventReader> open(const std::filesystem::path& path) const override;
};

// Reads the verbose tracking-log dialect emitted by the synthetic generator.
class SynthgenVerboseAdapter : public SourceAdapter {
 public:
  std::string describe() const override { return "synthgen-verbose 1"; }
  std::unique_ptr<EventReader> open(const std::filesystem::path& path) const override;
};

std::variant<RawEvent, std::string> parse_verbose_line(std::string_view line);
// event_type strings used by the verbose dialect.
std::string_view verbose_event_type(EventKind k);

// Name -> adapter. Ships "canonical" and "synthgen".
std::unique_ptr<SourceAdapter> make_adapter(std::string_view name);

}  // namespace moocdb
