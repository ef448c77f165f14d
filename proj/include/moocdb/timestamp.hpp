#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace moocdb {

// UTC instant at millisecond precision, stored as epoch milliseconds.
struct Timestamp {
  std::int64_t millis = 0;

  static constexpr Timestamp from_seconds(std::int64_t s) { return {s * 1000}; }

  friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

// Bounds every event timestamp must fall within: [2008-01-01, 2100-01-01).
inline constexpr Timestamp kEarliestEvent{1199145600000LL};
inline constexpr Timestamp kLatestEvent{4102444800000LL};

inline bool in_event_range(Timestamp t) {
  return t >= kEarliestEvent && t < kLatestEvent;
}

// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]Z" (also a "+00:00" suffix or a space
// separator). Returns nullopt on anything else.
std::optional<Timestamp> parse_timestamp(std::string_view text);

// Always emits "YYYY-MM-DDTHH:MM:SS.fffZ".
std::string format_timestamp(Timestamp t);

}  // namespace moocdb
