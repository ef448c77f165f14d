#pragma once

#include <iosfwd>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace moocdb::csv {

using Row = std::vector<std::string>;

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line(line) {}
  std::size_t line;
};

// RFC-4180: comma separated, fields optionally wrapped in double quotes,
// embedded quotes doubled. Accepts both CRLF and LF record terminators.
std::vector<Row> parse(std::string_view text);

void write_row(std::ostream& out, std::span<const std::string> row);
std::string format_row(std::span<const std::string> row);
inline std::string format_row(std::initializer_list<std::string> row) {
  return format_row(std::span<const std::string>(row.begin(), row.size()));
}

}  // namespace moocdb::csv
