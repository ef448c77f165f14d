#include "moocdb/csv.hpp"

#include <ostream>

namespace moocdb::csv {

std::vector<Row> parse(std::string_view text) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  std::size_t line = 1;
  std::size_t i = 0;
  bool row_open = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    row_open = false;
  };

  while (i < text.size()) {
    char c = text[i];
    if (c == '"' && field.empty()) {
      row_open = true;
      std::size_t start_line = line;
      ++i;
      for (;;) {
        if (i >= text.size()) throw ParseError("unterminated quoted field", start_line);
        char q = text[i];
        if (q == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        if (q == '\n') ++line;
        field.push_back(q);
        ++i;
      }
      if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
        throw ParseError("garbage after closing quote", line);
      }
      continue;
    }
    if (c == ',') {
      row_open = true;
      end_field();
      ++i;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      ++i;
      ++line;
      end_row();
    } else {
      row_open = true;
      field.push_back(c);
      ++i;
    }
  }
  if (row_open || !field.empty()) end_row();
  return rows;
}

namespace {

bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

void append_field(std::string& out, std::string_view s) {
  if (!needs_quotes(s)) {
    out.append(s);
    return;
  }
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

}  // namespace

std::string format_row(std::span<const std::string> row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    append_field(out, row[i]);
  }
  // A lone empty field would otherwise serialize as a blank line.
  if (row.size() == 1 && row[0].empty()) out = "\"\"";
  out.push_back('\n');
  return out;
}

void write_row(std::ostream& out, std::span<const std::string> row) { out << format_row(row); }

}  // namespace moocdb::csv
