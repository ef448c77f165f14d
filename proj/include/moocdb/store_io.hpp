#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "moocdb/csv.hpp"
#include "moocdb/schema.hpp"

namespace moocdb::io {

// Unreadable / malformed store files. Distinct from validation failures,
// which are reported as data rather than thrown.
struct StoreIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> column_names(Table t);

std::vector<csv::Row> encode_table(const CourseStore& store, Table t);
void decode_table(CourseStore& store, Table t, const std::vector<csv::Row>& rows);

// Header plus one line per row, RFC-4180 quoting.
std::string table_csv(const CourseStore& store, Table t);

// Directory layout: one <table>.csv per present table plus store.json
// carrying course_id and schema_version.
void save_csv_dir(const CourseStore& store, const std::filesystem::path& dir);
CourseStore load_csv_dir(const std::filesystem::path& dir);

// Single SQLite file, one relation per table with the same column names.
void save_sqlite(const CourseStore& store, const std::filesystem::path& file);
CourseStore load_sqlite(const std::filesystem::path& file);

// Files ending in .db / .sqlite / .sqlite3 use SQLite, anything else is a
// CSV directory. Loading sniffs the path instead of the extension.
bool is_sqlite_path(const std::filesystem::path& p);
void save_store(const CourseStore& store, const std::filesystem::path& p);
CourseStore load_store(const std::filesystem::path& p);

// SHA-256 over the canonical CSV rendering of every present table.
std::string store_checksum(const CourseStore& store);

// Total bytes on disk under a path (file or directory tree).
std::uintmax_t disk_bytes(const std::filesystem::path& p);

}  // namespace moocdb::io
