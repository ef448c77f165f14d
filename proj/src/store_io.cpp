#include "moocdb/store_io.hpp"

#include <sqlite3.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "moocdb/hash.hpp"

namespace moocdb::io {

namespace fs = std::filesystem;

namespace {

// -- value codecs ------------------------------------------------------------

struct DecodeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string encode_value(std::int64_t v) { return std::to_string(v); }
std::string encode_value(bool v) { return v ? "1" : "0"; }
std::string encode_value(const std::string& v) { return v; }
std::string encode_value(Timestamp t) { return format_timestamp(t); }

std::string encode_value(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string encode_value(DurationMs d) {
  std::string out = std::to_string(d.ms / 1000);
  if (std::int64_t frac = d.ms % 1000; frac != 0) {
    char buf[8];
    std::snprintf(buf, sizeof buf, ".%03lld", static_cast<long long>(frac));
    std::string f = buf;
    while (f.back() == '0') f.pop_back();
    out += f;
  }
  return out;
}

template <class T>
std::string encode_value(const std::optional<T>& v) {
  return v ? encode_value(*v) : std::string{};
}

void decode_value(std::string_view s, std::int64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DecodeError("expected integer, got '" + std::string(s) + "'");
  }
}

void decode_value(std::string_view s, bool& out) {
  if (s == "1" || s == "true") out = true;
  else if (s == "0" || s == "false") out = false;
  else throw DecodeError("expected boolean, got '" + std::string(s) + "'");
}

void decode_value(std::string_view s, std::string& out) { out = std::string(s); }

void decode_value(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DecodeError("expected number, got '" + std::string(s) + "'");
  }
}

void decode_value(std::string_view s, Timestamp& out) {
  auto t = parse_timestamp(s);
  if (!t) throw DecodeError("expected ISO-8601 timestamp, got '" + std::string(s) + "'");
  out = *t;
}

void decode_value(std::string_view s, DurationMs& out) {
  auto dot = s.find('.');
  std::int64_t whole = 0;
  decode_value(s.substr(0, dot), whole);
  std::int64_t frac = 0;
  if (dot != std::string_view::npos) {
    std::string_view f = s.substr(dot + 1);
    if (f.empty() || f.size() > 3) throw DecodeError("bad duration '" + std::string(s) + "'");
    decode_value(f, frac);
    for (std::size_t i = f.size(); i < 3; ++i) frac *= 10;
  }
  out.ms = whole * 1000 + frac;
}

template <class T>
void decode_value(std::string_view s, std::optional<T>& out) {
  if (s.empty()) {
    out.reset();
    return;
  }
  T v{};
  decode_value(s, v);
  out = std::move(v);
}

// -- column descriptors ------------------------------------------------------

enum class Kind { integer, real, text };

template <class T> struct kind_of { static constexpr Kind value = Kind::text; };
template <> struct kind_of<std::int64_t> { static constexpr Kind value = Kind::integer; };
template <> struct kind_of<bool> { static constexpr Kind value = Kind::integer; };
template <> struct kind_of<double> { static constexpr Kind value = Kind::real; };
template <class T> struct kind_of<std::optional<T>> : kind_of<T> {};

template <class T> struct is_optional : std::false_type {};
template <class T> struct is_optional<std::optional<T>> : std::true_type {};

template <class R>
struct Column {
  std::string_view name;
  Kind kind;
  bool nullable;
  std::string (*encode)(const R&);
  void (*decode)(R&, std::string_view);
};

template <class M> struct member_of;
template <class R, class V> struct member_of<V R::*> {
  using row = R;
  using value = V;
};

template <auto M>
constexpr auto col(std::string_view name) {
  using R = typename member_of<decltype(M)>::row;
  using V = typename member_of<decltype(M)>::value;
  return Column<R>{name, kind_of<V>::value, is_optional<V>::value,
                   [](const R& r) { return encode_value(r.*M); },
                   [](R& r, std::string_view s) { decode_value(s, r.*M); }};
}

template <class R> const std::vector<Column<R>>& columns_of();

#define MOOCDB_COLUMNS(Type, ...)                                   \
  template <> const std::vector<Column<Type>>& columns_of<Type>() { \
    static const std::vector<Column<Type>> cols{__VA_ARGS__};      \
    return cols;                                                    \
  }

MOOCDB_COLUMNS(ResourceType, col<&ResourceType::resource_type_id>("resource_type_id"),
               col<&ResourceType::resource_type_name>("resource_type_name"))
MOOCDB_COLUMNS(Resource, col<&Resource::resource_id>("resource_id"),
               col<&Resource::resource_name>("resource_name"),
               col<&Resource::resource_uri>("resource_uri"),
               col<&Resource::resource_type_id>("resource_type_id"),
               col<&Resource::resource_parent>("resource_parent"),
               col<&Resource::resource_child_number>("resource_child_number"))
MOOCDB_COLUMNS(Url, col<&Url::url_id>("url_id"), col<&Url::url>("url"))
MOOCDB_COLUMNS(ResourceUrlLink, col<&ResourceUrlLink::resource_id>("resource_id"),
               col<&ResourceUrlLink::url_id>("url_id"))
MOOCDB_COLUMNS(ObservedEvent, col<&ObservedEvent::observed_event_id>("observed_event_id"),
               col<&ObservedEvent::user_id_observed>("user_id_observed"),
               col<&ObservedEvent::resource_id>("resource_id"),
               col<&ObservedEvent::url_id>("url_id"),
               col<&ObservedEvent::observed_event_timestamp>("observed_event_timestamp"),
               col<&ObservedEvent::observed_event_duration>("observed_event_duration"),
               col<&ObservedEvent::observed_event_ip>("observed_event_ip"),
               col<&ObservedEvent::observed_event_os>("observed_event_os"),
               col<&ObservedEvent::observed_event_agent>("observed_event_agent"))
MOOCDB_COLUMNS(ProblemType, col<&ProblemType::problem_type_id>("problem_type_id"),
               col<&ProblemType::problem_type_name>("problem_type_name"))
MOOCDB_COLUMNS(Problem, col<&Problem::problem_id>("problem_id"),
               col<&Problem::problem_parent_id>("problem_parent_id"),
               col<&Problem::order_id>("order_id"), col<&Problem::problem_name>("problem_name"),
               col<&Problem::problem_type_id>("problem_type_id"),
               col<&Problem::problem_release_timestamp>("problem_release_timestamp"),
               col<&Problem::problem_soft_deadline_timestamp>("problem_soft_deadline_timestamp"),
               col<&Problem::problem_hard_deadline_timestamp>("problem_hard_deadline_timestamp"),
               col<&Problem::problem_max_submission>("problem_max_submission"))
MOOCDB_COLUMNS(Submission, col<&Submission::submission_id>("submission_id"),
               col<&Submission::user_id>("user_id"), col<&Submission::problem_id>("problem_id"),
               col<&Submission::submission_timestamp>("submission_timestamp"),
               col<&Submission::submission_answer>("submission_answer"),
               col<&Submission::submission_attempt_number>("submission_attempt_number"),
               col<&Submission::submission_ip>("submission_ip"),
               col<&Submission::submission_os>("submission_os"),
               col<&Submission::submission_agent>("submission_agent"),
               col<&Submission::is_submitted>("is_submitted"))
MOOCDB_COLUMNS(Assessment, col<&Assessment::assessment_id>("assessment_id"),
               col<&Assessment::submission_id>("submission_id"),
               col<&Assessment::assessment_grader_id>("assessment_grader_id"),
               col<&Assessment::assessment_grade>("assessment_grade"),
               col<&Assessment::assessment_feedback>("assessment_feedback"),
               col<&Assessment::assessment_timestamp>("assessment_timestamp"))
MOOCDB_COLUMNS(CollaborationType,
               col<&CollaborationType::collaboration_type_id>("collaboration_type_id"),
               col<&CollaborationType::collaboration_type_name>("collaboration_type_name"))
MOOCDB_COLUMNS(Collaboration, col<&Collaboration::collaboration_id>("collaboration_id"),
               col<&Collaboration::user_id>("user_id"),
               col<&Collaboration::collaboration_type_id>("collaboration_type_id"),
               col<&Collaboration::collaboration_parent_id>("collaboration_parent_id"),
               col<&Collaboration::collaboration_timestamp>("collaboration_timestamp"),
               col<&Collaboration::collaboration_content>("collaboration_content"),
               col<&Collaboration::collaboration_ip>("collaboration_ip"),
               col<&Collaboration::collaboration_os>("collaboration_os"),
               col<&Collaboration::collaboration_agent>("collaboration_agent"))
MOOCDB_COLUMNS(Feedback, col<&Feedback::feedback_id>("feedback_id"),
               col<&Feedback::user_id>("user_id"), col<&Feedback::question_id>("question_id"),
               col<&Feedback::answer_id>("answer_id"),
               col<&Feedback::feedback_timestamp>("feedback_timestamp"))
MOOCDB_COLUMNS(Question, col<&Question::question_id>("question_id"),
               col<&Question::question_content>("question_content"),
               col<&Question::question_type>("question_type"),
               col<&Question::question_reference>("question_reference"),
               col<&Question::survey_id>("survey_id"))
MOOCDB_COLUMNS(Answer, col<&Answer::answer_id>("answer_id"),
               col<&Answer::answer_content>("answer_content"))
MOOCDB_COLUMNS(Survey, col<&Survey::survey_id>("survey_id"),
               col<&Survey::survey_start_timestamp>("survey_start_timestamp"),
               col<&Survey::survey_end_timestamp>("survey_end_timestamp"))
MOOCDB_COLUMNS(CourseUser, col<&CourseUser::course_user_id>("course_user_id"),
               col<&CourseUser::final_grade>("final_grade"),
               col<&CourseUser::user_type>("user_type"), col<&CourseUser::country>("country"),
               col<&CourseUser::certified>("certified"),
               col<&CourseUser::user_id_observed>("user_id_observed"),
               col<&CourseUser::user_id_submissions>("user_id_submissions"),
               col<&CourseUser::user_id_collaborations>("user_id_collaborations"),
               col<&CourseUser::user_id_feedback>("user_id_feedback"))
MOOCDB_COLUMNS(GlobalUser, col<&GlobalUser::global_user_id>("global_user_id"),
               col<&GlobalUser::course_id>("course_id"),
               col<&GlobalUser::course_user_id>("course_user_id"))

#undef MOOCDB_COLUMNS

// Calls f(rows, columns) with the typed vector backing table t.
template <class Store, class F>
decltype(auto) with_table(Store& s, Table t, F&& f) {
  switch (t) {
    case Table::resource_types: return f(s.resource_types, columns_of<ResourceType>());
    case Table::resources: return f(s.resources, columns_of<Resource>());
    case Table::urls: return f(s.urls, columns_of<Url>());
    case Table::resource_urls: return f(s.resource_urls, columns_of<ResourceUrlLink>());
    case Table::observed_events: return f(s.observed_events, columns_of<ObservedEvent>());
    case Table::problem_types: return f(s.problem_types, columns_of<ProblemType>());
    case Table::problems: return f(s.problems, columns_of<Problem>());
    case Table::submissions: return f(s.submissions, columns_of<Submission>());
    case Table::assessments: return f(s.assessments, columns_of<Assessment>());
    case Table::collaboration_types:
      return f(s.collaboration_types, columns_of<CollaborationType>());
    case Table::collaborations: return f(s.collaborations, columns_of<Collaboration>());
    case Table::feedbacks: return f(s.feedbacks, columns_of<Feedback>());
    case Table::questions: return f(s.questions, columns_of<Question>());
    case Table::answers: return f(s.answers, columns_of<Answer>());
    case Table::surveys: return f(s.surveys, columns_of<Survey>());
    case Table::course_user: return f(s.course_users, columns_of<CourseUser>());
    case Table::global_user: return f(s.global_users, columns_of<GlobalUser>());
  }
  throw std::logic_error("unknown table");
}

struct ColumnInfo {
  std::string name;
  Kind kind;
  bool nullable;
};

std::vector<ColumnInfo> column_info(Table t) {
  CourseStore dummy;
  return with_table(dummy, t, [](auto&, const auto& cols) {
    std::vector<ColumnInfo> out;
    for (const auto& c : cols) out.push_back({std::string(c.name), c.kind, c.nullable});
    return out;
  });
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StoreIoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw StoreIoError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StoreIoError("short write to " + p.string());
}

}  // namespace

std::vector<std::string> column_names(Table t) {
  std::vector<std::string> out;
  for (auto& c : column_info(t)) out.push_back(c.name);
  return out;
}

std::vector<csv::Row> encode_table(const CourseStore& store, Table t) {
  return with_table(store, t, [](const auto& rows, const auto& cols) {
    std::vector<csv::Row> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
      csv::Row row;
      row.reserve(cols.size());
      for (const auto& c : cols) row.push_back(c.encode(r));
      out.push_back(std::move(row));
    }
    return out;
  });
}

void decode_table(CourseStore& store, Table t, const std::vector<csv::Row>& rows) {
  with_table(store, t, [&](auto& out, const auto& cols) {
    using R = typename std::decay_t<decltype(out)>::value_type;
    out.clear();
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& row = rows[i];
      if (row.size() != cols.size()) {
        throw StoreIoError(std::string(table_name(t)) + ": row " + std::to_string(i + 1) +
                           " has " + std::to_string(row.size()) + " fields, expected " +
                           std::to_string(cols.size()));
      }
      R r{};
      for (std::size_t c = 0; c < cols.size(); ++c) {
        try {
          cols[c].decode(r, row[c]);
        } catch (const DecodeError& e) {
          throw StoreIoError(std::string(table_name(t)) + "." + std::string(cols[c].name) +
                             " row " + std::to_string(i + 1) + ": " + e.what());
        }
      }
      out.push_back(std::move(r));
    }
  });
}

std::string table_csv(const CourseStore& store, Table t) {
  std::string out = csv::format_row(column_names(t));
  for (const auto& row : encode_table(store, t)) out += csv::format_row(row);
  return out;
}

void save_csv_dir(const CourseStore& store, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StoreIoError("cannot create " + dir.string() + ": " + ec.message());
  for (Table t : kAllTables) {
    fs::path file = dir / (std::string(table_name(t)) + ".csv");
    if (store.present.contains(t)) {
      write_file(file, table_csv(store, t));
    } else {
      fs::remove(file, ec);
    }
  }
  nlohmann::ordered_json meta;
  meta["course_id"] = store.course_id;
  meta["schema_version"] = store.schema_version;
  meta["tables"] = store.present.names();
  write_file(dir / "store.json", meta.dump(2) + "\n");
}

CourseStore load_csv_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw StoreIoError("not a store directory: " + dir.string());
  CourseStore store;
  store.present = TableSet{};
  for (const char* meta_name : {"store.json", "manifest.json"}) {
    fs::path meta_path = dir / meta_name;
    if (!fs::exists(meta_path)) continue;
    try {
      auto meta = nlohmann::json::parse(read_file(meta_path));
      store.course_id = meta.value("course_id", "");
      store.schema_version = meta.value("schema_version", std::string(kSchemaVersion));
    } catch (const nlohmann::json::exception& e) {
      throw StoreIoError(meta_path.string() + ": " + e.what());
    }
    break;
  }
  for (Table t : kAllTables) {
    fs::path file = dir / (std::string(table_name(t)) + ".csv");
    if (!fs::exists(file)) continue;
    std::vector<csv::Row> rows;
    try {
      rows = csv::parse(read_file(file));
    } catch (const csv::ParseError& e) {
      throw StoreIoError(file.string() + ": " + e.what());
    }
    if (rows.empty() || rows.front() != column_names(t)) {
      throw StoreIoError(file.string() + ": header does not match table schema");
    }
    rows.erase(rows.begin());
    if (column_names(t).size() > 1) {
      std::erase_if(rows, [](const csv::Row& r) { return r.size() == 1 && r[0].empty(); });
    }
    decode_table(store, t, rows);
    store.present.insert(t);
  }
  return store;
}

// -- SQLite --------------------------------------------------------------------

namespace {

struct DbCloser {
  void operator()(sqlite3* db) const { sqlite3_close(db); }
};
struct StmtCloser {
  void operator()(sqlite3_stmt* s) const { sqlite3_finalize(s); }
};
using DbPtr = std::unique_ptr<sqlite3, DbCloser>;
using StmtPtr = std::unique_ptr<sqlite3_stmt, StmtCloser>;

void exec(sqlite3* db, const std::string& sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw StoreIoError("sqlite: " + msg + " in: " + sql);
  }
}

StmtPtr prepare(sqlite3* db, const std::string& sql) {
  sqlite3_stmt* stmt = nullptr;
  if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
    throw StoreIoError(std::string("sqlite: ") + sqlite3_errmsg(db) + " in: " + sql);
  }
  return StmtPtr(stmt);
}

DbPtr open_db(const fs::path& file, int flags) {
  sqlite3* raw = nullptr;
  int rc = sqlite3_open_v2(file.c_str(), &raw, flags, nullptr);
  DbPtr db(raw);
  if (rc != SQLITE_OK) {
    throw StoreIoError("cannot open sqlite store " + file.string() + ": " +
                       (raw ? sqlite3_errmsg(raw) : "out of memory"));
  }
  return db;
}

const char* sql_type(Kind k) {
  switch (k) {
    case Kind::integer: return "INTEGER";
    case Kind::real: return "REAL";
    case Kind::text: return "TEXT";
  }
  return "TEXT";
}

}  // namespace

void save_sqlite(const CourseStore& store, const fs::path& file) {
  std::error_code ec;
  fs::remove(file, ec);
  if (file.has_parent_path()) fs::create_directories(file.parent_path(), ec);
  DbPtr db = open_db(file, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
  exec(db.get(), "PRAGMA journal_mode=OFF; PRAGMA synchronous=OFF;");
  exec(db.get(), "BEGIN");
  exec(db.get(), "CREATE TABLE store_meta (key TEXT PRIMARY KEY, value TEXT NOT NULL)");
  {
    auto stmt = prepare(db.get(), "INSERT INTO store_meta VALUES (?, ?)");
    for (auto [k, v] : {std::pair<std::string, std::string>{"course_id", store.course_id},
                        {"schema_version", store.schema_version}}) {
      sqlite3_bind_text(stmt.get(), 1, k.c_str(), -1, SQLITE_TRANSIENT);
      sqlite3_bind_text(stmt.get(), 2, v.c_str(), -1, SQLITE_TRANSIENT);
      if (sqlite3_step(stmt.get()) != SQLITE_DONE) throw StoreIoError("sqlite: insert failed");
      sqlite3_reset(stmt.get());
    }
  }
  for (Table t : store.present.tables()) {
    auto info = column_info(t);
    std::string create = "CREATE TABLE " + std::string(table_name(t)) + " (";
    std::string insert = "INSERT INTO " + std::string(table_name(t)) + " VALUES (";
    for (std::size_t i = 0; i < info.size(); ++i) {
      if (i) {
        create += ", ";
        insert += ", ";
      }
      create += info[i].name + " " + sql_type(info[i].kind);
      if (!info[i].nullable) create += " NOT NULL";
      insert += "?";
    }
    exec(db.get(), create + ")");
    auto stmt = prepare(db.get(), insert + ")");
    for (const auto& row : encode_table(store, t)) {
      for (std::size_t i = 0; i < info.size(); ++i) {
        int idx = static_cast<int>(i + 1);
        const std::string& v = row[i];
        if (info[i].nullable && v.empty()) {
          sqlite3_bind_null(stmt.get(), idx);
        } else if (info[i].kind == Kind::integer) {
          sqlite3_bind_int64(stmt.get(), idx, std::stoll(v));
        } else if (info[i].kind == Kind::real) {
          sqlite3_bind_double(stmt.get(), idx, std::stod(v));
        } else {
          sqlite3_bind_text(stmt.get(), idx, v.data(), static_cast<int>(v.size()),
                            SQLITE_TRANSIENT);
        }
      }
      if (sqlite3_step(stmt.get()) != SQLITE_DONE) {
        throw StoreIoError(std::string("sqlite: ") + sqlite3_errmsg(db.get()));
      }
      sqlite3_reset(stmt.get());
    }
  }
  exec(db.get(), "COMMIT");
}

CourseStore load_sqlite(const fs::path& file) {
  if (!fs::is_regular_file(file)) throw StoreIoError("no such store file: " + file.string());
  DbPtr db = open_db(file, SQLITE_OPEN_READONLY);
  CourseStore store;
  store.present = TableSet{};
  {
    auto stmt = prepare(db.get(), "SELECT key, value FROM store_meta");
    while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
      std::string k = reinterpret_cast<const char*>(sqlite3_column_text(stmt.get(), 0));
      std::string v = reinterpret_cast<const char*>(sqlite3_column_text(stmt.get(), 1));
      if (k == "course_id") store.course_id = v;
      if (k == "schema_version") store.schema_version = v;
    }
  }
  std::vector<std::string> existing;
  {
    auto stmt = prepare(db.get(), "SELECT name FROM sqlite_master WHERE type='table'");
    while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
      existing.emplace_back(reinterpret_cast<const char*>(sqlite3_column_text(stmt.get(), 0)));
    }
  }
  for (const auto& name : existing) {
    auto t = table_from_name(name);
    if (!t) continue;
    auto info = column_info(*t);
    std::string select = "SELECT ";
    for (std::size_t i = 0; i < info.size(); ++i) select += (i ? ", " : "") + info[i].name;
    // rowid order preserves insertion order.
    auto stmt = prepare(db.get(), select + " FROM " + name + " ORDER BY rowid");
    std::vector<csv::Row> rows;
    while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
      csv::Row row;
      for (std::size_t i = 0; i < info.size(); ++i) {
        int idx = static_cast<int>(i);
        int type = sqlite3_column_type(stmt.get(), idx);
        if (type == SQLITE_NULL) {
          row.emplace_back();
        } else if (info[i].kind == Kind::real) {
          row.push_back(encode_value(sqlite3_column_double(stmt.get(), idx)));
        } else if (info[i].kind == Kind::integer) {
          row.push_back(encode_value(static_cast<std::int64_t>(sqlite3_column_int64(stmt.get(), idx))));
        } else {
          auto* text = reinterpret_cast<const char*>(sqlite3_column_text(stmt.get(), idx));
          row.emplace_back(text, static_cast<std::size_t>(sqlite3_column_bytes(stmt.get(), idx)));
        }
      }
      rows.push_back(std::move(row));
    }
    decode_table(store, *t, rows);
    store.present.insert(*t);
  }
  return store;
}

bool is_sqlite_path(const fs::path& p) {
  auto ext = p.extension().string();
  return ext == ".db" || ext == ".sqlite" || ext == ".sqlite3";
}

void save_store(const CourseStore& store, const fs::path& p) {
  if (is_sqlite_path(p)) save_sqlite(store, p);
  else save_csv_dir(store, p);
}

CourseStore load_store(const fs::path& p) {
  if (fs::is_directory(p)) return load_csv_dir(p);
  if (fs::is_regular_file(p)) return load_sqlite(p);
  throw StoreIoError("no store at " + p.string());
}

std::string store_checksum(const CourseStore& store) {
  Sha256 h;
  h.update(store.course_id);
  h.update("\n");
  for (Table t : store.present.tables()) {
    h.update(table_name(t));
    h.update("\n");
    h.update(table_csv(store, t));
  }
  return to_hex(h.finish());
}

std::uintmax_t disk_bytes(const fs::path& p) {
  if (fs::is_regular_file(p)) return fs::file_size(p);
  std::uintmax_t total = 0;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) total += e.file_size();
    }
  }
  return total;
}

}  // namespace moocdb::io
