#include "moocdb/partition.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "moocdb/hash.hpp"
#include "moocdb/identity.hpp"
#include "moocdb/store_io.hpp"

namespace moocdb {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view linkage_name(Linkage l) {
  switch (l) {
    case Linkage::multi_course: return "multi_course";
    case Linkage::single_course: return "single_course";
    case Linkage::table_level: return "table_level";
  }
  return "?";
}

std::optional<Linkage> linkage_from_name(std::string_view name) {
  for (Linkage l : {Linkage::multi_course, Linkage::single_course, Linkage::table_level}) {
    if (linkage_name(l) == name) return l;
  }
  return std::nullopt;
}

std::string AccessLevel::name() const {
  std::string n(linkage_name(linkage));
  if (collaboration_included) n += "+collaboration";
  return n;
}

std::optional<AccessLevel> AccessLevel::parse(std::string_view name) {
  AccessLevel level;
  constexpr std::string_view suffix = "+collaboration";
  if (name.size() > suffix.size() && name.ends_with(suffix)) {
    level.collaboration_included = true;
    name.remove_suffix(suffix.size());
  }
  auto l = linkage_from_name(name);
  if (!l) return std::nullopt;
  level.linkage = *l;
  return level;
}

TableSet tables_for(AccessLevel level) {
  TableSet s{Table::observed_events, Table::resources,   Table::urls,
             Table::resource_urls,   Table::resource_types, Table::problems,
             Table::problem_types,   Table::submissions, Table::assessments,
             Table::feedbacks,       Table::questions,   Table::answers,
             Table::surveys};
  if (level.collaboration_included) {
    s.insert(Table::collaborations);
    s.insert(Table::collaboration_types);
  }
  if (level.linkage != Linkage::table_level) s.insert(Table::course_user);
  if (level.linkage == Linkage::multi_course) s.insert(Table::global_user);
  return s;
}

std::string course_dir_name(const std::string& course_id) {
  std::string out;
  for (unsigned char c : course_id) {
    bool keep = std::isalnum(c) || c == '-' || c == '_' || c == '.';
    out += keep ? static_cast<char>(c) : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

// -- manifest --------------------------------------------------------------

namespace {

// Which id namespace each exported user-key column draws from.
const std::vector<std::pair<std::string, std::string>>& user_key_columns() {
  static const std::vector<std::pair<std::string, std::string>> cols = {
      {"observed_events.user_id_observed", "observed"},
      {"submissions.user_id", "submissions"},
      {"assessments.assessment_grader_id", "submissions (0 = automated grader)"},
      {"collaborations.user_id", "collaborations"},
      {"feedbacks.user_id", "feedback"},
      {"course_user.course_user_id", "course"},
      {"course_user.user_id_observed", "observed"},
      {"course_user.user_id_submissions", "submissions"},
      {"course_user.user_id_collaborations", "collaborations"},
      {"course_user.user_id_feedback", "feedback"},
      {"global_user.global_user_id", "global"},
      {"global_user.course_user_id", "course"},
  };
  return cols;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw io::StoreIoError("cannot write " + p.string());
  }
}

}  // namespace

json PartitionManifest::to_json() const {
  nlohmann::ordered_json j;
  j["level"] = level.name();
  j["linkage"] = linkage_name(level.linkage);
  j["collaboration_included"] = level.collaboration_included;
  j["tables"] = included.names();
  j["excluded_tables"] = excluded.names();
  j["courses"] = courses;
  j["id_namespaces"] = namespaces;
  j["checksums"] = file_checksums;
  j["export_checksum"] = export_checksum;
  return json::parse(j.dump());
}

PartitionManifest PartitionManifest::from_json(const json& j) {
  PartitionManifest m;
  try {
    auto level = AccessLevel::parse(j.at("level").get<std::string>());
    if (!level) throw io::StoreIoError("manifest: unknown access level");
    m.level = *level;
    for (const auto& n : j.at("tables")) {
      auto t = table_from_name(n.get<std::string>());
      if (!t) throw io::StoreIoError("manifest: unknown table " + n.get<std::string>());
      m.included.insert(*t);
    }
    for (const auto& n : j.value("excluded_tables", json::array())) {
      if (auto t = table_from_name(n.get<std::string>())) m.excluded.insert(*t);
    }
    m.courses = j.at("courses").get<std::vector<std::string>>();
    m.namespaces = j.value("id_namespaces", std::map<std::string, std::string>{});
    m.file_checksums = j.value("checksums", std::map<std::string, std::string>{});
    m.export_checksum = j.value("export_checksum", "");
  } catch (const json::exception& e) {
    throw io::StoreIoError(std::string("manifest: ") + e.what());
  }
  return m;
}

PartitionManifest load_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw io::StoreIoError("no manifest.json in " + dir.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw io::StoreIoError("manifest.json is not valid JSON");
  return PartitionManifest::from_json(j);
}

// -- export ------------------------------------------------------------------

PartitionManifest export_partition(const std::vector<CourseStore>& stores, AccessLevel level,
                                   const fs::path& out, const std::vector<std::string>& requested) {
  TableSet allowed = tables_for(level);
  TableSet chosen = allowed;
  if (!requested.empty()) {
    chosen = TableSet{};
    for (const auto& name : requested) {
      if (name == kPiiTableName) {
        throw AccessError("user PII is never exported at any access level");
      }
      auto t = table_from_name(name);
      if (!t) throw AccessError("unknown table '" + name + "'");
      if (!allowed.contains(*t)) {
        throw AccessError("table '" + name + "' is not available at level " + level.name());
      }
      chosen.insert(*t);
    }
  }

  PartitionManifest m;
  m.level = level;
  m.included = chosen;
  for (Table t : kAllTables) {
    if (!chosen.contains(t)) m.excluded.insert(t);
  }
  std::set<std::string> seen;
  for (const auto& s : stores) {
    std::string dir = course_dir_name(s.course_id);
    if (!seen.insert(dir).second) {
      throw AccessError("two input stores map to course directory '" + dir + "'");
    }
    m.courses.push_back(dir);
    for (Table t : chosen.tables()) {
      if (!s.present.contains(t)) {
        throw CapabilityError(t, "export_partition of course '" + s.course_id + "'");
      }
    }
  }
  for (const auto& [column, space] : user_key_columns()) {
    auto t = table_from_name(column.substr(0, column.find('.')));
    if (t && chosen.contains(*t)) m.namespaces[column] = space;
  }

  std::error_code ec;
  if (fs::exists(out)) {
    bool empty = fs::is_directory(out) && fs::directory_iterator(out) == fs::directory_iterator();
    if (!empty && !fs::exists(out / "manifest.json")) {
      throw io::StoreIoError(out.string() + " exists and is not a partition; refusing to overwrite");
    }
    fs::remove_all(out, ec);
  }
  fs::create_directories(out, ec);
  if (ec) throw io::StoreIoError("cannot create " + out.string() + ": " + ec.message());

  auto emit = [&](const std::string& rel, const std::string& bytes) {
    write_bytes(out / rel, bytes);
    m.file_checksums[rel] = sha256_hex(bytes);
  };

  TableSet per_course = chosen;
  per_course.erase(Table::global_user);
  for (std::size_t i = 0; i < stores.size(); ++i) {
    const CourseStore& s = stores[i];
    fs::create_directories(out / m.courses[i]);
    for (Table t : per_course.tables()) {
      emit(m.courses[i] + "/" + std::string(table_name(t)) + ".csv", io::table_csv(s, t));
    }
    nlohmann::ordered_json meta;
    meta["course_id"] = s.course_id;
    meta["schema_version"] = s.schema_version;
    meta["tables"] = per_course.names();
    emit(m.courses[i] + "/store.json", meta.dump(2) + "\n");
  }
  if (chosen.contains(Table::global_user)) {
    CourseStore all;
    for (const auto& s : stores) {
      all.global_users.insert(all.global_users.end(), s.global_users.begin(), s.global_users.end());
    }
    emit("global_user.csv", io::table_csv(all, Table::global_user));
  }

  Sha256 h;
  for (const auto& [rel, sum] : m.file_checksums) {
    h.update(rel);
    h.update(" ");
    h.update(sum);
    h.update("\n");
  }
  m.export_checksum = to_hex(h.finish());
  write_bytes(out / "manifest.json", m.to_json().dump(2) + "\n");
  return m;
}

// -- linkability audit ---------------------------------------------------------

namespace {

class DisjointSets {
 public:
  std::size_t add() {
    parent_.push_back(parent_.size());
    return parent_.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

enum class Mode { observed, submissions, collaborations, feedback, identity };

struct TableNode {
  std::string course;  // empty for the top-level global table
  Table table;
  std::vector<std::size_t> columns;
};

Mode mode_of(Table t) {
  switch (t) {
    case Table::observed_events: return Mode::observed;
    case Table::submissions:
    case Table::assessments: return Mode::submissions;
    case Table::collaborations: return Mode::collaborations;
    case Table::feedbacks: return Mode::feedback;
    default: return Mode::identity;
  }
}

}  // namespace

LinkabilityReport audit_linkability(const fs::path& dir) {
  PartitionManifest m = load_manifest(dir);
  LinkabilityReport report;
  report.level = m.level.name();

  DisjointSets sets;
  std::vector<TableNode> tables;
  std::unordered_map<UserKey, std::size_t> owner;  // key value -> first column holding it

  auto add_column = [&](TableNode& node, const std::vector<UserKey>& values) {
    std::size_t col = sets.add();
    node.columns.push_back(col);
    for (UserKey v : values) {
      if (v == kAutomatedGrader) continue;
      auto [it, inserted] = owner.emplace(v, col);
      if (!inserted) sets.unite(col, it->second);
    }
    return col;
  };

  auto add_store = [&](const CourseStore& s, const std::string& course) {
    for (Table t : s.present.tables()) {
      TableNode node{course, t, {}};
      std::vector<UserKey> a, b, c, d, e;
      switch (t) {
        case Table::observed_events:
          for (const auto& r : s.observed_events) a.push_back(r.user_id_observed);
          add_column(node, a);
          break;
        case Table::submissions:
          for (const auto& r : s.submissions) a.push_back(r.user_id);
          add_column(node, a);
          break;
        case Table::assessments:
          for (const auto& r : s.assessments) a.push_back(r.assessment_grader_id);
          add_column(node, a);
          break;
        case Table::collaborations:
          for (const auto& r : s.collaborations) a.push_back(r.user_id);
          add_column(node, a);
          break;
        case Table::feedbacks:
          for (const auto& r : s.feedbacks) a.push_back(r.user_id);
          add_column(node, a);
          break;
        case Table::course_user: {
          for (const auto& r : s.course_users) {
            a.push_back(r.course_user_id);
            b.push_back(r.user_id_observed);
            c.push_back(r.user_id_submissions);
            d.push_back(r.user_id_collaborations);
            e.push_back(r.user_id_feedback);
          }
          std::size_t first = add_column(node, a);
          for (const auto* col : {&b, &c, &d, &e}) {
            std::size_t x = add_column(node, *col);
            // Keys on one row are joined by the row itself.
            if (!s.course_users.empty()) sets.unite(first, x);
          }
          break;
        }
        case Table::global_user: {
          for (const auto& r : s.global_users) {
            a.push_back(r.global_user_id);
            b.push_back(r.course_user_id);
          }
          std::size_t first = add_column(node, a);
          std::size_t second = add_column(node, b);
          if (!s.global_users.empty()) sets.unite(first, second);
          break;
        }
        default: continue;
      }
      tables.push_back(std::move(node));
    }
  };

  for (const auto& course : m.courses) add_store(io::load_csv_dir(dir / course), course);
  if (fs::exists(dir / "global_user.csv")) add_store(io::load_csv_dir(dir), "");

  for (std::size_t i = 0; i < tables.size(); ++i) {
    for (std::size_t j = i + 1; j < tables.size(); ++j) {
      const TableNode& x = tables[i];
      const TableNode& y = tables[j];
      TableLink link;
      link.a = (x.course.empty() ? "" : x.course + "/") + std::string(table_name(x.table));
      link.b = (y.course.empty() ? "" : y.course + "/") + std::string(table_name(y.table));
      for (std::size_t cx : x.columns) {
        for (std::size_t cy : y.columns) {
          if (sets.find(cx) == sets.find(cy)) link.joinable = true;
        }
      }
      Mode mx = mode_of(x.table), my = mode_of(y.table);
      link.cross_mode = link.joinable && x.course == y.course && mx != Mode::identity &&
                        my != Mode::identity && mx != my;
      link.cross_course =
          link.joinable && !x.course.empty() && !y.course.empty() && x.course != y.course;
      report.cross_mode_paths += link.cross_mode;
      report.cross_course_paths += link.cross_course;
      report.pairs.push_back(std::move(link));
    }
  }

  if (m.included.contains(Table::collaborations) && m.included.contains(Table::observed_events)) {
    report.warnings.push_back(
        "collaboration timestamps coincide with the observed event of the same forum access; "
        "matching them links collaboration ids to observed ids");
  }
  return report;
}

json LinkabilityReport::to_json() const {
  nlohmann::ordered_json j;
  j["level"] = level;
  j["cross_mode_paths"] = cross_mode_paths;
  j["cross_course_paths"] = cross_course_paths;
  j["warnings"] = warnings;
  nlohmann::ordered_json ps = nlohmann::ordered_json::array();
  for (const auto& p : pairs) {
    nlohmann::ordered_json o;
    o["a"] = p.a;
    o["b"] = p.b;
    o["joinable"] = p.joinable;
    o["cross_mode"] = p.cross_mode;
    o["cross_course"] = p.cross_course;
    ps.push_back(o);
  }
  j["pairs"] = ps;
  return json::parse(j.dump());
}

}  // namespace moocdb
