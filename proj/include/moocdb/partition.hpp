#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "moocdb/schema.hpp"

namespace moocdb {

enum class Linkage : std::uint8_t { multi_course, single_course, table_level };

std::string_view linkage_name(Linkage l);
std::optional<Linkage> linkage_from_name(std::string_view name);

struct AccessLevel {
  bool collaboration_included = false;
  Linkage linkage = Linkage::table_level;

  // "table_level", "single_course+collaboration", ...
  std::string name() const;
  static std::optional<AccessLevel> parse(std::string_view name);
  friend bool operator==(const AccessLevel&, const AccessLevel&) = default;
};

inline constexpr std::array<AccessLevel, 6> kAccessLevels = {{
    {false, Linkage::table_level},
    {true, Linkage::table_level},
    {false, Linkage::single_course},
    {true, Linkage::single_course},
    {false, Linkage::multi_course},
    {true, Linkage::multi_course},
}};

TableSet tables_for(AccessLevel level);

// Requests that cross the access matrix (PII included).
struct AccessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PartitionManifest {
  AccessLevel level;
  TableSet included;
  TableSet excluded;
  std::vector<std::string> courses;  // subdirectory name per input store
  // column -> id namespace, for every user-key column that was exported
  std::map<std::string, std::string> namespaces;
  std::map<std::string, std::string> file_checksums;  // relative path -> sha256
  std::string export_checksum;

  nlohmann::json to_json() const;
  static PartitionManifest from_json(const nlohmann::json& j);
};

// Layout under `out`: manifest.json; one subdirectory per course holding
// that course's tables (a loadable CSV store); global_user.csv at the top for
// multi_course. `requested` narrows the export to named tables, each of which
// must be allowed at `level`; naming the PII table is always refused.
PartitionManifest export_partition(const std::vector<CourseStore>& stores, AccessLevel level,
                                   const std::filesystem::path& out,
                                   const std::vector<std::string>& requested = {});

PartitionManifest load_manifest(const std::filesystem::path& partition_dir);

// Directory-safe form of a course id.
std::string course_dir_name(const std::string& course_id);

struct TableLink {
  std::string a;  // "<course>/<table>"
  std::string b;
  bool joinable = false;
  bool cross_mode = false;
  bool cross_course = false;
};

struct LinkabilityReport {
  std::string level;
  std::vector<TableLink> pairs;
  std::size_t cross_mode_paths = 0;
  std::size_t cross_course_paths = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Joins are possible between two tables when some chain of user-key columns
// connects them, either through shared key values or through a row holding
// several keys at once (course_user, global_user). The automated grader id is
// not a user.
LinkabilityReport audit_linkability(const std::filesystem::path& partition_dir);

}  // namespace moocdb
