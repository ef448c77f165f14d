#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "moocdb/ingest.hpp"
#include "moocdb/synthgen.hpp"

namespace moocdb::testing {

namespace fs = std::filesystem;

// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("moocdb-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline SecretKey test_key() { return SecretKey::from_hex("000102030405060708090a0b0c0d0e0f1011121314151617"); }

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Pipeline {
  GeneratedCourse course;
  GeneratedFiles files;
  IngestResult result;
};

// gen -> files -> ingest, all under dir. The store is persisted when
// store_name is non-empty.
inline Pipeline run_pipeline(const GenSpec& spec, const fs::path& dir, const std::string& store_name = "") {
  Pipeline p;
  p.course = generate(spec);
  p.files = write_generated(p.course, dir);
  IngestConfig config;
  CourseStructure structure = load_structure(p.files.structure, config);
  std::vector<Source> sources{{make_adapter(config.adapter_for(p.files.log)), p.files.log}};
  std::optional<fs::path> out;
  if (!store_name.empty()) out = dir / store_name;
  p.result = ingest(sources, structure, config, test_key(), out);
  return p;
}

}  // namespace moocdb::testing
