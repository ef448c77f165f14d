#include "moocdb/identity.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "moocdb/hash.hpp"

namespace moocdb {

namespace {

constexpr std::uint64_t kPayloadMask = (std::uint64_t{1} << 60) - 1;

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c); };
  while (!s.empty() && ws(s.back())) s.pop_back();
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  return s;
}

}  // namespace

SecretKey::SecretKey(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {
  if (bytes_.size() < kMinBytes) {
    throw KeyError("secret key has " + std::to_string(bytes_.size() * 8) +
                   " bits; at least 128 are required");
  }
}

SecretKey SecretKey::from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw KeyError("secret key hex has odd length");
  std::vector<std::uint8_t> bytes;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]), lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw KeyError("secret key is not valid hex");
    bytes.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
  }
  return SecretKey(std::move(bytes));
}

SecretKey SecretKey::load(const std::optional<std::filesystem::path>& key_file) {
  if (const char* env = std::getenv("MOOCDB_SECRET_KEY"); env && *env) {
    return from_hex(trim(env));
  }
  if (key_file) {
    std::ifstream in(*key_file);
    if (!in) throw KeyError("cannot read key file " + key_file->string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_hex(trim(ss.str()));
  }
  throw KeyError("no secret key: set MOOCDB_SECRET_KEY or pass --key-file");
}

std::string_view id_space_name(IdSpace s) {
  switch (s) {
    case IdSpace::global: return "global";
    case IdSpace::course: return "course";
    case IdSpace::observed: return "observed";
    case IdSpace::submissions: return "submissions";
    case IdSpace::collaborations: return "collaborations";
    case IdSpace::feedback: return "feedback";
  }
  return "?";
}

IdSpace id_space_of(UserKey key) {
  return static_cast<IdSpace>((static_cast<std::uint64_t>(key) >> 60) & 0x7);
}

std::optional<UserKey> IdentityLedger::global_id(const std::string& handle) const {
  auto it = global_.find(handle);
  if (it == global_.end()) return std::nullopt;
  return it->second;
}

const CourseIdentity* IdentityLedger::course_identity(const std::string& course_id,
                                                      const std::string& handle) const {
  auto c = courses_.find(course_id);
  if (c == courses_.end()) return nullptr;
  auto u = c->second.find(handle);
  return u == c->second.end() ? nullptr : &u->second;
}

std::optional<std::string> IdentityLedger::handle_of(UserKey key) const {
  auto it = reverse_.find(key);
  if (it == reverse_.end()) return std::nullopt;
  return it->second;
}

std::size_t IdentityLedger::mode_id_count() const {
  std::size_t n = 0;
  for (const auto& [course, users] : courses_) n += users.size() * 4;
  return n;
}

UserKey IdentityLedger::fresh(IdSpace space, std::string_view course, std::string_view handle,
                              const SecretKey& key) {
  for (std::uint32_t counter = 0;; ++counter) {
    std::string msg = "moocdb/id/v1|";
    msg += id_space_name(space);
    msg += '|';
    msg += course;
    msg += '|';
    msg += handle;
    msg += '|';
    msg += std::to_string(counter);
    Digest d = hmac_sha256(key.bytes(), msg);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
    v = (v & kPayloadMask) | (static_cast<std::uint64_t>(space) << 60);
    auto id = static_cast<UserKey>(v);
    auto [it, inserted] = reverse_.emplace(id, std::string(handle));
    if (inserted) return id;
    // The global id of a handle is shared by all its courses.
    if (space == IdSpace::global && it->second == handle) return id;
  }
}

void add_course(IdentityLedger& ledger, const std::string& course_id,
                std::vector<std::string> users, const SecretKey& key) {
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  auto& course = ledger.courses_[course_id];
  for (const auto& handle : users) {
    if (course.contains(handle)) continue;
    if (!ledger.global_.contains(handle)) {
      ledger.global_[handle] = ledger.fresh(IdSpace::global, "", handle, key);
    }
    CourseIdentity ci;
    ci.course_user_id = ledger.fresh(IdSpace::course, course_id, handle, key);
    ci.modes.observed = ledger.fresh(IdSpace::observed, course_id, handle, key);
    ci.modes.submissions = ledger.fresh(IdSpace::submissions, course_id, handle, key);
    ci.modes.collaborations = ledger.fresh(IdSpace::collaborations, course_id, handle, key);
    ci.modes.feedback = ledger.fresh(IdSpace::feedback, course_id, handle, key);
    course.emplace(handle, ci);
  }
}

IdentityLedger derive_identities(const std::vector<std::string>& raw_users,
                                 const std::vector<std::string>& courses, const SecretKey& key) {
  IdentityLedger ledger;
  std::vector<std::string> sorted_courses = courses;
  std::sort(sorted_courses.begin(), sorted_courses.end());
  for (const auto& c : sorted_courses) add_course(ledger, c, raw_users, key);
  return ledger;
}

}  // namespace moocdb
