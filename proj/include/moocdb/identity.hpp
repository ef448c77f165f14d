#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "moocdb/schema.hpp"

namespace moocdb {

struct KeyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Secret for the keyed PRF. At least 128 bits.
class SecretKey {
 public:
  static constexpr std::size_t kMinBytes = 16;

  explicit SecretKey(std::vector<std::uint8_t> bytes);
  static SecretKey from_hex(std::string_view hex);
  // Reads MOOCDB_SECRET_KEY (hex) from the environment, else the hex
  // contents of key_file when given. Keys are never taken from argv.
  static SecretKey load(const std::optional<std::filesystem::path>& key_file);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Identifier namespaces. The tag occupies bits 60..62 of every derived id,
// so ids from different namespaces can never coincide.
enum class IdSpace : std::uint8_t {
  global = 1,
  course = 2,
  observed = 3,
  submissions = 4,
  collaborations = 5,
  feedback = 6,
};

std::string_view id_space_name(IdSpace s);
IdSpace id_space_of(UserKey key);

struct ModeUserIds {
  UserKey observed = 0;
  UserKey submissions = 0;
  UserKey collaborations = 0;
  UserKey feedback = 0;
};

struct CourseIdentity {
  UserKey course_user_id = 0;
  ModeUserIds modes;
};

// PII record. Lives outside every store and partition.
struct UserPii {
  UserKey global_user_id = 0;
  std::int64_t age = 0;
  std::string country;
  std::string most_frequent_ip;
};

inline constexpr std::string_view kPiiTableName = "user_pii";

// Layered mapping: raw handle -> global id -> per-course id -> four mode ids.
class IdentityLedger {
 public:
  const std::map<std::string, UserKey>& global_ids() const { return global_; }
  const std::map<std::string, std::map<std::string, CourseIdentity>>& courses() const {
    return courses_;
  }

  std::optional<UserKey> global_id(const std::string& handle) const;
  const CourseIdentity* course_identity(const std::string& course_id,
                                        const std::string& handle) const;
  // Reverse lookup of any derived id (global, course or mode) to the raw handle.
  std::optional<std::string> handle_of(UserKey key) const;

  std::size_t mode_id_count() const;

 private:
  friend void add_course(IdentityLedger&, const std::string&, std::vector<std::string>,
                         const SecretKey&);
  UserKey fresh(IdSpace space, std::string_view course, std::string_view handle,
                const SecretKey& key);

  std::map<std::string, UserKey> global_;
  std::map<std::string, std::map<std::string, CourseIdentity>> courses_;
  std::map<UserKey, std::string> reverse_;
};

// Derives ids for every (user, course) pair via HMAC-SHA256. Deterministic
// for a given key; injective within each namespace (collisions are resolved
// by re-keying with a counter, in sorted handle order).
IdentityLedger derive_identities(const std::vector<std::string>& raw_users,
                                 const std::vector<std::string>& courses, const SecretKey& key);

// Adds one course's enrolment to an existing ledger.
void add_course(IdentityLedger& ledger, const std::string& course_id,
                std::vector<std::string> users, const SecretKey& key);

}  // namespace moocdb
