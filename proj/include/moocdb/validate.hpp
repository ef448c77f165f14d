#pragma once

#include <string>
#include <vector>

#include "moocdb/schema.hpp"

namespace moocdb {

struct Violation {
  Table table;
  std::string row_key;
  std::string invariant;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count_for(Table t) const;
};

// Checks every structural and referential invariant over the tables present
// in the store. Foreign keys into tables absent from the store (a partition
// view) are not checked.
ValidationReport validate_store(const CourseStore& store);

std::string to_string(const Violation& v);

}  // namespace moocdb
