#pragma once

#include <string>
#include <vector>

#include "ccd/error.hpp"
#include "ccd/schema.hpp"
#include "ccd/table.hpp"

namespace ccd::testing {

inline VariableMeta ordinal_var(const std::string& name, VarKind kind,
                                int levels) {
  VariableMeta v;
  v.name = name;
  v.kind = kind;
  v.dtype = Dtype::Ordinal;
  for (int l = 0; l < levels; ++l) {
    v.levels.push_back(static_cast<double>(l));
    v.labels.push_back(std::to_string(l));
  }
  v.intervenable = kind == VarKind::ConfigOption;
  return v;
}

inline VariableMeta continuous_var(const std::string& name, VarKind kind,
                                   double lo, double hi) {
  VariableMeta v;
  v.name = name;
  v.kind = kind;
  v.dtype = Dtype::Continuous;
  v.domain_min = lo;
  v.domain_max = hi;
  v.intervenable = kind == VarKind::ConfigOption;
  return v;
}

// Two ordinal columns holding the given codes, discretized view included.
inline ObservationTable pair_table(const std::vector<int>& xs,
                                   const std::vector<int>& ys, int kx, int ky) {
  ObservationTable t;
  t.schema.variables = {ordinal_var("x", VarKind::ConfigOption, kx),
                        ordinal_var("y", VarKind::SystemEvent, ky)};
  t.values.resize(static_cast<int>(xs.size()), 2);
  for (size_t r = 0; r < xs.size(); ++r) {
    t.values(static_cast<int>(r), 0) = xs[r];
    t.values(static_cast<int>(r), 1) = ys[r];
  }
  return t;
}

// Ordinal columns named by the schema, one row per entry of `rows`.
inline ObservationTable code_table(const Schema& schema,
                                   const std::vector<std::vector<int>>& rows) {
  ObservationTable t;
  t.schema = schema;
  t.values.resize(static_cast<int>(rows.size()), schema.size());
  for (size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < schema.size(); ++c)
      t.values(static_cast<int>(r), c) = rows[r][c];
  return t;
}

// Runs fn and reports the thrown error code; fails the test when nothing is
// thrown or something other than ccd::Error escapes.
template <class Fn>
bool throws_code(ErrorCode expected, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == expected;
  } catch (...) {
    return false;
  }
  return false;
}

}  // namespace ccd::testing
