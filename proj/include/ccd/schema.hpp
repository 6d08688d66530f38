#pragma once

#include <string>
#include <vector>

namespace ccd {

enum class VarKind { ConfigOption, SystemEvent, NonFunctionalProperty };
enum class Dtype { Continuous, Ordinal, Categorical, Binary };
enum class Direction { LowerIsBetter, HigherIsBetter };

const char* var_kind_name(VarKind kind);
const char* dtype_name(Dtype dtype);
const char* direction_name(Direction direction);

// Tier order used as temporal background knowledge: options are set before
// events happen, events happen before properties are measured.
inline int tier_of(VarKind kind) {
  switch (kind) {
    case VarKind::ConfigOption: return 0;
    case VarKind::SystemEvent: return 1;
    case VarKind::NonFunctionalProperty: return 2;
  }
  return 2;
}

struct VariableMeta {
  std::string name;
  VarKind kind = VarKind::ConfigOption;
  Dtype dtype = Dtype::Continuous;

  // Continuous variables use [domain_min, domain_max]. Discrete variables use
  // `levels`, the ordered numeric values a cell may take; `labels` holds the
  // spelling used in CSV and JSON when the schema declared string values.
  double domain_min = 0.0;
  double domain_max = 1.0;
  std::vector<double> levels;
  std::vector<std::string> labels;

  bool intervenable = false;
  Direction direction = Direction::LowerIsBetter;

  bool is_discrete() const { return dtype != Dtype::Continuous; }
  int level_count() const { return static_cast<int>(levels.size()); }
  int tier() const { return tier_of(kind); }
};

struct Schema {
  std::vector<VariableMeta> variables;

  int size() const { return static_cast<int>(variables.size()); }
  const VariableMeta& at(int i) const { return variables.at(i); }

  // Returns -1 when no variable has that name.
  int index_of(const std::string& name) const;
  std::vector<int> indices_of_kind(VarKind kind) const;
};

Schema schema_from_json(const std::string& text);
std::string schema_to_json(const Schema& schema);

}  // namespace ccd
