#include "ccd/schema.hpp"

#include <cmath>
#include <set>

#include "ccd/error.hpp"
#include "json.hpp"

namespace ccd {

namespace {

using nlohmann::ordered_json;

VarKind parse_kind(const std::string& s) {
  if (s == "config_option") return VarKind::ConfigOption;
  if (s == "system_event") return VarKind::SystemEvent;
  if (s == "non_functional_property") return VarKind::NonFunctionalProperty;
  throw Error(ErrorCode::ParseError, "unknown variable kind '" + s + "'");
}

Dtype parse_dtype(const std::string& s) {
  if (s == "continuous") return Dtype::Continuous;
  if (s == "ordinal") return Dtype::Ordinal;
  if (s == "categorical") return Dtype::Categorical;
  if (s == "binary") return Dtype::Binary;
  throw Error(ErrorCode::ParseError, "unknown dtype '" + s + "'");
}

Direction parse_direction(const std::string& s) {
  if (s == "lower_is_better") return Direction::LowerIsBetter;
  if (s == "higher_is_better") return Direction::HigherIsBetter;
  throw Error(ErrorCode::ParseError, "unknown direction '" + s + "'");
}

std::string format_level(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  return buf;
}

void validate_variable(const VariableMeta& v) {
  if (v.name.empty())
    throw Error(ErrorCode::InvalidArgument, "variable with empty name");
  if (v.dtype == Dtype::Continuous) {
    if (!(v.domain_min < v.domain_max))
      throw Error(ErrorCode::InvalidArgument,
                  "variable '" + v.name + "' needs domain_min < domain_max");
    return;
  }
  if (v.levels.size() < 2)
    throw Error(ErrorCode::InvalidArgument,
                "variable '" + v.name + "' needs at least two domain values");
  if (v.dtype == Dtype::Binary && v.levels.size() != 2)
    throw Error(ErrorCode::InvalidArgument,
                "binary variable '" + v.name + "' needs exactly two values");
  std::set<std::string> seen(v.labels.begin(), v.labels.end());
  if (seen.size() != v.labels.size())
    throw Error(ErrorCode::InvalidArgument,
                "variable '" + v.name + "' has duplicate domain values");
}

}  // namespace

const char* var_kind_name(VarKind kind) {
  switch (kind) {
    case VarKind::ConfigOption: return "config_option";
    case VarKind::SystemEvent: return "system_event";
    case VarKind::NonFunctionalProperty: return "non_functional_property";
  }
  return "?";
}

const char* dtype_name(Dtype dtype) {
  switch (dtype) {
    case Dtype::Continuous: return "continuous";
    case Dtype::Ordinal: return "ordinal";
    case Dtype::Categorical: return "categorical";
    case Dtype::Binary: return "binary";
  }
  return "?";
}

const char* direction_name(Direction direction) {
  return direction == Direction::LowerIsBetter ? "lower_is_better"
                                               : "higher_is_better";
}

int Schema::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (variables[i].name == name) return i;
  return -1;
}

std::vector<int> Schema::indices_of_kind(VarKind kind) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (variables[i].kind == kind) out.push_back(i);
  return out;
}

Schema schema_from_json(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("schema JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("variables") ||
      !doc["variables"].is_array())
    throw Error(ErrorCode::ParseError,
                "schema JSON must be an object with a 'variables' array");

  Schema schema;
  for (const auto& jv : doc["variables"]) {
    VariableMeta v;
    if (!jv.contains("name") || !jv.contains("kind") || !jv.contains("dtype") ||
        !jv.contains("domain"))
      throw Error(ErrorCode::ParseError,
                  "variable entry needs name, kind, dtype, domain");
    v.name = jv["name"].get<std::string>();
    v.kind = parse_kind(jv["kind"].get<std::string>());
    v.dtype = parse_dtype(jv["dtype"].get<std::string>());
    const auto& dom = jv["domain"];
    if (!dom.is_array() || dom.empty())
      throw Error(ErrorCode::ParseError,
                  "variable '" + v.name + "' has a non-array or empty domain");
    if (v.dtype == Dtype::Continuous) {
      if (dom.size() != 2 || !dom[0].is_number() || !dom[1].is_number())
        throw Error(ErrorCode::ParseError,
                    "continuous variable '" + v.name +
                        "' needs a [min, max] domain");
      v.domain_min = dom[0].get<double>();
      v.domain_max = dom[1].get<double>();
    } else {
      for (const auto& item : dom) {
        if (item.is_number()) {
          double x = item.get<double>();
          v.levels.push_back(x);
          v.labels.push_back(format_level(x));
        } else if (item.is_string()) {
          // String values are coded by their position in the domain list.
          v.levels.push_back(static_cast<double>(v.levels.size()));
          v.labels.push_back(item.get<std::string>());
        } else {
          throw Error(ErrorCode::ParseError,
                      "domain values of '" + v.name +
                          "' must be numbers or strings");
        }
      }
    }
    v.intervenable = jv.value("intervenable", v.kind == VarKind::ConfigOption);
    if (jv.contains("direction"))
      v.direction = parse_direction(jv["direction"].get<std::string>());
    validate_variable(v);
    schema.variables.push_back(std::move(v));
  }

  if (schema.variables.empty())
    throw Error(ErrorCode::ParseError, "schema declares no variables");
  std::set<std::string> names;
  for (const auto& v : schema.variables)
    if (!names.insert(v.name).second)
      throw Error(ErrorCode::InvalidArgument,
                  "duplicate variable name '" + v.name + "'");
  return schema;
}

std::string schema_to_json(const Schema& schema) {
  ordered_json doc;
  doc["variables"] = ordered_json::array();
  for (const auto& v : schema.variables) {
    ordered_json jv;
    jv["name"] = v.name;
    jv["kind"] = var_kind_name(v.kind);
    jv["dtype"] = dtype_name(v.dtype);
    if (v.dtype == Dtype::Continuous) {
      jv["domain"] = {v.domain_min, v.domain_max};
    } else {
      ordered_json dom = ordered_json::array();
      for (size_t i = 0; i < v.levels.size(); ++i) {
        // Emit the numeric value when the label is just its spelling,
        // otherwise keep the declared string.
        if (v.labels[i] == format_level(v.levels[i]))
          dom.push_back(v.levels[i]);
        else
          dom.push_back(v.labels[i]);
      }
      jv["domain"] = dom;
    }
    jv["intervenable"] = v.intervenable;
    jv["direction"] = direction_name(v.direction);
    doc["variables"].push_back(jv);
  }
  return doc.dump(2) + "\n";
}

}  // namespace ccd
