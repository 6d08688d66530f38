#include "ccd/table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "ccd/error.hpp"

namespace ccd {

namespace {

constexpr double kValueTol = 1e-9;

struct CsvRecord {
  std::vector<std::string> fields;
};

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CR LF or LF line
// ends. Returns one record per line; a final empty line is dropped.
std::vector<CsvRecord> parse_csv(const std::string& text) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool had_any = false;

  auto end_field = [&] {
    current.fields.push_back(field);
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(current));
    current = CsvRecord{};
  };

  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    had_any = true;
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"': in_quotes = true; break;
      case ',': end_field(); break;
      case '\r': break;
      case '\n': end_record(); break;
      default: field.push_back(c);
    }
  }
  if (in_quotes)
    throw Error(ErrorCode::ParseError, "CSV ends inside a quoted field");
  if (had_any && (!field.empty() || !current.fields.empty())) end_record();

  // Drop a trailing blank record produced by a final newline plus spaces.
  while (!records.empty() && records.back().fields.size() == 1 &&
         records.back().fields[0].empty())
    records.pop_back();
  return records;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

bool parse_number(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

std::string cell_location(int row, const std::string& column) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "row %d, column '", row);
  return std::string(buf) + column + "'";
}

double parse_cell(const std::string& raw_field, const VariableMeta& var,
                  int row) {
  std::string cell = trim(raw_field);
  if (cell.empty())
    throw Error(ErrorCode::ValueOutOfDomain,
                "missing cell at " + cell_location(row, var.name));

  double v = 0.0;
  bool numeric = parse_number(cell, &v);

  if (var.dtype == Dtype::Continuous) {
    if (!numeric || !std::isfinite(v))
      throw Error(ErrorCode::ValueOutOfDomain,
                  "non-numeric value '" + cell + "' at " +
                      cell_location(row, var.name));
    if (v < var.domain_min - kValueTol || v > var.domain_max + kValueTol)
      throw Error(ErrorCode::ValueOutOfDomain,
                  "value " + cell + " outside [" +
                      std::to_string(var.domain_min) + ", " +
                      std::to_string(var.domain_max) + "] at " +
                      cell_location(row, var.name));
    return std::min(std::max(v, var.domain_min), var.domain_max);
  }

  if (numeric) {
    for (size_t i = 0; i < var.levels.size(); ++i)
      if (std::fabs(var.levels[i] - v) <= kValueTol) return var.levels[i];
  }
  for (size_t i = 0; i < var.labels.size(); ++i)
    if (var.labels[i] == cell) return var.levels[i];
  throw Error(ErrorCode::ValueOutOfDomain,
              "value '" + cell + "' not in the domain of " +
                  cell_location(row, var.name));
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  return buf;
}

}  // namespace

ObservationTable load_observations(const std::string& csv_text,
                                   const Schema& schema) {
  auto records = parse_csv(csv_text);
  if (records.empty()) throw Error(ErrorCode::EmptyTable, "no header row");

  const auto& header = records[0].fields;
  std::vector<int> column_to_var(header.size(), -1);
  std::vector<bool> seen(schema.size(), false);
  for (size_t c = 0; c < header.size(); ++c) {
    std::string name = trim(header[c]);
    int idx = schema.index_of(name);
    if (idx < 0)
      throw Error(ErrorCode::UnknownColumn,
                  "column '" + name + "' is not in the schema");
    if (seen[idx])
      throw Error(ErrorCode::UnknownColumn, "duplicate column '" + name + "'");
    seen[idx] = true;
    column_to_var[c] = idx;
  }
  for (int i = 0; i < schema.size(); ++i)
    if (!seen[i])
      throw Error(ErrorCode::MissingColumn,
                  "column '" + schema.at(i).name + "' is missing");

  int n = static_cast<int>(records.size()) - 1;
  if (n == 0) throw Error(ErrorCode::EmptyTable, "no data rows");

  ObservationTable table;
  table.schema = schema;
  table.values.resize(n, schema.size());
  for (int r = 0; r < n; ++r) {
    const auto& fields = records[r + 1].fields;
    if (fields.size() != header.size())
      throw Error(ErrorCode::ValueOutOfDomain,
                  "row " + std::to_string(r) + " has " +
                      std::to_string(fields.size()) + " cells, expected " +
                      std::to_string(header.size()));
    for (size_t c = 0; c < fields.size(); ++c) {
      int var = column_to_var[c];
      table.values(r, var) = parse_cell(fields[c], schema.at(var), r);
    }
  }
  return table;
}

std::string observations_to_csv(const ObservationTable& table) {
  std::string out;
  for (int i = 0; i < table.schema.size(); ++i) {
    if (i) out += ",";
    out += csv_escape(table.schema.at(i).name);
  }
  out += "\n";
  for (int r = 0; r < table.rows(); ++r) {
    for (int i = 0; i < table.schema.size(); ++i) {
      if (i) out += ",";
      const auto& var = table.schema.at(i);
      double v = table.values(r, i);
      if (var.is_discrete()) {
        int code = -1;
        for (size_t k = 0; k < var.levels.size(); ++k)
          if (std::fabs(var.levels[k] - v) <= kValueTol) {
            code = static_cast<int>(k);
            break;
          }
        out += code >= 0 ? csv_escape(var.labels[code]) : format_value(v);
      } else {
        out += format_value(v);
      }
    }
    out += "\n";
  }
  return out;
}

double DiscreteTable::level_value(int var, int code) const {
  if (!bin_edges[var].empty())
    return 0.5 * (bin_edges[var][code] + bin_edges[var][code + 1]);
  return static_cast<double>(code);
}

double DiscreteTable::raw_value(int var, int code) const {
  if (!bin_edges[var].empty())
    return 0.5 * (bin_edges[var][code] + bin_edges[var][code + 1]);
  return schema.at(var).levels.at(code);
}

int DiscreteTable::code_of(int var, double raw) const {
  const auto& v = schema.at(var);
  if (!bin_edges[var].empty()) {
    int bins = cardinality[var];
    double width = (v.domain_max - v.domain_min) / bins;
    int code = static_cast<int>(std::floor((raw - v.domain_min) / width));
    return std::min(std::max(code, 0), bins - 1);
  }
  for (size_t k = 0; k < v.levels.size(); ++k)
    if (std::fabs(v.levels[k] - raw) <= kValueTol) return static_cast<int>(k);
  throw Error(ErrorCode::ValueOutOfDomain,
              "value " + format_value(raw) + " not in the domain of '" +
                  v.name + "'");
}

DiscreteTable discretize(const ObservationTable& table,
                         int bins_per_continuous) {
  if (bins_per_continuous < 2)
    throw Error(ErrorCode::InvalidArgument,
                "bins_per_continuous must be at least 2");
  DiscreteTable out;
  out.schema = table.schema;
  out.codes.resize(table.rows(), table.cols());
  out.cardinality.resize(table.cols());
  out.bin_edges.resize(table.cols());

  for (int i = 0; i < table.cols(); ++i) {
    const auto& var = table.schema.at(i);
    if (var.is_discrete()) {
      out.cardinality[i] = var.level_count();
      continue;
    }
    out.cardinality[i] = bins_per_continuous;
    auto& edges = out.bin_edges[i];
    edges.resize(bins_per_continuous + 1);
    double width = (var.domain_max - var.domain_min) / bins_per_continuous;
    for (int b = 0; b <= bins_per_continuous; ++b)
      edges[b] = var.domain_min + b * width;
    edges.back() = var.domain_max;
  }

  for (int r = 0; r < table.rows(); ++r)
    for (int i = 0; i < table.cols(); ++i)
      out.codes(r, i) = out.code_of(i, table.values(r, i));
  return out;
}

double percentile(const std::vector<double>& sample, double pct) {
  if (sample.empty())
    throw Error(ErrorCode::InvalidArgument, "percentile of an empty sample");
  if (pct < 0.0 || pct > 100.0)
    throw Error(ErrorCode::InvalidArgument, "percentile must be in [0, 100]");
  std::vector<double> sorted = sample;
  std::sort(sorted.begin(), sorted.end());
  double pos = pct / 100.0 * (sorted.size() - 1);
  size_t lo = static_cast<size_t>(std::floor(pos));
  size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

bool is_worse(double value, double threshold, Direction direction) {
  return direction == Direction::LowerIsBetter ? value > threshold
                                               : value < threshold;
}

std::vector<double> fault_thresholds(const ObservationTable& table,
                                     const FaultSpec& fault) {
  if (fault.targets.empty())
    throw Error(ErrorCode::InvalidArgument, "fault spec names no targets");
  if (table.rows() < 2)
    throw Error(ErrorCode::InvalidArgument,
                "fault labeling needs at least two rows");
  if (fault.fixed_thresholds &&
      fault.fixed_thresholds->size() != fault.targets.size())
    throw Error(ErrorCode::InvalidArgument,
                "fixed thresholds must match the target count");
  std::vector<double> thresholds;
  for (size_t t = 0; t < fault.targets.size(); ++t) {
    const auto& name = fault.targets[t];
    int idx = table.schema.index_of(name);
    if (idx < 0)
      throw Error(ErrorCode::TargetNotInSchema,
                  "target '" + name + "' is not in the schema");
    const auto& var = table.schema.at(idx);
    if (var.kind != VarKind::NonFunctionalProperty)
      throw Error(ErrorCode::TargetNotInSchema,
                  "target '" + name + "' is not a non-functional property");
    if (fault.fixed_thresholds) {
      thresholds.push_back((*fault.fixed_thresholds)[t]);
      continue;
    }
    std::vector<double> column(table.rows());
    for (int r = 0; r < table.rows(); ++r) column[r] = table.values(r, idx);
    double pct = var.direction == Direction::LowerIsBetter
                     ? fault.percentile
                     : 100.0 - fault.percentile;
    thresholds.push_back(percentile(column, pct));
  }
  return thresholds;
}

std::vector<std::uint8_t> label_faults(const ObservationTable& table,
                                       const FaultSpec& fault) {
  auto thresholds = fault_thresholds(table, fault);
  std::vector<int> target_idx;
  for (const auto& name : fault.targets)
    target_idx.push_back(table.schema.index_of(name));

  std::vector<std::uint8_t> labels(table.rows(), 0);
  for (int r = 0; r < table.rows(); ++r) {
    bool faulty = true;
    for (size_t t = 0; t < target_idx.size(); ++t) {
      const auto& var = table.schema.at(target_idx[t]);
      if (!is_worse(table.values(r, target_idx[t]), thresholds[t],
                    var.direction)) {
        faulty = false;
        break;
      }
    }
    labels[r] = faulty ? 1 : 0;
  }
  return labels;
}

double compute_gain(double fault_value, double nofault_value,
                    Direction direction) {
  if (fault_value == 0.0)
    throw Error(ErrorCode::DivisionByZeroFault,
                "faulty measurement is zero, gain is undefined");
  double delta = direction == Direction::LowerIsBetter
                     ? fault_value - nofault_value
                     : nofault_value - fault_value;
  return delta / fault_value * 100.0;
}

}  // namespace ccd
