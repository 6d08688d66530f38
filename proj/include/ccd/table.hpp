#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccd/schema.hpp"

namespace ccd {

// Raw observations, one row per system run, columns in schema order.
struct ObservationTable {
  Schema schema;
  Eigen::MatrixXd values;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
};

// Discretized view of an ObservationTable. Continuous columns are coded into
// equal-width bins over their declared domain; discrete columns are coded by
// domain position, so discretizing an already discrete table is the identity
// on codes.
struct DiscreteTable {
  Schema schema;
  Eigen::MatrixXi codes;
  std::vector<int> cardinality;                 // levels per column
  std::vector<std::vector<double>> bin_edges;   // per column; empty if discrete

  int rows() const { return static_cast<int>(codes.rows()); }
  int cols() const { return static_cast<int>(codes.cols()); }

  // Scale used for expectations: bin midpoint for originally continuous
  // columns, ordinal position for discrete ones.
  double level_value(int var, int code) const;

  // Scale used for assignments and appended rows: bin midpoint for
  // continuous columns, the declared domain value for discrete ones.
  double raw_value(int var, int code) const;

  // Inverse of the coding applied to a single cell.
  int code_of(int var, double raw) const;
};

struct FaultSpec {
  std::vector<std::string> targets;   // NFP names
  double percentile = 99.0;
  std::optional<int> faulty_row_index;
  // When set, these thresholds (one per target) replace the percentile
  // computation; the repair loop uses this to keep the original thresholds
  // while the table grows.
  std::optional<std::vector<double>> fixed_thresholds;
};

// Parses RFC 4180 style CSV with a header row naming schema variables.
// Throws MissingColumn, UnknownColumn, ValueOutOfDomain, EmptyTable.
ObservationTable load_observations(const std::string& csv_text,
                                   const Schema& schema);

std::string observations_to_csv(const ObservationTable& table);

DiscreteTable discretize(const ObservationTable& table,
                         int bins_per_continuous = 10);

// Percentile by linear interpolation on the sorted sample
// (position p/100 * (n-1) between order statistics).
double percentile(const std::vector<double>& sample, double pct);

// Threshold per fault target, in target order. For LowerIsBetter targets the
// threshold is the upper pct percentile; for HigherIsBetter it is the
// 100 - pct percentile, so "worse" always means past the tail.
std::vector<double> fault_thresholds(const ObservationTable& table,
                                     const FaultSpec& fault);

// A row is faulty iff every target is strictly worse than its threshold.
std::vector<std::uint8_t> label_faults(const ObservationTable& table,
                                       const FaultSpec& fault);

// Relative improvement in percent, positive when the repaired value is
// better than the faulty one.
double compute_gain(double fault_value, double nofault_value,
                    Direction direction);

bool is_worse(double value, double threshold, Direction direction);

}  // namespace ccd
