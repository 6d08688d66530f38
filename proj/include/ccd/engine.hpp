#pragma once

#include <map>
#include <string>
#include <vector>

#include "ccd/counterfactual.hpp"
#include "ccd/discovery.hpp"
#include "ccd/entropic.hpp"

namespace ccd {

struct EngineConfig {
  int bins = 10;
  DiscoveryConfig discovery;
  EntropicConfig entropic;
  FitConfig fit;
  CfConfig counterfactual;
  int top_k = 3;
  long long repair_cap = 10000;
  std::uint64_t seed = 0;  // stage seeds are derived from this one
};

struct DiagnosisReport {
  FaultSpec fault;
  std::vector<double> thresholds;  // raw units, target order
  int faulty_row = -1;
  Admg graph;
  FittedModel model;
  OutcomeSpec outcome;
  std::vector<CausalPath> paths;   // union of per-target rankings
  std::vector<int> root_causes;    // options on the ranked paths
  std::vector<Repair> repairs;     // scored, best first
  bool best_non_improving = true;  // no repair, or the best has ITE <= 0
  std::vector<std::string> flags;
};

// One pass over the observations: label the fault, learn the graph, fit the
// model, rank paths, and score candidate repairs counterfactually.
// Throws NoFaultObserved when no row is past the thresholds.
DiagnosisReport diagnose(const ObservationTable& table, const FaultSpec& fault,
                         const EngineConfig& cfg = {});

std::string report_to_json(const DiagnosisReport& report, const Schema& schema);

// One measurement of the system under a full option assignment. `repeat`
// distinguishes repeated runs of the same assignment. Implementations throw
// EvaluatorFailure when a run cannot be completed.
class SystemEvaluator {
 public:
  virtual ~SystemEvaluator() = default;
  virtual std::map<std::string, double> measure(
      const std::map<std::string, double>& assignment, int repeat) = 0;
};

// Runs a shell command per measurement. The request goes to its stdin as one
// JSON object {"assignment": {...}, "repeat": k}; the reply on stdout must be
// {"events": {...}, "nfps": {...}}. A nonzero exit is an EvaluatorFailure.
class SubprocessEvaluator : public SystemEvaluator {
 public:
  explicit SubprocessEvaluator(std::string command);
  std::map<std::string, double> measure(
      const std::map<std::string, double>& assignment, int repeat) override;

 private:
  std::string command_;
};

struct Budget {
  int max_evaluations = 25;
  int repeats = 5;  // measurements averaged per evaluation
};

enum class SessionStatus { Fixed, BudgetExhausted, NonImproving };
const char* session_status_name(SessionStatus status);

struct EvaluationRecord {
  std::map<std::string, double> assignment;  // full option assignment, raw
  std::map<std::string, double> measured;    // averaged events and properties
  double ite = 0.0;
  bool skipped = false;      // evaluator failed twice
  bool fixed = false;        // past the frozen thresholds no more
  std::vector<double> gains;  // per target, percent vs the faulty row
};

struct RepairSession {
  SessionStatus status = SessionStatus::NonImproving;
  std::vector<EvaluationRecord> evaluations;
  DiagnosisReport report;    // diagnosis after the last appended measurement
  ObservationTable table;    // original rows plus appended measurements
};

// Diagnose, try the best untried repair on the evaluator, append the
// measurement, and rediagnose until the fault clears or the budget runs out.
// Thresholds stay frozen at their original values; configurations are never
// measured twice.
RepairSession repair_loop(const ObservationTable& table, const FaultSpec& fault,
                          SystemEvaluator& evaluator, const Budget& budget = {},
                          const EngineConfig& cfg = {});

std::string session_to_json(const RepairSession& session, const Schema& schema);

struct BootstrapResult {
  std::vector<std::map<std::string, double>> assignments;
  bool exhausted_space = false;  // the whole option grid fit in n
};

// n distinct random option assignments over the discretized domains.
BootstrapResult bootstrap_samples(const Schema& schema, int n,
                                  std::uint64_t seed, int bins = 10);

}  // namespace ccd
