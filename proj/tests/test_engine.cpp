#include "ccd/engine.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ccd/error.hpp"
#include "ccd/simulator.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

using namespace ccd;
using ccd::testing::ordinal_var;
using ccd::testing::throws_code;

namespace {

struct TailSystem {
  GroundTruthScm scm;
  ObservationTable table;
  FaultSpec fault;
  int target = -1;
};

TailSystem tail_system(std::uint64_t seed, int n = 5000) {
  ScmSpec spec;
  spec.tail_fault = true;
  spec.seed = seed;
  TailSystem sys;
  sys.scm = make_scm(spec);
  sys.table = sample_observational(sys.scm, n, seed + 1);
  sys.target = sys.scm.schema.indices_of_kind(
      VarKind::NonFunctionalProperty)[0];
  sys.fault.targets = {sys.scm.schema.at(sys.target).name};
  sys.fault.percentile = 99.0;
  return sys;
}

// Replays one fixed reply for every non-option variable; the first
// `failures` calls throw instead.
class ScriptedEvaluator : public SystemEvaluator {
 public:
  ScriptedEvaluator(int failures, std::map<std::string, double> reply)
      : failures_(failures), reply_(std::move(reply)) {}
  std::map<std::string, double> measure(const std::map<std::string, double>&,
                                        int) override {
    ++calls_;
    if (failures_ > 0) {
      --failures_;
      throw Error(ErrorCode::EvaluatorFailure, "scripted failure");
    }
    return reply_;
  }
  int calls() const { return calls_; }

 private:
  int failures_ = 0;
  std::map<std::string, double> reply_;
  int calls_ = 0;
};

std::map<std::string, double> row_reply(const TailSystem& sys, int row) {
  std::map<std::string, double> reply;
  for (int i = 0; i < sys.table.schema.size(); ++i)
    if (sys.table.schema.at(i).kind != VarKind::ConfigOption)
      reply[sys.table.schema.at(i).name] = sys.table.values(row, i);
  return reply;
}

int best_row(const TailSystem& sys) {
  const Direction dir = sys.table.schema.at(sys.target).direction;
  int best = 0;
  for (int r = 1; r < sys.table.rows(); ++r)
    if (is_worse(sys.table.values(best, sys.target),
                 sys.table.values(r, sys.target), dir))
      best = r;
  return best;
}

}  // namespace

TEST_CASE("diagnosis: report shape and determinism on a tail system") {
  TailSystem sys = tail_system(41);
  EngineConfig cfg;
  cfg.seed = 7;
  DiagnosisReport report = diagnose(sys.table, sys.fault, cfg);

  REQUIRE(report.faulty_row >= 0);
  REQUIRE(report.thresholds.size() == 1);
  CHECK(is_worse(sys.table.values(report.faulty_row, sys.target),
                 report.thresholds[0],
                 sys.table.schema.at(sys.target).direction));
  CHECK_FALSE(report.paths.empty());
  for (std::size_t i = 1; i < report.paths.size(); ++i)
    CHECK(report.paths[i - 1].score >= report.paths[i].score);
  for (int v : report.root_causes)
    CHECK(sys.table.schema.at(v).kind == VarKind::ConfigOption);
  for (std::size_t i = 1; i < report.repairs.size(); ++i)
    CHECK(report.repairs[i - 1].ite >= report.repairs[i].ite);

  const std::string json = report_to_json(report, sys.table.schema);
  auto parsed = nlohmann::json::parse(json);
  for (const char* key : {"fault", "graph", "paths", "root_causes", "repairs",
                          "best_repair", "flags", "notes"})
    CHECK(parsed.contains(key));
  CHECK(parsed["fault"]["faulty_row"] == report.faulty_row);

  DiagnosisReport rerun = diagnose(sys.table, sys.fault, cfg);
  CHECK(report_to_json(rerun, sys.table.schema) == json);
}

TEST_CASE("diagnosis: a healthy system reports no fault") {
  Schema s;
  s.variables = {ordinal_var("x", VarKind::ConfigOption, 2),
                 ordinal_var("y", VarKind::NonFunctionalProperty, 2)};
  ObservationTable t;
  t.schema = s;
  t.values.resize(40, 2);
  for (int r = 0; r < 40; ++r) {
    t.values(r, 0) = r % 2;
    t.values(r, 1) = 0;  // the target never moves
  }
  FaultSpec fault;
  fault.targets = {"y"};
  CHECK(throws_code(ErrorCode::NoFaultObserved, [&] { diagnose(t, fault); }));
}

TEST_CASE("diagnosis: explicit faulty rows are validated") {
  TailSystem sys = tail_system(41);
  DiagnosisReport base = diagnose(sys.table, sys.fault);

  FaultSpec pinned = sys.fault;
  pinned.faulty_row_index = base.faulty_row;
  CHECK(diagnose(sys.table, pinned).faulty_row == base.faulty_row);

  pinned.faulty_row_index = sys.table.rows();
  CHECK(throws_code(ErrorCode::InvalidArgument,
                    [&] { diagnose(sys.table, pinned); }));

  pinned.faulty_row_index = best_row(sys);
  CHECK(throws_code(ErrorCode::NoFaultObserved,
                    [&] { diagnose(sys.table, pinned); }));
}

TEST_CASE("repair loop: fixes a tail fault within budget") {
  TailSystem sys = tail_system(41);
  ScmEvaluator evaluator(sys.scm);
  Budget budget;
  budget.max_evaluations = 25;
  budget.repeats = 3;
  RepairSession session = repair_loop(sys.table, sys.fault, evaluator, budget);

  REQUIRE(session.status == SessionStatus::Fixed);
  REQUIRE_FALSE(session.evaluations.empty());
  const EvaluationRecord& last = session.evaluations.back();
  CHECK(last.fixed);
  REQUIRE(last.gains.size() == 1);
  CHECK(last.gains[0] > 0.0);

  // Configurations are never measured twice, and never the faulty one.
  std::set<std::map<std::string, double>> seen;
  for (const EvaluationRecord& rec : session.evaluations) {
    CHECK(seen.insert(rec.assignment).second);
    for (int o : sys.table.schema.indices_of_kind(VarKind::ConfigOption))
      CHECK(rec.assignment.count(sys.table.schema.at(o).name) == 1);
  }
  std::map<std::string, double> factual;
  for (int o : sys.table.schema.indices_of_kind(VarKind::ConfigOption))
    factual[sys.table.schema.at(o).name] =
        sys.table.values(session.report.faulty_row, o);
  CHECK(seen.count(factual) == 0);

  // Non-skipped measurements are appended to the table.
  int appended = 0;
  for (const EvaluationRecord& rec : session.evaluations)
    if (!rec.skipped) ++appended;
  CHECK(session.table.rows() == sys.table.rows() + appended);

  const std::string json = session_to_json(session, sys.table.schema);
  auto parsed = nlohmann::json::parse(json);
  CHECK(parsed["status"] == "fixed");
  CHECK(parsed["evaluations_used"] == session.evaluations.size());
}

TEST_CASE("repair loop: stubborn faults exhaust the budget") {
  TailSystem sys = tail_system(41);
  DiagnosisReport base = diagnose(sys.table, sys.fault);
  ScriptedEvaluator evaluator(0, row_reply(sys, base.faulty_row));
  Budget budget;
  budget.max_evaluations = 1;
  budget.repeats = 1;
  RepairSession session = repair_loop(sys.table, sys.fault, evaluator, budget);
  CHECK(session.status == SessionStatus::BudgetExhausted);
  REQUIRE(session.evaluations.size() == 1);
  CHECK_FALSE(session.evaluations[0].fixed);
  CHECK(session.evaluations[0].gains[0] == doctest::Approx(0.0));
}

TEST_CASE("repair loop: one retry masks a transient evaluator failure") {
  TailSystem sys = tail_system(41);
  ScriptedEvaluator evaluator(1, row_reply(sys, best_row(sys)));
  Budget budget;
  budget.max_evaluations = 3;
  budget.repeats = 1;
  RepairSession session = repair_loop(sys.table, sys.fault, evaluator, budget);
  REQUIRE_FALSE(session.evaluations.empty());
  CHECK_FALSE(session.evaluations[0].skipped);
  CHECK(session.evaluations[0].fixed);
  CHECK(session.status == SessionStatus::Fixed);
  CHECK(evaluator.calls() == 2);
}

TEST_CASE("repair loop: two failures skip the candidate and move on") {
  TailSystem sys = tail_system(41);
  ScriptedEvaluator evaluator(2, row_reply(sys, best_row(sys)));
  Budget budget;
  budget.max_evaluations = 3;
  budget.repeats = 1;
  RepairSession session = repair_loop(sys.table, sys.fault, evaluator, budget);
  REQUIRE(session.evaluations.size() == 2);
  CHECK(session.evaluations[0].skipped);
  CHECK(session.evaluations[0].measured.empty());
  CHECK_FALSE(session.evaluations[1].skipped);
  CHECK(session.evaluations[1].fixed);
  CHECK(session.status == SessionStatus::Fixed);
  CHECK(evaluator.calls() == 3);
}

TEST_CASE("repair loop: budgets must be positive") {
  TailSystem sys = tail_system(41);
  ScmEvaluator evaluator(sys.scm);
  Budget bad;
  bad.max_evaluations = 0;
  CHECK(throws_code(ErrorCode::InvalidArgument, [&] {
    repair_loop(sys.table, sys.fault, evaluator, bad);
  }));
}

TEST_CASE("bootstrap: small grids are enumerated, large ones sampled") {
  Schema s;
  s.variables = {ordinal_var("a", VarKind::ConfigOption, 3),
                 ordinal_var("b", VarKind::ConfigOption, 2),
                 ordinal_var("y", VarKind::NonFunctionalProperty, 2)};

  BootstrapResult all = bootstrap_samples(s, 6, 1);
  CHECK(all.exhausted_space);
  REQUIRE(all.assignments.size() == 6);
  std::set<std::map<std::string, double>> distinct(all.assignments.begin(),
                                                   all.assignments.end());
  CHECK(distinct.size() == 6);
  CHECK(all.assignments.front() ==
        std::map<std::string, double>{{"a", 0.0}, {"b", 0.0}});

  BootstrapResult some = bootstrap_samples(s, 4, 1);
  CHECK_FALSE(some.exhausted_space);
  CHECK(some.assignments.size() == 4);
  CHECK(bootstrap_samples(s, 4, 1).assignments == some.assignments);
}

TEST_CASE("bootstrap: continuous options use bin centres") {
  Schema s;
  s.variables = {ccd::testing::continuous_var("a", VarKind::ConfigOption, 0.0,
                                              10.0),
                 ordinal_var("y", VarKind::NonFunctionalProperty, 2)};
  BootstrapResult r = bootstrap_samples(s, 5, 3, 10);
  REQUIRE(r.assignments.size() == 5);
  for (const auto& assign : r.assignments) {
    const double v = assign.at("a");
    CHECK(std::abs(v - (std::floor(v) + 0.5)) < 1e-12);
    CHECK(v > 0.0);
    CHECK(v < 10.0);
  }
  CHECK(throws_code(ErrorCode::InvalidArgument,
                    [&] { bootstrap_samples(s, 0, 1); }));
  CHECK(throws_code(ErrorCode::InvalidArgument,
                    [&] { bootstrap_samples(s, 5, 1, 1); }));
  Schema no_options;
  no_options.variables = {ordinal_var("y", VarKind::NonFunctionalProperty, 2)};
  CHECK(throws_code(ErrorCode::NoIntervenableOption,
                    [&] { bootstrap_samples(no_options, 5, 1); }));
}

TEST_CASE("subprocess evaluator: JSON over pipes") {
  const char* request_path = "/tmp/ccd_engine_req.json";
  std::remove(request_path);
  SubprocessEvaluator ok(std::string("cat > ") + request_path +
                         "; printf '{\"events\": {\"e\": 1}, "
                         "\"nfps\": {\"y\": 2.5}}'");
  auto measured = ok.measure({{"a", 0.5}}, 3);
  CHECK(measured ==
        std::map<std::string, double>{{"e", 1.0}, {"y", 2.5}});

  std::ifstream in(request_path);
  std::stringstream captured;
  captured << in.rdbuf();
  auto request = nlohmann::json::parse(captured.str());
  CHECK(request["assignment"]["a"] == 0.5);
  CHECK(request["repeat"] == 3);
  std::remove(request_path);

  SubprocessEvaluator failing("exit 3");
  CHECK(throws_code(ErrorCode::EvaluatorFailure,
                    [&] { failing.measure({}, 0); }));
  SubprocessEvaluator garbled("printf 'not json'");
  CHECK(throws_code(ErrorCode::EvaluatorFailure,
                    [&] { garbled.measure({}, 0); }));
  SubprocessEvaluator partial("printf '{\"events\": {}}'");
  CHECK(throws_code(ErrorCode::EvaluatorFailure,
                    [&] { partial.measure({}, 0); }));
  SubprocessEvaluator typed(
      "printf '{\"events\": {\"e\": \"x\"}, \"nfps\": {}}'");
  CHECK(throws_code(ErrorCode::EvaluatorFailure,
                    [&] { typed.measure({}, 0); }));
  CHECK(throws_code(ErrorCode::InvalidArgument,
                    [] { SubprocessEvaluator empty(""); }));
}
