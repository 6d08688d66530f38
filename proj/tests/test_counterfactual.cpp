#include "ccd/counterfactual.hpp"

#include <cmath>
#include <map>

#include "ccd/error.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "helpers.hpp"

using namespace ccd;
using ccd::testing::code_table;
using ccd::testing::continuous_var;
using ccd::testing::ordinal_var;
using ccd::testing::throws_code;

namespace {

Schema xy_schema() {
  Schema s;
  s.variables = {ordinal_var("x", VarKind::ConfigOption, 2),
                 ordinal_var("y", VarKind::NonFunctionalProperty, 2)};
  return s;
}

// x uniform, P(y = x | x) = 0.75, fitted exactly from sixteen rows.
FittedModel noisy_chain() {
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 6; ++i) rows.push_back({0, 0});
  for (int i = 0; i < 2; ++i) rows.push_back({0, 1});
  for (int i = 0; i < 2; ++i) rows.push_back({1, 0});
  for (int i = 0; i < 6; ++i) rows.push_back({1, 1});
  DiscreteTable t = discretize(code_table(xy_schema(), rows), 10);
  Admg g(t.schema);
  g.add_directed(0, 1);
  FitConfig cfg;
  cfg.smoothing = 0.0;
  return fit_cpts(t, g, cfg);
}

OutcomeSpec high_y_is_bad() {
  OutcomeSpec spec;
  spec.targets = {1};
  spec.threshold_raw = {0.5};
  spec.threshold_code = {1};
  spec.direction = {Direction::LowerIsBetter};
  return spec;
}

}  // namespace

TEST_CASE("outcome spec: discrete thresholds scan past interpolated values") {
  Schema s;
  s.variables = {ordinal_var("opt", VarKind::ConfigOption, 2),
                 ordinal_var("lat", VarKind::NonFunctionalProperty, 6)};
  s.variables[1].levels = {20, 40, 80, 160, 320, 640};
  s.variables[1].labels = {"20", "40", "80", "160", "320", "640"};
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 99; ++i) rows.push_back({i % 2, i % 4});
  rows.push_back({1, 5});
  ObservationTable raw = code_table(s, rows);
  for (int r = 0; r < raw.rows(); ++r)
    raw.values(r, 1) = s.variables[1].levels[static_cast<int>(raw.values(r, 1))];
  DiscreteTable d = discretize(raw, 10);

  FaultSpec fault;
  fault.targets = {"lat"};
  fault.percentile = 99.0;
  OutcomeSpec spec = make_outcome_spec(raw, d, fault);
  REQUIRE(spec.targets == std::vector<int>{1});
  // The 99th percentile lands at 164.8, between the 160 and 320 levels.
  CHECK(spec.threshold_raw[0] == doctest::Approx(164.8));
  CHECK(spec.threshold_code[0] == 4);
  CHECK(outcome_worse(spec, 0, 5));
  CHECK(outcome_worse(spec, 0, 4));
  CHECK_FALSE(outcome_worse(spec, 0, 3));
}

TEST_CASE("outcome spec: higher-is-better mirrors the scan") {
  Schema s;
  s.variables = {ordinal_var("opt", VarKind::ConfigOption, 2),
                 ordinal_var("rate", VarKind::NonFunctionalProperty, 4)};
  s.variables[1].direction = Direction::HigherIsBetter;
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 100; ++i) rows.push_back({i % 2, i == 0 ? 0 : 1 + i % 3});
  ObservationTable raw = code_table(s, rows);
  DiscreteTable d = discretize(raw, 10);

  FaultSpec fault;
  fault.targets = {"rate"};
  fault.percentile = 99.0;
  OutcomeSpec spec = make_outcome_spec(raw, d, fault);
  CHECK(spec.direction[0] == Direction::HigherIsBetter);
  // Worse means at or below the largest level under the threshold.
  CHECK(outcome_worse(spec, 0, 0));
  CHECK_FALSE(outcome_worse(spec, 0, 3));
}

TEST_CASE("outcome spec: continuous targets use the threshold's bin") {
  Schema s;
  s.variables = {ordinal_var("opt", VarKind::ConfigOption, 2),
                 continuous_var("lat", VarKind::NonFunctionalProperty, 0.0,
                                100.0)};
  ObservationTable raw;
  raw.schema = s;
  raw.values.resize(100, 2);
  for (int r = 0; r < 100; ++r) {
    raw.values(r, 0) = r % 2;
    raw.values(r, 1) = r;
  }
  DiscreteTable d = discretize(raw, 10);
  FaultSpec fault;
  fault.targets = {"lat"};
  OutcomeSpec spec = make_outcome_spec(raw, d, fault);
  CHECK(spec.threshold_raw[0] == doctest::Approx(98.01));
  CHECK(spec.threshold_code[0] == 9);
  CHECK(outcome_worse(spec, 0, 9));
  CHECK_FALSE(outcome_worse(spec, 0, 8));
}

TEST_CASE("twin worlds: abduction reuses the factual noise exactly") {
  FittedModel m = noisy_chain();
  // Factual (x=1, y=1). The shared noise atom that produced y=1 under x=1
  // maps to y=1 with conditional probability one third under x=0.
  std::vector<int> factual = {1, 1};
  IteResult r = ite(m, {{0, 0}}, factual, high_y_is_bad());
  CHECK_FALSE(r.sampled);
  CHECK(r.p_worse == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(r.p_better == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CfResult cf = counterfactual_outcome_probability(
      m, factual, {{0, 0}}, [](const std::vector<int>& twin) {
        return twin[1] == 0;
      });
  CHECK(cf.probability == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK_FALSE(cf.sampled);
}

TEST_CASE("twin worlds: repeating the factual assignment changes nothing") {
  FittedModel m = noisy_chain();
  std::vector<int> factual = {1, 1};
  IteResult r = ite(m, {{0, 1}}, factual, high_y_is_bad());
  CHECK(r.p_worse == doctest::Approx(1.0));
  CHECK(r.value == doctest::Approx(-1.0));
  CHECK_FALSE(r.sampled);
}

TEST_CASE("twin worlds: a deterministic mechanism flips with its cause") {
  // y = x exactly: the counterfactual is certain.
  std::vector<std::vector<int>> rows = {{0, 0}, {0, 0}, {1, 1}, {1, 1}};
  DiscreteTable t = discretize(code_table(xy_schema(), rows), 10);
  Admg g(t.schema);
  g.add_directed(0, 1);
  FitConfig fc;
  fc.smoothing = 0.0;
  FittedModel m = fit_cpts(t, g, fc);

  IteResult r = ite(m, {{0, 0}}, {1, 1}, high_y_is_bad());
  CHECK(r.value == doctest::Approx(1.0));
  CHECK(r.p_better == doctest::Approx(1.0));
}

TEST_CASE("twin worlds: sampling kicks in past the enumeration cap") {
  FittedModel m = noisy_chain();
  CfConfig cfg;
  cfg.enumeration_cap = 1;
  cfg.samples = 40000;
  cfg.seed = 9;
  IteResult r = ite(m, {{0, 0}}, {1, 1}, high_y_is_bad(), cfg);
  CHECK(r.sampled);
  CHECK(r.value == doctest::Approx(1.0 / 3.0).epsilon(0.05));

  IteResult again = ite(m, {{0, 0}}, {1, 1}, high_y_is_bad(), cfg);
  CHECK(again.value == r.value);  // same seed, same draw
}

TEST_CASE("twin worlds: validation of factual rows and interventions") {
  FittedModel m = noisy_chain();
  OutcomeSpec spec = high_y_is_bad();
  CHECK(throws_code(ErrorCode::IncompleteAssignment,
                    [&] { ite(m, {{0, 0}}, {1}, spec); }));
  CHECK(throws_code(ErrorCode::ValueOutOfDomain,
                    [&] { ite(m, {{0, 0}}, {1, 7}, spec); }));
  CHECK(throws_code(ErrorCode::ValueOutOfDomain,
                    [&] { ite(m, {{0, 5}}, {1, 1}, spec); }));
  // Repairs may only touch configuration options.
  CHECK(throws_code(ErrorCode::InvalidArgument,
                    [&] { ite(m, {{1, 0}}, {1, 1}, spec); }));
}

TEST_CASE("repair set: full cross product under the cap") {
  Schema s;
  s.variables = {ordinal_var("a", VarKind::ConfigOption, 3),
                 ordinal_var("b", VarKind::ConfigOption, 2),
                 ordinal_var("y", VarKind::NonFunctionalProperty, 2)};
  std::vector<std::vector<int>> rows;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 2; ++b)
      for (int rep = 0; rep < 3; ++rep) rows.push_back({a, b, (a + b) % 2});
  DiscreteTable t = discretize(code_table(s, rows), 10);
  Admg g(s);
  g.add_directed(0, 2);
  g.add_directed(1, 2);
  FittedModel m = fit_cpts(t, g);

  std::vector<CausalPath> paths;
  paths.push_back({{0, 2}, 0.0});
  paths.push_back({{1, 2}, 0.0});

  RepairSet full = generate_repair_set(paths, m, {2}, 10000);
  CHECK_FALSE(full.capped);
  CHECK(full.candidates.size() == 6);
  for (const auto& r : full.candidates) CHECK(r.assignment.size() == 2);

  RepairSet capped = generate_repair_set(paths, m, {2}, 5);
  CHECK(capped.capped);
  // Five single-option assignments plus the three-by-two pair block.
  CHECK(capped.candidates.size() == 11);
  int singles = 0, pairs = 0;
  for (const auto& r : capped.candidates) {
    if (r.assignment.size() == 1) ++singles;
    if (r.assignment.size() == 2) ++pairs;
  }
  CHECK(singles == 5);
  CHECK(pairs == 6);
}

TEST_CASE("repair set: paths without options are rejected") {
  Schema s;
  s.variables = {ordinal_var("evt", VarKind::SystemEvent, 2),
                 ordinal_var("y", VarKind::NonFunctionalProperty, 2)};
  std::vector<std::vector<int>> rows = {{0, 0}, {1, 1}, {0, 1}, {1, 0}};
  DiscreteTable t = discretize(code_table(s, rows), 10);
  Admg g(s);
  g.add_directed(0, 1);
  FittedModel m = fit_cpts(t, g);
  std::vector<CausalPath> paths;
  paths.push_back({{0, 1}, 0.0});
  CHECK(throws_code(ErrorCode::NoIntervenableOption,
                    [&] { generate_repair_set(paths, m, {1}, 100); }));
}

TEST_CASE("repair order: effect first, then fewer changes, then names") {
  std::vector<int> factual = {1, 1, 0};
  auto mk = [](std::map<int, int> a, double ite_value) {
    Repair r;
    r.assignment = std::move(a);
    r.ite = ite_value;
    return r;
  };
  std::vector<Repair> repairs = {
      mk({{0, 0}}, 0.2),          // one change
      mk({{0, 1}, {1, 0}}, 0.5),  // one change (option 0 kept)
      mk({{0, 0}, {1, 0}}, 0.5),  // two changes
      mk({{1, 0}}, 0.5),          // one change, shorter assignment
      mk({{0, 0}}, 0.9),
  };
  sort_repairs(repairs, factual);
  CHECK(repairs[0].ite == 0.9);
  CHECK(repairs[1].assignment == std::map<int, int>{{0, 1}, {1, 0}});
  CHECK(repairs[2].assignment == std::map<int, int>{{1, 0}});
  CHECK(repairs[3].assignment == std::map<int, int>{{0, 0}, {1, 0}});
  CHECK(repairs[4].ite == 0.2);
}
