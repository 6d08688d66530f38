#include "ccd/model.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "ccd/error.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "helpers.hpp"

using namespace ccd;
using ccd::testing::code_table;
using ccd::testing::ordinal_var;
using ccd::testing::throws_code;

namespace {

Schema xy_schema() {
  Schema s;
  s.variables = {ordinal_var("x", VarKind::ConfigOption, 2),
                 ordinal_var("y", VarKind::SystemEvent, 2)};
  return s;
}

// x -> y with P(y=1|x=0) = 0.2 and P(y=1|x=1) = 0.7, fitted without
// smoothing so the CPTs are exact.
FittedModel chain_model() {
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 8; ++i) rows.push_back({0, 0});
  for (int i = 0; i < 2; ++i) rows.push_back({0, 1});
  for (int i = 0; i < 3; ++i) rows.push_back({1, 0});
  for (int i = 0; i < 7; ++i) rows.push_back({1, 1});
  DiscreteTable t = discretize(code_table(xy_schema(), rows), 10);
  Admg g(t.schema);
  g.add_directed(0, 1);
  FitConfig cfg;
  cfg.smoothing = 0.0;
  return fit_cpts(t, g, cfg);
}

// Exact interventional expectation by enumerating all visible configs from
// the model's own CPTs; latent-free models only.
double brute_expectation(const FittedModel& model, int target,
                         const std::map<int, int>& do_levels) {
  int n = static_cast<int>(model.data.cardinality.size());
  std::vector<int> code(n, 0);
  double expect = 0.0;
  std::function<void(int, double)> rec = [&](int v, double prob) {
    if (prob == 0.0) return;
    if (v == n) {
      expect += prob * model.data.level_value(target, code[target]);
      return;
    }
    auto it = do_levels.find(v);
    if (it != do_levels.end()) {
      code[v] = it->second;
      rec(v + 1, prob);
      return;
    }
    const NodeCpt& cpt = model.cpts[v];
    long long row = 0;
    for (int p : cpt.parents) row = row * model.data.cardinality[p] + code[p];
    for (int l = 0; l < model.data.cardinality[v]; ++l) {
      code[v] = l;
      rec(v + 1, prob * cpt.table(row, l));
    }
  };
  rec(0, 1.0);
  return expect;
}

}  // namespace

TEST_CASE("fit: counts plus smoothing, exact on a hand table") {
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 3; ++i) rows.push_back({0, 0});
  rows.push_back({0, 1});
  for (int i = 0; i < 4; ++i) rows.push_back({1, 1});
  DiscreteTable t = discretize(code_table(xy_schema(), rows), 10);
  Admg g(t.schema);
  g.add_directed(0, 1);

  FittedModel m = fit_cpts(t, g);  // smoothing 1.0
  REQUIRE(m.cpts.size() == 2);
  CHECK(m.cpts[0].parents.empty());
  CHECK(m.cpts[0].table.rows() == 1);
  CHECK(m.cpts[0].table(0, 0) == doctest::Approx(5.0 / 10.0));
  CHECK(m.cpts[1].parents == std::vector<int>{0});
  CHECK(m.cpts[1].table(0, 0) == doctest::Approx(4.0 / 6.0));
  CHECK(m.cpts[1].table(0, 1) == doctest::Approx(2.0 / 6.0));
  CHECK(m.cpts[1].table(1, 0) == doctest::Approx(1.0 / 6.0));
  CHECK(m.cpts[1].table(1, 1) == doctest::Approx(5.0 / 6.0));
  CHECK(m.latents.empty());
}

TEST_CASE("fit: every CPT row is a distribution") {
  DiscreteTable t = ccd::testing::causal_pair(3);
  Admg g(t.schema);
  g.add_directed(0, 1);
  FittedModel m = fit_cpts(t, g);
  for (const auto& cpt : m.cpts)
    for (int r = 0; r < cpt.table.rows(); ++r)
      CHECK(cpt.table.row(r).sum() == doctest::Approx(1.0));
}

TEST_CASE("fit: rejects a graph that does not match the table") {
  DiscreteTable t = ccd::testing::causal_pair(3);
  Admg g(xy_schema());  // right size, fine
  Schema three;
  three.variables = {ordinal_var("a", VarKind::ConfigOption, 2),
                     ordinal_var("b", VarKind::ConfigOption, 2),
                     ordinal_var("c", VarKind::ConfigOption, 2)};
  Admg wrong(three);
  CHECK(throws_code(ErrorCode::InvalidArgument,
                    [&] { fit_cpts(t, wrong, FitConfig{}); }));
}

TEST_CASE("intervention: truncated factorization on the hand chain") {
  FittedModel m = chain_model();
  CHECK(interventional_expectation(m, 1, {{0, 0}}) == doctest::Approx(0.2));
  CHECK(interventional_expectation(m, 1, {{0, 1}}) == doctest::Approx(0.7));
  CHECK(interventional_expectation(m, 1, {}) == doctest::Approx(0.45));
  // Intervening on the target pins it to the level value.
  CHECK(interventional_expectation(m, 1, {{1, 1}}) == doctest::Approx(1.0));
  CHECK(interventional_expectation(m, 0, {{1, 1}}) == doctest::Approx(0.5));

  CHECK(throws_code(ErrorCode::ValueOutOfDomain, [&] {
    interventional_expectation(m, 1, {{0, 5}});
  }));
  CHECK(throws_code(ErrorCode::InvalidArgument, [&] {
    interventional_expectation(m, 7, {});
  }));
}

TEST_CASE("intervention: ace on the hand chain") {
  FittedModel m = chain_model();
  CHECK(ace(m, 1, 0) == doctest::Approx(0.5));
  // The option does not listen to the event.
  CHECK(ace(m, 0, 1) == doctest::Approx(0.0));
  CHECK(throws_code(ErrorCode::InvalidArgument, [&] { ace(m, 1, 1); }));
}

TEST_CASE("intervention: variable elimination agrees with enumeration") {
  // Random four-node DAGs with random tables, checked exhaustively.
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    Schema s;
    for (int v = 0; v < 4; ++v)
      s.variables.push_back(ordinal_var("v" + std::to_string(v),
                                        VarKind::SystemEvent,
                                        2 + static_cast<int>(rng() % 2)));
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 300; ++i) {
      std::vector<int> row;
      for (int v = 0; v < 4; ++v)
        row.push_back(static_cast<int>(
            rng() % static_cast<unsigned>(s.variables[v].level_count())));
      rows.push_back(row);
    }
    DiscreteTable t = discretize(code_table(s, rows), 10);
    Admg g(s);
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        if (rng() % 2) g.add_directed(a, b);
    FittedModel m = fit_cpts(t, g);

    for (int target = 0; target < 4; ++target) {
      std::map<int, int> nothing;
      CHECK(interventional_expectation(m, target, nothing) ==
            doctest::Approx(brute_expectation(m, target, nothing))
                .epsilon(1e-10));
      int v = static_cast<int>(rng() % 4);
      std::map<int, int> one = {
          {v, static_cast<int>(rng() % static_cast<unsigned>(
                                           s.variables[v].level_count()))}};
      CHECK(interventional_expectation(m, target, one) ==
            doctest::Approx(brute_expectation(m, target, one)).epsilon(1e-10));
    }
  }
}

TEST_CASE("marginals: mixture over parents, exact on the hand chain") {
  FittedModel m = chain_model();
  Eigen::VectorXd px = marginal_distribution(m, 0);
  CHECK(px(0) == doctest::Approx(0.5));
  Eigen::VectorXd py = marginal_distribution(m, 1);
  CHECK(py(0) == doctest::Approx(0.55));
  CHECK(py(1) == doctest::Approx(0.45));
}

TEST_CASE("em: a hidden coin pair fits with a monotone objective") {
  DiscreteTable t = ccd::testing::confounded_pair(11);
  Admg g(t.schema);
  g.add_bidirected(0, 1);
  FitConfig cfg;
  cfg.seed = 5;
  FittedModel m = fit_cpts(t, g, cfg);

  REQUIRE(m.latents.size() == 1);
  CHECK(m.latents[0].members == std::vector<int>{0, 1});
  CHECK(m.latents[0].cardinality == 4);  // max member level count
  CHECK(m.latents[0].prior.sum() == doctest::Approx(1.0));
  CHECK(m.cpts[0].latent == 0);
  CHECK(m.cpts[1].latent == 0);

  REQUIRE(m.em_objective.size() == 1);
  const auto& trace = m.em_objective[0];
  REQUIRE(trace.size() >= 2);
  for (size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] >= trace[i - 1] - 1e-7);

  // The mixture reproduces the observed marginals.
  Eigen::VectorXd px = marginal_distribution(m, 0);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
  for (int r = 0; r < t.rows(); ++r) counts(t.codes(r, 0)) += 1.0;
  counts /= t.rows();
  for (int l = 0; l < 4; ++l) CHECK(std::fabs(px(l) - counts(l)) < 0.05);
}

TEST_CASE("em: seeded runs are reproducible") {
  DiscreteTable t = ccd::testing::confounded_pair(13);
  Admg g(t.schema);
  g.add_bidirected(0, 1);
  FitConfig cfg;
  cfg.seed = 42;
  FittedModel a = fit_cpts(t, g, cfg);
  FittedModel b = fit_cpts(t, g, cfg);
  CHECK(a.cpts[0].table == b.cpts[0].table);
  CHECK(a.cpts[1].table == b.cpts[1].table);
  CHECK(a.latents[0].prior == b.latents[0].prior);
}
