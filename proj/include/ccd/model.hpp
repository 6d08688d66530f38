#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <vector>

#include "ccd/graph.hpp"
#include "ccd/table.hpp"

namespace ccd {

// Conditional probability table of one node given its directed parents plus,
// for nodes inside a bidirected component, the shared latent selector.
// Row index: parent configuration packed with the last parent fastest, then
// the latent value fastest of all when present.
struct NodeCpt {
  int node = -1;
  std::vector<int> parents;      // schema indices, ascending
  int latent = -1;               // index into FittedModel::latents, -1 if none
  Eigen::MatrixXd table;         // rows: configurations, cols: node levels
};

struct LatentFactor {
  std::vector<int> members;      // bidirected component, ascending
  int cardinality = 0;           // max level count among members
  Eigen::VectorXd prior;
};

struct FittedModel {
  DiscreteTable data;            // the table the model was fitted on
  Admg graph;
  std::vector<NodeCpt> cpts;     // one per node, node order
  std::vector<LatentFactor> latents;
  // Penalized log-likelihood per EM iteration, one trace per component.
  std::vector<std::vector<double>> em_objective;

  int cardinality(int node) const { return data.cardinality[node]; }
};

struct FitConfig {
  double smoothing = 1.0;        // additive count per CPT cell
  int em_iterations = 50;
  std::uint64_t seed = 0;
};

// Maximum likelihood CPTs with additive smoothing. Bidirected components get
// one latent mixture each, fitted by seeded EM; the tracked objective is the
// data log-likelihood plus the smoothing prior and never decreases.
FittedModel fit_cpts(const DiscreteTable& table, const Admg& graph,
                     const FitConfig& cfg = {});

// E[target | do(assignment)] by truncated factorization and exact variable
// elimination over the ancestral set of the target. Expectations run over
// bin midpoints for originally continuous variables and over the ordinal
// level index for discrete ones.
double interventional_expectation(const FittedModel& model, int target,
                                  const std::map<int, int>& do_levels);

// Average causal effect of x on z: mean absolute change of E[z | do(x)]
// across consecutive levels of x's ordered domain.
double ace(const FittedModel& model, int z, int x);

// P(node levels) under no intervention, exact; used by tests.
Eigen::VectorXd marginal_distribution(const FittedModel& model, int node);

}  // namespace ccd
