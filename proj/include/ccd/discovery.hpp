#pragma once

#include "ccd/ci_tests.hpp"
#include "ccd/graph.hpp"
#include "ccd/table.hpp"

namespace ccd {

struct DiscoveryConfig {
  CiConfig ci;
  int max_cond_size = 3;
  // Second skeleton pass conditioning on possible-d-separating sets. With
  // tier knowledge and small graphs the extra pruning rarely changes the
  // result, so it is off unless asked for.
  bool possible_dsep = false;
};

// All pairs connected circle-circle. Throws TooFewVariables below 2 nodes.
Pag build_complete_graph(const Schema& schema);

// Level-wise pruning of the complete graph. Edge removals commit at the end
// of each level, so the outcome does not depend on edge iteration order
// within a level. Sepsets are recorded for every removed pair.
Pag learn_skeleton(const DiscreteTable& table, const DiscoveryConfig& cfg = {});

// Unshielded triple x - z - y becomes a collider when z is outside the
// recorded sepset of (x, y). Only the marks at z change.
Pag orient_v_structures(Pag pag);

// Optional full-FCI refinement: re-test remaining edges given subsets of
// possible-d-separating sets, then rebuild circles and colliders.
Pag apply_possible_dsep(Pag pag, const DiscreteTable& table,
                        const DiscoveryConfig& cfg);

// Tier background knowledge plus the standard orientation rules for partial
// ancestral graphs, run to a fixed point. Conflicting demands are logged in
// pag.notes; the earlier mark wins.
Pag apply_fci_rules(Pag pag, const TierKnowledge& knowledge);

// The whole discovery chain up to (not including) entropic resolution.
Pag discover_pag(const DiscreteTable& table, const DiscoveryConfig& cfg,
                 const TierKnowledge& knowledge);

}  // namespace ccd
