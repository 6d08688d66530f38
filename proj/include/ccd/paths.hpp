#pragma once

#include <vector>

#include "ccd/model.hpp"

namespace ccd {

struct CausalPath {
  std::vector<int> nodes;  // root first, queried property last
  double score = 0.0;      // mean edge ACE along the path
};

// Every directed path ending at `nfp` whose first node has no directed
// parents and whose other nodes before the terminal are options or events.
// Paths are returned in lexicographic node order.
std::vector<CausalPath> extract_paths(const Admg& graph, const Schema& schema,
                                      int nfp);

// Mean ACE over the path's edges, cause before effect.
double path_ace(const FittedModel& model, const std::vector<int>& nodes);

// Scored paths sorted by descending score, ties broken lexicographically,
// truncated to the k best.
std::vector<CausalPath> rank_paths(const FittedModel& model, const Schema& schema,
                                   int nfp, int k);

}  // namespace ccd
