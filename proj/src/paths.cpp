#include "ccd/paths.hpp"

#include <algorithm>
#include <map>

#include "ccd/error.hpp"

namespace ccd {
namespace {

void walk_back(const Admg& graph, const Schema& schema, int node,
               std::vector<int>& suffix, std::vector<CausalPath>& out) {
  const auto parents = graph.parents(node);
  if (parents.empty() && suffix.size() > 1) {
    CausalPath path;
    path.nodes.assign(suffix.rbegin(), suffix.rend());
    out.push_back(std::move(path));
    return;
  }
  for (int p : parents) {
    if (schema.at(p).kind == VarKind::NonFunctionalProperty) continue;
    if (std::find(suffix.begin(), suffix.end(), p) != suffix.end()) continue;
    suffix.push_back(p);
    walk_back(graph, schema, p, suffix, out);
    suffix.pop_back();
  }
}

}  // namespace

std::vector<CausalPath> extract_paths(const Admg& graph, const Schema& schema,
                                      int nfp) {
  if (nfp < 0 || nfp >= graph.node_count())
    throw Error(ErrorCode::InvalidArgument, "node index out of range");
  if (schema.at(nfp).kind != VarKind::NonFunctionalProperty)
    throw Error(ErrorCode::TargetNotInSchema,
                "path target '" + schema.at(nfp).name +
                    "' is not a non functional property");
  std::vector<CausalPath> out;
  std::vector<int> suffix{nfp};
  walk_back(graph, schema, nfp, suffix, out);
  std::sort(out.begin(), out.end(), [](const CausalPath& a, const CausalPath& b) {
    return a.nodes < b.nodes;
  });
  return out;
}

double path_ace(const FittedModel& model, const std::vector<int>& nodes) {
  if (nodes.size() < 2)
    throw Error(ErrorCode::InvalidArgument, "a path needs at least one edge");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
    total += ace(model, nodes[i + 1], nodes[i]);
  return total / (nodes.size() - 1);
}

std::vector<CausalPath> rank_paths(const FittedModel& model, const Schema& schema,
                                   int nfp, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  std::vector<CausalPath> paths = extract_paths(model.graph, schema, nfp);
  std::map<std::pair<int, int>, double> edge_cache;
  for (CausalPath& path : paths) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
      const std::pair<int, int> edge{path.nodes[i], path.nodes[i + 1]};
      auto it = edge_cache.find(edge);
      if (it == edge_cache.end())
        it = edge_cache.emplace(edge, ace(model, edge.second, edge.first)).first;
      total += it->second;
    }
    path.score = total / (path.nodes.size() - 1);
  }
  std::sort(paths.begin(), paths.end(), [](const CausalPath& a, const CausalPath& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.nodes < b.nodes;
  });
  if (static_cast<int>(paths.size()) > k) paths.resize(k);
  return paths;
}

}  // namespace ccd
