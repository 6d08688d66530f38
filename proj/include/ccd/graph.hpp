#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ccd/schema.hpp"

namespace ccd {

enum class Mark { Tail, Arrow, Circle };

const char* mark_name(Mark mark);

struct MixedEdge {
  int a = 0;
  int b = 0;
  Mark mark_a = Mark::Circle;  // endpoint mark drawn at a
  Mark mark_b = Mark::Circle;  // endpoint mark drawn at b
};

// Tier indices per node, smaller means earlier. Built from variable kinds:
// options precede events precede properties.
struct TierKnowledge {
  std::vector<int> tier;

  static TierKnowledge from_schema(const Schema& schema);
  static TierKnowledge none(int node_count) {
    return TierKnowledge{std::vector<int>(node_count, 0)};
  }
};

// Partial ancestral graph. Endpoint marks live in a dense matrix: entry
// (u, v) is the mark at u on the edge between u and v, -1 when the edge is
// absent. Sepsets are recorded for every pair removed during pruning.
class Pag {
 public:
  Pag() = default;
  explicit Pag(const Schema& schema);

  const Schema& schema() const { return schema_; }
  int node_count() const { return static_cast<int>(marks_.rows()); }

  bool is_adjacent(int u, int v) const { return marks_(u, v) >= 0; }
  Mark mark_at(int u, int v) const;
  void set_mark(int u, int v, Mark mark);

  void add_edge(int u, int v, Mark mark_u = Mark::Circle,
                Mark mark_v = Mark::Circle);
  void remove_edge(int u, int v);

  std::vector<int> adjacent(int u) const;
  int edge_count() const;
  // Edges with a < b, ordered by (a, b).
  std::vector<MixedEdge> edges() const;

  void set_sepset(int u, int v, std::vector<int> sepset);
  bool has_sepset(int u, int v) const;
  const std::vector<int>& sepset(int u, int v) const;
  bool in_sepset(int node, int u, int v) const;

  std::vector<std::string> notes;

 private:
  Schema schema_;
  Eigen::MatrixXi marks_;
  std::map<std::pair<int, int>, std::vector<int>> sepsets_;
};

// Acyclic directed mixed graph: the fully resolved output of discovery.
class Admg {
 public:
  Admg() = default;
  explicit Admg(const Schema& schema);

  const Schema& schema() const { return schema_; }
  int node_count() const { return static_cast<int>(directed_.rows()); }

  void add_directed(int from, int to);
  void add_bidirected(int u, int v);
  bool has_directed(int from, int to) const { return directed_(from, to) != 0; }
  bool has_bidirected(int u, int v) const { return bidirected_(u, v) != 0; }
  bool is_adjacent(int u, int v) const;

  std::vector<int> parents(int v) const;
  std::vector<int> children(int v) const;
  std::vector<int> bidirected_neighbors(int v) const;
  std::vector<std::pair<int, int>> directed_edges() const;
  std::vector<std::pair<int, int>> bidirected_edges() const;

  // Ancestors of the seed set through directed edges, seeds included.
  std::vector<int> ancestral_set(const std::vector<int>& seeds) const;
  bool directed_path_exists(int from, int to) const;
  bool is_acyclic() const;
  std::vector<int> topological_order() const;

  // Connected components of the bidirected part, smallest index first;
  // singletons are omitted.
  std::vector<std::vector<int>> bidirected_components() const;

  std::vector<std::string> notes;

 private:
  Schema schema_;
  Eigen::MatrixXi directed_;
  Eigen::MatrixXi bidirected_;
};

// Shared export format: {"nodes": [...], "edges": [{a, b, mark_a, mark_b}]}.
std::string graph_to_json(const Pag& pag);
std::string graph_to_json(const Admg& admg);
std::string graph_to_dot(const Pag& pag);
std::string graph_to_dot(const Admg& admg);

}  // namespace ccd
