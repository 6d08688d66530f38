#include "ccd/graph.hpp"

#include <algorithm>
#include <deque>

#include "ccd/error.hpp"
#include "json.hpp"

namespace ccd {

namespace {

using nlohmann::ordered_json;

std::pair<int, int> ordered_pair(int u, int v) {
  return u < v ? std::make_pair(u, v) : std::make_pair(v, u);
}

const char* dot_arrow(Mark mark) {
  switch (mark) {
    case Mark::Tail: return "none";
    case Mark::Arrow: return "normal";
    case Mark::Circle: return "odot";
  }
  return "none";
}

std::string edges_to_json(const Schema& schema,
                          const std::vector<MixedEdge>& edges) {
  ordered_json doc;
  doc["nodes"] = ordered_json::array();
  for (const auto& v : schema.variables) doc["nodes"].push_back(v.name);
  doc["edges"] = ordered_json::array();
  for (const auto& e : edges) {
    ordered_json je;
    je["a"] = schema.at(e.a).name;
    je["b"] = schema.at(e.b).name;
    je["mark_a"] = mark_name(e.mark_a);
    je["mark_b"] = mark_name(e.mark_b);
    doc["edges"].push_back(je);
  }
  return doc.dump(2) + "\n";
}

std::string edges_to_dot(const Schema& schema,
                         const std::vector<MixedEdge>& edges) {
  std::string out = "digraph g {\n";
  for (const auto& v : schema.variables) out += "  \"" + v.name + "\";\n";
  for (const auto& e : edges) {
    out += "  \"" + schema.at(e.a).name + "\" -> \"" + schema.at(e.b).name +
           "\" [dir=both, arrowtail=" + dot_arrow(e.mark_a) +
           ", arrowhead=" + dot_arrow(e.mark_b) + "];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace

const char* mark_name(Mark mark) {
  switch (mark) {
    case Mark::Tail: return "tail";
    case Mark::Arrow: return "arrow";
    case Mark::Circle: return "circle";
  }
  return "?";
}

TierKnowledge TierKnowledge::from_schema(const Schema& schema) {
  TierKnowledge k;
  for (const auto& v : schema.variables) k.tier.push_back(tier_of(v.kind));
  return k;
}

Pag::Pag(const Schema& schema) : schema_(schema) {
  int n = schema.size();
  marks_ = Eigen::MatrixXi::Constant(n, n, -1);
}

Mark Pag::mark_at(int u, int v) const {
  if (marks_(u, v) < 0)
    throw Error(ErrorCode::InvalidArgument, "mark_at on a missing edge");
  return static_cast<Mark>(marks_(u, v));
}

void Pag::set_mark(int u, int v, Mark mark) {
  if (marks_(u, v) < 0)
    throw Error(ErrorCode::InvalidArgument, "set_mark on a missing edge");
  marks_(u, v) = static_cast<int>(mark);
}

void Pag::add_edge(int u, int v, Mark mark_u, Mark mark_v) {
  if (u == v) throw Error(ErrorCode::InvalidArgument, "self loop");
  marks_(u, v) = static_cast<int>(mark_u);
  marks_(v, u) = static_cast<int>(mark_v);
}

void Pag::remove_edge(int u, int v) {
  marks_(u, v) = -1;
  marks_(v, u) = -1;
}

std::vector<int> Pag::adjacent(int u) const {
  std::vector<int> out;
  for (int v = 0; v < node_count(); ++v)
    if (v != u && is_adjacent(u, v)) out.push_back(v);
  return out;
}

int Pag::edge_count() const {
  int count = 0;
  for (int u = 0; u < node_count(); ++u)
    for (int v = u + 1; v < node_count(); ++v)
      if (is_adjacent(u, v)) ++count;
  return count;
}

std::vector<MixedEdge> Pag::edges() const {
  std::vector<MixedEdge> out;
  for (int u = 0; u < node_count(); ++u)
    for (int v = u + 1; v < node_count(); ++v)
      if (is_adjacent(u, v))
        out.push_back({u, v, mark_at(u, v), mark_at(v, u)});
  return out;
}

void Pag::set_sepset(int u, int v, std::vector<int> sepset) {
  std::sort(sepset.begin(), sepset.end());
  sepsets_[ordered_pair(u, v)] = std::move(sepset);
}

bool Pag::has_sepset(int u, int v) const {
  return sepsets_.count(ordered_pair(u, v)) > 0;
}

const std::vector<int>& Pag::sepset(int u, int v) const {
  auto it = sepsets_.find(ordered_pair(u, v));
  if (it == sepsets_.end())
    throw Error(ErrorCode::InvalidArgument, "no sepset recorded for pair");
  return it->second;
}

bool Pag::in_sepset(int node, int u, int v) const {
  const auto& s = sepset(u, v);
  return std::binary_search(s.begin(), s.end(), node);
}

Admg::Admg(const Schema& schema) : schema_(schema) {
  int n = schema.size();
  directed_ = Eigen::MatrixXi::Zero(n, n);
  bidirected_ = Eigen::MatrixXi::Zero(n, n);
}

void Admg::add_directed(int from, int to) {
  if (from == to) throw Error(ErrorCode::InvalidArgument, "self loop");
  directed_(from, to) = 1;
}

void Admg::add_bidirected(int u, int v) {
  if (u == v) throw Error(ErrorCode::InvalidArgument, "self loop");
  bidirected_(u, v) = 1;
  bidirected_(v, u) = 1;
}

bool Admg::is_adjacent(int u, int v) const {
  return directed_(u, v) || directed_(v, u) || bidirected_(u, v);
}

std::vector<int> Admg::parents(int v) const {
  std::vector<int> out;
  for (int u = 0; u < node_count(); ++u)
    if (directed_(u, v)) out.push_back(u);
  return out;
}

std::vector<int> Admg::children(int v) const {
  std::vector<int> out;
  for (int u = 0; u < node_count(); ++u)
    if (directed_(v, u)) out.push_back(u);
  return out;
}

std::vector<int> Admg::bidirected_neighbors(int v) const {
  std::vector<int> out;
  for (int u = 0; u < node_count(); ++u)
    if (bidirected_(v, u)) out.push_back(u);
  return out;
}

std::vector<std::pair<int, int>> Admg::directed_edges() const {
  std::vector<std::pair<int, int>> out;
  for (int u = 0; u < node_count(); ++u)
    for (int v = 0; v < node_count(); ++v)
      if (directed_(u, v)) out.emplace_back(u, v);
  return out;
}

std::vector<std::pair<int, int>> Admg::bidirected_edges() const {
  std::vector<std::pair<int, int>> out;
  for (int u = 0; u < node_count(); ++u)
    for (int v = u + 1; v < node_count(); ++v)
      if (bidirected_(u, v)) out.emplace_back(u, v);
  return out;
}

std::vector<int> Admg::ancestral_set(const std::vector<int>& seeds) const {
  std::vector<char> in_set(node_count(), 0);
  std::deque<int> queue;
  for (int s : seeds)
    if (!in_set[s]) {
      in_set[s] = 1;
      queue.push_back(s);
    }
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int p : parents(v))
      if (!in_set[p]) {
        in_set[p] = 1;
        queue.push_back(p);
      }
  }
  std::vector<int> out;
  for (int v = 0; v < node_count(); ++v)
    if (in_set[v]) out.push_back(v);
  return out;
}

bool Admg::directed_path_exists(int from, int to) const {
  auto ancestors = ancestral_set({to});
  return std::binary_search(ancestors.begin(), ancestors.end(), from);
}

bool Admg::is_acyclic() const {
  return static_cast<int>(topological_order().size()) == node_count();
}

std::vector<int> Admg::topological_order() const {
  std::vector<int> indegree(node_count(), 0);
  for (const auto& [u, v] : directed_edges()) {
    (void)u;
    ++indegree[v];
  }
  std::deque<int> ready;
  for (int v = 0; v < node_count(); ++v)
    if (indegree[v] == 0) ready.push_back(v);
  std::vector<int> order;
  while (!ready.empty()) {
    int v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (int c : children(v))
      if (--indegree[c] == 0) ready.push_back(c);
  }
  return order;  // shorter than node_count when the directed part has a cycle
}

std::vector<std::vector<int>> Admg::bidirected_components() const {
  std::vector<int> component(node_count(), -1);
  std::vector<std::vector<int>> out;
  for (int v = 0; v < node_count(); ++v) {
    if (component[v] >= 0 || bidirected_neighbors(v).empty()) continue;
    std::vector<int> members;
    std::deque<int> queue{v};
    component[v] = static_cast<int>(out.size());
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      members.push_back(u);
      for (int w : bidirected_neighbors(u))
        if (component[w] < 0) {
          component[w] = component[v];
          queue.push_back(w);
        }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

std::string graph_to_json(const Pag& pag) {
  return edges_to_json(pag.schema(), pag.edges());
}

std::string graph_to_json(const Admg& admg) {
  std::vector<MixedEdge> edges;
  for (const auto& [u, v] : admg.directed_edges())
    edges.push_back({u, v, Mark::Tail, Mark::Arrow});
  for (const auto& [u, v] : admg.bidirected_edges())
    edges.push_back({u, v, Mark::Arrow, Mark::Arrow});
  std::sort(edges.begin(), edges.end(), [](const auto& x, const auto& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  return edges_to_json(admg.schema(), edges);
}

std::string graph_to_dot(const Pag& pag) {
  return edges_to_dot(pag.schema(), pag.edges());
}

std::string graph_to_dot(const Admg& admg) {
  std::vector<MixedEdge> edges;
  for (const auto& [u, v] : admg.directed_edges())
    edges.push_back({u, v, Mark::Tail, Mark::Arrow});
  for (const auto& [u, v] : admg.bidirected_edges())
    edges.push_back({u, v, Mark::Arrow, Mark::Arrow});
  std::sort(edges.begin(), edges.end(), [](const auto& x, const auto& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  return edges_to_dot(admg.schema(), edges);
}

}  // namespace ccd
