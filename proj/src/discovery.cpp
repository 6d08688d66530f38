#include "ccd/discovery.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <set>

#include "ccd/error.hpp"

namespace ccd {

namespace {

// Calls fn on every size-k subset of items, in lexicographic order, until fn
// returns true. Returns whether fn accepted a subset.
bool for_each_subset(const std::vector<int>& items, int k,
                     const std::function<bool(const std::vector<int>&)>& fn) {
  int n = static_cast<int>(items.size());
  if (k > n) return false;
  std::vector<int> pick(k);
  std::function<bool(int, int)> rec = [&](int start, int depth) {
    if (depth == k) {
      std::vector<int> subset(k);
      for (int i = 0; i < k; ++i) subset[i] = items[pick[i]];
      return fn(subset);
    }
    for (int i = start; i <= n - (k - depth); ++i) {
      pick[depth] = i;
      if (rec(i + 1, depth + 1)) return true;
    }
    return false;
  };
  if (k == 0) return fn({});
  return rec(0, 0);
}

bool is_subset(const std::vector<int>& small, const std::vector<int>& big) {
  for (int s : small)
    if (std::find(big.begin(), big.end(), s) == big.end()) return false;
  return true;
}

// True when placing an arrowhead at `at` on the edge (at, other) would point
// into an earlier tier, which the background knowledge forbids.
bool tier_blocks_arrow(const TierKnowledge& knowledge, int at, int other) {
  return knowledge.tier[at] < knowledge.tier[other];
}

// Arrowhead placement honoring tiers; logs and refuses blocked placements.
bool place_arrow(Pag& pag, const TierKnowledge& knowledge, int at, int other,
                 const char* rule) {
  if (tier_blocks_arrow(knowledge, at, other)) {
    pag.notes.push_back(std::string(rule) + ": arrow at " +
                        pag.schema().at(at).name + " on edge to " +
                        pag.schema().at(other).name +
                        " would violate tiers, skipped");
    return false;
  }
  if (pag.mark_at(at, other) == Mark::Arrow) return false;
  pag.set_mark(at, other, Mark::Arrow);
  return true;
}

bool tier_pass(Pag& pag, const TierKnowledge& knowledge) {
  bool changed = false;
  for (const auto& e : pag.edges()) {
    int lo = e.a, hi = e.b;
    if (knowledge.tier[lo] == knowledge.tier[hi]) continue;
    if (knowledge.tier[lo] > knowledge.tier[hi]) std::swap(lo, hi);

    // The later node cannot cause the earlier one.
    if (pag.mark_at(hi, lo) != Mark::Arrow) {
      if (pag.mark_at(hi, lo) == Mark::Tail)
        pag.notes.push_back("tier: tail at " + pag.schema().at(hi).name +
                            " on edge to " + pag.schema().at(lo).name +
                            " contradicts tiers, replaced by arrow");
      pag.set_mark(hi, lo, Mark::Arrow);
      changed = true;
    }

    if (knowledge.tier[lo] == 0) {
      // Options are set from outside the system, so nothing modeled points
      // into them; the remaining mark is a tail.
      if (pag.mark_at(lo, hi) != Mark::Tail) {
        if (pag.mark_at(lo, hi) == Mark::Arrow)
          pag.notes.push_back("tier: arrow at " + pag.schema().at(lo).name +
                              " on edge to " + pag.schema().at(hi).name +
                              " contradicts tiers, replaced by tail");
        pag.set_mark(lo, hi, Mark::Tail);
        changed = true;
      }
    } else if (pag.mark_at(lo, hi) == Mark::Arrow) {
      // Events may still share hidden causes with properties, so only the
      // definite arrowhead is cleared; the endpoint stays open.
      pag.notes.push_back("tier: arrow at " + pag.schema().at(lo).name +
                          " on edge to " + pag.schema().at(hi).name +
                          " contradicts tiers, reopened");
      pag.set_mark(lo, hi, Mark::Circle);
      changed = true;
    }
  }
  return changed;
}

// If a *-> b o-* c and a, c are not adjacent, orient b -> c.
bool rule1(Pag& pag, const TierKnowledge& knowledge) {
  bool changed = false;
  int n = pag.node_count();
  for (int b = 0; b < n; ++b)
    for (int a : pag.adjacent(b)) {
      if (pag.mark_at(b, a) != Mark::Arrow) continue;
      for (int c : pag.adjacent(b)) {
        if (c == a || pag.is_adjacent(a, c)) continue;
        if (pag.mark_at(b, c) != Mark::Circle) continue;
        changed |= place_arrow(pag, knowledge, c, b, "R1");
        // The tail half still applies when the arrow was already there.
        if (pag.mark_at(c, b) != Mark::Arrow) continue;
        pag.set_mark(b, c, Mark::Tail);
        changed = true;
      }
    }
  return changed;
}

// If a -> b *-> c or a *-> b -> c, and a *-o c, orient the c mark to an
// arrowhead.
bool rule2(Pag& pag, const TierKnowledge& knowledge) {
  bool changed = false;
  int n = pag.node_count();
  for (int a = 0; a < n; ++a)
    for (int c : pag.adjacent(a)) {
      if (c == a || pag.mark_at(c, a) != Mark::Circle) continue;
      for (int b : pag.adjacent(a)) {
        if (b == c || !pag.is_adjacent(b, c)) continue;
        bool chain1 = pag.mark_at(a, b) == Mark::Tail &&
                      pag.mark_at(b, a) == Mark::Arrow &&
                      pag.mark_at(c, b) == Mark::Arrow;
        bool chain2 = pag.mark_at(b, a) == Mark::Arrow &&
                      pag.mark_at(b, c) == Mark::Tail &&
                      pag.mark_at(c, b) == Mark::Arrow;
        if (!chain1 && !chain2) continue;
        if (place_arrow(pag, knowledge, c, a, "R2")) changed = true;
        break;
      }
    }
  return changed;
}

// If a *-> b <-* c, a *-o d o-* c, a and c are not adjacent, and d *-o b,
// orient d *-> b.
bool rule3(Pag& pag, const TierKnowledge& knowledge) {
  bool changed = false;
  int n = pag.node_count();
  for (int d = 0; d < n; ++d)
    for (int b : pag.adjacent(d)) {
      if (pag.mark_at(b, d) != Mark::Circle) continue;
      auto shared = pag.adjacent(d);
      for (int a : shared) {
        if (a == b || pag.mark_at(d, a) != Mark::Circle) continue;
        if (!pag.is_adjacent(a, b) || pag.mark_at(b, a) != Mark::Arrow)
          continue;
        for (int c : shared) {
          if (c == a || c == b || pag.is_adjacent(a, c)) continue;
          if (pag.mark_at(d, c) != Mark::Circle) continue;
          if (!pag.is_adjacent(c, b) || pag.mark_at(b, c) != Mark::Arrow)
            continue;
          if (place_arrow(pag, knowledge, b, d, "R3")) changed = true;
        }
      }
    }
  return changed;
}

// Discriminating path search for rule 4: a path <theta, ..., a, b, c> where
// every interior node is a collider on the path and a parent of c, and theta
// is not adjacent to c.
struct DiscriminatingPath {
  int theta = -1;
};

bool is_parent(const Pag& pag, int u, int v) {
  return pag.is_adjacent(u, v) && pag.mark_at(u, v) == Mark::Tail &&
         pag.mark_at(v, u) == Mark::Arrow;
}

std::optional<DiscriminatingPath> find_discriminating(const Pag& pag, int a,
                                                      int b, int c) {
  // Interior nodes already on the path, to keep it simple.
  std::vector<char> visited(pag.node_count(), 0);
  visited[a] = visited[b] = visited[c] = 1;
  std::function<std::optional<DiscriminatingPath>(int)> extend =
      [&](int cur) -> std::optional<DiscriminatingPath> {
    for (int d : pag.adjacent(cur)) {
      if (visited[d]) continue;
      if (pag.mark_at(cur, d) != Mark::Arrow) continue;  // need d *-> cur
      if (!pag.is_adjacent(d, c)) return DiscriminatingPath{d};
      // To continue through d it must be a collider on the path and a
      // parent of c.
      if (pag.mark_at(d, cur) != Mark::Arrow) continue;
      if (!is_parent(pag, d, c)) continue;
      visited[d] = 1;
      if (auto found = extend(d)) return found;
      visited[d] = 0;
    }
    return std::nullopt;
  };
  return extend(a);
}

bool rule4(Pag& pag, const TierKnowledge& knowledge) {
  bool changed = false;
  int n = pag.node_count();
  for (int b = 0; b < n; ++b)
    for (int c : pag.adjacent(b)) {
      if (pag.mark_at(b, c) != Mark::Circle) continue;
      for (int a : pag.adjacent(b)) {
        if (a == c) continue;
        // a is interior: collider on the path and a parent of c.
        if (pag.mark_at(b, a) != Mark::Arrow) continue;
        if (pag.mark_at(a, b) != Mark::Arrow) continue;
        if (!is_parent(pag, a, c)) continue;
        auto found = find_discriminating(pag, a, b, c);
        if (!found) continue;
        int theta = found->theta;
        bool in_sep =
            pag.has_sepset(theta, c) && pag.in_sepset(b, theta, c);
        if (in_sep) {
          changed |= place_arrow(pag, knowledge, c, b, "R4");
          if (pag.mark_at(c, b) == Mark::Arrow &&
              pag.mark_at(b, c) != Mark::Tail) {
            pag.set_mark(b, c, Mark::Tail);
            changed = true;
          }
        } else {
          if (place_arrow(pag, knowledge, b, a, "R4")) changed = true;
          if (place_arrow(pag, knowledge, b, c, "R4")) changed = true;
          if (place_arrow(pag, knowledge, c, b, "R4")) changed = true;
        }
        if (changed) break;
      }
    }
  return changed;
}

void orient_collider(Pag& pag, int x, int z, int y) {
  pag.set_mark(z, x, Mark::Arrow);
  pag.set_mark(z, y, Mark::Arrow);
}

// Nodes reachable from x along paths whose every interior node is either a
// collider or part of a triangle with its path neighbors.
std::vector<int> possible_dsep_set(const Pag& pag, int x) {
  std::set<std::pair<int, int>> visited;  // (prev, cur) states
  std::vector<char> reached(pag.node_count(), 0);
  std::vector<std::pair<int, int>> queue;
  for (int w : pag.adjacent(x)) {
    visited.insert({x, w});
    reached[w] = 1;
    queue.emplace_back(x, w);
  }
  while (!queue.empty()) {
    auto [prev, cur] = queue.back();
    queue.pop_back();
    for (int next : pag.adjacent(cur)) {
      if (next == prev || next == x) continue;
      bool collider = pag.mark_at(cur, prev) == Mark::Arrow &&
                      pag.mark_at(cur, next) == Mark::Arrow;
      bool triangle = pag.is_adjacent(prev, next);
      if (!collider && !triangle) continue;
      if (!visited.insert({cur, next}).second) continue;
      reached[next] = 1;
      queue.emplace_back(cur, next);
    }
  }
  std::vector<int> out;
  for (int v = 0; v < pag.node_count(); ++v)
    if (v != x && reached[v]) out.push_back(v);
  return out;
}

void run_v_structures(Pag& pag) {
  int n = pag.node_count();
  for (int z = 0; z < n; ++z) {
    auto adj = pag.adjacent(z);
    for (size_t i = 0; i < adj.size(); ++i)
      for (size_t j = i + 1; j < adj.size(); ++j) {
        int x = adj[i], y = adj[j];
        if (pag.is_adjacent(x, y)) continue;
        if (!pag.has_sepset(x, y)) continue;
        if (!pag.in_sepset(z, x, y)) orient_collider(pag, x, z, y);
      }
  }
}

}  // namespace

Pag build_complete_graph(const Schema& schema) {
  if (schema.size() < 2)
    throw Error(ErrorCode::TooFewVariables,
                "discovery needs at least two variables");
  Pag pag(schema);
  for (int u = 0; u < schema.size(); ++u)
    for (int v = u + 1; v < schema.size(); ++v) pag.add_edge(u, v);
  return pag;
}

Pag learn_skeleton(const DiscreteTable& table, const DiscoveryConfig& cfg) {
  Pag pag = build_complete_graph(table.schema);
  int n = pag.node_count();

  for (int level = 0; level <= cfg.max_cond_size; ++level) {
    // Freeze adjacency for the whole level so removals commit together.
    std::vector<std::vector<int>> adj(n);
    int largest = 0;
    for (int u = 0; u < n; ++u) {
      adj[u] = pag.adjacent(u);
      largest = std::max(largest, static_cast<int>(adj[u].size()));
    }
    if (largest - 1 < level) break;

    struct Removal {
      int u, v;
      std::vector<int> sepset;
    };
    std::vector<Removal> removals;

    for (int u = 0; u < n; ++u) {
      for (int v : adj[u]) {
        if (v < u || !pag.is_adjacent(u, v)) continue;
        std::vector<int> cand_u, cand_v;
        for (int w : adj[u])
          if (w != v) cand_u.push_back(w);
        for (int w : adj[v])
          if (w != u) cand_v.push_back(w);

        std::optional<std::vector<int>> sepset;
        auto test = [&](const std::vector<int>& subset) {
          auto result = g_square_test(table, u, v, subset, cfg.ci);
          if (is_independent(result, cfg.ci)) {
            sepset = subset;
            return true;
          }
          return false;
        };
        if (!for_each_subset(cand_u, level, test)) {
          for_each_subset(cand_v, level, [&](const std::vector<int>& subset) {
            if (is_subset(subset, cand_u)) return false;  // already tested
            return test(subset);
          });
        }
        if (sepset) removals.push_back({u, v, std::move(*sepset)});
      }
    }

    for (auto& r : removals) {
      pag.remove_edge(r.u, r.v);
      pag.set_sepset(r.u, r.v, std::move(r.sepset));
    }
  }
  return pag;
}

Pag orient_v_structures(Pag pag) {
  run_v_structures(pag);
  return pag;
}

Pag apply_possible_dsep(Pag pag, const DiscreteTable& table,
                        const DiscoveryConfig& cfg) {
  struct Removal {
    int u, v;
    std::vector<int> sepset;
  };
  std::vector<Removal> removals;

  for (const auto& e : pag.edges()) {
    std::optional<std::vector<int>> sepset;
    auto test = [&](const std::vector<int>& subset) {
      auto result = g_square_test(table, e.a, e.b, subset, cfg.ci);
      if (is_independent(result, cfg.ci)) {
        sepset = subset;
        return true;
      }
      return false;
    };
    for (int side = 0; side < 2 && !sepset; ++side) {
      int x = side == 0 ? e.a : e.b;
      int y = side == 0 ? e.b : e.a;
      auto candidates = possible_dsep_set(pag, x);
      candidates.erase(std::remove(candidates.begin(), candidates.end(), y),
                       candidates.end());
      for (int k = 1; k <= cfg.max_cond_size && !sepset; ++k)
        for_each_subset(candidates, k, test);
    }
    if (sepset) removals.push_back({e.a, e.b, std::move(*sepset)});
  }

  for (auto& r : removals) {
    pag.remove_edge(r.u, r.v);
    pag.set_sepset(r.u, r.v, std::move(r.sepset));
  }

  // Marks earned before the extra pruning may no longer be valid; rebuild
  // from circles and re-run collider orientation.
  for (const auto& e : pag.edges()) {
    pag.set_mark(e.a, e.b, Mark::Circle);
    pag.set_mark(e.b, e.a, Mark::Circle);
  }
  run_v_structures(pag);
  return pag;
}

Pag apply_fci_rules(Pag pag, const TierKnowledge& knowledge) {
  if (static_cast<int>(knowledge.tier.size()) != pag.node_count())
    throw Error(ErrorCode::InvalidArgument,
                "tier knowledge does not match the graph");
  tier_pass(pag, knowledge);
  int guard = 4 * (pag.edge_count() + 1);
  for (int i = 0; i < guard; ++i) {
    bool changed = false;
    changed |= rule1(pag, knowledge);
    changed |= rule2(pag, knowledge);
    changed |= rule3(pag, knowledge);
    changed |= rule4(pag, knowledge);
    changed |= tier_pass(pag, knowledge);
    if (!changed) return pag;
  }
  pag.notes.push_back("orientation rules did not reach a fixed point");
  return pag;
}

Pag discover_pag(const DiscreteTable& table, const DiscoveryConfig& cfg,
                 const TierKnowledge& knowledge) {
  Pag pag = orient_v_structures(learn_skeleton(table, cfg));
  if (cfg.possible_dsep) pag = apply_possible_dsep(pag, table, cfg);
  return apply_fci_rules(pag, knowledge);
}

}  // namespace ccd
