#include "ccd/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <set>

#include "ccd/error.hpp"
#include "ccd/rng.hpp"
#include "json.hpp"

namespace ccd {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr long long kOracleStateCap = 5000000;

std::string format_level(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Level produced by the g-th of `grid` equal noise slots under one CPT row.
int level_of_slot(const Eigen::MatrixXd& cpt, int row, int g, int grid) {
  const double mid = (g + 0.5) / grid;
  double cum = 0.0;
  for (int l = 0; l < cpt.cols(); ++l) {
    cum += cpt(row, l);
    if (mid < cum) return l;
  }
  return static_cast<int>(cpt.cols()) - 1;
}

int pack_config(const std::vector<int>& parents, const std::vector<int>& cards,
                const std::vector<int>& codes) {
  int row = 0;
  for (int p : parents) row = row * cards[p] + codes[p];
  return row;
}

double units_entropy(const std::vector<int>& units, int grid) {
  double h = 0.0;
  for (int u : units)
    if (u > 0) {
      const double p = static_cast<double>(u) / grid;
      h -= p * std::log2(p);
    }
  return h;
}

Eigen::VectorXd units_to_row(const std::vector<int>& units, int grid) {
  Eigen::VectorXd row(units.size());
  for (std::size_t i = 0; i < units.size(); ++i)
    row(i) = static_cast<double>(units[i]) / grid;
  return row;
}

// Near-uniform distribution on the 1/grid lattice, remainder rotated by seed.
std::vector<int> spread_units(int k, int grid, Rng& rng) {
  std::vector<int> units(k, grid / k);
  int leftover = grid - (grid / k) * k;
  std::uniform_int_distribution<int> start(0, k - 1);
  int pos = start(rng);
  while (leftover-- > 0) {
    units[pos] += 1;
    pos = (pos + 1) % k;
  }
  return units;
}

// Mechanism noise around a dominant level, with row entropy inside the band
// when the lattice allows it.
std::vector<int> noise_units(int base, int k, int grid, bool full_support,
                             double lo, double hi, Rng& rng) {
  const int reserved = full_support ? k : 0;
  const int rem = grid - reserved;
  std::vector<int> others;
  for (int l = 0; l < k; ++l)
    if (l != base) others.push_back(l);
  std::rotate(others.begin(),
              others.begin() + (base % std::max<std::size_t>(1, others.size())),
              others.end());

  std::vector<std::vector<int>> in_band;
  std::vector<int> closest;
  double closest_dist = 1e300;
  for (int s = rem; s >= (rem + k - 1) / k; --s) {
    std::vector<int> units(k, full_support ? 1 : 0);
    units[base] += s;
    int leftover = rem - s;
    for (int j = 0; j < leftover; ++j)
      units[others[j % others.size()]] += 1;
    const double h = units_entropy(units, grid);
    if (h >= lo && h <= hi) in_band.push_back(units);
    const double dist = h < lo ? lo - h : (h > hi ? h - hi : 0.0);
    if (dist < closest_dist) {
      closest_dist = dist;
      closest = units;
    }
  }
  std::uniform_int_distribution<int> pick(
      0, std::max<int>(1, static_cast<int>(in_band.size())) - 1);
  const int chosen = pick(rng);
  if (!in_band.empty()) return in_band[chosen];
  return closest;
}

int graded_base(const std::vector<int>& pcodes, const std::vector<int>& pcards,
                const std::vector<int>& weights, int k) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < pcodes.size(); ++j) {
    num += weights[j] * pcodes[j];
    den += weights[j] * (pcards[j] - 1);
  }
  if (den <= 0.0) return 0;
  return static_cast<int>(std::lround(num / den * (k - 1)));
}

void unpack_config(int row, const std::vector<int>& parents,
                   const std::vector<int>& cards, std::vector<int>& codes) {
  for (int j = static_cast<int>(parents.size()) - 1; j >= 0; --j) {
    const int card = cards[parents[j]];
    codes[j] = row % card;
    row /= card;
  }
}

int option_code(const GroundTruthScm& scm, int option, double raw) {
  const VariableMeta& var = scm.schema.at(option);
  int best = 0;
  double best_dist = std::abs(raw - var.levels[0]);
  for (std::size_t k = 1; k < var.levels.size(); ++k) {
    const double dist = std::abs(raw - var.levels[k]);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(k);
    }
  }
  return best;
}

// Draw every latent, event, and property in ancestral order.
void sample_row(const GroundTruthScm& scm, std::vector<int>& codes, Rng& rng,
                bool redraw_options) {
  std::uniform_int_distribution<int> slot(0, scm.prob_grid - 1);
  for (int l = scm.n_visible; l < scm.node_count(); ++l)
    codes[l] = level_of_slot(scm.nodes[l].cpt, 0, slot(rng), scm.prob_grid);
  for (int v = 0; v < scm.n_visible; ++v) {
    if (!redraw_options && scm.schema.at(v).kind == VarKind::ConfigOption)
      continue;
    const ScmNode& node = scm.nodes[v];
    const int row = pack_config(node.parents, scm.cards, codes);
    codes[v] = level_of_slot(node.cpt, row, slot(rng), scm.prob_grid);
  }
}

}  // namespace

GroundTruthScm make_scm(const ScmSpec& spec) {
  if (spec.options < 1 || spec.nfps < 1 || spec.events < 0 || spec.latents < 0)
    throw Error(ErrorCode::InvalidArgument, "node counts out of range");
  if (spec.min_levels < 2 || spec.max_levels < spec.min_levels)
    throw Error(ErrorCode::InvalidArgument, "level range out of order");
  if (spec.prob_grid < spec.max_levels || spec.prob_grid < 2)
    throw Error(ErrorCode::InvalidArgument,
                "prob_grid must cover the largest level count");
  if (spec.tail_fault &&
      (spec.options < 2 || spec.events < 1 || spec.prob_grid % 16 != 0))
    throw Error(ErrorCode::InvalidArgument,
                "tail fault instances need two options, one event, and a "
                "prob_grid divisible by 16");

  const int no = spec.options, ne = spec.events, nn = spec.nfps, nl = spec.latents;
  const int nv = no + ne + nn;
  GroundTruthScm scm;
  scm.n_visible = nv;
  scm.n_latent = nl;
  scm.prob_grid = spec.prob_grid;
  scm.seed = spec.seed;
  Rng rng(derive_seed(spec.seed, 0x5c3aULL));

  scm.cards.resize(nv + nl);
  std::uniform_int_distribution<int> card_pick(spec.min_levels, spec.max_levels);
  for (int v = 0; v < nv; ++v) scm.cards[v] = card_pick(rng);
  if (spec.nfp_levels > 0)
    for (int f = 0; f < nn; ++f) scm.cards[no + ne + f] = spec.nfp_levels;
  std::uniform_int_distribution<int> latent_pick(
      2, std::max(2, std::min(3, spec.max_levels)));
  for (int l = 0; l < nl; ++l) scm.cards[nv + l] = latent_pick(rng);
  if (spec.tail_fault) {
    scm.cards[0] = 4;
    scm.cards[1] = 4;
    scm.cards[no] = 6;
    scm.cards[no + ne] = 6;
  }

  scm.nodes.resize(nv + nl);
  std::bernoulli_distribution edge(spec.edge_density);
  const auto select_parents = [&](std::vector<int> candidates) {
    std::shuffle(candidates.begin(), candidates.end(), rng);
    std::vector<int> chosen;
    for (int c : candidates) {
      if (static_cast<int>(chosen.size()) >= spec.max_parents) break;
      if (edge(rng)) chosen.push_back(c);
    }
    return chosen;
  };

  for (int i = 0; i < ne; ++i) {
    const int id = no + i;
    if (spec.tail_fault && i == 0) {
      scm.nodes[id].parents = {0, 1};
      continue;
    }
    std::vector<int> candidates;
    for (int o = spec.tail_fault ? 2 : 0; o < no; ++o) candidates.push_back(o);
    for (int e = spec.tail_fault ? 1 : 0; e < i; ++e) candidates.push_back(no + e);
    scm.nodes[id].parents = select_parents(candidates);
  }
  for (int i = 0; i < nn; ++i) {
    const int id = no + ne + i;
    if (spec.tail_fault && i == 0) {
      scm.nodes[id].parents = {0, no};
      continue;
    }
    std::vector<int> candidates;
    for (int o = spec.tail_fault ? 2 : 0; o < no; ++o) candidates.push_back(o);
    for (int e = spec.tail_fault ? 1 : 0; e < ne; ++e) candidates.push_back(no + e);
    auto chosen = select_parents(candidates);
    if (chosen.empty() && !candidates.empty()) {
      std::uniform_int_distribution<int> pick(
          0, static_cast<int>(candidates.size()) - 1);
      chosen.push_back(candidates[pick(rng)]);
    }
    scm.nodes[id].parents = chosen;
  }
  // Every property must be reachable from at least one option.
  for (int i = 0; i < nn; ++i) {
    const int id = no + ne + i;
    std::vector<char> seen(nv, 0);
    std::vector<int> stack{id};
    seen[id] = 1;
    bool reachable = false;
    while (!stack.empty() && !reachable) {
      const int v = stack.back();
      stack.pop_back();
      if (v < no) reachable = true;
      for (int p : scm.nodes[v].parents)
        if (p < nv && !seen[p]) {
          seen[p] = 1;
          stack.push_back(p);
        }
    }
    if (!reachable) scm.nodes[id].parents.push_back(i % no);
  }
  for (int v = 0; v < nv; ++v)
    std::sort(scm.nodes[v].parents.begin(), scm.nodes[v].parents.end());

  for (int l = 0; l < nl; ++l) {
    std::vector<int> pool;
    for (int e = spec.tail_fault ? 1 : 0; e < ne; ++e) pool.push_back(no + e);
    for (int f = spec.tail_fault ? 1 : 0; f < nn; ++f) pool.push_back(no + ne + f);
    if (pool.size() < 2)
      throw Error(ErrorCode::InvalidArgument,
                  "not enough confoundable nodes for the requested latents");
    std::shuffle(pool.begin(), pool.end(), rng);
    const int lat = nv + l;
    for (int j = 0; j < 2; ++j) {
      scm.nodes[pool[j]].parents.push_back(lat);
      std::sort(scm.nodes[pool[j]].parents.begin(),
                scm.nodes[pool[j]].parents.end());
    }
  }

  // Mechanisms. Latents and options are roots with near-uniform draws; other
  // nodes follow a graded monotone base level plus lattice noise.
  for (int l = 0; l < nl; ++l) {
    const int lat = nv + l;
    scm.nodes[lat].cpt.resize(1, scm.cards[lat]);
    scm.nodes[lat].cpt.row(0) =
        units_to_row(spread_units(scm.cards[lat], spec.prob_grid, rng),
                     spec.prob_grid)
            .transpose();
  }
  const int unit8 = spec.prob_grid / 8;    // tail patterns are specified over 8
  const int unit16 = spec.prob_grid / 16;  // except the rare worst-level slot
  for (int v = 0; v < nv; ++v) {
    ScmNode& node = scm.nodes[v];
    const int k = scm.cards[v];
    const auto& parents = node.parents;
    int rows = 1;
    for (int p : parents) rows *= scm.cards[p];
    node.cpt.resize(rows, k);

    if (parents.empty()) {
      node.cpt.row(0) =
          units_to_row(spread_units(k, spec.prob_grid, rng), spec.prob_grid)
              .transpose();
      continue;
    }

    std::vector<int> weights(parents.size());
    std::uniform_int_distribution<int> weight_pick(1, 2);
    for (auto& w : weights) w = weight_pick(rng);

    std::vector<int> pcodes(parents.size());
    std::vector<int> pcards(parents.size());
    for (std::size_t j = 0; j < parents.size(); ++j)
      pcards[j] = scm.cards[parents[j]];

    const bool tail_event = spec.tail_fault && v == no;
    const bool tail_nfp = spec.tail_fault && v == no + ne;
    for (int r = 0; r < rows; ++r) {
      unpack_config(r, parents, scm.cards, pcodes);
      std::vector<int> units(k, 0);
      if (tail_event) {
        // Aggregator over the two cause options, small symmetric noise.
        const int base =
            static_cast<int>(std::lround((pcodes[0] + pcodes[1]) * 5.0 / 6.0));
        units[base] += 6 * unit8;
        units[std::max(base - 1, 0)] += unit8;
        units[std::min(base + 1, k - 1)] += unit8;
      } else if (tail_nfp) {
        // Worst level needs the aggregator and the first option maxed, and
        // even then only one noise slot in eight reaches it.
        const int base = std::min(
            k - 1, static_cast<int>(std::lround(pcodes[1] * 4.0 / 5.0) +
                                    std::lround(pcodes[0] * 1.0 / 3.0)));
        if (base == k - 1) {
          units[k - 3] += 4 * unit16;
          units[k - 2] += 11 * unit16;
          units[k - 1] += 1 * unit16;
        } else {
          // Spill stays below the worst level so only the worst parent
          // configuration can ever reach it.
          units[base] += 6 * unit8;
          units[std::max(base - 1, 0)] += unit8;
          units[std::min(base + 1, k - 2)] += unit8;
        }
      } else {
        const int base = graded_base(pcodes, pcards, weights, k);
        units = noise_units(base, k, spec.prob_grid, spec.full_support,
                            spec.noise_entropy_lo, spec.noise_entropy_hi, rng);
      }
      node.cpt.row(r) = units_to_row(units, spec.prob_grid).transpose();
    }
  }

  for (int v = 0; v < nv; ++v) {
    VariableMeta var;
    const int k = scm.cards[v];
    if (v < no) {
      var.name = "opt_" + std::to_string(v);
      var.kind = VarKind::ConfigOption;
      var.intervenable = true;
    } else if (v < no + ne) {
      var.name = "event_" + std::to_string(v - no);
      var.kind = VarKind::SystemEvent;
    } else {
      var.name = "nfp_" + std::to_string(v - no - ne);
      var.kind = VarKind::NonFunctionalProperty;
    }
    var.dtype = Dtype::Ordinal;
    for (int l = 0; l < k; ++l) {
      const double value = (spec.tail_fault && v == no + ne)
                               ? 20.0 * std::pow(2.0, l)
                               : static_cast<double>(l);
      var.levels.push_back(value);
      var.labels.push_back(format_level(value));
    }
    var.domain_min = var.levels.front();
    var.domain_max = var.levels.back();
    var.direction = Direction::LowerIsBetter;
    scm.schema.variables.push_back(std::move(var));
  }
  return scm;
}

std::string scm_to_json(const GroundTruthScm& scm) {
  ordered_json doc;
  doc["schema"] = ordered_json::parse(schema_to_json(scm.schema));
  doc["n_visible"] = scm.n_visible;
  doc["n_latent"] = scm.n_latent;
  doc["cards"] = scm.cards;
  doc["prob_grid"] = scm.prob_grid;
  doc["seed"] = scm.seed;
  ordered_json nodes = ordered_json::array();
  for (const ScmNode& node : scm.nodes) {
    ordered_json n;
    n["parents"] = node.parents;
    ordered_json cpt = ordered_json::array();
    for (int r = 0; r < node.cpt.rows(); ++r) {
      ordered_json row = ordered_json::array();
      for (int c = 0; c < node.cpt.cols(); ++c) row.push_back(node.cpt(r, c));
      cpt.push_back(std::move(row));
    }
    n["cpt"] = std::move(cpt);
    nodes.push_back(std::move(n));
  }
  doc["nodes"] = std::move(nodes);
  return doc.dump(2) + "\n";
}

GroundTruthScm scm_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad model JSON: ") + e.what());
  }
  GroundTruthScm scm;
  try {
    scm.schema = schema_from_json(doc.at("schema").dump());
    scm.n_visible = doc.at("n_visible").get<int>();
    scm.n_latent = doc.at("n_latent").get<int>();
    scm.cards = doc.at("cards").get<std::vector<int>>();
    scm.prob_grid = doc.at("prob_grid").get<int>();
    scm.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& n : doc.at("nodes")) {
      ScmNode node;
      node.parents = n.at("parents").get<std::vector<int>>();
      const auto& cpt = n.at("cpt");
      node.cpt.resize(cpt.size(), cpt.empty() ? 0 : cpt.at(0).size());
      for (std::size_t r = 0; r < cpt.size(); ++r)
        for (std::size_t c = 0; c < cpt.at(r).size(); ++c)
          node.cpt(r, c) = cpt.at(r).at(c).get<double>();
      scm.nodes.push_back(std::move(node));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad model JSON: ") + e.what());
  }
  if (scm.schema.size() != scm.n_visible ||
      static_cast<int>(scm.cards.size()) != scm.node_count() ||
      static_cast<int>(scm.nodes.size()) != scm.node_count())
    throw Error(ErrorCode::ParseError, "model JSON sizes disagree");
  for (int v = 0; v < scm.node_count(); ++v) {
    const ScmNode& node = scm.nodes[v];
    int rows = 1;
    for (int p : node.parents) {
      if (p < 0 || p >= scm.node_count() || p == v)
        throw Error(ErrorCode::ParseError, "model JSON has a bad parent id");
      rows *= scm.cards[p];
    }
    if (node.cpt.rows() != rows || node.cpt.cols() != scm.cards[v])
      throw Error(ErrorCode::ParseError, "model JSON has a bad CPT shape");
  }
  return scm;
}

ObservationTable sample_observational(const GroundTruthScm& scm, int n,
                                      std::uint64_t seed) {
  if (n < 1)
    throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  Rng rng(derive_seed(seed, 0x0b5eULL));
  ObservationTable out;
  out.schema = scm.schema;
  out.values.resize(n, scm.n_visible);
  std::vector<int> codes(scm.node_count(), 0);
  for (int r = 0; r < n; ++r) {
    sample_row(scm, codes, rng, true);
    for (int v = 0; v < scm.n_visible; ++v)
      out.values(r, v) = scm.schema.at(v).levels[codes[v]];
  }
  return out;
}

std::map<std::string, double> evaluate_once(
    const GroundTruthScm& scm, const std::map<std::string, double>& assignment,
    int repeat) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, value] : assignment) {
    h = fnv1a(name, h);
    std::uint64_t bits;
    std::memcpy(&bits, &value, sizeof(bits));
    h ^= bits;
    h *= 1099511628211ULL;
  }
  Rng rng(derive_seed(scm.seed, h, static_cast<std::uint64_t>(repeat)));

  std::vector<int> codes(scm.node_count(), 0);
  for (int v = 0; v < scm.n_visible; ++v) {
    if (scm.schema.at(v).kind != VarKind::ConfigOption) continue;
    const auto it = assignment.find(scm.schema.at(v).name);
    if (it == assignment.end())
      throw Error(ErrorCode::IncompleteAssignment,
                  "assignment misses option '" + scm.schema.at(v).name + "'");
    codes[v] = option_code(scm, v, it->second);
  }
  sample_row(scm, codes, rng, false);

  std::map<std::string, double> measured;
  for (int v = 0; v < scm.n_visible; ++v) {
    const VariableMeta& var = scm.schema.at(v);
    if (var.kind == VarKind::ConfigOption) continue;
    measured[var.name] = var.levels[codes[v]];
  }
  return measured;
}

double oracle_ace(const GroundTruthScm& scm, int z, int x) {
  if (z == x) throw Error(ErrorCode::InvalidArgument, "effect equals cause");
  if (z < 0 || z >= scm.n_visible || x < 0 || x >= scm.n_visible)
    throw Error(ErrorCode::InvalidArgument, "node index out of range");

  std::vector<char> relevant(scm.node_count(), 0);
  std::vector<int> stack{z};
  relevant[z] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (v == x) continue;
    for (int p : scm.nodes[v].parents)
      if (!relevant[p]) {
        relevant[p] = 1;
        stack.push_back(p);
      }
  }
  // Latents first, then visibles in id order: both are ancestral orders by
  // construction.
  std::vector<int> order;
  for (int l = scm.n_visible; l < scm.node_count(); ++l)
    if (relevant[l]) order.push_back(l);
  for (int v = 0; v < scm.n_visible; ++v)
    if (relevant[v] && v != x) order.push_back(v);

  long long states = 1;
  for (int v : order) {
    states *= scm.cards[v];
    if (states > kOracleStateCap)
      throw Error(ErrorCode::IntractableEnumeration,
                  "too many ancestor configurations for the exact effect");
  }

  const int kx = scm.cards[x];
  std::vector<double> expectation(kx, 0.0);
  std::vector<int> codes(scm.node_count(), 0);
  for (int level = 0; level < kx; ++level) {
    codes[x] = level;
    double e = 0.0;
    std::vector<int> idx(order.size(), 0);
    bool done = order.empty();
    while (!done) {
      for (std::size_t i = 0; i < order.size(); ++i) codes[order[i]] = idx[i];
      double prob = 1.0;
      for (int v : order) {
        const ScmNode& node = scm.nodes[v];
        const int row =
            node.parents.empty() ? 0 : pack_config(node.parents, scm.cards, codes);
        prob *= node.cpt(row, codes[v]);
        if (prob == 0.0) break;
      }
      e += prob * codes[z];
      done = true;
      for (int i = static_cast<int>(order.size()) - 1; i >= 0; --i) {
        if (++idx[i] < scm.cards[order[i]]) {
          done = false;
          break;
        }
        idx[i] = 0;
      }
    }
    expectation[level] = e;
  }

  double total = 0.0;
  for (int level = 0; level + 1 < kx; ++level)
    total += std::abs(expectation[level + 1] - expectation[level]);
  return total / (kx - 1);
}

OracleIte oracle_ite(const GroundTruthScm& scm, const std::map<int, int>& repair,
                     const std::vector<int>& factual, const OutcomeSpec& outcome) {
  const int nv = scm.n_visible;
  if (static_cast<int>(factual.size()) != nv)
    throw Error(ErrorCode::IncompleteAssignment,
                "factual row must assign every visible node");
  for (int v = 0; v < nv; ++v)
    if (factual[v] < 0 || factual[v] >= scm.cards[v])
      throw Error(ErrorCode::ValueOutOfDomain, "factual level out of range");
  for (const auto& [v, level] : repair)
    if (v < 0 || v >= nv || level < 0 || level >= scm.cards[v])
      throw Error(ErrorCode::InvalidArgument, "repair assignment out of range");

  std::vector<char> relevant(scm.node_count(), 0);
  std::vector<int> stack;
  for (int t : outcome.targets) {
    relevant[t] = 1;
    stack.push_back(t);
  }
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (repair.count(v)) continue;
    for (int p : scm.nodes[v].parents)
      if (!relevant[p]) {
        relevant[p] = 1;
        stack.push_back(p);
      }
  }

  std::vector<int> free_nodes;
  for (int v = 0; v < nv; ++v)
    if (relevant[v] && !repair.count(v)) free_nodes.push_back(v);

  // All latents enter the abduction jointly; shared children couple them.
  long long lat_combos = 1;
  for (int l = nv; l < scm.node_count(); ++l) lat_combos *= scm.cards[l];
  if (lat_combos > kOracleStateCap)
    throw Error(ErrorCode::IntractableEnumeration, "too many latent values");

  const int grid = scm.prob_grid;
  std::vector<int> codes(scm.node_count(), 0);
  for (int v = 0; v < nv; ++v) codes[v] = factual[v];

  double total = 0.0, p_better = 0.0, p_worse = 0.0;
  std::vector<int> lat_idx(scm.n_latent, 0);
  bool lat_done = false;
  while (!lat_done) {
    for (int l = 0; l < scm.n_latent; ++l) codes[nv + l] = lat_idx[l];
    double w = 1.0;
    for (int l = 0; l < scm.n_latent; ++l)
      w *= scm.nodes[nv + l].cpt(0, lat_idx[l]);
    // Likelihood of the whole factual row; free nodes enter through their
    // compatible noise slots instead.
    std::vector<std::vector<int>> compat(free_nodes.size());
    if (w > 0.0) {
      for (int v = 0; v < nv && w > 0.0; ++v) {
        const ScmNode& node = scm.nodes[v];
        const int row =
            node.parents.empty() ? 0 : pack_config(node.parents, scm.cards, codes);
        if (std::find(free_nodes.begin(), free_nodes.end(), v) != free_nodes.end()) {
          const std::size_t i =
              std::find(free_nodes.begin(), free_nodes.end(), v) -
              free_nodes.begin();
          for (int g = 0; g < grid; ++g)
            if (level_of_slot(node.cpt, row, g, grid) == factual[v])
              compat[i].push_back(g);
          if (compat[i].empty()) w = 0.0;
          w *= 1.0;  // slot mass applied per slot below
        } else {
          w *= node.cpt(row, factual[v]);
        }
      }
    }
    if (w > 0.0) {
      long long combos = 1;
      for (const auto& c : compat) {
        combos *= static_cast<long long>(c.size());
        if (combos > kOracleStateCap)
          throw Error(ErrorCode::IntractableEnumeration,
                      "too many noise combinations for the exact twin");
      }
      std::vector<int> slot_idx(free_nodes.size(), 0);
      std::vector<int> twin(scm.node_count(), 0);
      bool done = false;
      while (!done) {
        double weight = w;
        for (std::size_t i = 0; i < free_nodes.size(); ++i)
          weight *= 1.0 / grid;
        for (int v = 0; v < nv; ++v) twin[v] = factual[v];
        for (int l = 0; l < scm.n_latent; ++l) twin[nv + l] = lat_idx[l];
        for (int v = 0; v < nv; ++v) {
          const auto it = repair.find(v);
          if (it != repair.end()) {
            twin[v] = it->second;
            continue;
          }
          if (!relevant[v]) continue;
          const ScmNode& node = scm.nodes[v];
          const int row = node.parents.empty()
                              ? 0
                              : pack_config(node.parents, scm.cards, twin);
          const std::size_t i =
              std::find(free_nodes.begin(), free_nodes.end(), v) -
              free_nodes.begin();
          twin[v] = level_of_slot(node.cpt, row,
                                  compat[i][slot_idx[i]], grid);
        }
        bool any_worse = false;
        for (std::size_t t = 0; t < outcome.targets.size(); ++t)
          if (outcome_worse(outcome, static_cast<int>(t),
                            twin[outcome.targets[t]])) {
            any_worse = true;
            break;
          }
        total += weight;
        if (any_worse)
          p_worse += weight;
        else
          p_better += weight;
        done = true;
        for (int i = static_cast<int>(free_nodes.size()) - 1; i >= 0; --i) {
          if (++slot_idx[i] < static_cast<int>(compat[i].size())) {
            done = false;
            break;
          }
          slot_idx[i] = 0;
        }
        if (free_nodes.empty()) break;
      }
    }
    lat_done = true;
    for (int i = scm.n_latent - 1; i >= 0; --i) {
      if (++lat_idx[i] < scm.cards[nv + i]) {
        lat_done = false;
        break;
      }
      lat_idx[i] = 0;
    }
    if (scm.n_latent == 0) break;
  }

  if (total <= 0.0)
    throw Error(ErrorCode::InvalidArgument,
                "factual row has zero probability under the true model");
  OracleIte result;
  result.p_better = p_better / total;
  result.p_worse = p_worse / total;
  result.value = result.p_better - result.p_worse;
  return result;
}

FittedModel exact_model(const GroundTruthScm& scm) {
  const int nv = scm.n_visible;
  for (int v = 0; v < nv; ++v) {
    int latent_parents = 0;
    for (int p : scm.nodes[v].parents)
      if (p >= nv) ++latent_parents;
    if (latent_parents > 1)
      throw Error(ErrorCode::InvalidArgument,
                  "exact model supports one latent parent per node");
  }

  Admg graph(scm.schema);
  for (int v = 0; v < nv; ++v)
    for (int p : scm.nodes[v].parents)
      if (p < nv) graph.add_directed(p, v);
  for (int l = nv; l < scm.node_count(); ++l) {
    std::vector<int> children;
    for (int v = 0; v < nv; ++v)
      if (std::find(scm.nodes[v].parents.begin(), scm.nodes[v].parents.end(),
                    l) != scm.nodes[v].parents.end())
        children.push_back(v);
    for (std::size_t i = 0; i < children.size(); ++i)
      for (std::size_t j = i + 1; j < children.size(); ++j)
        graph.add_bidirected(children[i], children[j]);
  }

  FittedModel model;
  model.graph = graph;
  model.data.schema = scm.schema;
  model.data.codes.resize(0, nv);
  model.data.cardinality.assign(scm.cards.begin(), scm.cards.begin() + nv);
  model.data.bin_edges.resize(nv);

  const auto components = graph.bidirected_components();
  std::vector<int> component_of(nv, -1);
  for (std::size_t c = 0; c < components.size(); ++c) {
    // Each component stems from exactly one latent: the member's sole latent
    // parent.
    int lat = -1;
    for (int p : scm.nodes[components[c][0]].parents)
      if (p >= nv) lat = p;
    LatentFactor factor;
    factor.members = components[c];
    factor.cardinality = scm.cards[lat];
    factor.prior = scm.nodes[lat].cpt.row(0).transpose();
    model.latents.push_back(std::move(factor));
    for (int v : components[c]) component_of[v] = static_cast<int>(c);
  }

  model.cpts.resize(nv);
  for (int v = 0; v < nv; ++v) {
    NodeCpt& cpt = model.cpts[v];
    cpt.node = v;
    for (int p : scm.nodes[v].parents)
      if (p < nv) cpt.parents.push_back(p);
    cpt.latent = component_of[v];
    cpt.table = scm.nodes[v].cpt;
  }
  return model;
}

GraphScore score_graph(const Admg& learned, const GroundTruthScm& scm) {
  const int nv = scm.n_visible;
  std::set<std::pair<int, int>> truth_skeleton, learned_skeleton;
  std::set<std::pair<int, int>> truth_directed;
  for (int v = 0; v < nv; ++v)
    for (int p : scm.nodes[v].parents)
      if (p < nv) {
        truth_directed.insert({p, v});
        truth_skeleton.insert({std::min(p, v), std::max(p, v)});
      }
  for (int l = nv; l < scm.node_count(); ++l) {
    std::vector<int> children;
    for (int v = 0; v < nv; ++v)
      if (std::find(scm.nodes[v].parents.begin(), scm.nodes[v].parents.end(),
                    l) != scm.nodes[v].parents.end())
        children.push_back(v);
    for (std::size_t i = 0; i < children.size(); ++i)
      for (std::size_t j = i + 1; j < children.size(); ++j)
        truth_skeleton.insert({children[i], children[j]});
  }
  for (const auto& [u, v] : learned.directed_edges())
    learned_skeleton.insert({std::min(u, v), std::max(u, v)});
  for (const auto& [u, v] : learned.bidirected_edges())
    learned_skeleton.insert({std::min(u, v), std::max(u, v)});

  int tp = 0;
  for (const auto& e : learned_skeleton)
    if (truth_skeleton.count(e)) ++tp;

  GraphScore score;
  score.skeleton_precision =
      learned_skeleton.empty() ? 1.0
                               : static_cast<double>(tp) / learned_skeleton.size();
  score.skeleton_recall =
      truth_skeleton.empty() ? 1.0
                             : static_cast<double>(tp) / truth_skeleton.size();
  const double pr = score.skeleton_precision + score.skeleton_recall;
  score.skeleton_f1 =
      pr > 0.0 ? 2.0 * score.skeleton_precision * score.skeleton_recall / pr : 0.0;

  int oriented = 0, correct = 0;
  for (const auto& [p, v] : truth_directed) {
    if (!learned.is_adjacent(p, v)) continue;
    ++oriented;
    if (learned.has_directed(p, v) && !learned.has_directed(v, p) &&
        !learned.has_bidirected(p, v))
      ++correct;
  }
  score.orientation_accuracy =
      oriented == 0 ? 1.0 : static_cast<double>(correct) / oriented;
  return score;
}

DiagnosisScore score_diagnosis(const std::vector<int>& predicted,
                               const GroundTruthScm& scm,
                               const std::vector<int>& targets, double eps) {
  std::set<int> truth;
  for (int v = 0; v < scm.n_visible; ++v) {
    if (scm.schema.at(v).kind != VarKind::ConfigOption) continue;
    for (int t : targets)
      if (t != v && oracle_ace(scm, t, v) > eps) {
        truth.insert(v);
        break;
      }
  }
  const std::set<int> pred(predicted.begin(), predicted.end());
  int tp = 0;
  for (int v : pred)
    if (truth.count(v)) ++tp;

  DiagnosisScore score;
  score.precision = pred.empty() ? (truth.empty() ? 1.0 : 0.0)
                                 : static_cast<double>(tp) / pred.size();
  score.recall = truth.empty() ? 1.0 : static_cast<double>(tp) / truth.size();
  std::set<int> uni(pred);
  uni.insert(truth.begin(), truth.end());
  score.jaccard =
      uni.empty() ? 1.0 : static_cast<double>(tp) / uni.size();
  return score;
}

}  // namespace ccd
