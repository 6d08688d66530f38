#include "ccd/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccd/error.hpp"
#include "ccd/rng.hpp"

namespace ccd {
namespace {

constexpr double kAtomEps = 1e-12;
constexpr double kPosteriorEps = 1e-15;

// Inverse-CDF noise representation: one shared atom partition per node, fine
// enough that every CPT row maps each atom to a single level.
struct NodeAtoms {
  std::vector<double> mass;
  Eigen::MatrixXi level_of;  // rows: CPT rows, cols: atoms
};

int pack_row(const NodeCpt& cpt, const std::vector<int>& cards,
             const std::function<int(int)>& code_of, int k_u, int u) {
  int row = 0;
  for (int p : cpt.parents) row = row * cards[p] + code_of(p);
  return k_u > 0 ? row * k_u + u : row;
}

NodeAtoms build_atoms(const Eigen::MatrixXd& table) {
  std::vector<double> cuts{0.0, 1.0};
  for (int r = 0; r < table.rows(); ++r) {
    double cum = 0.0;
    for (int l = 0; l + 1 < table.cols(); ++l) {
      cum += table(r, l);
      if (cum > kAtomEps && cum < 1.0 - kAtomEps) cuts.push_back(cum);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> edges{0.0};
  for (double c : cuts)
    if (c - edges.back() > kAtomEps) edges.push_back(c);
  if (edges.back() < 1.0 - kAtomEps)
    edges.push_back(1.0);
  else
    edges.back() = 1.0;

  NodeAtoms atoms;
  const int n_atoms = static_cast<int>(edges.size()) - 1;
  atoms.mass.resize(n_atoms);
  for (int a = 0; a < n_atoms; ++a) atoms.mass[a] = edges[a + 1] - edges[a];
  atoms.level_of.resize(table.rows(), n_atoms);
  for (int r = 0; r < table.rows(); ++r) {
    double cum = 0.0;
    int level = 0;
    double upper = table(r, 0);
    for (int a = 0; a < n_atoms; ++a) {
      const double mid = 0.5 * (edges[a] + edges[a + 1]);
      while (mid >= upper && level + 1 < table.cols()) {
        ++level;
        upper += table(r, level);
      }
      atoms.level_of(r, a) = level;
      (void)cum;
    }
  }
  return atoms;
}

struct CompatibleAtoms {
  std::vector<int> atom;     // atom ids mapping the factual row to its level
  std::vector<double> prob;  // normalized posterior over those atoms
};

// Twin-network enumeration core. Calls `accum(twin_codes, weight)` for every
// joint posterior state (or posterior sample), weights summing to one.
bool enumerate_twins(const FittedModel& model, const std::vector<int>& factual,
                     const std::map<int, int>& intervention,
                     const std::vector<int>& read_nodes, const CfConfig& cfg,
                     const std::function<void(const std::vector<int>&, double)>& accum) {
  const int n = static_cast<int>(model.data.cardinality.size());
  if (static_cast<int>(factual.size()) != n)
    throw Error(ErrorCode::IncompleteAssignment,
                "factual row must assign every variable a level");
  for (int v = 0; v < n; ++v)
    if (factual[v] < 0 || factual[v] >= model.data.cardinality[v])
      throw Error(ErrorCode::ValueOutOfDomain, "factual level out of range");
  for (const auto& [v, level] : intervention) {
    if (v < 0 || v >= n)
      throw Error(ErrorCode::InvalidArgument, "intervention variable out of range");
    if (level < 0 || level >= model.data.cardinality[v])
      throw Error(ErrorCode::ValueOutOfDomain, "intervention level out of range");
  }

  // Ancestral closure of the read nodes, stopping below intervened nodes.
  std::vector<char> relevant(n, 0);
  std::vector<int> stack(read_nodes);
  for (int v : stack) relevant[v] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (intervention.count(v)) continue;
    for (int p : model.graph.parents(v))
      if (!relevant[p]) {
        relevant[p] = 1;
        stack.push_back(p);
      }
  }

  std::vector<NodeAtoms> atoms(n);
  for (int v = 0; v < n; ++v)
    if (relevant[v] && !intervention.count(v)) atoms[v] = build_atoms(model.cpts[v].table);

  const auto factual_code = [&](int p) { return factual[p]; };

  // Posterior over each needed latent, conditioned on the whole factual row.
  const int n_comp = static_cast<int>(model.latents.size());
  std::vector<char> needed(n_comp, 0);
  for (int v = 0; v < n; ++v)
    if (relevant[v] && !intervention.count(v) && model.cpts[v].latent >= 0)
      needed[model.cpts[v].latent] = 1;
  std::vector<std::vector<int>> comp_values(n_comp);
  std::vector<std::vector<double>> comp_post(n_comp);
  for (int c = 0; c < n_comp; ++c) {
    if (!needed[c]) continue;
    const LatentFactor& latent = model.latents[c];
    std::vector<double> post(latent.cardinality);
    for (int u = 0; u < latent.cardinality; ++u) {
      double w = latent.prior(u);
      for (int v : latent.members) {
        const NodeCpt& cpt = model.cpts[v];
        const int row = pack_row(cpt, model.data.cardinality, factual_code,
                                 latent.cardinality, u);
        w *= cpt.table(row, factual[v]);
      }
      post[u] = w;
    }
    const double total = std::accumulate(post.begin(), post.end(), 0.0);
    if (total <= 0.0)
      throw Error(ErrorCode::InvalidArgument,
                  "factual row has zero probability under the model");
    for (int u = 0; u < latent.cardinality; ++u)
      if (post[u] / total > kPosteriorEps) {
        comp_values[c].push_back(u);
        comp_post[c].push_back(post[u] / total);
      }
    const double kept = std::accumulate(comp_post[c].begin(), comp_post[c].end(), 0.0);
    for (double& p : comp_post[c]) p /= kept;
  }

  // Compatible atoms per relevant node, per latent value where one applies.
  std::vector<std::vector<CompatibleAtoms>> compat(n);
  std::vector<int> free_nodes;
  for (int v = 0; v < n; ++v) {
    if (!relevant[v] || intervention.count(v)) continue;
    free_nodes.push_back(v);
    const NodeCpt& cpt = model.cpts[v];
    const int k_u = cpt.latent >= 0 ? model.latents[cpt.latent].cardinality : 0;
    const std::vector<int> values =
        cpt.latent >= 0 ? comp_values[cpt.latent] : std::vector<int>{0};
    compat[v].resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const int row = pack_row(cpt, model.data.cardinality, factual_code, k_u,
                               values[i]);
      double total = 0.0;
      for (std::size_t a = 0; a < atoms[v].mass.size(); ++a)
        if (atoms[v].level_of(row, static_cast<int>(a)) == factual[v]) {
          compat[v][i].atom.push_back(static_cast<int>(a));
          compat[v][i].prob.push_back(atoms[v].mass[a]);
          total += atoms[v].mass[a];
        }
      if (total <= 0.0) {
        if (cpt.latent < 0)
          throw Error(ErrorCode::InvalidArgument,
                      "factual row has zero probability under the model");
        // This latent value cannot produce the factual row; its posterior
        // weight must already be negligible.
        compat[v][i].atom.push_back(0);
        compat[v][i].prob.push_back(1.0);
        total = 1.0;
      }
      for (double& p : compat[v][i].prob) p /= total;
    }
  }

  std::vector<int> comp_ids;
  for (int c = 0; c < n_comp; ++c)
    if (needed[c]) comp_ids.push_back(c);

  // Exact enumeration size: sum over latent combinations of the product of
  // compatible atom counts.
  long long total_states = 0;
  {
    std::vector<std::size_t> u_idx(comp_ids.size(), 0);
    bool done = false;
    while (!done) {
      long long states = 1;
      for (int v : free_nodes) {
        const int c = model.cpts[v].latent;
        const std::size_t slot =
            c >= 0 ? u_idx[std::find(comp_ids.begin(), comp_ids.end(), c) - comp_ids.begin()]
                   : 0;
        states *= static_cast<long long>(compat[v][slot].atom.size());
        if (states > cfg.enumeration_cap) break;
      }
      total_states += states;
      if (total_states > cfg.enumeration_cap) break;
      done = true;
      for (std::size_t i = 0; i < comp_ids.size(); ++i) {
        if (++u_idx[i] < comp_values[comp_ids[i]].size()) {
          done = false;
          break;
        }
        u_idx[i] = 0;
      }
      if (comp_ids.empty()) break;
    }
  }

  const std::vector<int> topo = model.graph.topological_order();
  std::vector<int> order;
  for (int v : topo)
    if (relevant[v]) order.push_back(v);

  std::vector<int> twin(factual);
  std::vector<int> u_of_comp(n_comp, 0);
  std::vector<int> atom_of(n, 0);
  const auto propagate = [&]() {
    for (int v : order) {
      const auto it = intervention.find(v);
      if (it != intervention.end()) {
        twin[v] = it->second;
        continue;
      }
      const NodeCpt& cpt = model.cpts[v];
      const int k_u = cpt.latent >= 0 ? model.latents[cpt.latent].cardinality : 0;
      const int u = cpt.latent >= 0 ? u_of_comp[cpt.latent] : 0;
      const int row = pack_row(
          cpt, model.data.cardinality, [&](int p) { return twin[p]; }, k_u, u);
      twin[v] = atoms[v].level_of(row, atom_of[v]);
    }
  };

  if (total_states <= cfg.enumeration_cap) {
    std::vector<std::size_t> u_idx(comp_ids.size(), 0);
    bool u_done = false;
    while (!u_done) {
      double w_u = 1.0;
      for (std::size_t i = 0; i < comp_ids.size(); ++i) {
        const int c = comp_ids[i];
        u_of_comp[c] = comp_values[c][u_idx[i]];
        w_u *= comp_post[c][u_idx[i]];
      }
      std::vector<std::size_t> slot_of(n, 0);
      for (int v : free_nodes) {
        const int c = model.cpts[v].latent;
        if (c >= 0)
          slot_of[v] = u_idx[std::find(comp_ids.begin(), comp_ids.end(), c) -
                             comp_ids.begin()];
      }
      std::vector<std::size_t> a_idx(free_nodes.size(), 0);
      bool a_done = false;
      while (!a_done) {
        double w = w_u;
        for (std::size_t i = 0; i < free_nodes.size(); ++i) {
          const int v = free_nodes[i];
          atom_of[v] = compat[v][slot_of[v]].atom[a_idx[i]];
          w *= compat[v][slot_of[v]].prob[a_idx[i]];
        }
        twin = factual;
        propagate();
        accum(twin, w);
        a_done = true;
        for (std::size_t i = 0; i < free_nodes.size(); ++i) {
          if (++a_idx[i] < compat[free_nodes[i]][slot_of[free_nodes[i]]].atom.size()) {
            a_done = false;
            break;
          }
          a_idx[i] = 0;
        }
        if (free_nodes.empty()) break;
      }
      u_done = true;
      for (std::size_t i = 0; i < comp_ids.size(); ++i) {
        if (++u_idx[i] < comp_values[comp_ids[i]].size()) {
          u_done = false;
          break;
        }
        u_idx[i] = 0;
      }
      if (comp_ids.empty()) break;
    }
    return false;
  }

  Rng rng(derive_seed(cfg.seed, 0xab0dceULL));
  const double w = 1.0 / cfg.samples;
  for (int s = 0; s < cfg.samples; ++s) {
    std::vector<std::size_t> slot_of(n, 0);
    for (int c : comp_ids) {
      std::discrete_distribution<int> pick(comp_post[c].begin(), comp_post[c].end());
      const int i = pick(rng);
      u_of_comp[c] = comp_values[c][i];
      for (int v : model.latents[c].members)
        if (relevant[v] && !intervention.count(v)) slot_of[v] = i;
    }
    for (int v : free_nodes) {
      std::discrete_distribution<int> pick(compat[v][slot_of[v]].prob.begin(),
                                           compat[v][slot_of[v]].prob.end());
      atom_of[v] = compat[v][slot_of[v]].atom[pick(rng)];
    }
    twin = factual;
    propagate();
    accum(twin, w);
  }
  return true;
}

}  // namespace

OutcomeSpec make_outcome_spec(const ObservationTable& raw,
                              const DiscreteTable& discrete,
                              const FaultSpec& fault) {
  const std::vector<double> thresholds = fault_thresholds(raw, fault);
  OutcomeSpec spec;
  spec.threshold_raw = thresholds;
  for (std::size_t i = 0; i < fault.targets.size(); ++i) {
    const int t = raw.schema.index_of(fault.targets[i]);
    const VariableMeta& var = raw.schema.at(t);
    spec.targets.push_back(t);
    spec.direction.push_back(var.direction);
    // First code on the worse side. Interpolated thresholds can fall between
    // discrete levels, so scan the domain instead of snapping the value.
    int tcode;
    if (var.is_discrete()) {
      const int card = var.level_count();
      if (var.direction == Direction::LowerIsBetter) {
        tcode = card;
        for (int c = 0; c < card; ++c)
          if (var.levels[c] > thresholds[i]) {
            tcode = c;
            break;
          }
      } else {
        tcode = -1;
        for (int c = card - 1; c >= 0; --c)
          if (var.levels[c] < thresholds[i]) {
            tcode = c;
            break;
          }
      }
    } else {
      tcode = discrete.code_of(t, thresholds[i]);
    }
    spec.threshold_code.push_back(tcode);
  }
  return spec;
}

bool outcome_worse(const OutcomeSpec& spec, int which, int code) {
  if (spec.direction[which] == Direction::LowerIsBetter)
    return code >= spec.threshold_code[which];
  return code <= spec.threshold_code[which];
}

CfResult counterfactual_outcome_probability(
    const FittedModel& model, const std::vector<int>& factual,
    const std::map<int, int>& intervention,
    const std::function<bool(const std::vector<int>&)>& outcome,
    const CfConfig& cfg) {
  std::vector<int> read_nodes(model.data.cardinality.size());
  std::iota(read_nodes.begin(), read_nodes.end(), 0);
  CfResult result;
  result.sampled = enumerate_twins(
      model, factual, intervention, read_nodes, cfg,
      [&](const std::vector<int>& twin, double w) {
        if (outcome(twin)) result.probability += w;
      });
  return result;
}

IteResult ite(const FittedModel& model, const std::map<int, int>& repair,
              const std::vector<int>& factual, const OutcomeSpec& outcome,
              const CfConfig& cfg) {
  for (const auto& [v, level] : repair) {
    (void)level;
    if (v < 0 || v >= static_cast<int>(model.data.schema.size()) ||
        model.data.schema.at(v).kind != VarKind::ConfigOption)
      throw Error(ErrorCode::InvalidArgument, "repair keys must be config options");
  }
  IteResult result;
  result.sampled = enumerate_twins(
      model, factual, repair, outcome.targets, cfg,
      [&](const std::vector<int>& twin, double w) {
        bool any_worse = false;
        for (std::size_t i = 0; i < outcome.targets.size(); ++i)
          if (outcome_worse(outcome, static_cast<int>(i), twin[outcome.targets[i]])) {
            any_worse = true;
            break;
          }
        if (any_worse)
          result.p_worse += w;
        else
          result.p_better += w;
      });
  result.value = result.p_better - result.p_worse;
  return result;
}

RepairSet generate_repair_set(const std::vector<CausalPath>& paths,
                              const FittedModel& model,
                              const std::vector<int>& targets, long long cap) {
  const Schema& schema = model.data.schema;
  std::vector<int> options;
  for (const CausalPath& path : paths)
    for (int v : path.nodes) {
      const VariableMeta& meta = schema.at(v);
      if (meta.kind != VarKind::ConfigOption || !meta.intervenable) continue;
      if (std::find(options.begin(), options.end(), v) == options.end())
        options.push_back(v);
    }
  std::sort(options.begin(), options.end());
  if (options.empty())
    throw Error(ErrorCode::NoIntervenableOption,
                "no intervenable option lies on the ranked paths");

  long long product = 1;
  for (int o : options) {
    product *= model.cardinality(o);
    if (product > cap) break;
  }

  RepairSet set;
  if (product <= cap) {
    std::vector<int> levels(options.size(), 0);
    bool done = false;
    while (!done) {
      Repair r;
      for (std::size_t i = 0; i < options.size(); ++i)
        r.assignment[options[i]] = levels[i];
      set.candidates.push_back(std::move(r));
      done = true;
      for (int i = static_cast<int>(options.size()) - 1; i >= 0; --i) {
        if (++levels[i] < model.cardinality(options[i])) {
          done = false;
          break;
        }
        levels[i] = 0;
      }
    }
    return set;
  }

  set.capped = true;
  for (int o : options)
    for (int l = 0; l < model.cardinality(o); ++l) {
      Repair r;
      r.assignment[o] = l;
      set.candidates.push_back(std::move(r));
    }
  if (options.size() >= 2) {
    // Pairwise combinations over the two options with the strongest effect.
    std::vector<std::pair<double, int>> scored;
    for (int o : options) {
      double best = 0.0;
      for (int t : targets) best = std::max(best, ace(model, t, o));
      scored.emplace_back(-best, o);
    }
    std::sort(scored.begin(), scored.end());
    const int o1 = std::min(scored[0].second, scored[1].second);
    const int o2 = std::max(scored[0].second, scored[1].second);
    for (int l1 = 0; l1 < model.cardinality(o1); ++l1)
      for (int l2 = 0; l2 < model.cardinality(o2); ++l2) {
        Repair r;
        r.assignment[o1] = l1;
        r.assignment[o2] = l2;
        set.candidates.push_back(std::move(r));
      }
  }
  return set;
}

void sort_repairs(std::vector<Repair>& repairs, const std::vector<int>& factual) {
  const auto changed = [&](const Repair& r) {
    int count = 0;
    for (const auto& [v, level] : r.assignment)
      if (factual[v] != level) ++count;
    return count;
  };
  std::stable_sort(repairs.begin(), repairs.end(),
                   [&](const Repair& a, const Repair& b) {
                     if (a.ite != b.ite) return a.ite > b.ite;
                     const int ca = changed(a), cb = changed(b);
                     if (ca != cb) return ca < cb;
                     return a.assignment < b.assignment;
                   });
}

}  // namespace ccd
