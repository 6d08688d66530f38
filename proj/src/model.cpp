#include "ccd/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "ccd/error.hpp"
#include "ccd/rng.hpp"

namespace ccd {
namespace {

constexpr double kFactorCellCap = 2e7;

int pack_parent_config(const NodeCpt& cpt, const std::vector<int>& cards,
                       const std::function<int(int)>& code_of) {
  int row = 0;
  for (int p : cpt.parents) row = row * cards[p] + code_of(p);
  return row;
}

int cpt_rows(const NodeCpt& cpt, const std::vector<int>& cards, int latent_card) {
  int rows = 1;
  for (int p : cpt.parents) rows *= cards[p];
  return rows * std::max(1, latent_card);
}

// Smoothed row-normalized counts for a node with no latent parent.
void fit_direct(NodeCpt& cpt, const DiscreteTable& table,
                const std::vector<int>& cards, double alpha) {
  const int levels = cards[cpt.node];
  const int rows = cpt_rows(cpt, cards, 0);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Constant(rows, levels, alpha);
  for (int r = 0; r < table.codes.rows(); ++r) {
    const int row = pack_parent_config(
        cpt, cards, [&](int p) { return table.codes(r, p); });
    counts(row, table.codes(r, cpt.node)) += 1.0;
  }
  for (int i = 0; i < rows; ++i) {
    const double total = counts.row(i).sum();
    if (total <= 0.0)
      counts.row(i).setConstant(1.0 / levels);
    else
      counts.row(i) /= total;
  }
  cpt.table = counts;
}

struct ComponentFit {
  Eigen::VectorXd prior;
  std::vector<Eigen::MatrixXd> tables;  // per member, rows include latent value
  std::vector<double> objective;
};

// MAP EM for one bidirected component. The latent value is the fastest
// index of each member's row packing.
ComponentFit fit_component(const std::vector<NodeCpt*>& members,
                           const DiscreteTable& table,
                           const std::vector<int>& cards, int k_u,
                           double alpha, int iterations, std::uint64_t seed) {
  const int n = static_cast<int>(table.codes.rows());
  const int m = static_cast<int>(members.size());
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(0.5, 1.5);

  ComponentFit fit;
  fit.prior = Eigen::VectorXd::Constant(k_u, 1.0 / k_u);
  for (int i = 0; i < k_u; ++i) fit.prior(i) *= jitter(rng);
  fit.prior /= fit.prior.sum();

  fit.tables.resize(m);
  for (int j = 0; j < m; ++j) {
    NodeCpt& cpt = *members[j];
    const int levels = cards[cpt.node];
    const int base_rows = cpt_rows(cpt, cards, 0);
    // Start every latent slice from the smoothed marginal fit, jittered so
    // the slices can separate.
    NodeCpt plain = cpt;
    fit_direct(plain, table, cards, std::max(alpha, 1.0));
    Eigen::MatrixXd init(base_rows * k_u, levels);
    for (int row = 0; row < base_rows; ++row)
      for (int u = 0; u < k_u; ++u) {
        Eigen::VectorXd v = plain.table.row(row);
        for (int l = 0; l < levels; ++l) v(l) *= jitter(rng);
        init.row(row * k_u + u) = v / v.sum();
      }
    fit.tables[j] = init;
  }

  std::vector<int> base_row(m);
  Eigen::MatrixXd weights(n, k_u);
  const auto objective_now = [&]() {
    double loglik = 0.0;
    for (int r = 0; r < n; ++r) {
      double total = 0.0;
      for (int u = 0; u < k_u; ++u) {
        double w = fit.prior(u);
        for (int j = 0; j < m; ++j) {
          const NodeCpt& cpt = *members[j];
          const int row = pack_parent_config(
              cpt, cards, [&](int p) { return table.codes(r, p); });
          w *= fit.tables[j](row * k_u + u, table.codes(r, cpt.node));
        }
        total += w;
      }
      loglik += std::log(std::max(total, 1e-300));
    }
    if (alpha > 0.0) {
      for (int u = 0; u < k_u; ++u)
        loglik += alpha * std::log(std::max(fit.prior(u), 1e-300));
      for (const auto& t : fit.tables)
        for (int i = 0; i < t.rows(); ++i)
          for (int l = 0; l < t.cols(); ++l)
            loglik += alpha * std::log(std::max(t(i, l), 1e-300));
    }
    return loglik;
  };

  fit.objective.push_back(objective_now());
  for (int it = 0; it < iterations; ++it) {
    // E step: posterior over the latent per data row.
    for (int r = 0; r < n; ++r) {
      for (int u = 0; u < k_u; ++u) {
        double w = fit.prior(u);
        for (int j = 0; j < m; ++j) {
          const NodeCpt& cpt = *members[j];
          const int row = pack_parent_config(
              cpt, cards, [&](int p) { return table.codes(r, p); });
          w *= fit.tables[j](row * k_u + u, table.codes(r, cpt.node));
        }
        weights(r, u) = w;
      }
      const double total = weights.row(r).sum();
      if (total <= 0.0)
        weights.row(r).setConstant(1.0 / k_u);
      else
        weights.row(r) /= total;
    }
    // M step with the same additive smoothing as the direct fit.
    Eigen::VectorXd prior_counts = Eigen::VectorXd::Constant(k_u, alpha);
    for (int r = 0; r < n; ++r) prior_counts += weights.row(r).transpose();
    fit.prior = prior_counts / prior_counts.sum();
    for (int j = 0; j < m; ++j) {
      const NodeCpt& cpt = *members[j];
      const int levels = cards[cpt.node];
      Eigen::MatrixXd counts = Eigen::MatrixXd::Constant(
          fit.tables[j].rows(), levels, alpha);
      for (int r = 0; r < n; ++r) {
        const int row = pack_parent_config(
            cpt, cards, [&](int p) { return table.codes(r, p); });
        for (int u = 0; u < k_u; ++u)
          counts(row * k_u + u, table.codes(r, cpt.node)) += weights(r, u);
      }
      for (int i = 0; i < counts.rows(); ++i) counts.row(i) /= counts.row(i).sum();
      fit.tables[j] = counts;
    }
    fit.objective.push_back(objective_now());
  }
  return fit;
}

struct Factor {
  std::vector<int> vars;  // ascending ids; latent c maps to id n_visible + c
  std::vector<int> cards;
  Eigen::VectorXd values;
};

long long factor_size(const std::vector<int>& cards) {
  long long s = 1;
  for (int c : cards) s *= c;
  return s;
}

Factor multiply(const Factor& a, const Factor& b) {
  Factor out;
  out.vars = a.vars;
  for (int v : b.vars)
    if (std::find(out.vars.begin(), out.vars.end(), v) == out.vars.end())
      out.vars.push_back(v);
  std::sort(out.vars.begin(), out.vars.end());
  out.cards.resize(out.vars.size());
  for (std::size_t i = 0; i < out.vars.size(); ++i) {
    const int v = out.vars[i];
    const auto ia = std::find(a.vars.begin(), a.vars.end(), v);
    out.cards[i] = ia != a.vars.end()
                       ? a.cards[ia - a.vars.begin()]
                       : b.cards[std::find(b.vars.begin(), b.vars.end(), v) - b.vars.begin()];
  }
  const long long size = factor_size(out.cards);
  if (size > static_cast<long long>(kFactorCellCap))
    throw Error(ErrorCode::IntractableEnumeration,
                "variable elimination factor exceeds the cell cap");
  std::vector<int> pos_a(out.vars.size(), -1), pos_b(out.vars.size(), -1);
  for (std::size_t i = 0; i < out.vars.size(); ++i) {
    const auto ia = std::find(a.vars.begin(), a.vars.end(), out.vars[i]);
    if (ia != a.vars.end()) pos_a[i] = static_cast<int>(ia - a.vars.begin());
    const auto ib = std::find(b.vars.begin(), b.vars.end(), out.vars[i]);
    if (ib != b.vars.end()) pos_b[i] = static_cast<int>(ib - b.vars.begin());
  }
  out.values.resize(size);
  std::vector<int> config(out.vars.size(), 0);
  for (long long idx = 0; idx < size; ++idx) {
    long long ia = 0, ib = 0;
    for (std::size_t i = 0; i < out.vars.size(); ++i) {
      if (pos_a[i] >= 0) ia = ia * a.cards[pos_a[i]] + config[i];
      if (pos_b[i] >= 0) ib = ib * b.cards[pos_b[i]] + config[i];
    }
    out.values(idx) = (a.vars.empty() ? a.values(0) : a.values(ia)) *
                      (b.vars.empty() ? b.values(0) : b.values(ib));
    for (int i = static_cast<int>(config.size()) - 1; i >= 0; --i) {
      if (++config[i] < out.cards[i]) break;
      config[i] = 0;
    }
  }
  if (out.vars.empty()) {
    out.values.resize(1);
    out.values(0) = a.values(0) * b.values(0);
  }
  return out;
}

Factor marginalize(const Factor& f, int var) {
  const auto it = std::find(f.vars.begin(), f.vars.end(), var);
  if (it == f.vars.end()) return f;
  const int pos = static_cast<int>(it - f.vars.begin());
  Factor out;
  out.vars = f.vars;
  out.vars.erase(out.vars.begin() + pos);
  out.cards = f.cards;
  out.cards.erase(out.cards.begin() + pos);
  const long long size = std::max<long long>(1, factor_size(out.cards));
  out.values = Eigen::VectorXd::Zero(size);
  std::vector<int> config(f.vars.size(), 0);
  const long long full = factor_size(f.cards);
  for (long long idx = 0; idx < full; ++idx) {
    long long io = 0;
    for (std::size_t i = 0; i < f.vars.size(); ++i)
      if (static_cast<int>(i) != pos) io = io * f.cards[i] + config[i];
    out.values(io) += f.values(idx);
    for (int i = static_cast<int>(config.size()) - 1; i >= 0; --i) {
      if (++config[i] < f.cards[i]) break;
      config[i] = 0;
    }
  }
  return out;
}

// CPT factor of one node, with intervened parents fixed to their levels.
Factor node_factor(const FittedModel& model, int node,
                   const std::map<int, int>& do_levels) {
  const NodeCpt& cpt = model.cpts[node];
  const int n_visible = static_cast<int>(model.data.cardinality.size());
  const int k_u = cpt.latent >= 0 ? model.latents[cpt.latent].cardinality : 0;

  Factor out;
  std::vector<int> free_vars{node};
  for (int p : cpt.parents)
    if (!do_levels.count(p)) free_vars.push_back(p);
  if (cpt.latent >= 0) free_vars.push_back(n_visible + cpt.latent);
  std::sort(free_vars.begin(), free_vars.end());
  out.vars = free_vars;
  out.cards.resize(out.vars.size());
  for (std::size_t i = 0; i < out.vars.size(); ++i)
    out.cards[i] = out.vars[i] < n_visible ? model.data.cardinality[out.vars[i]]
                                           : model.latents[out.vars[i] - n_visible].cardinality;

  const long long size = factor_size(out.cards);
  out.values.resize(size);
  std::vector<int> config(out.vars.size(), 0);
  for (long long idx = 0; idx < size; ++idx) {
    const auto code_of = [&](int v) -> int {
      const auto it = do_levels.find(v);
      if (it != do_levels.end()) return it->second;
      const auto pos = std::find(out.vars.begin(), out.vars.end(), v);
      return config[pos - out.vars.begin()];
    };
    int row = pack_parent_config(cpt, model.data.cardinality, code_of);
    if (cpt.latent >= 0) row = row * k_u + code_of(n_visible + cpt.latent);
    out.values(idx) = cpt.table(row, code_of(node));
    for (int i = static_cast<int>(config.size()) - 1; i >= 0; --i) {
      if (++config[i] < out.cards[i]) break;
      config[i] = 0;
    }
  }
  return out;
}

// Distribution of `target` under do(assignment), normalized.
Eigen::VectorXd do_distribution(const FittedModel& model, int target,
                                const std::map<int, int>& do_levels) {
  const int n_visible = static_cast<int>(model.data.cardinality.size());
  // Ancestral closure of the target, stopping at intervened nodes.
  std::vector<char> relevant(n_visible, 0);
  std::vector<int> queue{target};
  relevant[target] = 1;
  while (!queue.empty()) {
    const int v = queue.back();
    queue.pop_back();
    if (do_levels.count(v)) continue;
    for (int p : model.graph.parents(v))
      if (!relevant[p]) {
        relevant[p] = 1;
        queue.push_back(p);
      }
  }

  std::vector<Factor> factors;
  std::vector<char> latent_used(model.latents.size(), 0);
  for (int v = 0; v < n_visible; ++v) {
    if (!relevant[v] || do_levels.count(v)) continue;
    factors.push_back(node_factor(model, v, do_levels));
    if (model.cpts[v].latent >= 0) latent_used[model.cpts[v].latent] = 1;
  }
  for (std::size_t c = 0; c < model.latents.size(); ++c) {
    if (!latent_used[c]) continue;
    Factor f;
    f.vars = {n_visible + static_cast<int>(c)};
    f.cards = {model.latents[c].cardinality};
    f.values = model.latents[c].prior;
    factors.push_back(f);
  }

  std::vector<int> to_eliminate;
  for (const Factor& f : factors)
    for (int v : f.vars)
      if (v != target &&
          std::find(to_eliminate.begin(), to_eliminate.end(), v) == to_eliminate.end())
        to_eliminate.push_back(v);
  std::sort(to_eliminate.begin(), to_eliminate.end());

  while (!to_eliminate.empty()) {
    // Greedy order: eliminate the variable whose combined factor is smallest.
    int best = -1;
    long long best_size = std::numeric_limits<long long>::max();
    for (int v : to_eliminate) {
      std::vector<int> joint_vars, joint_cards;
      for (const Factor& f : factors) {
        if (std::find(f.vars.begin(), f.vars.end(), v) == f.vars.end()) continue;
        for (std::size_t i = 0; i < f.vars.size(); ++i)
          if (std::find(joint_vars.begin(), joint_vars.end(), f.vars[i]) == joint_vars.end()) {
            joint_vars.push_back(f.vars[i]);
            joint_cards.push_back(f.cards[i]);
          }
      }
      const long long size = factor_size(joint_cards);
      if (size < best_size) {
        best_size = size;
        best = v;
      }
    }
    Factor combined;
    combined.values = Eigen::VectorXd::Ones(1);
    std::vector<Factor> rest;
    for (Factor& f : factors) {
      if (std::find(f.vars.begin(), f.vars.end(), best) != f.vars.end())
        combined = multiply(combined, f);
      else
        rest.push_back(std::move(f));
    }
    rest.push_back(marginalize(combined, best));
    factors = std::move(rest);
    to_eliminate.erase(std::find(to_eliminate.begin(), to_eliminate.end(), best));
  }

  Factor result;
  result.values = Eigen::VectorXd::Ones(1);
  for (const Factor& f : factors) result = multiply(result, f);
  Eigen::VectorXd dist(model.data.cardinality[target]);
  if (result.vars.empty())
    dist.setConstant(1.0 / dist.size());
  else
    dist = result.values;
  const double total = dist.sum();
  if (total <= 0.0)
    dist.setConstant(1.0 / dist.size());
  else
    dist /= total;
  return dist;
}

}  // namespace

FittedModel fit_cpts(const DiscreteTable& table, const Admg& graph,
                     const FitConfig& cfg) {
  const int n = static_cast<int>(table.cardinality.size());
  if (graph.node_count() != n)
    throw Error(ErrorCode::InvalidArgument,
                "graph and table disagree on the variable count");
  if (table.codes.rows() == 0) throw Error(ErrorCode::EmptyTable, "no rows to fit");

  FittedModel model;
  model.data = table;
  model.graph = graph;
  model.cpts.resize(n);

  const auto components = graph.bidirected_components();
  std::vector<int> component_of(n, -1);
  for (std::size_t c = 0; c < components.size(); ++c) {
    LatentFactor latent;
    latent.members = components[c];
    for (int v : components[c])
      latent.cardinality = std::max(latent.cardinality, table.cardinality[v]);
    model.latents.push_back(latent);
    for (int v : components[c]) component_of[v] = static_cast<int>(c);
  }

  for (int v = 0; v < n; ++v) {
    model.cpts[v].node = v;
    model.cpts[v].parents = graph.parents(v);
    model.cpts[v].latent = component_of[v];
  }

  for (int v = 0; v < n; ++v)
    if (component_of[v] < 0)
      fit_direct(model.cpts[v], table, table.cardinality, cfg.smoothing);

  for (std::size_t c = 0; c < components.size(); ++c) {
    std::vector<NodeCpt*> members;
    for (int v : components[c]) members.push_back(&model.cpts[v]);
    ComponentFit fit = fit_component(
        members, table, table.cardinality, model.latents[c].cardinality,
        cfg.smoothing, cfg.em_iterations,
        derive_seed(cfg.seed, 0xc0117ULL, static_cast<std::uint64_t>(c)));
    model.latents[c].prior = fit.prior;
    for (std::size_t j = 0; j < members.size(); ++j)
      members[j]->table = fit.tables[j];
    model.em_objective.push_back(std::move(fit.objective));
  }
  return model;
}

double interventional_expectation(const FittedModel& model, int target,
                                  const std::map<int, int>& do_levels) {
  const int n = static_cast<int>(model.data.cardinality.size());
  if (target < 0 || target >= n)
    throw Error(ErrorCode::InvalidArgument, "target index out of range");
  for (const auto& [v, level] : do_levels) {
    if (v < 0 || v >= n)
      throw Error(ErrorCode::InvalidArgument, "intervention variable out of range");
    if (level < 0 || level >= model.data.cardinality[v])
      throw Error(ErrorCode::ValueOutOfDomain, "intervention level out of range");
  }
  const auto it = do_levels.find(target);
  if (it != do_levels.end()) return model.data.level_value(target, it->second);

  const Eigen::VectorXd dist = do_distribution(model, target, do_levels);
  double e = 0.0;
  for (int l = 0; l < dist.size(); ++l)
    e += dist(l) * model.data.level_value(target, l);
  return e;
}

double ace(const FittedModel& model, int z, int x) {
  if (z == x) throw Error(ErrorCode::InvalidArgument, "effect equals cause");
  const int levels = model.cardinality(x);
  if (levels < 2) return 0.0;
  std::vector<double> expectation(levels);
  for (int l = 0; l < levels; ++l)
    expectation[l] = interventional_expectation(model, z, {{x, l}});
  double total = 0.0;
  for (int l = 0; l + 1 < levels; ++l)
    total += std::abs(expectation[l + 1] - expectation[l]);
  return total / (levels - 1);
}

Eigen::VectorXd marginal_distribution(const FittedModel& model, int node) {
  return do_distribution(model, node, {});
}

}  // namespace ccd
