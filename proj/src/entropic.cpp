#include "ccd/entropic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "ccd/error.hpp"
#include "ccd/rng.hpp"

namespace ccd {

namespace {

std::atomic<std::size_t> g_monotone_violations{0};

constexpr double kMassEps = 1e-12;
constexpr double kMonotoneSlack = 1e-9;
// Restarts whose fit is within this much of the best fit compete on H(Z).
// The identity start always fits exactly, so this is in effect a cap on the
// residual conditional mutual information a solution may leave behind, sized
// for sampling noise at n in the hundreds.
constexpr double kFitSlack = 0.05;
// Latent states with conditionals this close describe the same mixture
// component and are merged before H(Z) is read off.
constexpr double kMergeTol = 5e-3;

struct LatentRun {
  Eigen::MatrixXd c;  // rows: x * k_y + y, cols: z
  double h_z = 0.0;
  double loss = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

// Alternating minimization of the free energy
//   F = KL( p(x,y) q(z|x,y) || q(z) q(x|z) q(y|z) ).
// The marginal update and the conditional update each minimize F exactly in
// their own block, so the tracked loss can only go down.
LatentRun run_latent_search(const JointDistribution& joint, int k_z,
                            const EntropicConfig& cfg, int restart,
                            std::uint64_t seed) {
  const int kx = static_cast<int>(joint.rows());
  const int ky = static_cast<int>(joint.cols());
  const int cells = kx * ky;

  LatentRun run;
  run.c.resize(cells, k_z);
  // Start schedule: 0 constant Z (right fixed point under independence),
  // 1 one state per cell (fits exactly, anchors the admissible-loss bar),
  // 2 and 3 binary splits along the joint's second singular vectors (cheap
  // guesses at a two-state confounder), the rest random.
  const bool spectral = (restart == 2 || restart == 3) && kx >= 2 && ky >= 2;
  if (restart == 0) {
    const double eps = 1e-3;
    run.c.setConstant(k_z > 1 ? eps / (k_z - 1) : 1.0);
    run.c.col(0).setConstant(k_z > 1 ? 1.0 - eps : 1.0);
  } else if (restart == 1) {
    run.c.setZero();
    for (int cell = 0; cell < cells; ++cell) run.c(cell, cell % k_z) = 1.0;
  } else if (spectral && k_z >= 2) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(
        joint, Eigen::ComputeThinU | Eigen::ComputeThinV);
    run.c.setConstant(k_z > 2 ? 1e-6 / (k_z - 2) : 0.0);
    for (int x = 0; x < kx; ++x)
      for (int y = 0; y < ky; ++y) {
        double side = restart == 2 ? svd.matrixU()(x, 1) : svd.matrixV()(y, 1);
        int cell = x * ky + y;
        run.c(cell, 0) = side >= 0.0 ? 0.9 : 0.1;
        run.c(cell, 1) = side >= 0.0 ? 0.1 : 0.9;
        run.c.row(cell) /= run.c.row(cell).sum();
      }
  } else {
    Rng rng(seed);
    std::exponential_distribution<double> expo(1.0);
    for (int cell = 0; cell < cells; ++cell) {
      double total = 0.0;
      for (int z = 0; z < k_z; ++z) {
        run.c(cell, z) = expo(rng) + 1e-12;
        total += run.c(cell, z);
      }
      run.c.row(cell) /= total;
    }
  }

  Eigen::VectorXd qz(k_z);
  Eigen::MatrixXd qxz(kx, k_z), qyz(ky, k_z);

  auto accumulate = [&]() {
    qz.setZero();
    qxz.setZero();
    qyz.setZero();
    for (int x = 0; x < kx; ++x)
      for (int y = 0; y < ky; ++y) {
        double w = joint(x, y);
        if (w <= 0.0) continue;
        int cell = x * ky + y;
        for (int z = 0; z < k_z; ++z) {
          double m = w * run.c(cell, z);
          qz(z) += m;
          qxz(x, z) += m;
          qyz(y, z) += m;
        }
      }
  };
  auto loss_now = [&]() {
    double loss = 0.0;
    for (int x = 0; x < kx; ++x)
      for (int y = 0; y < ky; ++y) {
        double w = joint(x, y);
        if (w <= 0.0) continue;
        int cell = x * ky + y;
        for (int z = 0; z < k_z; ++z) {
          double m = w * run.c(cell, z);
          if (m <= kMassEps || qz(z) <= kMassEps) continue;
          double factored = qxz(x, z) * qyz(y, z) / qz(z);
          if (factored <= 0.0) continue;
          loss += m * std::log2(m / factored);
        }
      }
    return std::max(loss, 0.0);
  };

  double prev_loss = 0.0;
  for (int t = 0; t < cfg.max_iters; ++t) {
    accumulate();
    double loss = loss_now();
    if (t > 0 && loss > prev_loss + kMonotoneSlack)
      g_monotone_violations.fetch_add(1, std::memory_order_relaxed);
    run.trace.push_back(loss);
    prev_loss = loss;

    double delta = 0.0;
    for (int x = 0; x < kx; ++x)
      for (int y = 0; y < ky; ++y) {
        int cell = x * ky + y;
        double total = 0.0;
        Eigen::VectorXd next(k_z);
        for (int z = 0; z < k_z; ++z) {
          next(z) = qz(z) > kMassEps ? qxz(x, z) * qyz(y, z) / qz(z) : 0.0;
          total += next(z);
        }
        if (total <= 0.0) continue;
        for (int z = 0; z < k_z; ++z) {
          double v = next(z) / total;
          delta = std::max(delta, std::fabs(v - run.c(cell, z)));
          run.c(cell, z) = v;
        }
      }
    run.iterations = t + 1;
    if (delta < cfg.tol) {
      run.converged = true;
      break;
    }
  }

  // Merge latent states that carry the same component conditionals; the
  // mixture they describe is unchanged and H(Z) only drops.
  accumulate();
  std::vector<int> kept;
  for (int z = 0; z < k_z; ++z) {
    if (qz(z) <= 1e-9) continue;
    bool merged = false;
    for (int r : kept) {
      double diff = 0.0;
      for (int x = 0; x < kx; ++x)
        diff = std::max(diff,
                        std::fabs(qxz(x, z) / qz(z) - qxz(x, r) / qz(r)));
      for (int y = 0; y < ky; ++y)
        diff = std::max(diff,
                        std::fabs(qyz(y, z) / qz(z) - qyz(y, r) / qz(r)));
      if (diff < kMergeTol) {
        run.c.col(r) += run.c.col(z);
        run.c.col(z).setZero();
        merged = true;
        break;
      }
    }
    if (!merged) kept.push_back(z);
  }

  accumulate();
  run.h_z = shannon_entropy(qz);
  run.loss = loss_now();
  return run;
}

}  // namespace

const char* verdict_name(DirectionVerdict verdict) {
  switch (verdict) {
    case DirectionVerdict::XCausesY: return "x_causes_y";
    case DirectionVerdict::YCausesX: return "y_causes_x";
    case DirectionVerdict::Confounded: return "confounded";
  }
  return "?";
}

JointDistribution empirical_joint(const DiscreteTable& table, int x, int y,
                                  double smoothing) {
  if (x == y)
    throw Error(ErrorCode::InvalidArgument, "joint of a variable with itself");
  if (smoothing < 0.0)
    throw Error(ErrorCode::InvalidArgument, "smoothing must be non-negative");
  int kx = table.cardinality[x], ky = table.cardinality[y];
  JointDistribution joint = Eigen::MatrixXd::Constant(
      kx, ky, smoothing / static_cast<double>(kx) / static_cast<double>(ky));
  for (int r = 0; r < table.rows(); ++r)
    joint(table.codes(r, x), table.codes(r, y)) += 1.0;
  joint /= static_cast<double>(table.rows()) + smoothing;
  return joint;
}

double shannon_entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p(i) < -1e-9)
      throw Error(ErrorCode::InvalidArgument, "negative probability mass");
    if (p(i) > kMassEps) h -= p(i) * std::log2(p(i));
  }
  return std::max(h, 0.0);
}

Eigen::VectorXd marginal_x(const JointDistribution& joint) {
  return joint.rowwise().sum();
}

Eigen::VectorXd marginal_y(const JointDistribution& joint) {
  return joint.colwise().sum().transpose();
}

std::size_t latent_search_violation_count() {
  return g_monotone_violations.load(std::memory_order_relaxed);
}

LatentSearchResult latent_search(const JointDistribution& joint,
                                 const EntropicConfig& cfg) {
  const int kx = static_cast<int>(joint.rows());
  const int ky = static_cast<int>(joint.cols());
  if (kx < 1 || ky < 1)
    throw Error(ErrorCode::InvalidArgument, "empty joint distribution");
  int k_z = cfg.k_z > 0 ? cfg.k_z : kx * ky;

  std::vector<LatentRun> runs;
  double best_fit = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(cfg.restarts, 1); ++r) {
    runs.push_back(run_latent_search(joint, k_z, cfg, r,
                                     derive_seed(cfg.seed, 0x1a7e57ULL, r)));
    best_fit = std::min(best_fit, runs.back().loss);
  }

  int pick = -1;
  for (int r = 0; r < static_cast<int>(runs.size()); ++r) {
    if (runs[r].loss > best_fit + kFitSlack) continue;
    if (pick < 0 || runs[r].h_z < runs[pick].h_z - 1e-12) pick = r;
  }

  const LatentRun& best = runs[pick];
  LatentSearchResult result;
  result.q_z_given_xy = best.c;
  result.h_z = best.h_z;
  result.fit_loss = best.loss;
  result.iterations_used = best.iterations;
  result.converged = best.converged;
  result.loss_trace = best.trace;
  return result;
}

bool confounder_below_threshold(double h_z, double h_x, double h_y,
                                double theta_factor) {
  return h_z < theta_factor * std::min(h_x, h_y);
}

double greedy_coupling_entropy(
    const std::vector<Eigen::VectorXd>& conditionals) {
  if (conditionals.empty())
    throw Error(ErrorCode::InvalidArgument, "no conditionals to couple");
  std::vector<Eigen::VectorXd> residual = conditionals;
  double remaining = 1.0;
  std::vector<double> emitted;
  long long guard = 64;
  for (const auto& c : residual) guard += c.size();

  while (remaining > 1e-9 && guard-- > 0) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& c : residual) {
      Eigen::Index idx;
      m = std::min(m, c.maxCoeff(&idx));
    }
    if (m < kMassEps) break;
    emitted.push_back(m);
    remaining -= m;
    for (auto& c : residual) {
      Eigen::Index idx;
      c.maxCoeff(&idx);
      c(idx) = std::max(0.0, c(idx) - m);
    }
  }

  double h = 0.0;
  for (double m : emitted)
    if (m > kMassEps) h -= m * std::log2(m);
  return std::max(h, 0.0);
}

double min_entropy_exogenous(const DiscreteTable& table, int cause, int effect,
                             double smoothing) {
  JointDistribution joint = empirical_joint(table, cause, effect, smoothing);
  std::vector<Eigen::VectorXd> conditionals;
  for (int x = 0; x < joint.rows(); ++x) {
    double w = joint.row(x).sum();
    if (w <= kMassEps) continue;
    conditionals.push_back(joint.row(x).transpose() / w);
  }
  return greedy_coupling_entropy(conditionals);
}

EdgeOrientation orient_edge(const DiscreteTable& table, int x, int y,
                            const EntropicConfig& cfg) {
  if (x == y)
    throw Error(ErrorCode::InvalidArgument, "orient_edge needs x != y");
  if (x > y) {
    // Canonical order keeps the construction exactly symmetric in x and y.
    EdgeOrientation mirrored = orient_edge(table, y, x, cfg);
    std::swap(mirrored.h_forward, mirrored.h_backward);
    if (mirrored.verdict == DirectionVerdict::XCausesY)
      mirrored.verdict = DirectionVerdict::YCausesX;
    else if (mirrored.verdict == DirectionVerdict::YCausesX)
      mirrored.verdict = DirectionVerdict::XCausesY;
    return mirrored;
  }

  JointDistribution joint = empirical_joint(table, x, y, cfg.smoothing);
  EdgeOrientation out;
  double h_x = shannon_entropy(marginal_x(joint));
  double h_y = shannon_entropy(marginal_y(joint));
  out.threshold = cfg.theta_factor * std::min(h_x, h_y);

  std::vector<char> seen_x(table.cardinality[x], 0);
  std::vector<char> seen_y(table.cardinality[y], 0);
  for (int r = 0; r < table.rows(); ++r) {
    seen_x[table.codes(r, x)] = 1;
    seen_y[table.codes(r, y)] = 1;
  }
  int levels_x = static_cast<int>(std::count(seen_x.begin(), seen_x.end(), 1));
  int levels_y = static_cast<int>(std::count(seen_y.begin(), seen_y.end(), 1));
  if (levels_x < 2 || levels_y < 2) {
    // A constant variable supports no directional claim.
    out.verdict = DirectionVerdict::Confounded;
    return out;
  }

  EntropicConfig run_cfg = cfg;
  run_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(x) << 20,
                             static_cast<std::uint64_t>(y));
  LatentSearchResult ls = latent_search(joint, run_cfg);
  out.h_z = ls.h_z;
  if (confounder_below_threshold(ls.h_z, h_x, h_y, cfg.theta_factor)) {
    out.verdict = DirectionVerdict::Confounded;
    return out;
  }

  std::vector<Eigen::VectorXd> fwd, bwd;
  for (int i = 0; i < joint.rows(); ++i) {
    double w = joint.row(i).sum();
    if (w > kMassEps) fwd.push_back(joint.row(i).transpose() / w);
  }
  for (int j = 0; j < joint.cols(); ++j) {
    double w = joint.col(j).sum();
    if (w > kMassEps) bwd.push_back(joint.col(j) / w);
  }
  out.h_forward = greedy_coupling_entropy(fwd);
  out.h_backward = greedy_coupling_entropy(bwd);

  if (std::fabs(out.h_forward - out.h_backward) < 1e-9) {
    out.verdict = DirectionVerdict::Confounded;
    return out;
  }
  out.verdict = out.h_forward < out.h_backward ? DirectionVerdict::XCausesY
                                               : DirectionVerdict::YCausesX;
  return out;
}

Admg resolve_pag(const Pag& pag, const DiscreteTable& table,
                 const EntropicConfig& cfg) {
  const Schema& schema = pag.schema();
  TierKnowledge tiers = TierKnowledge::from_schema(schema);
  Admg admg(schema);
  admg.notes = pag.notes;

  auto name = [&](int v) { return schema.at(v).name; };

  for (const auto& e : pag.edges()) {
    Mark ma = e.mark_a, mb = e.mark_b;
    if (ma == Mark::Tail && mb == Mark::Tail) {
      admg.notes.push_back("edge " + name(e.a) + " - " + name(e.b) +
                           " has tails at both ends, treated as unresolved");
      ma = mb = Mark::Circle;
    }

    bool fwd_ok = (ma != Mark::Arrow) && (mb != Mark::Tail) &&
                  !(tiers.tier[e.b] < tiers.tier[e.a]);
    bool rev_ok = (mb != Mark::Arrow) && (ma != Mark::Tail) &&
                  !(tiers.tier[e.a] < tiers.tier[e.b]);
    bool bi_ok = (ma != Mark::Tail) && (mb != Mark::Tail);

    int choice;  // 0: a -> b, 1: b -> a, 2: a <-> b
    int admissible = (fwd_ok ? 1 : 0) + (rev_ok ? 1 : 0) + (bi_ok ? 1 : 0);
    bool had_circle = ma == Mark::Circle || mb == Mark::Circle;

    if (admissible == 0) {
      admg.notes.push_back("edge " + name(e.a) + " - " + name(e.b) +
                           " admits no orientation, kept bidirected");
      choice = 2;
    } else if (!had_circle || admissible == 1) {
      choice = fwd_ok ? 0 : (rev_ok ? 1 : 2);
    } else {
      EdgeOrientation decision = orient_edge(table, e.a, e.b, cfg);
      int wanted = decision.verdict == DirectionVerdict::XCausesY   ? 0
                   : decision.verdict == DirectionVerdict::YCausesX ? 1
                                                                    : 2;
      if ((wanted == 0 && fwd_ok) || (wanted == 1 && rev_ok) ||
          (wanted == 2 && bi_ok)) {
        choice = wanted;
      } else if (wanted == 0 && tiers.tier[e.b] < tiers.tier[e.a] && rev_ok) {
        admg.notes.push_back("entropic verdict " + name(e.a) + " -> " +
                             name(e.b) + " contradicts tiers, reversed");
        choice = 1;
      } else if (wanted == 1 && tiers.tier[e.a] < tiers.tier[e.b] && fwd_ok) {
        admg.notes.push_back("entropic verdict " + name(e.b) + " -> " +
                             name(e.a) + " contradicts tiers, reversed");
        choice = 0;
      } else if (bi_ok) {
        admg.notes.push_back("entropic verdict for " + name(e.a) + " - " +
                             name(e.b) +
                             " conflicts with fixed endpoint marks, kept "
                             "bidirected");
        choice = 2;
      } else {
        admg.notes.push_back("entropic verdict for " + name(e.a) + " - " +
                             name(e.b) +
                             " conflicts with fixed endpoint marks, kept "
                             "directed");
        choice = fwd_ok ? 0 : 1;
      }
    }

    if (choice == 0 && admg.directed_path_exists(e.b, e.a)) {
      admg.notes.push_back("orientation " + name(e.a) + " -> " + name(e.b) +
                           " would close a cycle, kept bidirected");
      choice = 2;
    } else if (choice == 1 && admg.directed_path_exists(e.a, e.b)) {
      admg.notes.push_back("orientation " + name(e.b) + " -> " + name(e.a) +
                           " would close a cycle, kept bidirected");
      choice = 2;
    }

    if (choice == 0) admg.add_directed(e.a, e.b);
    else if (choice == 1) admg.add_directed(e.b, e.a);
    else admg.add_bidirected(e.a, e.b);
  }
  return admg;
}

}  // namespace ccd
