#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ccd/graph.hpp"
#include "ccd/table.hpp"

namespace ccd {

// Joint distribution over a pair: rows index x levels, columns y levels.
using JointDistribution = Eigen::MatrixXd;

struct EntropicConfig {
  double theta_factor = 0.8;  // confounder threshold as a share of min(H(X), H(Y))
  int k_z = 0;                // latent support size; 0 means k_x * k_y
  int max_iters = 500;
  double tol = 1e-6;
  int restarts = 5;
  double smoothing = 1.0;     // extra mass spread over joint cells
  std::uint64_t seed = 0;
};

enum class DirectionVerdict { XCausesY, YCausesX, Confounded };

const char* verdict_name(DirectionVerdict verdict);

struct LatentSearchResult {
  // Row x * k_y + y holds q(z | x, y).
  Eigen::MatrixXd q_z_given_xy;
  double h_z = 0.0;           // entropy of the recovered latent, bits
  double fit_loss = 0.0;      // KL of q(x,y,z) from its Z-factored form, bits
  int iterations_used = 0;
  bool converged = false;
  std::vector<double> loss_trace;  // one entry per iteration, non-increasing
};

struct EdgeOrientation {
  DirectionVerdict verdict = DirectionVerdict::Confounded;
  double h_z = 0.0;
  double h_forward = 0.0;   // H(E) for y = f(x, E)
  double h_backward = 0.0;  // H(E) for x = f(y, E)
  double threshold = 0.0;   // theta_factor * min(H(X), H(Y))
};

// Relative frequencies with `smoothing` extra mass split evenly over the
// k_x * k_y cells. Levels use the full discretized cardinality.
JointDistribution empirical_joint(const DiscreteTable& table, int x, int y,
                                  double smoothing = 1.0);

// Entropy in bits. Zero entries contribute zero.
double shannon_entropy(const Eigen::VectorXd& p);
Eigen::VectorXd marginal_x(const JointDistribution& joint);
Eigen::VectorXd marginal_y(const JointDistribution& joint);

// Iterative search for a latent Z that renders X and Y conditionally
// independent while keeping H(Z) small. Runs `restarts` seeded starts (a
// constant Z, an exact one-state-per-cell fit, two singular-vector splits,
// then random draws) and keeps the lowest-entropy solution among those that
// fit almost as well as the best. The tracked loss can never increase within
// a run; violations feed latent_search_violation_count().
LatentSearchResult latent_search(const JointDistribution& joint,
                                 const EntropicConfig& cfg);

std::size_t latent_search_violation_count();

bool confounder_below_threshold(double h_z, double h_x, double h_y,
                                double theta_factor);

// Entropy in bits of the exogenous variable produced by the greedy minimum
// entropy coupling of the given conditional distributions.
double greedy_coupling_entropy(const std::vector<Eigen::VectorXd>& conditionals);

// H(E) for effect = f(cause, E) under the greedy coupling of the smoothed
// conditionals p(effect | cause = x).
double min_entropy_exogenous(const DiscreteTable& table, int cause, int effect,
                             double smoothing = 1.0);

// Full pairwise decision: latent search first, then the directional entropy
// comparison. Degenerate pairs and exact ties come out Confounded.
EdgeOrientation orient_edge(const DiscreteTable& table, int x, int y,
                            const EntropicConfig& cfg);

// Replaces every circle in the PAG by tail or arrowhead using the entropic
// verdicts, subject to tier knowledge and the already fixed marks. Verdicts
// that would contradict either are overridden and logged; orientations that
// would close a directed cycle fall back to a bidirected edge.
Admg resolve_pag(const Pag& pag, const DiscreteTable& table,
                 const EntropicConfig& cfg);

}  // namespace ccd
