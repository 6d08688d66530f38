#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccd/engine.hpp"

namespace ccd {

struct ScmSpec {
  int options = 4;
  int events = 3;
  int nfps = 1;
  int latents = 0;
  int min_levels = 2;
  int max_levels = 4;
  int nfp_levels = 0;      // 0 keeps the shared level range
  double edge_density = 0.6;
  int max_parents = 3;     // visible parents per node
  int prob_grid = 16;      // probabilities are multiples of 1/prob_grid
  bool full_support = false;  // every CPT cell gets at least one grid unit
  double noise_entropy_lo = 0.15;  // per-row noise band, bits
  double noise_entropy_hi = 1.0;
  // Shaped instance: two designated option causes drive an aggregator event
  // and one property whose worst level is rare and repairable.
  bool tail_fault = false;
  std::uint64_t seed = 0;
};

struct ScmNode {
  std::vector<int> parents;  // node ids ascending; latents sort after visibles
  Eigen::MatrixXd cpt;       // rows: parent configs, last parent fastest
};

struct GroundTruthScm {
  Schema schema;             // visible variables only
  int n_visible = 0;
  int n_latent = 0;
  std::vector<int> cards;    // per node id, visibles then latents
  std::vector<ScmNode> nodes;
  int prob_grid = 16;
  std::uint64_t seed = 0;

  int node_count() const { return n_visible + n_latent; }
};

GroundTruthScm make_scm(const ScmSpec& spec);

std::string scm_to_json(const GroundTruthScm& scm);
GroundTruthScm scm_from_json(const std::string& text);

// n ancestral draws with options at their exogenous distributions.
ObservationTable sample_observational(const GroundTruthScm& scm, int n,
                                      std::uint64_t seed);

// One run under a full option assignment; deterministic in
// (scm seed, assignment, repeat). Returns events and properties by name.
std::map<std::string, double> evaluate_once(
    const GroundTruthScm& scm, const std::map<std::string, double>& assignment,
    int repeat);

class ScmEvaluator : public SystemEvaluator {
 public:
  explicit ScmEvaluator(GroundTruthScm scm) : scm_(std::move(scm)) {}
  std::map<std::string, double> measure(
      const std::map<std::string, double>& assignment, int repeat) override {
    return evaluate_once(scm_, assignment, repeat);
  }
  const GroundTruthScm& scm() const { return scm_; }

 private:
  GroundTruthScm scm_;
};

// Exact E[z | do(x = level)] by forward enumeration of the ancestor
// configurations of z, on the ordinal level scale; the ACE is the mean
// absolute difference across consecutive levels of x.
double oracle_ace(const GroundTruthScm& scm, int z, int x);

struct OracleIte {
  double value = 0.0;
  double p_better = 0.0;
  double p_worse = 0.0;
};

// Exact twin outcome by enumerating the true noise slots and latent values
// compatible with the factual row.
OracleIte oracle_ite(const GroundTruthScm& scm, const std::map<int, int>& repair,
                     const std::vector<int>& factual, const OutcomeSpec& outcome);

// The model whose CPTs are the true mechanisms; supports at most one latent
// parent per visible node. Used to test exactness of the inference side.
FittedModel exact_model(const GroundTruthScm& scm);

struct GraphScore {
  double skeleton_precision = 0.0;
  double skeleton_recall = 0.0;
  double skeleton_f1 = 0.0;
  double orientation_accuracy = 0.0;
};

// Learned graph against the visible projection of the truth: directed edges
// between visibles plus one bidirected edge per pair of latent children.
GraphScore score_graph(const Admg& learned, const GroundTruthScm& scm);

struct DiagnosisScore {
  double precision = 0.0;
  double recall = 0.0;
  double jaccard = 0.0;
};

// Predicted root-cause options against the options whose oracle ACE on some
// target exceeds eps.
DiagnosisScore score_diagnosis(const std::vector<int>& predicted,
                               const GroundTruthScm& scm,
                               const std::vector<int>& targets,
                               double eps = 0.01);

}  // namespace ccd
