#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "ccd/model.hpp"
#include "ccd/paths.hpp"

namespace ccd {

// Fault thresholds frozen in both raw and bin space. A level counts as worse
// when its bin reaches the threshold bin on the bad side, so the factual
// faulty row always counts as worse under its own spec.
struct OutcomeSpec {
  std::vector<int> targets;
  std::vector<double> threshold_raw;
  std::vector<int> threshold_code;
  std::vector<Direction> direction;
};

OutcomeSpec make_outcome_spec(const ObservationTable& raw,
                              const DiscreteTable& discrete,
                              const FaultSpec& fault);

// True when `code` falls on the worse side of target `which`.
bool outcome_worse(const OutcomeSpec& spec, int which, int code);

struct CfConfig {
  long long enumeration_cap = 1000000;  // exact twin enumeration limit
  int samples = 10000;                  // posterior samples past the limit
  std::uint64_t seed = 0;
};

struct CfResult {
  double probability = 0.0;
  bool sampled = false;
};

// P(outcome holds in the twin world | factual world, do(intervention)).
// Noise is represented by inverse-CDF atoms shared between the worlds;
// abduction conditions every atom and latent on the full factual row.
CfResult counterfactual_outcome_probability(
    const FittedModel& model, const std::vector<int>& factual,
    const std::map<int, int>& intervention,
    const std::function<bool(const std::vector<int>&)>& outcome,
    const CfConfig& cfg = {});

struct IteResult {
  double value = 0.0;     // p_better - p_worse
  double p_better = 0.0;  // every target on the good side in the twin world
  double p_worse = 0.0;   // some target on the bad side in the twin world
  bool sampled = false;
};

// Individual treatment effect of applying `repair` to the factual row.
IteResult ite(const FittedModel& model, const std::map<int, int>& repair,
              const std::vector<int>& factual, const OutcomeSpec& outcome,
              const CfConfig& cfg = {});

struct Repair {
  std::map<int, int> assignment;  // option index to level code
  double ite = 0.0;
  bool sampled = false;
};

struct RepairSet {
  std::vector<Repair> candidates;
  bool capped = false;
};

// Candidate repairs over the intervenable options on the given paths: the
// full cross product of their binned domains, or past `cap` every single
// option assignment plus all pairs over the two options with the highest
// ACE on the targets.
RepairSet generate_repair_set(const std::vector<CausalPath>& paths,
                              const FittedModel& model,
                              const std::vector<int>& targets,
                              long long cap = 10000);

// Descending ITE, then fewer changed options, then lexicographic assignment.
void sort_repairs(std::vector<Repair>& repairs, const std::vector<int>& factual);

}  // namespace ccd
