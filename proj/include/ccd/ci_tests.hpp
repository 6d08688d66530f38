#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ccd/table.hpp"

namespace ccd {

struct CiConfig {
  double alpha = 0.05;
  int min_samples_per_dof = 5;
};

struct CiTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int dof = 0;
  // False when the sample is too small for the dof (or a variable is
  // degenerate); such tests default to independence.
  bool effective = true;
};

// Survival function of the chi-square distribution, computed through the
// regularized upper incomplete gamma function Q(dof/2, x/2).
double chi_square_sf(double x, double dof);

// Likelihood-ratio test of X independent of Y given cond, pooled over the
// strata of cond. dof counts observed levels, not declared domain sizes, so
// unobserved levels do not dilute the statistic.
CiTestResult g_square_test(const DiscreteTable& table, int x, int y,
                           const std::vector<int>& cond,
                           const CiConfig& cfg = {});

// Two-sided Fisher exact test: sum of the probabilities of all tables with
// the observed margins that are no more likely than the observed table.
double fisher_exact_2x2(const Eigen::Matrix2i& counts);

bool is_independent(const CiTestResult& result, const CiConfig& cfg);

}  // namespace ccd
