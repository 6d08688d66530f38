#include "ccd/ci_tests.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ccd/error.hpp"

namespace ccd {

namespace {

constexpr int kGammaMaxIter = 500;
constexpr double kGammaEps = 1e-14;
constexpr double kTiny = 1e-300;

// Lower regularized incomplete gamma P(a, x) by power series, for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n <= kGammaMaxIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kGammaEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma Q(a, x) by Lentz continued fraction,
// for x >= a + 1.
double gamma_q_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / std::max(b, kTiny);
  double h = d;
  for (int i = 1; i <= kGammaMaxIter; ++i) {
    double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kGammaEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double regularized_gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  if (x < a + 1.0) return std::min(1.0, std::max(0.0, 1.0 - gamma_p_series(a, x)));
  return std::min(1.0, std::max(0.0, gamma_q_fraction(a, x)));
}

// Dense re-coding of one column to its observed levels, in code order.
std::vector<int> observed_recode(const DiscreteTable& table, int var,
                                 int* observed_levels) {
  std::vector<int> map(table.cardinality[var], -1);
  int next = 0;
  for (int r = 0; r < table.rows(); ++r) {
    int c = table.codes(r, var);
    if (map[c] < 0) map[c] = 1;
  }
  for (int c = 0; c < table.cardinality[var]; ++c)
    if (map[c] > 0) map[c] = next++;
  *observed_levels = next;
  return map;
}

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

double chi_square_sf(double x, double dof) {
  if (dof <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "chi_square_sf needs dof > 0");
  return regularized_gamma_q(dof / 2.0, x / 2.0);
}

CiTestResult g_square_test(const DiscreteTable& table, int x, int y,
                           const std::vector<int>& cond, const CiConfig& cfg) {
  if (x == y)
    throw Error(ErrorCode::InvalidArgument, "g_square_test needs x != y");
  for (int s : cond)
    if (s == x || s == y)
      throw Error(ErrorCode::InvalidArgument,
                  "conditioning set contains a tested variable");

  int n = table.rows();
  CiTestResult result;

  int lx = 0, ly = 0;
  auto map_x = observed_recode(table, x, &lx);
  auto map_y = observed_recode(table, y, &ly);
  std::vector<std::vector<int>> map_s;
  std::vector<int> ls;
  long long strata = 1;
  for (int s : cond) {
    int l = 0;
    map_s.push_back(observed_recode(table, s, &l));
    ls.push_back(l);
    strata *= l;
  }

  result.dof = static_cast<int>((lx - 1) * (ly - 1) * strata);
  if (lx < 2 || ly < 2 || result.dof <= 0) {
    // Degenerate variable: independence by convention, not by evidence.
    result.dof = std::max(result.dof, 0);
    result.effective = false;
    result.p_value = 1.0;
    return result;
  }

  // Counts per stratum, keyed by the packed cond configuration.
  std::unordered_map<long long, Eigen::MatrixXi> tables;
  for (int r = 0; r < n; ++r) {
    long long key = 0;
    for (size_t i = 0; i < cond.size(); ++i)
      key = key * ls[i] + map_s[i][table.codes(r, cond[i])];
    auto it = tables.find(key);
    if (it == tables.end())
      it = tables.emplace(key, Eigen::MatrixXi::Zero(lx, ly)).first;
    it->second(map_x[table.codes(r, x)], map_y[table.codes(r, y)]) += 1;
  }

  double g = 0.0;
  for (const auto& [key, counts] : tables) {
    (void)key;
    double ns = counts.sum();
    Eigen::VectorXd row_sum = counts.cast<double>().rowwise().sum();
    Eigen::VectorXd col_sum = counts.cast<double>().colwise().sum();
    for (int i = 0; i < lx; ++i)
      for (int j = 0; j < ly; ++j) {
        int o = counts(i, j);
        if (o == 0) continue;
        double e = row_sum(i) * col_sum(j) / ns;
        g += 2.0 * o * std::log(o / e);
      }
  }
  result.statistic = std::max(0.0, g);

  if (static_cast<long long>(n) <
      static_cast<long long>(cfg.min_samples_per_dof) * result.dof) {
    result.effective = false;
    result.p_value = 1.0;
    return result;
  }
  result.p_value = chi_square_sf(result.statistic, result.dof);
  return result;
}

double fisher_exact_2x2(const Eigen::Matrix2i& counts) {
  int a = counts(0, 0), b = counts(0, 1), c = counts(1, 0), d = counts(1, 1);
  if (a < 0 || b < 0 || c < 0 || d < 0)
    throw Error(ErrorCode::InvalidArgument, "negative count in 2x2 table");
  int r1 = a + b, r2 = c + d, c1 = a + c, n = a + b + c + d;
  if (n == 0) return 1.0;

  // Hypergeometric log pmf over the support of the upper-left cell.
  auto log_pmf = [&](int k) {
    return log_choose(r1, k) + log_choose(r2, c1 - k) - log_choose(n, c1);
  };
  double observed = log_pmf(a);
  int k_lo = std::max(0, c1 - r2);
  int k_hi = std::min(r1, c1);
  double p = 0.0;
  for (int k = k_lo; k <= k_hi; ++k) {
    double lp = log_pmf(k);
    // Relative slack absorbs round-off when a table ties the observed one.
    if (lp <= observed + 1e-7) p += std::exp(lp);
  }
  return std::min(1.0, p);
}

bool is_independent(const CiTestResult& result, const CiConfig& cfg) {
  return !result.effective || result.p_value > cfg.alpha;
}

}  // namespace ccd
