#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "ccd/table.hpp"
#include "helpers.hpp"

namespace ccd::testing {

// Pair with a real causal arrow x -> y: a surjective 5-to-4 map plus rare
// additive noise. The collision makes the backward mechanism strictly more
// random than the forward one.
inline DiscreteTable causal_pair(std::uint64_t seed, int n = 1000) {
  std::mt19937_64 rng(seed);
  std::vector<int> f = {0, 1, 2, 3, static_cast<int>(rng() % 4)};
  std::shuffle(f.begin(), f.end(), rng);
  std::uniform_real_distribution<> u(0, 1);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < n; ++i) {
    int x = static_cast<int>(rng() % 5);
    int e = u(rng) < 1.0 / 32.0 ? 1 : 0;
    rows.push_back({x, (f[x] + e) % 4});
  }
  Schema s;
  s.variables = {ordinal_var("x", VarKind::ConfigOption, 5),
                 ordinal_var("y", VarKind::SystemEvent, 4)};
  return discretize(code_table(s, rows), 10);
}

// Pair driven by a hidden fair coin; both observed variables are noisy
// two-level spreads of it, so a one-bit latent explains the dependence.
inline DiscreteTable confounded_pair(std::uint64_t seed, int n = 1000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<> u(0, 1);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < n; ++i) {
    int z = static_cast<int>(rng() % 2);
    int x = 2 * z + static_cast<int>(rng() % 2);
    int y = 2 * z + static_cast<int>(rng() % 2);
    if (u(rng) < 0.125) x = (x + 1) % 4;
    if (u(rng) < 0.125) y = (y + 3) % 4;
    rows.push_back({x, y});
  }
  Schema s;
  s.variables = {ordinal_var("x", VarKind::ConfigOption, 4),
                 ordinal_var("y", VarKind::SystemEvent, 4)};
  return discretize(code_table(s, rows), 10);
}

}  // namespace ccd::testing
