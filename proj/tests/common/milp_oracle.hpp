#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "itrack/milp_portfolio.hpp"
#include "itrack/simplex.hpp"

// Exhaustive reference for the cardinality-constrained tracking problem:
// every support set of size N* is solved as a plain LP over (w, z, Z), built
// here from the problem data rather than from the library's formulation.
namespace itrack::oracle {

struct EnumerationResult {
  bool feasible = false;
  double objective = kInf;
  std::vector<std::size_t> support;
  std::size_t feasible_sets = 0;
};

inline double support_lp(const MilpProblem& p, const std::vector<char>& allowed) {
  const std::size_t n = p.size();
  LinearProgram lp;
  const std::size_t cols = 2 * n + 1;  // w, z, Z
  const std::size_t rows = 3 * n + 3;
  lp.a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  lp.c.assign(cols, 0.0);
  lp.col_lo.assign(cols, 0.0);
  lp.col_hi.assign(cols, kInf);
  lp.row_lo.assign(rows, -kInf);
  lp.row_hi.assign(rows, kInf);
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = static_cast<Eigen::Index>(i);
    const auto z = static_cast<Eigen::Index>(n + i);
    const auto big = static_cast<Eigen::Index>(2 * n);
    lp.c[n + i] = 1.0 / static_cast<double>(n);
    double hi = (allowed[i] && p.current[i]) ? 1.0 : 0.0;
    if (!p.max_weight.empty()) hi = std::min(hi, p.max_weight[i]);
    lp.col_hi[i] = hi;
    if (p.excluded[i]) {
      // Pinned to the prior weight, which needs a slot in the support.
      if (!allowed[i] && p.prior[i] > 0.0) return kInf;
      lp.col_lo[i] = lp.col_hi[i] = p.prior[i];
    }
    // z_i >= w_i - prior_i and z_i >= prior_i - w_i
    const auto r = static_cast<Eigen::Index>(3 * i);
    lp.a(r, z) = 1.0;
    lp.a(r, w) = -1.0;
    lp.row_lo[3 * i] = -p.prior[i];
    lp.a(r + 1, z) = 1.0;
    lp.a(r + 1, w) = 1.0;
    lp.row_lo[3 * i + 1] = p.prior[i];
    // Z >= z_i
    lp.a(r + 2, big) = 1.0;
    lp.a(r + 2, z) = -1.0;
    lp.row_lo[3 * i + 2] = 0.0;
  }
  lp.c[2 * n] = 1.0;
  const auto budget = static_cast<Eigen::Index>(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = static_cast<Eigen::Index>(i);
    lp.a(budget, w) = 1.0;
    if (!p.excluded[i] && std::isfinite(p.beta[i])) {
      lp.a(budget + 1, w) = p.beta[i];
      lp.a(budget + 2, w) = p.alpha[i];
    }
  }
  lp.row_lo[3 * n] = lp.row_hi[3 * n] = 1.0;
  lp.row_lo[3 * n + 1] = p.beta_target - p.equality_band;
  lp.row_hi[3 * n + 1] = p.beta_target + p.equality_band;
  lp.row_lo[3 * n + 2] = p.alpha_target - p.equality_band;
  lp.row_hi[3 * n + 2] = p.alpha_target + p.equality_band;
  BoundedSimplex s(lp);
  return s.solve() == LpStatus::optimal ? s.objective() : kInf;
}

inline EnumerationResult enumerate(const MilpProblem& p) {
  const std::size_t n = p.size();
  const std::size_t k = std::min(p.n_star, n);
  EnumerationResult best;
  std::vector<char> pick(n, 0);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k), 1);
  // Lexicographic walk over all k-subsets via prev_permutation on a 1..10..0 mask.
  do {
    const double v = support_lp(p, pick);
    if (std::isfinite(v)) {
      ++best.feasible_sets;
      if (v < best.objective) {
        best.objective = v;
        best.feasible = true;
        best.support.clear();
        for (std::size_t i = 0; i < n; ++i) {
          if (pick[i]) best.support.push_back(i);
        }
      }
    }
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

// Random instance over n current instruments with no exclusions.
inline MilpProblem random_problem(std::size_t n, std::size_t n_star, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.01);
  BuildInputs in;
  in.date = "2020-01-01";
  in.n_star = n_star;
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& v : w) total += (v = 0.05 + u(rng));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "I" + std::to_string(10 + i);
    in.universe.insert(id);
    in.prior_weights[id] = w[i] / total;
    in.predictions[id] = FactorEstimate{g(rng), 0.5 + u(rng), 0.0, EstimateKind::predicted};
  }
  return build_problem(in);
}

}  // namespace itrack::oracle
