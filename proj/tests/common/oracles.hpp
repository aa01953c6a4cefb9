#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "itrack/factor_targets.hpp"

// Straightforward reference implementations, written independently of the
// library code they check.
namespace itrack::oracle {

inline double sorted_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

inline LineFit theil_sen(const std::vector<RegressionPoint>& pts) {
  std::vector<double> slopes;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    for (std::size_t k = j + 1; k < pts.size(); ++k) {
      if (pts[j].x != pts[k].x) slopes.push_back((pts[k].y - pts[j].y) / (pts[k].x - pts[j].x));
    }
  }
  const double beta = sorted_median(slopes);
  std::vector<double> intercepts;
  for (const auto& p : pts) intercepts.push_back(p.y - beta * p.x);
  return {sorted_median(intercepts), beta};
}

// OLS by solving the 2x2 normal equations [n sx; sx sxx] [a; b] = [sy; sxy].
inline LineFit normal_equations(const std::vector<RegressionPoint>& pts) {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : pts) {
    n += 1;
    sx += p.x;
    sy += p.y;
    sxx += p.x * p.x;
    sxy += p.x * p.y;
  }
  const double det = n * sxx - sx * sx;
  return {(sxx * sy - sx * sxy) / det, (n * sxy - sx * sy) / det};
}

}  // namespace itrack::oracle
