#pragma once

// Brute-force references used by the unit tests. Everything here enumerates
// full permutations directly and shares no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

namespace oracle {

struct Point {
  double value;
  double prob;
};

// Distribution of q(pi) = sum_j score[pi(j)] * w[j] where unit j receives
// dose position pi(j), with weight exp(gamma * sum_j x[pi(j)] * u[j]).
inline std::vector<Point> set_distribution(const std::vector<double>& x, const std::vector<double>& score,
                                           const std::vector<double>& w, const std::vector<double>& u, double gamma) {
  const std::size_t n = x.size();
  std::vector<std::size_t> pi(n);
  std::iota(pi.begin(), pi.end(), 0);
  std::vector<Point> out;
  std::vector<double> expo;
  do {
    double a = 0.0, q = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      a += x[pi[j]] * u[j];
      q += score[pi[j]] * w[j];
    }
    expo.push_back(gamma * a);
    out.push_back({q, 0.0});
  } while (std::next_permutation(pi.begin(), pi.end()));
  const double mx = *std::max_element(expo.begin(), expo.end());
  double s = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) s += out[k].prob = std::exp(expo[k] - mx);
  for (auto& p : out) p.prob /= s;
  return out;
}

// pr(sum_i q_i >= t - tol) over independent sets, by recursion over the
// product of per-set supports.
inline double tail(const std::vector<std::vector<Point>>& sets, double t, double tol = 1e-10) {
  double total = 0.0;
  std::function<void(std::size_t, double, double)> rec = [&](std::size_t i, double acc, double pr) {
    if (i == sets.size()) {
      if (acc >= t - tol * std::max(1.0, std::abs(t))) total += pr;
      return;
    }
    for (const auto& p : sets[i]) rec(i + 1, acc + p.value, pr * p.prob);
  };
  rec(0, 0.0, 1.0);
  return total;
}

inline std::pair<double, double> moments(const std::vector<std::vector<Point>>& sets) {
  double mean = 0.0, var = 0.0;
  for (const auto& s : sets) {
    double m1 = 0.0, m2 = 0.0;
    for (const auto& p : s) {
      m1 += p.prob * p.value;
      m2 += p.prob * p.value * p.value;
    }
    mean += m1;
    var += m2 - m1 * m1;
  }
  return {mean, var};
}

inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

}  // namespace oracle
