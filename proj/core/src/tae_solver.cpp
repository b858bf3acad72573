// Branch and bound for the candidate-selection program. Each node restricts
// the candidates allowed per set. A node is pruned only when every sign
// pattern (b_low, b_upp) is certified infeasible, either by interval bounds
// on the linear aggregates or by a Frank-Wolfe lower bound on a convex
// penalty of the relaxed constraints. Leaves are decided with the same rule
// as enumeration, so the exact mode reproduces enumeration decisions.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "dosesens/attributable.hpp"
#include "dosesens/error.hpp"

namespace dosesens {

namespace {

constexpr double kSlack = 1e-9;
constexpr int kFwIterations = 150;

// Aggregates T, XL = T - E_low, XU = T - E_upp, VL, VU.
using Agg = std::array<double, 5>;

struct Coef {
  std::vector<std::vector<Agg>> a;  // [set][candidate]
};

struct Bounds {
  double pivot_lo = -std::numeric_limits<double>::infinity();
  double pivot_hi = std::numeric_limits<double>::infinity();
};

struct Combo {
  bool low_active;  // b_low = 0: T below E_low must be significant
  bool upp_active;  // b_upp = 0: T above E_upp must be significant
  bool low_used;    // false in the upper-only variant
};

class Relaxation {
 public:
  Relaxation(const Coef& coef, const std::vector<std::vector<char>>& allowed, const Bounds& b, double chi2,
             const Combo& combo)
      : coef_(coef), allowed_(allowed), bounds_(b), chi2_(chi2), combo_(combo) {}

  double penalty(const Agg& x) const {
    double p = 0.0;
    auto add = [&](double c) {
      const double g = c - kSlack;
      if (g > 0.0) p += g * g;
    };
    if (std::isfinite(bounds_.pivot_lo)) add(bounds_.pivot_lo - x[0]);
    if (std::isfinite(bounds_.pivot_hi)) add(x[0] - bounds_.pivot_hi);
    if (combo_.low_used) {
      if (combo_.low_active) {
        add(x[1]);
        add(x[1] * x[1] - chi2_ * x[3]);
      } else {
        add(-x[1]);
      }
    }
    if (combo_.upp_active) {
      add(-x[2]);
      add(x[2] * x[2] - chi2_ * x[4]);
    } else {
      add(x[2]);
    }
    return p;
  }

  Agg gradient(const Agg& x) const {
    Agg g{};
    auto add = [&](double c, const Agg& dc) {
      const double v = c - kSlack;
      if (v > 0.0) {
        for (int k = 0; k < 5; ++k) g[k] += 2.0 * v * dc[k];
      }
    };
    if (std::isfinite(bounds_.pivot_lo)) add(bounds_.pivot_lo - x[0], {-1, 0, 0, 0, 0});
    if (std::isfinite(bounds_.pivot_hi)) add(x[0] - bounds_.pivot_hi, {1, 0, 0, 0, 0});
    if (combo_.low_used) {
      if (combo_.low_active) {
        add(x[1], {0, 1, 0, 0, 0});
        add(x[1] * x[1] - chi2_ * x[3], {0, 2 * x[1], 0, -chi2_, 0});
      } else {
        add(-x[1], {0, -1, 0, 0, 0});
      }
    }
    if (combo_.upp_active) {
      add(-x[2], {0, 0, -1, 0, 0});
      add(x[2] * x[2] - chi2_ * x[4], {0, 0, 2 * x[2], 0, -chi2_});
    } else {
      add(x[2], {0, 0, 1, 0, 0});
    }
    return g;
  }

  // Runs Frank-Wolfe from the uniform point over the allowed candidates.
  // Returns true when infeasibility is certified; `weights` receives the last
  // iterate and `value` its penalty.
  bool certify_infeasible(std::vector<std::vector<double>>& weights, double& value) const {
    const std::size_t I = allowed_.size();
    weights.assign(I, {});
    Agg x{};
    for (std::size_t i = 0; i < I; ++i) {
      const auto& al = allowed_[i];
      weights[i].assign(al.size(), 0.0);
      const double cnt = static_cast<double>(std::count(al.begin(), al.end(), 1));
      for (std::size_t k = 0; k < al.size(); ++k) {
        if (!al[k]) continue;
        weights[i][k] = 1.0 / cnt;
        for (int q = 0; q < 5; ++q) x[q] += coef_.a[i][k][q] / cnt;
      }
    }
    value = penalty(x);
    std::vector<std::size_t> vertex(I);
    for (int it = 0; it < kFwIterations; ++it) {
      if (value <= 0.0) return false;
      const Agg g = gradient(x);
      Agg s{};
      double gd = 0.0, gs = 0.0, mag = 0.0;
      for (std::size_t i = 0; i < I; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < allowed_[i].size(); ++k) {
          if (!allowed_[i][k]) continue;
          double v = 0.0;
          for (int q = 0; q < 5; ++q) v += g[q] * coef_.a[i][k][q];
          if (v < best) {
            best = v;
            vertex[i] = k;
          }
        }
        for (int q = 0; q < 5; ++q) s[q] += coef_.a[i][vertex[i]][q];
      }
      for (int q = 0; q < 5; ++q) {
        gd += g[q] * x[q];
        gs += g[q] * s[q];
        mag += std::abs(g[q] * x[q]) + std::abs(g[q] * s[q]);
      }
      // Convexity: min P >= P(x) + <grad, s - x>.
      const double lower = value - (gd - gs);
      if (lower > 1e-10 * (1.0 + value + mag)) return true;

      // Exact-enough line search on the convex segment.
      auto along = [&](double tau) {
        Agg y;
        for (int q = 0; q < 5; ++q) y[q] = x[q] + tau * (s[q] - x[q]);
        return penalty(y);
      };
      double lo = 0.0, hi = 1.0;
      const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
      double t1 = hi - phi * (hi - lo), t2 = lo + phi * (hi - lo);
      double f1 = along(t1), f2 = along(t2);
      for (int k = 0; k < 40; ++k) {
        if (f1 > f2) {
          lo = t1;
          t1 = t2;
          f1 = f2;
          t2 = lo + phi * (hi - lo);
          f2 = along(t2);
        } else {
          hi = t2;
          t2 = t1;
          f2 = f1;
          t1 = hi - phi * (hi - lo);
          f1 = along(t1);
        }
      }
      double tau = 0.5 * (lo + hi);
      if (along(1.0) <= along(tau)) tau = 1.0;
      if (!(along(tau) < value)) return false;
      for (std::size_t i = 0; i < I; ++i) {
        for (auto& w : weights[i]) w *= 1.0 - tau;
        weights[i][vertex[i]] += tau;
      }
      for (int q = 0; q < 5; ++q) x[q] += tau * (s[q] - x[q]);
      value = penalty(x);
    }
    return false;
  }

 private:
  const Coef& coef_;
  const std::vector<std::vector<char>>& allowed_;
  Bounds bounds_;
  double chi2_;
  Combo combo_;
};

double min_square(double lo, double hi) {
  if (lo <= 0.0 && hi >= 0.0) return 0.0;
  return std::min(lo * lo, hi * hi);
}

// Interval screening of one sign pattern; false means certainly infeasible.
bool interval_possible(const Agg& lo, const Agg& hi, double chi2, const Combo& c) {
  if (c.low_used) {
    if (c.low_active) {
      if (lo[1] > kSlack) return false;
      if (min_square(lo[1], std::min(hi[1], 0.0)) - chi2 * hi[3] > kSlack) return false;
    } else if (hi[1] < -kSlack) {
      return false;
    }
  }
  if (c.upp_active) {
    if (hi[2] < -kSlack) return false;
    if (min_square(std::max(lo[2], 0.0), hi[2]) - chi2 * hi[4] > kSlack) return false;
  } else if (lo[2] > kSlack) {
    return false;
  }
  return true;
}

struct Node {
  std::vector<std::vector<char>> allowed;
};

}  // namespace

TaeTestResult test_tae_bnb(const TaeProblem& problem, long delta, bool relaxed, TaeForm form,
                           std::size_t node_budget) {
  TaeTestResult r;
  r.delta = delta;
  r.form = form;
  r.mode = relaxed ? TaeMode::relaxed : TaeMode::branch_and_bound;
  const long obs = problem.inst.observed_count;
  if (form == TaeForm::equal && (delta > obs || delta < 0)) return r;

  const std::size_t I = problem.candidates.size();
  Coef coef;
  coef.a.resize(I);
  for (std::size_t i = 0; i < I; ++i) {
    for (const auto& c : problem.candidates[i]) {
      const double t = c.t;
      coef.a[i].push_back({t, t - c.E_low, t - c.E_upp, c.V_low, c.V_upp});
    }
  }
  Bounds bounds;
  const double target = static_cast<double>(obs - delta);
  if (form == TaeForm::equal || form == TaeForm::at_most) bounds.pivot_lo = target;
  if (form == TaeForm::equal || form == TaeForm::at_least) bounds.pivot_hi = target;

  std::vector<Combo> combos;
  for (int up = 0; up < 2; ++up) {
    if (problem.sides == TaeSides::both) {
      for (int low = 0; low < 2; ++low) combos.push_back({low == 0, up == 0, true});
    } else {
      combos.push_back({false, up == 0, false});
    }
  }

  auto leaf_accepts = [&](const std::vector<std::size_t>& pick) {
    Selection s;
    long pivot = 0;
    for (std::size_t i = 0; i < I; ++i) {
      const auto& c = problem.candidates[i][pick[i]];
      pivot += c.t;
      s.t += c.t;
      s.E_low += c.E_low;
      s.E_upp += c.E_upp;
      s.V_low += c.V_low;
      s.V_upp += c.V_upp;
    }
    return form_holds(obs, pivot, delta, form) && selection_accepted(s, problem.chi2, problem.sides);
  };

  std::vector<Node> stack;
  Node root;
  for (std::size_t i = 0; i < I; ++i) root.allowed.emplace_back(problem.candidates[i].size(), 1);
  stack.push_back(std::move(root));

  while (!stack.empty()) {
    if (r.nodes_explored >= node_budget) {
      r.decision = TaeDecision::undecided;
      return r;
    }
    Node node = std::move(stack.back());
    stack.pop_back();
    ++r.nodes_explored;

    Agg lo, hi;
    lo.fill(0.0);
    hi.fill(0.0);
    bool leaf = true;
    std::vector<std::size_t> only(I, 0);
    for (std::size_t i = 0; i < I; ++i) {
      Agg l, h;
      l.fill(std::numeric_limits<double>::infinity());
      h.fill(-std::numeric_limits<double>::infinity());
      std::size_t cnt = 0;
      for (std::size_t k = 0; k < node.allowed[i].size(); ++k) {
        if (!node.allowed[i][k]) continue;
        ++cnt;
        only[i] = k;
        for (int q = 0; q < 5; ++q) {
          l[q] = std::min(l[q], coef.a[i][k][q]);
          h[q] = std::max(h[q], coef.a[i][k][q]);
        }
      }
      if (cnt != 1) leaf = false;
      for (int q = 0; q < 5; ++q) {
        lo[q] += l[q];
        hi[q] += h[q];
      }
    }
    if (hi[0] < bounds.pivot_lo - kSlack || lo[0] > bounds.pivot_hi + kSlack) continue;
    if (leaf && !relaxed) {
      if (leaf_accepts(only)) {
        r.decision = TaeDecision::accept;
        r.witness = only;
        return r;
      }
      continue;
    }

    bool alive = false;
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_weights;
    for (const auto& combo : combos) {
      if (!interval_possible(lo, hi, problem.chi2, combo)) continue;
      std::vector<std::vector<double>> w;
      double value = 0.0;
      const Relaxation rel(coef, node.allowed, bounds, problem.chi2, combo);
      if (rel.certify_infeasible(w, value)) continue;
      alive = true;
      if (value < best_value) {
        best_value = value;
        best_weights = std::move(w);
      }
    }
    if (!alive) continue;
    if (relaxed) {
      r.decision = TaeDecision::accept;
      return r;
    }

    // Branch on the most fractional selection variable.
    std::size_t bi = I, bk = 0;
    double best_frac = -1.0;
    for (std::size_t i = 0; i < I; ++i) {
      if (std::count(node.allowed[i].begin(), node.allowed[i].end(), 1) < 2) continue;
      for (std::size_t k = 0; k < node.allowed[i].size(); ++k) {
        if (!node.allowed[i][k]) continue;
        const double f = std::min(best_weights[i][k], 1.0 - best_weights[i][k]);
        if (f > best_frac) {
          best_frac = f;
          bi = i;
          bk = k;
        }
      }
    }
    if (best_frac < 1e-6) {
      // Integral relaxation point: try it, then split the widest set on it.
      std::vector<std::size_t> pick(I);
      for (std::size_t i = 0; i < I; ++i) {
        pick[i] = static_cast<std::size_t>(
            std::max_element(best_weights[i].begin(), best_weights[i].end()) - best_weights[i].begin());
      }
      if (leaf_accepts(pick)) {
        r.decision = TaeDecision::accept;
        r.witness = pick;
        return r;
      }
      std::size_t widest = 0;
      for (std::size_t i = 0; i < I; ++i) {
        const auto cnt = static_cast<std::size_t>(std::count(node.allowed[i].begin(), node.allowed[i].end(), 1));
        if (cnt > widest) {
          widest = cnt;
          bi = i;
          bk = pick[i];
        }
      }
    }
    Node zero = node;
    zero.allowed[bi][bk] = 0;
    Node one = std::move(node);
    std::fill(one.allowed[bi].begin(), one.allowed[bi].end(), 0);
    one.allowed[bi][bk] = 1;
    stack.push_back(std::move(zero));
    stack.push_back(std::move(one));
  }
  return r;
}

}  // namespace dosesens
