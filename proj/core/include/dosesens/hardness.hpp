#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dosesens/assignment.hpp"
#include "dosesens/design.hpp"
#include "dosesens/sharp_null.hpp"

namespace dosesens {

/// Reparametrized worst-case problem for T = sum Z q. Per set i (1-based in
/// names): p_i_k for the k-th permutation in lexicographic order, s_i, and
/// w_i_j_k = exp(gamma z_(j) u_ik) for sorted dose j and unit k.
struct SignomialProgram {
  struct Variable {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;  ///< +infinity allowed
    friend bool operator==(const Variable&, const Variable&) = default;
  };
  /// p * s = prod w.
  struct Product {
    int p = 0;
    int s = 0;
    std::vector<int> w;
    friend bool operator==(const Product&, const Product&) = default;
  };
  /// s = sum over terms of prod w.
  struct Sum {
    int s = 0;
    std::vector<std::vector<int>> terms;
    friend bool operator==(const Sum&, const Sum&) = default;
  };
  /// target = base ^ exponent.
  struct Power {
    int target = 0;
    int base = 0;
    double exponent = 1.0;
    friend bool operator==(const Power&, const Power&) = default;
  };
  struct Box {
    int var = 0;
    double lo = 0.0;
    double hi = 0.0;
    friend bool operator==(const Box&, const Box&) = default;
  };
  /// zeta_p = (t - mu)^2 - chi2 * sigma^2 with mu = sum_i sum_k p_ik q_ik and
  /// sigma^2 = sum_i (sum_k p_ik q_ik^2 - (sum_k p_ik q_ik)^2).
  struct Objective {
    double t = 0.0;
    double chi2 = 0.0;
    std::vector<std::vector<std::pair<int, double>>> strata;  ///< (p var, q value)
    friend bool operator==(const Objective&, const Objective&) = default;
  };

  std::vector<Variable> variables;
  std::vector<Product> products;
  std::vector<Sum> sums;
  std::vector<Power> powers;
  std::vector<Box> boxes;
  Objective objective;

  int index_of(const std::string& name) const;
  friend bool operator==(const SignomialProgram&, const SignomialProgram&) = default;
};

struct SignomialCounts {
  std::size_t p_vars = 0, s_vars = 0, w_vars = 0;
  std::size_t products = 0, sums = 0, powers = 0, boxes = 0;
};
SignomialCounts counts(const SignomialProgram& program);

/// Emits the program for T = sum Z q. Throws DomainError when a set's smallest
/// dose is zero (the power-link exponent is undefined).
SignomialProgram formulate_signomial(const MatchedDesign& design, const std::vector<double>& q,
                                     const SensitivityParameter& gp, double alpha, double t_obs);

void write_signomial(std::ostream& out, const SignomialProgram& program);
SignomialProgram parse_signomial(std::istream& in);

struct ReparametrizationCheck {
  double max_residual = 0.0;  ///< largest relative constraint residual
  double zeta_p = 0.0;        ///< objective evaluated from p
  double zeta_u = 0.0;        ///< objective from the moments at u
};

/// Builds (w, s, p) from an explicit u and evaluates every constraint and both
/// objective forms.
ReparametrizationCheck check_reparametrization(const SignomialProgram& program, const MatchedDesign& design,
                                               const std::vector<double>& q, const SensitivityParameter& gp,
                                               const ConfounderAllocation& u);

struct CounterexampleOptions {
  double gamma = 2.0;
  /// Replace the default scores by the outcome vector (0,0,0,1,1).
  bool binary_scores = false;
  CubeSearchOptions search;
};

struct CounterexampleReport {
  double gamma = 0.0;
  double t_obs = 0.0;
  std::vector<double> doses;
  std::vector<double> scores;
  std::vector<double> u_star;
  double p_star = 0.0;
  double p_best_corner = 0.0;
  std::vector<double> best_corner;
  double corner_gap = 0.0;
  /// Binary-score run: |p_star - p at u = R|.
  std::optional<double> gap_to_outcome_allocation;
  std::size_t statistic_support_hits = 0;  ///< permutations with T >= t
  bool skipped = false;
  std::string notice;
  bool pass = false;
  std::vector<std::string> failures;
};

/// The five-unit instance with an interior worst-case allocation.
MatchedDesign counterexample_design();
std::vector<double> counterexample_scores();
inline constexpr double kCounterexampleT = 9.03;
inline constexpr double kCounterexampleU3 = 0.9483617;

CounterexampleReport verify_counterexample(const CounterexampleOptions& options = {});

}  // namespace dosesens
