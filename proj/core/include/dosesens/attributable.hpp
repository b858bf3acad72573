#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dosesens/assignment.hpp"
#include "dosesens/design.hpp"

namespace dosesens {

/// Test setup for the threshold attributable effect
/// TAE(c) = sum 1{Z > c} (R - r(0)).
struct TaeInstance {
  double c = 0.5;
  /// Doses <= eps reveal r(0).
  double eps = 0.0;
  double alpha = 0.05;
  SensitivityParameter gp;
  /// sum 1{Z > c} R.
  long observed_count = 0;

  /// Validates eps < c and alpha in (0, 0.5) and fills observed_count.
  static TaeInstance make(const MatchedDesign& design, double c, double eps, double alpha,
                          const SensitivityParameter& gp);
};

/// One compatible reference-outcome pattern r0' for a set, with the pivot
/// value and its moments at u = r0' (upp) and u = 1 - r0' (low).
struct StratumCandidate {
  std::vector<int> r0;
  int t = 0;
  double E_low = 0.0;
  double E_upp = 0.0;
  double V_low = 0.0;
  double V_upp = 0.0;
};

inline constexpr std::size_t kCandidateCap = 1024;

std::vector<StratumCandidate> enumerate_compatible(const MatchedSet& set, const TaeInstance& inst,
                                                   std::size_t cap = kCandidateCap);

/// Which deviations count against r0': both directions (the default), or
/// only a pivot above its upper expectation.
enum class TaeSides { both, upper };

/// Form of the TAE constraint: TAE = delta, TAE <= delta, TAE >= delta.
enum class TaeForm { equal, at_most, at_least };

enum class TaeMode { enumeration, branch_and_bound, relaxed, separability };
enum class TaeDecision { reject, accept, undecided };

std::string to_string(TaeMode m);
TaeMode parse_tae_mode(const std::string& text);
std::string to_string(TaeDecision d);

/// Candidates for every set plus the constants of the selection program.
struct TaeProblem {
  TaeInstance inst;
  TaeSides sides = TaeSides::both;
  std::vector<std::vector<StratumCandidate>> candidates;
  /// One-sided chi-square critical value, the (1 - 2 alpha) quantile.
  double chi2 = 0.0;
  double big_m = 0.0;

  /// Product of the per-set candidate counts (saturating).
  double combinations() const;
};

TaeProblem build_tae_problem(const MatchedDesign& design, const TaeInstance& inst,
                             TaeSides sides = TaeSides::both, std::size_t cap = kCandidateCap);

double chi2_one_sided(double alpha);

/// Linear aggregates of a selection.
struct Selection {
  double t = 0.0;
  double E_low = 0.0;
  double E_upp = 0.0;
  double V_low = 0.0;
  double V_upp = 0.0;
};

/// Smallest y for which the selection satisfies the program's constraints:
/// the largest quadratic term whose direction constraint is active, or
/// -infinity when none is active. The selection is not rejected iff this is
/// below -kTaeFeasibilityTol.
double selection_y(const Selection& s, double chi2, TaeSides sides);
bool selection_accepted(const Selection& s, double chi2, TaeSides sides);

inline constexpr double kTaeFeasibilityTol = 1e-9;
/// A deviation T - E smaller than this in magnitude counts as zero.
inline constexpr double kTaeSignTol = 1e-12;

/// Does the pivot total satisfy the form for delta?
bool form_holds(long observed_count, long pivot_total, long delta, TaeForm form);

struct TaeTestResult {
  long delta = 0;
  TaeForm form = TaeForm::equal;
  TaeDecision decision = TaeDecision::reject;
  /// Enumeration only: the minimum of selection_y over the feasible set when
  /// finite.
  std::optional<double> optimal_y;
  TaeMode mode = TaeMode::enumeration;
  /// Chosen candidate index per set.
  std::optional<std::vector<std::size_t>> witness;
  std::size_t nodes_explored = 0;
  /// Separability only.
  std::optional<double> p_value;
  std::optional<double> expectation;

  bool accepted() const { return decision != TaeDecision::reject; }
};

inline constexpr double kEnumerationLimit = 1e6;

TaeTestResult test_tae_enumeration(const TaeProblem& problem, long delta, TaeForm form = TaeForm::equal,
                                   double limit = kEnumerationLimit);

inline constexpr std::size_t kNodeBudget = 1000000;

/// Exact branch and bound (relaxed = false) or the root relaxation with
/// d in [0,1] (relaxed = true, conservative).
TaeTestResult test_tae_bnb(const TaeProblem& problem, long delta, bool relaxed, TaeForm form = TaeForm::equal,
                           std::size_t node_budget = kNodeBudget);

struct TaeInterval {
  std::optional<long> lo;
  std::optional<long> hi;
  bool empty() const { return !lo.has_value(); }
};

/// [min accepted TAE, max accepted TAE] via the inequality forms and binary
/// search; mode must be enumeration, branch_and_bound or relaxed.
TaeInterval tae_confidence_set(const TaeProblem& problem, TaeMode mode);

/// Upper bound on the probability of a pivot event in a set: the expectation
/// of sum 1{Z > c} r0 at u = r0.
double pi_bar(const MatchedSet& set, const TaeInstance& inst, const std::vector<int>& r0);

/// Each set contributes 0 or 1 to sum 1{Z > c} R.
bool binary_contribution(const MatchedDesign& design, const TaeInstance& inst);

/// Greedy attribution test of TAE = a (binary-contribution designs).
/// witness holds, per set, 1 where the event is attributed.
TaeTestResult separability_test(const MatchedDesign& design, const TaeInstance& inst, long a);

/// Candidate indices matching the separability allocation for a (for
/// comparing with enumeration witnesses).
std::vector<std::size_t> separability_selection(const TaeProblem& problem, const MatchedDesign& design, long a);

}  // namespace dosesens
