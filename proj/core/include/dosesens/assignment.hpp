#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dosesens/design.hpp"
#include "dosesens/monotone_map.hpp"
#include "dosesens/rng.hpp"

namespace dosesens {

/// Sensitivity parameter of the dose assignment model: the log-odds bound
/// `gamma` per unit of (optionally transformed) dose, and Gamma = exp(gamma).
struct SensitivityParameter {
  double gamma = 0.0;
  /// Known monotone transform applied to doses inside the exponent.
  std::optional<MonotoneMap> dose_transform;

  SensitivityParameter() = default;
  explicit SensitivityParameter(double g, std::optional<MonotoneMap> transform = std::nullopt);
  static SensitivityParameter from_Gamma(double Gamma);

  double Gamma() const;
  double exposure(double dose) const;
};

/// Hypothetical unmeasured confounder values, one per unit, each in [0,1].
class ConfounderAllocation {
 public:
  ConfounderAllocation() = default;
  explicit ConfounderAllocation(std::vector<double> values);

  /// The allocation equal to the outcome vector.
  static ConfounderAllocation adversarial(const MatchedSet& set);
  static ConfounderAllocation adversarial(const MatchedDesign& design);
  static ConfounderAllocation constant(std::size_t n, double value);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }
  /// The part belonging to set i of a design-wide allocation.
  ConfounderAllocation for_set(const MatchedDesign& design, std::size_t i) const;

 private:
  std::vector<double> values_;
};

enum class AssignmentMode {
  full,        ///< one weight per permutation of the set's doses
  aggregated,  ///< one weight per distinct assignment of doses to unit classes
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Within-set distribution of a statistic of the form
/// q(pi) = sum_j score[pos(j)] * weight[j] under the biased assignment model,
/// where unit j receives dose position pos(j).
///
/// In aggregated mode units are grouped by equal (weight, u) pairs; every
/// permutation in a group class shares both its exponent and its statistic
/// value, so one support point per class suffices. Full mode keeps every
/// permutation. Each support point stores the exponent coefficient
/// a = sum_j exposure[pos(j)] * u[j] and the statistic value.
struct StratumInput {
  std::vector<double> exposure;     ///< transformed dose per position
  std::vector<double> dose_score;   ///< statistic score per position
  std::vector<double> unit_weight;  ///< statistic weight per unit
  std::vector<double> unit_u;       ///< confounder per unit
};

inline constexpr std::size_t kDefaultSupportCap = 3628800;

class StratumSupport {
 public:
  static StratumSupport build(const StratumInput& input, AssignmentMode mode,
                              std::size_t full_size_cap = kDefaultEnumerationCap,
                              std::size_t support_cap = kDefaultSupportCap);

  std::size_t size() const { return values_.size(); }
  std::span<const double> exponents() const { return exponents_; }
  std::span<const double> values() const { return values_; }
  /// Number of permutations represented by each support point.
  double multiplicity() const { return multiplicity_; }
  /// labels()[k][p]: unit group receiving dose position p at support point k.
  const std::vector<std::vector<int>>& labels() const { return labels_; }
  /// Units in each group (a single unit per group in full mode).
  const std::vector<std::vector<int>>& groups() const { return groups_; }

  std::vector<double> probabilities(double gamma) const;
  Moments moments(double gamma) const;

 private:
  std::vector<double> exponents_;
  std::vector<double> values_;
  std::vector<std::vector<int>> labels_;
  std::vector<std::vector<int>> groups_;
  double multiplicity_ = 1.0;
};

/// Draws statistic values from a StratumSupport at a fixed gamma.
class StratumSampler {
 public:
  StratumSampler(const StratumSupport& support, double gamma);
  double draw(Engine& engine) const;
  bool constant() const { return values_.size() == 1; }
  double value(std::size_t k) const { return values_[k]; }

 private:
  std::vector<double> cdf_;
  std::vector<double> values_;
};

/// Per-permutation (full) or per-class (aggregated) assignment weights.
struct AssignmentDistribution {
  AssignmentMode representation = AssignmentMode::full;
  /// full: assignments[k][j] = dose position received by unit j.
  /// aggregated: assignments[k][p] = index into `groups` of the unit class
  /// receiving dose position p.
  std::vector<std::vector<int>> assignments;
  std::vector<std::vector<int>> groups;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  /// Stratum table induced by support point k for the given set.
  StratumTable table(std::size_t k, const MatchedSet& set) const;
};

AssignmentDistribution assignment_probabilities(const MatchedSet& set, const ConfounderAllocation& u,
                                                const SensitivityParameter& gp, AssignmentMode mode,
                                                std::size_t full_size_cap = kDefaultEnumerationCap);

/// Half the L1 distance between the biased assignment distribution at u and
/// the uniform one.
double tv_from_uniform(const MatchedSet& set, const SensitivityParameter& gp,
                       const ConfounderAllocation& u);

/// Per-set regularity quantity l_i used by the normal-approximation
/// condition; undefined (DomainError) for concordant sets.
double regularity_l(const MatchedSet& set, const SensitivityParameter& gp);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
};

/// Bound on the logit of the probability that one of two units receives the
/// higher dose: [-gamma (z_high - z_low), gamma (z_high - z_low)].
Interval logit_bound_margin(double z_low, double z_high, const SensitivityParameter& gp);

/// Logit of the model probability that the first of two units with
/// confounders (u_first, u_second) receives z_high rather than z_low.
double pair_assignment_logit(double z_low, double z_high, double u_first, double u_second,
                             const SensitivityParameter& gp);

}  // namespace dosesens
