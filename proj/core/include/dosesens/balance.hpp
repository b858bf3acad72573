#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dosesens/design.hpp"

namespace dosesens {

/// (mean of group 1 - mean of group 0) / sd_whole. group holds 0/1 labels.
double smd(const std::vector<double>& values, const std::vector<int>& group, double sd_whole);

/// Sample standard deviation (n - 1 denominator).
double sample_sd(const std::vector<double>& values);

struct MedianSplit {
  /// Per unit in design order: 1 when the dose is strictly above its set's median.
  std::vector<int> high;
  /// Sets whose doses are all equal (every unit low).
  std::vector<std::string> degenerate_sets;
};

MedianSplit median_split_groups(const MatchedDesign& design);

struct KsResult {
  double D = 0.0;
  double p = 1.0;
};

/// Survival function of the Kolmogorov distribution, pr(K > lambda).
double kolmogorov_sf(double lambda);

/// Two-sample KS statistic with the asymptotic p-value at effective size
/// n m / (n + m).
KsResult ks_two_sample(const std::vector<double>& x, const std::vector<double>& y);

struct BalanceTestOptions {
  double alpha = 0.1;
  std::size_t permutation_reps = 2000;
  std::uint64_t seed = 1;
};

struct BalanceTestResult {
  double p_1to2 = 1.0;
  double p_2to1 = 1.0;
  bool reject = false;
  double t_1to2 = 0.0;
  double t_2to1 = 0.0;
  /// Set indices of each half; part 1 gets the larger half when I is odd.
  std::vector<std::size_t> part1;
  std::vector<std::size_t> part2;
  /// A fit fell back to ridge regression.
  bool ridge_used = false;
  /// The predictions were constant within every set of the scored half, so
  /// the statistic cannot move; p = 1 by convention.
  bool degenerate_1to2 = false;
  bool degenerate_2to1 = false;
  std::vector<std::string> covariates_used;
  std::vector<std::string> covariates_dropped;
  std::size_t permutation_reps = 0;
  std::uint64_t seed = 0;
};

inline constexpr double kRidgeJitter = 1e-8;

/// Split-sample randomization test of uniform dose assignment.
BalanceTestResult balance_randomization_test(const MatchedDesign& design, const BalanceTestOptions& options = {});

/// An unmatched sample (one row per unit) for the before-matching columns.
struct UnitSample {
  std::vector<double> dose;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
};

/// CSV with header `dose,<covariate>...`; every cell must be present.
UnitSample parse_unit_sample(std::istream& in);

struct BalanceRow {
  std::string name;
  double below = 0.0;  ///< before matching, dose at most the pooled median
  double above = 0.0;
  double smd_before = 0.0;
  double ks_p_before = 1.0;
  double mean_low = 0.0;  ///< after matching, within-set median split
  double mean_high = 0.0;
  double smd_after = 0.0;
  double ks_p_after = 1.0;
};

struct BalanceReport {
  std::vector<BalanceRow> rows;
  /// "unit-sample" when a before-matching sample was given, else "pooled".
  std::string before_source;
  MedianSplit split;
  std::vector<std::string> covariates_dropped;
};

/// Per-covariate means, SMD and KS p-values. Without `before` the matched
/// units are pooled and split at the overall median dose. SMD denominators
/// are the whole-sample sd from the before-matching data in both cases.
BalanceReport balance_report(const MatchedDesign& design, const std::optional<UnitSample>& before = std::nullopt);

/// Columns: confounder,Below,Above,SMD,KS p,Low,High,SMD,KS p.
void write_balance_csv(std::ostream& out, const BalanceReport& report);

}  // namespace dosesens
