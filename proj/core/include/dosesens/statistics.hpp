#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dosesens/design.hpp"
#include "dosesens/monotone_map.hpp"

namespace dosesens {

/// Stratum-wise statistic T = sum_i sum_j m(Z_ij) R_ij with nondecreasing m.
struct StatisticSpec {
  enum class Kind { perm_t, threshold, rank_within, rank_across, power, custom };

  Kind kind = Kind::perm_t;
  /// Threshold c for `threshold`, exponent a for `power`.
  double param = 0.0;
  std::optional<MonotoneMap> table;  ///< `custom` only
  /// Lower-tailed variant: m is replaced by -m.
  bool negate = false;

  static StatisticSpec perm_t();
  static StatisticSpec threshold(double c);
  static StatisticSpec power(double a);

  /// Accepts "t", "threshold:c", "rank-within", "rank-across", "power:a",
  /// "custom:x0/y0;x1/y1;..." with an optional "neg:" prefix.
  static StatisticSpec parse(const std::string& text);
  std::string to_string() const;
};

/// Bonferroni combination of several statistics.
struct AdaptiveSpec {
  std::vector<StatisticSpec> components;

  /// "adaptive:t,threshold:0.1".
  static AdaptiveSpec parse(const std::string& text);
  std::string to_string() const;
};

bool is_adaptive(const std::string& text);

/// m(z) for the dose-only kinds (everything except the rank kinds).
double dose_score(const StatisticSpec& spec, double z);

/// m(Z_ij) for every unit, indexed [set][unit]. Ranks are average ranks.
std::vector<std::vector<double>> dose_scores(const StatisticSpec& spec, const MatchedDesign& design);

/// m(z) for the doses of one set; rank-across is not defined for a lone set.
std::vector<double> dose_scores(const StatisticSpec& spec, const MatchedSet& set);

double evaluate(const StatisticSpec& spec, const MatchedDesign& design);
double per_stratum(const StatisticSpec& spec, const MatchedSet& set);
double per_stratum(const StatisticSpec& spec, const MatchedDesign& design, std::size_t i);

/// True for a threshold c outside [min dose, max dose).
bool degenerate(const StatisticSpec& spec, const MatchedDesign& design);

/// min(1, k * min p) for k component p-values.
double adaptive_p(const AdaptiveSpec& spec, const std::vector<double>& component_p);

}  // namespace dosesens
