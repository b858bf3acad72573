#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dosesens/assignment.hpp"
#include "dosesens/design.hpp"
#include "dosesens/statistics.hpp"

namespace dosesens {

enum class PMethod { exact_mc, normal };

std::string to_string(PMethod m);
PMethod parse_method(const std::string& text);

struct SharpNullResult {
  double gamma = 0.0;
  double t_obs = 0.0;
  double p_worst = 1.0;
  PMethod method = PMethod::normal;
  std::optional<double> mc_se;
  std::optional<Moments> moments;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  /// Zero null variance: p is 1 or 0 by convention.
  bool degenerate = false;
  /// Fewer than kSmallSampleSets discordant sets.
  bool small_sample = false;
  /// max_i W_i^2 / sum_i l_i^3 W_i^2 over discordant sets (normal method);
  /// small values support the normal approximation.
  std::optional<double> regularity_ratio;

  double Gamma() const;
};

inline constexpr std::size_t kSmallSampleSets = 10;

/// Tail events are T >= t - kTailTolerance * max(1, |t|), so exact ties count.
inline constexpr double kTailTolerance = 1e-10;
double tail_cut(double t);

/// Per-stratum inputs for T = sum m(Z) R: positions carry m(z_p) and the
/// exposure phi(z_p), units carry R_j and u_j.
std::vector<StratumInput> stratum_inputs(const MatchedDesign& design, const StatisticSpec& spec,
                                         const SensitivityParameter& gp, const ConfounderAllocation& u);

/// Per-stratum inputs for T = sum Z q with arbitrary per-unit scores q.
std::vector<StratumInput> stratum_inputs(const MatchedDesign& design, const std::vector<double>& q,
                                         const SensitivityParameter& gp, const ConfounderAllocation& u);

std::vector<StratumSupport> build_supports(const std::vector<StratumInput>& inputs,
                                           AssignmentMode mode = AssignmentMode::aggregated);

Moments moments_at_u(const MatchedDesign& design, const StatisticSpec& spec, const SensitivityParameter& gp,
                     const ConfounderAllocation& u);
Moments moments_at_u(const MatchedDesign& design, const std::vector<double>& q, const SensitivityParameter& gp,
                     const ConfounderAllocation& u);

/// Exact distribution of T = sum_i q_i as sorted (value, probability) pairs,
/// with values closer than the tail tolerance merged.
using Distribution = std::vector<std::pair<double, double>>;
inline constexpr std::size_t kDistributionCap = 4000000;

Distribution stratum_distribution(const StratumSupport& support, double gamma);
Distribution exact_distribution(const std::vector<StratumSupport>& supports, double gamma,
                                std::size_t cap = kDistributionCap);
/// pr(T >= t) from a distribution, with the tail tolerance.
double tail_probability(const Distribution& dist, double t);
double exact_tail(const std::vector<StratumSupport>& supports, double gamma, double t);

struct McOptions {
  std::size_t reps = 10000;
  std::uint64_t seed = 1;
};

SharpNullResult worst_case_p_exact_mc(const MatchedDesign& design, const StatisticSpec& spec,
                                      const SensitivityParameter& gp, const McOptions& mc);
SharpNullResult worst_case_p_normal(const MatchedDesign& design, const StatisticSpec& spec,
                                    const SensitivityParameter& gp);

/// Exact worst-case p-value at u+ by convolution (small designs only).
double worst_case_p_exact(const MatchedDesign& design, const StatisticSpec& spec, const SensitivityParameter& gp);

std::vector<SharpNullResult> p_value_curve(const MatchedDesign& design, const StatisticSpec& spec,
                                           const std::vector<double>& gammas, PMethod method,
                                           const McOptions& mc = {});

/// Smallest Gamma on the curve whose worst-case p-value exceeds alpha.
std::optional<double> changepoint(const std::vector<SharpNullResult>& curve, double alpha);

/// pr_u(T >= t) for T = sum Z q, by exact enumeration.
double tail_probability_at(const MatchedDesign& design, const std::vector<double>& q,
                           const SensitivityParameter& gp, const ConfounderAllocation& u, double t);

struct CubeSearchOptions {
  double grid = 0.05;
  std::size_t restarts = 20;
  double improvement_tol = 1e-12;
  std::uint64_t seed = 1;
  std::size_t max_sweeps = 200;
};

struct CubeTraceEntry {
  std::size_t restart = 0;
  std::size_t sweeps = 0;
  double p_start = 0.0;
  double p_final = 0.0;
};

struct CubeMaximizerResult {
  ConfounderAllocation u_star;
  double p_at_u_star = 0.0;
  ConfounderAllocation best_corner;
  double p_best_corner = 0.0;
  std::size_t corners_evaluated = 0;
  std::vector<CubeTraceEntry> trace;
};

/// Maximizes pr_u(T >= t_obs), T = sum Z q, over u in [0,1]^N.
CubeMaximizerResult brute_force_worst_p(const MatchedDesign& design, const std::vector<double>& q,
                                        const SensitivityParameter& gp, double t_obs,
                                        const CubeSearchOptions& options = {});

}  // namespace dosesens
