#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dosesens/design.hpp"
#include "dosesens/statistics.hpp"

namespace dosesens {

/// Outcome dose-response f: z^a, or the indicator 1{z > 0}.
struct ResponseCurve {
  enum class Kind { power, indicator };
  Kind kind = Kind::power;
  double a = 1.0;

  double operator()(double z) const;
  /// "power:a" (also "z^a") or "indicator".
  static ResponseCurve parse(const std::string& text);
  std::string to_string() const;
};

/// Dose law on [0,1]: Unif(0,1) or Beta(a,b), optionally mixed with a point
/// mass at zero of weight `zero_mass`.
struct DoseLaw {
  double zero_mass = 0.0;
  bool beta = false;
  double a = 1.0;
  double b = 1.0;

  /// "unif", "beta:a,b", "mixture:w,unif", "mixture:w,beta:a,b".
  static DoseLaw parse(const std::string& text);
  std::string to_string() const;
};

struct DgpSpec {
  ResponseCurve f;
  double beta = 1.5;
  double effect_mean = 0.0;
  DoseLaw dose_law;
  /// n_i = 2 + X with X = 0 w.p. 1 - extra_prob, else Poisson(extra_rate).
  double extra_prob = 0.1;
  double extra_rate = 0.5;
};

/// I matched sets drawn independently; set i uses its own substream.
MatchedDesign sample_dgp(const DgpSpec& dgp, std::size_t I, std::uint64_t seed);

struct PhiEstimate {
  double gamma = 0.0;
  double estimate = 0.0;
  double se = 0.0;
};

/// Monte Carlo estimate of E[ E_{gamma, u=R}(q_i) ] over mc_draws sampled
/// strata; the exponent uses the raw doses.
PhiEstimate phi_hat(const DgpSpec& dgp, const StatisticSpec& spec, double gamma, std::size_t mc_draws,
                    std::uint64_t seed);

/// Pre-sampled strata for repeated evaluation with common random numbers.
/// With `conditional`, each stratum averages over every outcome pattern
/// weighted by its probability given the drawn doses and A, instead of using
/// the single drawn pattern. Both are unbiased; the first has far less noise.
class PhiSampler {
 public:
  PhiSampler(const DgpSpec& dgp, const StatisticSpec& spec, std::size_t mc_draws, std::uint64_t seed,
             bool conditional = true);
  PhiEstimate phi(double gamma) const;
  /// Sample mean and standard error of q_i.
  double mean_q() const { return mean_q_; }
  double se_q() const { return se_q_; }
  /// Sample mean and standard error of phi_i(gamma) - q_i.
  PhiEstimate gap(double gamma) const;
  /// Unit-level sample correlation of m(Z) and R.
  double correlation() const { return correlation_; }
  std::size_t units() const { return units_; }

 private:
  struct Pattern {
    double prob = 1.0;
    std::vector<double> exponents;
    std::vector<double> values;
    double q = 0.0;
  };
  using Stratum = std::vector<Pattern>;
  static double stratum_phi(const Stratum& st, double gamma);
  std::vector<Stratum> strata_;
  double mean_q_ = 0.0;
  double se_q_ = 0.0;
  double correlation_ = 0.0;
  std::size_t units_ = 0;
};

struct DesignSensitivityOptions {
  std::size_t mc_draws = 100000;
  double tol = 1e-2;
  std::uint64_t seed = 1;
  std::size_t pilot_draws = 20000;
  /// Average over outcome patterns within each sampled stratum.
  bool conditional = true;
};

struct DesignSensitivityResult {
  double gamma_tilde = 0.0;
  double Gamma_tilde = 1.0;
  std::size_t mc_draws = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double mean_q = 0.0;
  double pilot_correlation = 0.0;
  std::vector<PhiEstimate> phi_samples;
};

inline const double kMaxGamma = 6.907755278982137;  // ln 1000

DesignSensitivityResult solve_design_sensitivity(const DgpSpec& dgp, const StatisticSpec& spec,
                                                 const DesignSensitivityOptions& options = {});

struct PowerOptions {
  std::size_t I = 2000;
  double alpha = 0.05;
  std::size_t sim_reps = 200;
  std::uint64_t seed = 1;
};

struct PowerResult {
  double gamma = 0.0;
  double power = 0.0;
  double se = 0.0;
  std::size_t rejections = 0;
  std::size_t reps = 0;
};

/// Fraction of simulated designs whose normal-approximation worst-case
/// p-value is below alpha.
PowerResult simulate_power(const DgpSpec& dgp, const StatisticSpec& spec, double gamma,
                           const PowerOptions& options);
PowerResult simulate_power(const DgpSpec& dgp, const AdaptiveSpec& spec, double gamma,
                           const PowerOptions& options);

}  // namespace dosesens
