#include "dosesens/design_sensitivity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "dosesens/assignment.hpp"
#include "dosesens/error.hpp"
#include "dosesens/parallel.hpp"
#include "dosesens/rng.hpp"
#include "dosesens/sharp_null.hpp"

namespace dosesens {

namespace {

double parse_real(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError("bad " + what + ": '" + s + "'");
  }
  return v;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

double ResponseCurve::operator()(double z) const {
  if (kind == Kind::indicator) return z > 0.0 ? 1.0 : 0.0;
  return std::pow(z, a);
}

ResponseCurve ResponseCurve::parse(const std::string& text) {
  ResponseCurve f;
  if (text == "indicator") {
    f.kind = Kind::indicator;
    return f;
  }
  std::string arg;
  if (text.rfind("power:", 0) == 0) {
    arg = text.substr(6);
  } else if (text.rfind("z^", 0) == 0) {
    arg = text.substr(2);
  } else {
    throw ParseError("unknown response curve '" + text + "'");
  }
  f.a = parse_real(arg, "response exponent");
  if (!(f.a > 0.0)) throw ParseError("response exponent must be positive");
  return f;
}

std::string ResponseCurve::to_string() const {
  return kind == Kind::indicator ? "indicator" : "power:" + fmt(a);
}

DoseLaw DoseLaw::parse(const std::string& text) {
  DoseLaw law;
  std::string rest = text;
  if (rest.rfind("mixture:", 0) == 0) {
    rest = rest.substr(8);
    const auto comma = rest.find(',');
    if (comma == std::string::npos) throw ParseError("mixture dose law needs 'mixture:w,<law>'");
    law.zero_mass = parse_real(rest.substr(0, comma), "mixture weight");
    if (!(law.zero_mass >= 0.0 && law.zero_mass <= 1.0)) throw ParseError("mixture weight must lie in [0,1]");
    rest = rest.substr(comma + 1);
  }
  if (rest == "unif" || rest == "uniform") return law;
  if (rest.rfind("beta:", 0) == 0) {
    const auto args = rest.substr(5);
    const auto comma = args.find(',');
    if (comma == std::string::npos) throw ParseError("beta dose law needs 'beta:a,b'");
    law.beta = true;
    law.a = parse_real(args.substr(0, comma), "beta shape");
    law.b = parse_real(args.substr(comma + 1), "beta shape");
    if (!(law.a > 0.0 && law.b > 0.0)) throw ParseError("beta shapes must be positive");
    return law;
  }
  throw ParseError("unknown dose law '" + text + "'");
}

std::string DoseLaw::to_string() const {
  std::string base = beta ? "beta:" + fmt(a) + "," + fmt(b) : "unif";
  return zero_mass > 0.0 ? "mixture:" + fmt(zero_mass) + "," + base : base;
}

namespace {

// Draws set i; probs (when given) receives each unit's event probability.
MatchedSet draw_set(const DgpSpec& dgp, std::uint64_t seed, std::size_t i, std::vector<double>* probs) {
  auto engine = substream(seed, i, stream_tag::kStratum);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(dgp.effect_mean, 1.0);
  std::size_t n = 2;
  if (unif(engine) < dgp.extra_prob) {
    std::poisson_distribution<int> pois(dgp.extra_rate);
    n += static_cast<std::size_t>(pois(engine));
  }
  const double A = normal(engine);
  std::gamma_distribution<double> ga(dgp.dose_law.a, 1.0), gb(dgp.dose_law.b, 1.0);
  MatchedSet s;
  s.id = std::to_string(i + 1);
  for (std::size_t j = 0; j < n; ++j) {
    double z = 0.0;
    const bool zero = dgp.dose_law.zero_mass > 0.0 && unif(engine) < dgp.dose_law.zero_mass;
    if (!zero) {
      if (dgp.dose_law.beta) {
        const double x = ga(engine), y = gb(engine);
        z = x / (x + y);
      } else {
        z = unif(engine);
      }
    }
    const double eta = A + dgp.f(z) * dgp.beta;
    const double p = 1.0 / (1.0 + std::exp(-eta));
    s.doses.push_back(z);
    s.outcomes.push_back(unif(engine) < p ? 1 : 0);
    if (probs) probs->push_back(p);
  }
  return s;
}

// Sets larger than this keep only the drawn outcome pattern.
constexpr std::size_t kMaxConditionalSize = 12;

}  // namespace

MatchedDesign sample_dgp(const DgpSpec& dgp, std::size_t I, std::uint64_t seed) {
  if (I == 0) throw DomainError("number of sets must be positive");
  std::vector<MatchedSet> sets(I);
  parallel_for(I, [&](std::size_t i) { sets[i] = draw_set(dgp, seed, i, nullptr); });
  return MatchedDesign(std::move(sets));
}

PhiSampler::PhiSampler(const DgpSpec& dgp, const StatisticSpec& spec, std::size_t mc_draws, std::uint64_t seed,
                       bool conditional) {
  if (mc_draws < 2) throw DomainError("mc_draws must be at least 2");
  std::vector<MatchedSet> sets(mc_draws);
  std::vector<std::vector<double>> probs(mc_draws);
  parallel_for(mc_draws, [&](std::size_t i) { sets[i] = draw_set(dgp, seed, i, &probs[i]); });
  const MatchedDesign design(std::move(sets));
  const auto m = dose_scores(spec, design);
  strata_.resize(design.num_sets());
  parallel_for(design.num_sets(), [&](std::size_t i) {
    const auto& set = design.set(i);
    const std::size_t n = set.size();
    auto pattern = [&](const std::vector<int>& r, double prob) {
      Pattern pt;
      pt.prob = prob;
      for (std::size_t j = 0; j < n; ++j) pt.q += m[i][j] * r[j];
      const auto ev = static_cast<std::size_t>(std::count(r.begin(), r.end(), 1));
      if (ev == 0 || ev == n) {
        pt.exponents = {0.0};
        pt.values = {pt.q};
        return pt;
      }
      StratumInput in;
      in.exposure = set.doses;
      in.dose_score = m[i];
      in.unit_weight.assign(r.begin(), r.end());
      in.unit_u = in.unit_weight;
      const auto support = StratumSupport::build(in, AssignmentMode::aggregated);
      pt.exponents.assign(support.exponents().begin(), support.exponents().end());
      pt.values.assign(support.values().begin(), support.values().end());
      return pt;
    };
    auto& st = strata_[i];
    if (!conditional || n > kMaxConditionalSize) {
      st.push_back(pattern(set.outcomes, 1.0));
      return;
    }
    std::vector<int> r(n);
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      double prob = 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        r[j] = static_cast<int>((mask >> j) & 1U);
        prob *= r[j] ? probs[i][j] : 1.0 - probs[i][j];
      }
      if (prob > 0.0) st.push_back(pattern(r, prob));
    }
  });

  double sq = 0.0, sq2 = 0.0;
  for (const auto& st : strata_) {
    double q = 0.0;
    for (const auto& pt : st) q += pt.prob * pt.q;
    sq += q;
    sq2 += q * q;
  }
  const double n = static_cast<double>(strata_.size());
  mean_q_ = sq / n;
  se_q_ = std::sqrt(std::max(0.0, (sq2 - n * mean_q_ * mean_q_) / (n - 1.0)) / n);

  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < design.num_sets(); ++i) {
    const auto& set = design.set(i);
    for (std::size_t j = 0; j < set.size(); ++j) {
      const double x = m[i][j], y = set.outcomes[j];
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
      ++units_;
    }
  }
  const double u = static_cast<double>(units_);
  const double cxx = sxx - sx * sx / u, cyy = syy - sy * sy / u, cxy = sxy - sx * sy / u;
  correlation_ = (cxx > 0.0 && cyy > 0.0) ? cxy / std::sqrt(cxx * cyy) : 0.0;
}

namespace {

double weighted_mean(const std::vector<double>& a, const std::vector<double>& v, double gamma) {
  if (a.size() == 1) return v[0];
  const double amax = *std::max_element(a.begin(), a.end());
  double w = 0.0, s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double e = std::exp(gamma * (a[k] - amax));
    w += e;
    s += e * v[k];
  }
  return s / w;
}

}  // namespace

double PhiSampler::stratum_phi(const Stratum& st, double gamma) {
  double x = 0.0;
  for (const auto& pt : st) x += pt.prob * weighted_mean(pt.exponents, pt.values, gamma);
  return x;
}

PhiEstimate PhiSampler::phi(double gamma) const {
  double s = 0.0, s2 = 0.0;
  for (const auto& st : strata_) {
    const double x = stratum_phi(st, gamma);
    s += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(strata_.size());
  const double mean = s / n;
  return {gamma, mean, std::sqrt(std::max(0.0, (s2 - n * mean * mean) / (n - 1.0)) / n)};
}

PhiEstimate PhiSampler::gap(double gamma) const {
  double s = 0.0, s2 = 0.0;
  for (const auto& st : strata_) {
    double x = stratum_phi(st, gamma);
    for (const auto& pt : st) x -= pt.prob * pt.q;
    s += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(strata_.size());
  const double mean = s / n;
  return {gamma, mean, std::sqrt(std::max(0.0, (s2 - n * mean * mean) / (n - 1.0)) / n)};
}

PhiEstimate phi_hat(const DgpSpec& dgp, const StatisticSpec& spec, double gamma, std::size_t mc_draws,
                    std::uint64_t seed) {
  return PhiSampler(dgp, spec, mc_draws, seed).phi(gamma);
}

DesignSensitivityResult solve_design_sensitivity(const DgpSpec& dgp, const StatisticSpec& spec,
                                                 const DesignSensitivityOptions& options) {
  if (!(options.tol > 0.0)) throw DomainError("tolerance must be positive");
  DesignSensitivityResult r;
  r.mc_draws = options.mc_draws;

  const PhiSampler pilot(dgp, spec, std::max<std::size_t>(options.pilot_draws, 2),
                         derive_seed(options.seed, 1, stream_tag::kSimulation));
  r.pilot_correlation = pilot.correlation();
  // A correlation indistinguishable from zero leaves the root undefined.
  const double noise = 3.0 / std::sqrt(static_cast<double>(pilot.units()));
  if (!(r.pilot_correlation > noise && r.pilot_correlation < 1.0)) {
    throw DomainError("pilot correlation of m(Z) and R is " + fmt(r.pilot_correlation) +
                      "; design sensitivity needs it strictly inside (0,1)");
  }

  const PhiSampler sampler(dgp, spec, options.mc_draws, derive_seed(options.seed, 0, stream_tag::kSimulation),
                           options.conditional);
  r.mean_q = sampler.mean_q();
  auto eval = [&](double g) {
    r.phi_samples.push_back(sampler.phi(g));
    return sampler.gap(g).estimate;
  };

  double lo = 0.0, hi = 0.5;
  if (eval(lo) >= 0.0) throw DomainError("no sign change: biased expectation already exceeds E[q] at gamma 0");
  while (eval(hi) <= 0.0) {
    if (hi >= kMaxGamma) throw DomainError("no sign change below gamma = ln(1000)");
    lo = hi;
    hi = std::min(kMaxGamma, 2.0 * hi);
  }
  while (hi - lo > options.tol) {
    const double mid = 0.5 * (lo + hi);
    if (eval(mid) <= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  r.bracket_lo = lo;
  r.bracket_hi = hi;
  r.gamma_tilde = 0.5 * (lo + hi);
  r.Gamma_tilde = std::exp(r.gamma_tilde);
  std::sort(r.phi_samples.begin(), r.phi_samples.end(),
            [](const auto& a, const auto& b) { return a.gamma < b.gamma; });
  return r;
}

namespace {

template <class PFn>
PowerResult run_power(const DgpSpec& dgp, double gamma, const PowerOptions& o, PFn p_value) {
  if (o.sim_reps == 0) throw DomainError("sim_reps must be positive");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
  std::vector<char> reject(o.sim_reps, 0);
  parallel_for(o.sim_reps, [&](std::size_t rep) {
    const auto design = sample_dgp(dgp, o.I, derive_seed(o.seed, rep, stream_tag::kSimulation));
    reject[rep] = p_value(design) < o.alpha ? 1 : 0;
  });
  PowerResult r;
  r.gamma = gamma;
  r.reps = o.sim_reps;
  r.rejections = static_cast<std::size_t>(std::count(reject.begin(), reject.end(), 1));
  r.power = static_cast<double>(r.rejections) / static_cast<double>(r.reps);
  r.se = std::sqrt(r.power * (1.0 - r.power) / static_cast<double>(r.reps));
  return r;
}

}  // namespace

PowerResult simulate_power(const DgpSpec& dgp, const StatisticSpec& spec, double gamma, const PowerOptions& o) {
  const SensitivityParameter gp(gamma);
  return run_power(dgp, gamma, o, [&](const MatchedDesign& d) { return worst_case_p_normal(d, spec, gp).p_worst; });
}

PowerResult simulate_power(const DgpSpec& dgp, const AdaptiveSpec& spec, double gamma, const PowerOptions& o) {
  const SensitivityParameter gp(gamma);
  return run_power(dgp, gamma, o, [&](const MatchedDesign& d) {
    std::vector<double> p;
    for (const auto& c : spec.components) p.push_back(worst_case_p_normal(d, c, gp).p_worst);
    return adaptive_p(spec, p);
  });
}

}  // namespace dosesens
