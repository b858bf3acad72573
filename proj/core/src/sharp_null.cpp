#include "dosesens/sharp_null.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "dosesens/error.hpp"
#include "dosesens/parallel.hpp"
#include "dosesens/rng.hpp"

namespace dosesens {

std::string to_string(PMethod m) { return m == PMethod::exact_mc ? "exact_mc" : "normal"; }

PMethod parse_method(const std::string& text) {
  if (text == "exact-mc" || text == "exact_mc") return PMethod::exact_mc;
  if (text == "normal") return PMethod::normal;
  throw ParseError("unknown method '" + text + "' (expected exact-mc or normal)");
}

double SharpNullResult::Gamma() const { return std::exp(gamma); }

double tail_cut(double t) { return t - kTailTolerance * std::max(1.0, std::abs(t)); }

namespace {

void check_u(const MatchedDesign& design, const ConfounderAllocation& u) {
  if (u.size() != design.num_units()) throw DomainError("confounder allocation length does not match the design");
}

bool close(double a, double b) { return std::abs(a - b) <= kTailTolerance * std::max(1.0, std::abs(a)); }

Distribution merge_sorted(Distribution d) {
  std::sort(d.begin(), d.end());
  Distribution out;
  out.reserve(d.size());
  for (const auto& [v, p] : d) {
    if (!out.empty() && close(out.back().first, v)) {
      out.back().second += p;
    } else {
      out.emplace_back(v, p);
    }
  }
  return out;
}

Distribution convolve(const std::vector<Distribution>& parts, std::size_t cap) {
  Distribution cur{{0.0, 1.0}};
  for (const auto& d : parts) {
    if (d.size() == 1) {
      for (auto& e : cur) e.first += d[0].first;
      continue;
    }
    if (cur.size() * d.size() > cap) throw CapExceeded("exact distribution exceeds the size cap");
    Distribution next;
    next.reserve(cur.size() * d.size());
    for (const auto& [v1, p1] : cur) {
      for (const auto& [v2, p2] : d) next.emplace_back(v1 + v2, p1 * p2);
    }
    cur = merge_sorted(std::move(next));
  }
  return cur;
}

std::size_t discordant_sets(const MatchedDesign& design) {
  std::size_t k = 0;
  for (const auto& s : design.sets()) {
    const auto m = s.events();
    const auto [lo, hi] = std::minmax_element(s.doses.begin(), s.doses.end());
    if (m > 0 && m < s.size() && *lo < *hi) ++k;
  }
  return k;
}

std::vector<double> position_exposure(const MatchedSet& set, const SensitivityParameter& gp) {
  std::vector<double> e;
  e.reserve(set.size());
  for (double z : set.doses) e.push_back(gp.exposure(z));
  return e;
}

}  // namespace

std::vector<StratumInput> stratum_inputs(const MatchedDesign& design, const StatisticSpec& spec,
                                         const SensitivityParameter& gp, const ConfounderAllocation& u) {
  check_u(design, u);
  const auto m = dose_scores(spec, design);
  std::vector<StratumInput> out(design.num_sets());
  for (std::size_t i = 0; i < design.num_sets(); ++i) {
    const auto& s = design.set(i);
    const auto off = design.unit_offset(i);
    out[i].exposure = position_exposure(s, gp);
    out[i].dose_score = m[i];
    out[i].unit_weight.assign(s.outcomes.begin(), s.outcomes.end());
    out[i].unit_u.assign(u.values().begin() + off, u.values().begin() + off + s.size());
  }
  return out;
}

std::vector<StratumInput> stratum_inputs(const MatchedDesign& design, const std::vector<double>& q,
                                         const SensitivityParameter& gp, const ConfounderAllocation& u) {
  check_u(design, u);
  if (q.size() != design.num_units()) throw DomainError("score vector length does not match the design");
  std::vector<StratumInput> out(design.num_sets());
  for (std::size_t i = 0; i < design.num_sets(); ++i) {
    const auto& s = design.set(i);
    const auto off = design.unit_offset(i);
    out[i].exposure = position_exposure(s, gp);
    out[i].dose_score = s.doses;
    out[i].unit_weight.assign(q.begin() + off, q.begin() + off + s.size());
    out[i].unit_u.assign(u.values().begin() + off, u.values().begin() + off + s.size());
  }
  return out;
}

std::vector<StratumSupport> build_supports(const std::vector<StratumInput>& inputs, AssignmentMode mode) {
  std::vector<StratumSupport> out(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) { out[i] = StratumSupport::build(inputs[i], mode); });
  return out;
}

namespace {

Moments sum_moments(const std::vector<StratumSupport>& supports, double gamma) {
  Moments total;
  for (const auto& s : supports) {
    const auto m = s.moments(gamma);
    total.mean += m.mean;
    total.variance += m.variance;
  }
  return total;
}

}  // namespace

Moments moments_at_u(const MatchedDesign& design, const StatisticSpec& spec, const SensitivityParameter& gp,
                     const ConfounderAllocation& u) {
  return sum_moments(build_supports(stratum_inputs(design, spec, gp, u)), gp.gamma);
}

Moments moments_at_u(const MatchedDesign& design, const std::vector<double>& q, const SensitivityParameter& gp,
                     const ConfounderAllocation& u) {
  return sum_moments(build_supports(stratum_inputs(design, q, gp, u)), gp.gamma);
}

Distribution stratum_distribution(const StratumSupport& support, double gamma) {
  const auto p = support.probabilities(gamma);
  const auto v = support.values();
  Distribution d;
  d.reserve(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) d.emplace_back(v[k], p[k]);
  return merge_sorted(std::move(d));
}

Distribution exact_distribution(const std::vector<StratumSupport>& supports, double gamma, std::size_t cap) {
  std::vector<Distribution> parts;
  parts.reserve(supports.size());
  for (const auto& s : supports) parts.push_back(stratum_distribution(s, gamma));
  return convolve(parts, cap);
}

double tail_probability(const Distribution& dist, double t) {
  const double cut = tail_cut(t);
  double p = 0.0;
  for (auto it = dist.rbegin(); it != dist.rend() && it->first >= cut; ++it) p += it->second;
  return std::min(1.0, p);
}

double exact_tail(const std::vector<StratumSupport>& supports, double gamma, double t) {
  return tail_probability(exact_distribution(supports, gamma), t);
}

SharpNullResult worst_case_p_exact_mc(const MatchedDesign& design, const StatisticSpec& spec,
                                      const SensitivityParameter& gp, const McOptions& mc) {
  if (mc.reps == 0) throw DomainError("reps must be positive");
  SharpNullResult r;
  r.gamma = gp.gamma;
  r.method = PMethod::exact_mc;
  r.reps = mc.reps;
  r.seed = mc.seed;
  r.t_obs = evaluate(spec, design);
  r.small_sample = discordant_sets(design) < kSmallSampleSets;

  const auto supports =
      build_supports(stratum_inputs(design, spec, gp, ConfounderAllocation::adversarial(design)));
  r.moments = sum_moments(supports, gp.gamma);
  double base = 0.0;
  std::vector<StratumSampler> samplers;
  for (const auto& s : supports) {
    StratumSampler sampler(s, gp.gamma);
    if (sampler.constant()) {
      base += sampler.value(0);
    } else {
      samplers.push_back(std::move(sampler));
    }
  }

  const double cut = tail_cut(r.t_obs);
  constexpr std::size_t kBlock = 512;
  const std::size_t blocks = (mc.reps + kBlock - 1) / kBlock;
  std::vector<std::size_t> counts(blocks, 0);
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t end = std::min(mc.reps, (b + 1) * kBlock);
    std::size_t c = 0;
    for (std::size_t rep = b * kBlock; rep < end; ++rep) {
      auto engine = substream(mc.seed, rep, stream_tag::kMonteCarlo);
      double t = base;
      for (const auto& s : samplers) t += s.draw(engine);
      if (t >= cut) ++c;
    }
    counts[b] = c;
  });
  const auto exceed = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const double reps = static_cast<double>(mc.reps);
  r.p_worst = (1.0 + static_cast<double>(exceed)) / (reps + 1.0);
  r.mc_se = std::sqrt(r.p_worst * (1.0 - r.p_worst) / reps);
  r.degenerate = samplers.empty();
  return r;
}

SharpNullResult worst_case_p_normal(const MatchedDesign& design, const StatisticSpec& spec,
                                    const SensitivityParameter& gp) {
  SharpNullResult r;
  r.gamma = gp.gamma;
  r.method = PMethod::normal;
  r.t_obs = evaluate(spec, design);
  r.small_sample = discordant_sets(design) < kSmallSampleSets;

  const auto supports =
      build_supports(stratum_inputs(design, spec, gp, ConfounderAllocation::adversarial(design)));
  const auto m = sum_moments(supports, gp.gamma);
  r.moments = m;

  double max_w2 = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < supports.size(); ++i) {
    const auto& set = design.set(i);
    const auto ev = set.events();
    if (ev == 0 || ev == set.size()) continue;
    const auto v = supports[i].values();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double w2 = (*hi - *lo) * (*hi - *lo);
    const double l = regularity_l(set, gp);
    max_w2 = std::max(max_w2, w2);
    denom += l * l * l * w2;
  }
  if (denom > 0.0) r.regularity_ratio = max_w2 / denom;

  if (m.variance <= 1e-18 * std::max(1.0, m.mean * m.mean)) {
    r.degenerate = true;
    r.p_worst = r.t_obs <= m.mean + kTailTolerance * std::max(1.0, std::abs(m.mean)) ? 1.0 : 0.0;
    return r;
  }
  const boost::math::normal_distribution<double> norm;
  r.p_worst = boost::math::cdf(boost::math::complement(norm, (r.t_obs - m.mean) / std::sqrt(m.variance)));
  return r;
}

double worst_case_p_exact(const MatchedDesign& design, const StatisticSpec& spec, const SensitivityParameter& gp) {
  const auto supports =
      build_supports(stratum_inputs(design, spec, gp, ConfounderAllocation::adversarial(design)));
  return exact_tail(supports, gp.gamma, evaluate(spec, design));
}

std::vector<SharpNullResult> p_value_curve(const MatchedDesign& design, const StatisticSpec& spec,
                                           const std::vector<double>& gammas, PMethod method, const McOptions& mc) {
  if (gammas.empty()) throw DomainError("gamma grid is empty");
  if (!std::is_sorted(gammas.begin(), gammas.end())) throw DomainError("gamma grid must be sorted ascending");
  std::vector<SharpNullResult> out;
  for (double g : gammas) {
    const SensitivityParameter gp(g);
    out.push_back(method == PMethod::normal ? worst_case_p_normal(design, spec, gp)
                                            : worst_case_p_exact_mc(design, spec, gp, mc));
  }
  return out;
}

std::optional<double> changepoint(const std::vector<SharpNullResult>& curve, double alpha) {
  for (const auto& r : curve) {
    if (r.p_worst > alpha) return r.Gamma();
  }
  return std::nullopt;
}

double tail_probability_at(const MatchedDesign& design, const std::vector<double>& q,
                           const SensitivityParameter& gp, const ConfounderAllocation& u, double t) {
  return exact_tail(build_supports(stratum_inputs(design, q, gp, u), AssignmentMode::full), gp.gamma, t);
}

namespace {

// pr_u(T >= t) for T = sum Z q with the permutation tables built once; only
// the weights change with u.
class CubeEvaluator {
 public:
  CubeEvaluator(const MatchedDesign& design, const std::vector<double>& q, const SensitivityParameter& gp,
                double t)
      : gamma_(gp.gamma), t_(t) {
    const auto zero = ConfounderAllocation::constant(design.num_units(), 0.0);
    const auto inputs = stratum_inputs(design, q, gp, zero);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Stratum s;
      s.offset = design.unit_offset(i);
      s.exposure = inputs[i].exposure;
      const auto support = StratumSupport::build(inputs[i], AssignmentMode::full);
      s.labels = support.labels();
      // Distinct statistic values; each permutation maps to one of them.
      const auto v = support.values();
      for (double x : v) {
        auto it = std::find_if(s.values.begin(), s.values.end(), [&](double y) { return close(x, y); });
        if (it == s.values.end()) {
          s.value_of.push_back(s.values.size());
          s.values.push_back(x);
        } else {
          s.value_of.push_back(static_cast<std::size_t>(it - s.values.begin()));
        }
      }
      strata_.push_back(std::move(s));
    }
  }

  double operator()(const std::vector<double>& u) const {
    std::vector<Distribution> parts;
    parts.reserve(strata_.size());
    for (const auto& s : strata_) {
      std::vector<double> a(s.labels.size());
      for (std::size_t k = 0; k < a.size(); ++k) {
        double e = 0.0;
        for (std::size_t p = 0; p < s.exposure.size(); ++p) e += s.exposure[p] * u[s.offset + s.labels[k][p]];
        a[k] = e;
      }
      const double amax = *std::max_element(a.begin(), a.end());
      std::vector<double> mass(s.values.size(), 0.0);
      double total = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double w = std::exp(gamma_ * (a[k] - amax));
        mass[s.value_of[k]] += w;
        total += w;
      }
      Distribution d;
      for (std::size_t v = 0; v < mass.size(); ++v) d.emplace_back(s.values[v], mass[v] / total);
      parts.push_back(merge_sorted(std::move(d)));
    }
    return tail_probability(convolve(parts, kDistributionCap), t_);
  }

 private:
  struct Stratum {
    std::size_t offset = 0;
    std::vector<double> exposure;
    std::vector<std::vector<int>> labels;
    std::vector<double> values;
    std::vector<std::size_t> value_of;
  };
  double gamma_;
  double t_;
  std::vector<Stratum> strata_;
};

// Maximizes f along one coordinate: grid scan, then golden-section refinement
// around the best grid point.
double line_max(const CubeEvaluator& f, std::vector<double>& u, std::size_t j, double grid, double& best) {
  const double start = u[j];
  double best_x = start;
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / grid));
  for (std::size_t k = 0; k <= steps; ++k) {
    u[j] = std::min(1.0, static_cast<double>(k) * grid);
    const double v = f(u);
    if (v > best) {
      best = v;
      best_x = u[j];
    }
  }
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = std::max(0.0, best_x - grid), hi = std::min(1.0, best_x + grid);
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  u[j] = x1;
  double f1 = f(u);
  u[j] = x2;
  double f2 = f(u);
  while (hi - lo > 1e-10) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      u[j] = x2;
      f2 = f(u);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      u[j] = x1;
      f1 = f(u);
    }
  }
  const double xg = 0.5 * (lo + hi);
  u[j] = xg;
  const double fg = f(u);
  if (fg > best) {
    best = fg;
    best_x = xg;
  }
  u[j] = best_x;
  return best_x;
}

}  // namespace

CubeMaximizerResult brute_force_worst_p(const MatchedDesign& design, const std::vector<double>& q,
                                        const SensitivityParameter& gp, double t_obs,
                                        const CubeSearchOptions& options) {
  const std::size_t n_units = design.num_units();
  if (n_units > 20) throw CapExceeded("cube search supports at most 20 units");
  if (!(options.grid > 0.0 && options.grid <= 1.0)) throw DomainError("grid step must lie in (0,1]");
  const CubeEvaluator f(design, q, gp, t_obs);

  CubeMaximizerResult r;
  // Corner scan, keeping the three best corners as restart points.
  std::vector<std::pair<double, std::uint64_t>> top;
  std::vector<double> u(n_units);
  const std::uint64_t corners = std::uint64_t{1} << n_units;
  for (std::uint64_t mask = 0; mask < corners; ++mask) {
    for (std::size_t j = 0; j < n_units; ++j) u[j] = (mask >> j) & 1U ? 1.0 : 0.0;
    const double p = f(u);
    top.emplace_back(p, mask);
    std::sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (top.size() > 3) top.pop_back();
  }
  r.corners_evaluated = static_cast<std::size_t>(corners);
  auto corner = [&](std::uint64_t mask) {
    std::vector<double> c(n_units);
    for (std::size_t j = 0; j < n_units; ++j) c[j] = (mask >> j) & 1U ? 1.0 : 0.0;
    return c;
  };
  r.p_best_corner = top.front().first;
  r.best_corner = ConfounderAllocation(corner(top.front().second));

  std::vector<std::vector<double>> starts;
  starts.push_back(std::vector<double>(n_units, 0.0));
  starts.push_back(std::vector<double>(n_units, 1.0));
  for (const auto& [p, mask] : top) starts.push_back(corner(mask));
  const std::size_t total = std::max<std::size_t>(options.restarts, 2);
  if (starts.size() > total) starts.resize(total);
  const std::size_t latin = total - starts.size();
  if (latin > 0) {
    auto engine = substream(options.seed, 0, stream_tag::kSearch);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::vector<double>> pts(latin, std::vector<double>(n_units));
    for (std::size_t j = 0; j < n_units; ++j) {
      std::vector<std::size_t> perm(latin);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), engine);
      for (std::size_t k = 0; k < latin; ++k) {
        pts[k][j] = (static_cast<double>(perm[k]) + unif(engine)) / static_cast<double>(latin);
      }
    }
    for (auto& p : pts) starts.push_back(std::move(p));
  }

  r.p_at_u_star = -1.0;
  std::vector<double> best_u;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    auto x = starts[s];
    double fx = f(x);
    CubeTraceEntry e;
    e.restart = s;
    e.p_start = fx;
    for (std::size_t sweep = 0; sweep < options.max_sweeps; ++sweep) {
      ++e.sweeps;
      const double before = fx;
      for (std::size_t j = 0; j < n_units; ++j) {
        const double old = x[j];
        double cand = fx;
        line_max(f, x, j, options.grid, cand);
        if (cand > fx + options.improvement_tol) {
          fx = cand;
        } else {
          x[j] = old;
        }
      }
      if (!(fx > before + options.improvement_tol)) break;
    }
    e.p_final = fx;
    r.trace.push_back(e);
    if (fx > r.p_at_u_star) {
      r.p_at_u_star = fx;
      best_u = x;
    }
  }
  r.u_star = ConfounderAllocation(best_u);
  return r;
}

}  // namespace dosesens
