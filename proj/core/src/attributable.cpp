#include "dosesens/attributable.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "dosesens/error.hpp"
#include "dosesens/parallel.hpp"

namespace dosesens {

std::string to_string(TaeMode m) {
  switch (m) {
    case TaeMode::enumeration: return "enumeration";
    case TaeMode::branch_and_bound: return "branch_and_bound";
    case TaeMode::relaxed: return "relaxed";
    case TaeMode::separability: return "separability";
  }
  return "";
}

TaeMode parse_tae_mode(const std::string& text) {
  if (text == "enum" || text == "enumeration") return TaeMode::enumeration;
  if (text == "bnb" || text == "branch_and_bound") return TaeMode::branch_and_bound;
  if (text == "relaxed") return TaeMode::relaxed;
  if (text == "separability") return TaeMode::separability;
  throw ParseError("unknown solver '" + text + "' (expected enum, bnb, relaxed or separability)");
}

std::string to_string(TaeDecision d) {
  switch (d) {
    case TaeDecision::reject: return "reject";
    case TaeDecision::accept: return "accept";
    case TaeDecision::undecided: return "undecided";
  }
  return "";
}

TaeInstance TaeInstance::make(const MatchedDesign& design, double c, double eps, double alpha,
                              const SensitivityParameter& gp) {
  if (!std::isfinite(c) || !std::isfinite(eps)) throw DomainError("threshold and eps must be finite");
  if (eps < 0.0) throw DomainError("eps must be >= 0");
  if (!(eps < c)) throw DomainError("eps must be below the threshold c");
  if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("alpha must lie in (0, 0.5)");
  TaeInstance inst;
  inst.c = c;
  inst.eps = eps;
  inst.alpha = alpha;
  inst.gp = gp;
  for (const auto& s : design.sets()) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s.doses[j] > c && s.outcomes[j] == 1) ++inst.observed_count;
    }
  }
  return inst;
}

namespace {

StratumInput pivot_input(const MatchedSet& set, const TaeInstance& inst, const std::vector<int>& r0) {
  StratumInput in;
  for (double z : set.doses) {
    in.exposure.push_back(inst.gp.exposure(z));
    in.dose_score.push_back(z > inst.c ? 1.0 : 0.0);
  }
  in.unit_weight.assign(r0.begin(), r0.end());
  in.unit_u.assign(r0.begin(), r0.end());
  return in;
}

}  // namespace

std::vector<StratumCandidate> enumerate_compatible(const MatchedSet& set, const TaeInstance& inst,
                                                   std::size_t cap) {
  const std::size_t n = set.size();
  std::vector<int> base(n, 0);
  std::vector<std::size_t> free_units;
  for (std::size_t j = 0; j < n; ++j) {
    if (set.doses[j] <= inst.eps) {
      base[j] = set.outcomes[j];
    } else if (set.outcomes[j] == 1) {
      free_units.push_back(j);
    }
  }
  if (free_units.size() >= 63 || (std::size_t{1} << free_units.size()) > cap) {
    throw CapExceeded("set '" + set.id + "' has more than " + std::to_string(cap) + " compatible patterns");
  }
  std::vector<StratumCandidate> out;
  const std::size_t count = std::size_t{1} << free_units.size();
  for (std::size_t mask = 0; mask < count; ++mask) {
    StratumCandidate cand;
    cand.r0 = base;
    for (std::size_t f = 0; f < free_units.size(); ++f) cand.r0[free_units[f]] = (mask >> f) & 1U ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j) cand.t += set.doses[j] > inst.c ? cand.r0[j] : 0;
    auto in = pivot_input(set, inst, cand.r0);
    const auto upp = StratumSupport::build(in, AssignmentMode::aggregated).moments(inst.gp.gamma);
    for (auto& u : in.unit_u) u = 1.0 - u;
    const auto low = StratumSupport::build(in, AssignmentMode::aggregated).moments(inst.gp.gamma);
    cand.E_upp = upp.mean;
    cand.V_upp = upp.variance;
    cand.E_low = low.mean;
    cand.V_low = low.variance;
    out.push_back(std::move(cand));
  }
  return out;
}

double chi2_one_sided(double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("alpha must lie in (0, 0.5)");
  const boost::math::chi_squared_distribution<double> chi(1.0);
  return boost::math::quantile(chi, 1.0 - 2.0 * alpha);
}

double TaeProblem::combinations() const {
  double c = 1.0;
  for (const auto& v : candidates) c *= static_cast<double>(v.size());
  return c;
}

TaeProblem build_tae_problem(const MatchedDesign& design, const TaeInstance& inst, TaeSides sides,
                             std::size_t cap) {
  TaeProblem p;
  p.inst = inst;
  p.sides = sides;
  p.chi2 = chi2_one_sided(inst.alpha);
  p.candidates.resize(design.num_sets());
  parallel_for(design.num_sets(), [&](std::size_t i) {
    p.candidates[i] = enumerate_compatible(design.set(i), inst, cap);
  });
  double bt = 0.0, be = 0.0, bv = 0.0;
  for (const auto& cands : p.candidates) {
    double mt = 0.0, me = 0.0, mv = 0.0;
    for (const auto& c : cands) {
      mt = std::max(mt, std::abs(static_cast<double>(c.t)));
      me = std::max(me, std::max(c.E_low, c.E_upp));
      mv = std::max(mv, std::max(c.V_low, c.V_upp));
    }
    bt += mt;
    be += me;
    bv += mv;
  }
  // Large enough that a released constraint can never bind: |T - E| <= B and
  // every quadratic term lies in [-chi2 * sum V, B^2].
  const double b = bt + be;
  p.big_m = b * b + b + p.chi2 * bv + 1.0;
  return p;
}

double selection_y(const Selection& s, double chi2, TaeSides sides) {
  double y = -std::numeric_limits<double>::infinity();
  const double xu = s.t - s.E_upp;
  if (xu > kTaeSignTol) y = std::max(y, xu * xu - chi2 * s.V_upp);
  if (sides == TaeSides::both) {
    const double xl = s.t - s.E_low;
    if (xl < -kTaeSignTol) y = std::max(y, xl * xl - chi2 * s.V_low);
  }
  return y;
}

bool selection_accepted(const Selection& s, double chi2, TaeSides sides) {
  return selection_y(s, chi2, sides) < -kTaeFeasibilityTol;
}

bool form_holds(long observed_count, long pivot_total, long delta, TaeForm form) {
  const long tae = observed_count - pivot_total;
  switch (form) {
    case TaeForm::equal: return tae == delta;
    case TaeForm::at_most: return tae <= delta;
    case TaeForm::at_least: return tae >= delta;
  }
  return false;
}

TaeTestResult test_tae_enumeration(const TaeProblem& problem, long delta, TaeForm form, double limit) {
  TaeTestResult r;
  r.delta = delta;
  r.form = form;
  r.mode = TaeMode::enumeration;
  const long obs = problem.inst.observed_count;
  if (form == TaeForm::equal && (delta > obs || delta < 0)) return r;
  if (problem.combinations() > limit) throw CapExceeded("candidate combinations exceed the enumeration limit");

  const std::size_t I = problem.candidates.size();
  std::vector<std::size_t> idx(I, 0);
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  while (true) {
    ++r.nodes_explored;
    Selection s;
    long pivot = 0;
    for (std::size_t i = 0; i < I; ++i) {
      const auto& c = problem.candidates[i][idx[i]];
      pivot += c.t;
      s.t += c.t;
      s.E_low += c.E_low;
      s.E_upp += c.E_upp;
      s.V_low += c.V_low;
      s.V_upp += c.V_upp;
    }
    if (form_holds(obs, pivot, delta, form)) {
      const double y = selection_y(s, problem.chi2, problem.sides);
      if (!any || y < best) {
        best = y;
        r.witness = idx;
        any = true;
      }
    }
    std::size_t i = 0;
    while (i < I && ++idx[i] == problem.candidates[i].size()) idx[i++] = 0;
    if (i == I) break;
  }
  if (any && std::isfinite(best)) r.optimal_y = best;
  if (any && best < -kTaeFeasibilityTol) r.decision = TaeDecision::accept;
  if (r.decision == TaeDecision::reject) r.witness.reset();
  return r;
}

TaeInterval tae_confidence_set(const TaeProblem& problem, TaeMode mode) {
  if (mode == TaeMode::separability) throw DomainError("confidence set needs enumeration, bnb or relaxed mode");
  auto accepts = [&](long delta, TaeForm form) {
    if (mode == TaeMode::enumeration) return test_tae_enumeration(problem, delta, form).accepted();
    return test_tae_bnb(problem, delta, mode == TaeMode::relaxed, form).accepted();
  };
  const long obs = problem.inst.observed_count;
  TaeInterval out;
  if (!accepts(obs, TaeForm::at_most)) return out;
  long lo = 0, hi = obs;
  while (lo < hi) {
    const long mid = lo + (hi - lo) / 2;
    if (accepts(mid, TaeForm::at_most)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  out.lo = lo;
  long a = lo, b = obs;
  while (a < b) {
    const long mid = a + (b - a + 1) / 2;
    if (accepts(mid, TaeForm::at_least)) {
      a = mid;
    } else {
      b = mid - 1;
    }
  }
  out.hi = a;
  return out;
}

double pi_bar(const MatchedSet& set, const TaeInstance& inst, const std::vector<int>& r0) {
  if (r0.size() != set.size()) throw DomainError("pattern length does not match the set");
  for (int v : r0) {
    if (v != 0 && v != 1) throw DomainError("pattern must be binary");
  }
  if (set.size() > kDefaultEnumerationCap) throw CapExceeded("set '" + set.id + "' exceeds the enumeration cap");
  return StratumSupport::build(pivot_input(set, inst, r0), AssignmentMode::aggregated).moments(inst.gp.gamma).mean;
}

namespace {

long set_contribution(const MatchedSet& s, const TaeInstance& inst) {
  long k = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s.doses[j] > inst.c && s.outcomes[j] == 1) ++k;
  }
  return k;
}

struct GreedyPlan {
  std::vector<int> attributed;
  std::vector<double> pi;
};

GreedyPlan greedy_plan(const MatchedDesign& design, const TaeInstance& inst, long a) {
  const std::size_t I = design.num_sets();
  GreedyPlan plan;
  plan.attributed.assign(I, 0);
  plan.pi.assign(I, 0.0);
  std::vector<double> lam_hi(I, 0.0), lam_lo(I, 0.0);
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < I; ++i) {
    const auto& s = design.set(i);
    std::vector<int> r0(s.outcomes.begin(), s.outcomes.end());
    lam_hi[i] = pi_bar(s, inst, r0);
    plan.pi[i] = lam_hi[i];
    if (set_contribution(s, inst) == 1) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (s.doses[j] > inst.c && s.outcomes[j] == 1) r0[j] = 0;
      }
      lam_lo[i] = pi_bar(s, inst, r0);
      eligible.push_back(i);
    }
  }
  auto omega = [](double l) { return l * (1.0 - l); };
  std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t x, std::size_t y) {
    const double dx = lam_hi[x] - lam_lo[x], dy = lam_hi[y] - lam_lo[y];
    if (dx != dy) return dx < dy;
    return omega(lam_hi[x]) - omega(lam_lo[x]) < omega(lam_hi[y]) - omega(lam_lo[y]);
  });
  for (long k = 0; k < a && k < static_cast<long>(eligible.size()); ++k) {
    const auto i = eligible[static_cast<std::size_t>(k)];
    plan.attributed[i] = 1;
    plan.pi[i] = lam_lo[i];
  }
  return plan;
}

}  // namespace

bool binary_contribution(const MatchedDesign& design, const TaeInstance& inst) {
  for (const auto& s : design.sets()) {
    if (set_contribution(s, inst) > 1) return false;
  }
  return true;
}

TaeTestResult separability_test(const MatchedDesign& design, const TaeInstance& inst, long a) {
  if (!binary_contribution(design, inst)) {
    throw DomainError("separability test needs every set to contribute 0 or 1 exposed events");
  }
  TaeTestResult r;
  r.delta = a;
  r.mode = TaeMode::separability;
  const long obs = inst.observed_count;
  if (a > obs || a < 0) return r;

  const auto plan = greedy_plan(design, inst, a);
  r.witness = std::vector<std::size_t>(plan.attributed.begin(), plan.attributed.end());
  double mean = 0.0, var = 0.0;
  for (double p : plan.pi) {
    mean += p;
    var += p * (1.0 - p);
  }
  r.expectation = mean;
  const double k = static_cast<double>(obs - a);
  if (mean >= k) {
    r.decision = TaeDecision::accept;
    return r;
  }
  double p = 0.0;
  if (var > 0.0) {
    const boost::math::normal_distribution<double> norm;
    p = boost::math::cdf(boost::math::complement(norm, (k - mean) / std::sqrt(var)));
  }
  r.p_value = p;
  r.decision = p < inst.alpha ? TaeDecision::reject : TaeDecision::accept;
  return r;
}

std::vector<std::size_t> separability_selection(const TaeProblem& problem, const MatchedDesign& design, long a) {
  const auto plan = greedy_plan(design, problem.inst, a);
  std::vector<std::size_t> sel(design.num_sets(), 0);
  for (std::size_t i = 0; i < design.num_sets(); ++i) {
    const auto& s = design.set(i);
    std::vector<int> r0(s.outcomes.begin(), s.outcomes.end());
    if (plan.attributed[i]) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (s.doses[j] > problem.inst.c && s.outcomes[j] == 1) r0[j] = 0;
      }
    }
    const auto& cands = problem.candidates[i];
    auto it = std::find_if(cands.begin(), cands.end(), [&](const auto& c) { return c.r0 == r0; });
    if (it == cands.end()) throw DomainError("greedy pattern is not a compatible candidate");
    sel[i] = static_cast<std::size_t>(it - cands.begin());
  }
  return sel;
}

}  // namespace dosesens
