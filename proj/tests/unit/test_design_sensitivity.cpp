#include <cmath>

#include "doctest.h"
#include "dosesens/design_sensitivity.hpp"
#include "dosesens/error.hpp"
#include "dosesens/sharp_null.hpp"

using namespace dosesens;

namespace {

DgpSpec quarter_root() {
  DgpSpec d;
  d.f = ResponseCurve::parse("power:0.25");
  d.beta = 1.5;
  return d;
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k] / n;
    my += y[k] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("law parsing") {
  CHECK(ResponseCurve::parse("z^4").a == 4.0);
  CHECK(ResponseCurve::parse("indicator")(0.0) == 0.0);
  CHECK(ResponseCurve::parse("indicator")(0.2) == 1.0);
  CHECK(ResponseCurve::parse("power:0.25").to_string() == "power:0.25");
  const auto b = DoseLaw::parse("mixture:0.2,beta:2,2");
  CHECK(b.zero_mass == 0.2);
  CHECK(b.beta);
  CHECK(DoseLaw::parse(b.to_string()).to_string() == b.to_string());
  CHECK_THROWS_AS(DoseLaw::parse("mixture:1.5,unif"), ParseError);
  CHECK_THROWS_AS(DoseLaw::parse("gauss"), ParseError);
  CHECK_THROWS_AS(ResponseCurve::parse("power:-1"), ParseError);
}

TEST_CASE("sampled designs follow the laws") {
  DgpSpec null_dgp;
  null_dgp.beta = 0.0;
  const auto d = sample_dgp(null_dgp, 5000, 3);
  CHECK(d.num_units() >= 10000);
  CHECK(std::abs(correlation(d.all_doses(), [&] {
          const auto r = d.all_outcomes();
          return std::vector<double>(r.begin(), r.end());
        }())) < 0.04);
  std::size_t pairs = 0;
  for (const auto& s : d.sets()) {
    CHECK(s.size() >= 2);
    pairs += s.size() == 2;
  }
  // n_i = 2 unless the 10% extra draw is positive
  const double expected = 0.9 + 0.1 * std::exp(-0.5);
  CHECK(std::abs(static_cast<double>(pairs) / 5000 - expected) < 0.015);

  DgpSpec mix;
  mix.dose_law = DoseLaw::parse("mixture:0.2,unif");
  const auto m = sample_dgp(mix, 5000, 4);
  std::size_t zeros = 0;
  for (double z : m.all_doses()) {
    zeros += z == 0.0;
    CHECK(z >= 0.0);
    CHECK(z <= 1.0);
  }
  CHECK(std::abs(static_cast<double>(zeros) / static_cast<double>(m.num_units()) - 0.2) < 0.015);
  // seeded and thread-independent
  CHECK(sample_dgp(mix, 50, 4).all_doses() == sample_dgp(mix, 50, 4).all_doses());
}

TEST_CASE("phi at the extremes of gamma") {
  const auto dgp = quarter_root();
  const PhiSampler s(dgp, StatisticSpec::perm_t(), 20000, 5);
  const auto lo = s.phi(1e-6);
  const auto hi = s.phi(12.0);
  CHECK(lo.estimate < s.mean_q() - 3 * lo.se);
  CHECK(hi.estimate > s.mean_q() + 3 * hi.se);
  CHECK(s.correlation() > 0.0);
  // monotone on common random numbers
  double prev = -1e300;
  for (double g = 0.0; g <= 3.0; g += 0.25) {
    const auto p = s.phi(g);
    CHECK(p.estimate >= prev - 1e-12);
    prev = p.estimate;
  }
  // the standalone estimator agrees with the sampler on the same seed
  const auto ph = phi_hat(dgp, StatisticSpec::perm_t(), 1.0, 20000, 5);
  CHECK(ph.estimate == doctest::Approx(s.phi(1.0).estimate).epsilon(1e-12));
}

TEST_CASE("without an effect phi dominates the mean") {
  DgpSpec dgp;
  dgp.beta = 0.0;
  const PhiSampler s(dgp, StatisticSpec::perm_t(), 20000, 6);
  for (double g : {0.2, 1.0, 3.0}) {
    const auto gap = s.gap(g);
    CHECK(gap.estimate > -3 * gap.se);
  }
}

TEST_CASE("conditional and drawn-pattern samplers agree in mean") {
  const auto dgp = quarter_root();
  const PhiSampler a(dgp, StatisticSpec::perm_t(), 20000, 7, true);
  const PhiSampler b(dgp, StatisticSpec::perm_t(), 20000, 7, false);
  const auto ga = a.gap(1.0), gb = b.gap(1.0);
  CHECK(std::abs(ga.estimate - gb.estimate) < 3 * std::hypot(ga.se, gb.se));
  CHECK(ga.se < gb.se);
}

TEST_CASE("bisection is deterministic and brackets the root") {
  DesignSensitivityOptions o;
  o.mc_draws = 5000;
  o.pilot_draws = 2000;
  o.seed = 8;
  const auto a = solve_design_sensitivity(quarter_root(), StatisticSpec::perm_t(), o);
  const auto b = solve_design_sensitivity(quarter_root(), StatisticSpec::perm_t(), o);
  CHECK(a.gamma_tilde == b.gamma_tilde);
  CHECK(a.Gamma_tilde > 1.0);
  CHECK(a.Gamma_tilde == doctest::Approx(std::exp(a.gamma_tilde)));
  CHECK(a.bracket_lo <= a.gamma_tilde);
  CHECK(a.gamma_tilde <= a.bracket_hi);
  CHECK(a.bracket_hi - a.bracket_lo <= o.tol + 1e-12);
  // the estimate is near 2.17 even at this reduced size
  CHECK(std::abs(a.Gamma_tilde - 2.17) < 0.4);
}

TEST_CASE("power at both ends") {
  DgpSpec strong;
  strong.f = ResponseCurve::parse("power:1");
  strong.beta = 4.0;
  PowerOptions o;
  o.I = 400;
  o.sim_reps = 20;
  o.seed = 9;
  const auto p0 = simulate_power(strong, StatisticSpec::perm_t(), 0.0, o);
  CHECK(p0.power >= 0.95);
  CHECK(p0.reps == 20);
  const auto far = simulate_power(quarter_root(), StatisticSpec::perm_t(), std::log(2.5), o);
  CHECK(far.power <= 0.2);
  const auto ad = simulate_power(strong, AdaptiveSpec::parse("adaptive:t,threshold:0.1"), 0.0, o);
  CHECK(ad.power >= 0.9);
  CHECK_THROWS_AS(sample_dgp(strong, 0, 1), DomainError);
}
