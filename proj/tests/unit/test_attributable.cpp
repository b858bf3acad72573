#include <cmath>
#include <random>

#include "doctest.h"
#include "dosesens/attributable.hpp"
#include "dosesens/error.hpp"
#include "dosesens/sharp_null.hpp"
#include "oracle.hpp"

using namespace dosesens;

namespace {

struct Instance {
  MatchedDesign design;
  TaeInstance inst;
};

Instance random_instance(std::mt19937_64& eng, std::size_t max_sets) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const std::size_t I = 2 + eng() % (max_sets - 1);
  std::vector<MatchedSet> sets;
  for (std::size_t i = 0; i < I; ++i) {
    MatchedSet s{"s" + std::to_string(i), {}, {}};
    const std::size_t n = 2 + eng() % 3;
    for (std::size_t j = 0; j < n; ++j) {
      s.doses.push_back(U(eng) < 0.25 ? 0.0 : std::round(U(eng) * 100) / 100);
      s.outcomes.push_back(U(eng) < 0.55);
    }
    sets.push_back(s);
  }
  MatchedDesign d(sets);
  const double gamma = 1.5 * U(eng);
  auto inst = TaeInstance::make(d, 0.4, 0.0, 0.05 + 0.1 * U(eng), SensitivityParameter(gamma));
  return {std::move(d), inst};
}

}  // namespace

TEST_CASE("compatible patterns") {
  const MatchedSet pair{"a", {0.0, 5.0}, {0, 1}};
  const MatchedDesign d({pair});
  const auto inst = TaeInstance::make(d, 3.0, 0.0, 0.05, SensitivityParameter(0.5));
  CHECK(inst.observed_count == 1);
  const auto c = enumerate_compatible(pair, inst);
  REQUIRE(c.size() == 2);
  CHECK(c[0].r0 == std::vector<int>{0, 0});
  CHECK(c[0].t == 0);
  CHECK(c[1].r0 == std::vector<int>{0, 1});
  CHECK(c[1].t == 1);

  const MatchedSet unexposed{"b", {0.0, 0.0, 0.0}, {1, 0, 1}};
  const auto u = enumerate_compatible(unexposed, inst);
  REQUIRE(u.size() == 1);
  CHECK(u[0].r0 == unexposed.outcomes);

  const MatchedSet zero_event{"c", {0.0, 4.0, 5.0}, {1, 0, 1}};
  for (const auto& k : enumerate_compatible(zero_event, inst)) {
    CHECK(k.r0[1] == 0);
    CHECK(k.r0[0] == 1);
    CHECK(k.t <= 1);
  }
}

TEST_CASE("instance validation") {
  const MatchedDesign d({MatchedSet{"a", {0.0, 1.0}, {0, 1}}});
  CHECK_THROWS_AS(TaeInstance::make(d, 0.5, 0.5, 0.05, SensitivityParameter()), DomainError);
  CHECK_THROWS_AS(TaeInstance::make(d, 0.5, 0.0, 0.5, SensitivityParameter()), DomainError);
  CHECK(chi2_one_sided(0.05) == doctest::Approx(2.705543454).epsilon(1e-8));
  CHECK(parse_tae_mode("bnb") == TaeMode::branch_and_bound);
  CHECK(to_string(TaeMode::separability) == "separability");
}

TEST_CASE("trivial decisions") {
  std::mt19937_64 eng(41);
  const auto [d, inst] = random_instance(eng, 4);
  const auto prob = build_tae_problem(d, inst);
  CHECK(test_tae_enumeration(prob, inst.observed_count + 1).decision == TaeDecision::reject);
  CHECK(test_tae_bnb(prob, inst.observed_count + 1, false).decision == TaeDecision::reject);
  CHECK(separability_test(d, inst, inst.observed_count + 1).decision == TaeDecision::reject);
}

TEST_CASE("huge Gamma accepts the full attribution") {
  std::vector<MatchedSet> sets;
  for (int i = 0; i < 6; ++i) sets.push_back(MatchedSet{"s" + std::to_string(i), {0.1, 0.9}, {0, 1}});
  const MatchedDesign d(sets);
  const auto inst = TaeInstance::make(d, 0.5, 0.0, 0.05, SensitivityParameter(20.0));
  const auto prob = build_tae_problem(d, inst);
  CHECK(test_tae_enumeration(prob, inst.observed_count).accepted());
  CHECK(test_tae_bnb(prob, inst.observed_count, false).accepted());
}

TEST_CASE("Gamma 1 reduces to a plain normal randomization test") {
  std::mt19937_64 eng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_instance(eng, 4).design;
    // every exposed event sits above c, so delta = 0 leaves only r0 = R
    const auto inst = TaeInstance::make(d, 1e-6, 0.0, 0.1, SensitivityParameter(0.0));
    const auto prob = build_tae_problem(d, inst);
    std::vector<std::vector<oracle::Point>> sets;
    for (const auto& s : d.sets()) {
      std::vector<double> score, w;
      for (std::size_t j = 0; j < s.size(); ++j) {
        score.push_back(s.doses[j] > inst.c ? 1.0 : 0.0);
        w.push_back(s.outcomes[j]);
      }
      sets.push_back(oracle::set_distribution(s.doses, score, w, std::vector<double>(s.size(), 0.0), 0.0));
    }
    const auto [E, V] = oracle::moments(sets);
    const double dev = static_cast<double>(inst.observed_count) - E;
    const bool reject = std::abs(dev) > kTaeSignTol && dev * dev - prob.chi2 * V >= -kTaeFeasibilityTol;
    CHECK(test_tae_enumeration(prob, 0).accepted() == !reject);
  }
}

TEST_CASE("branch and bound matches enumeration") {
  std::mt19937_64 eng(43);
  std::size_t checked = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const auto [d, inst] = random_instance(eng, 6);
    for (auto sides : {TaeSides::both, TaeSides::upper}) {
      const auto prob = build_tae_problem(d, inst, sides);
      if (prob.combinations() > 1e4) continue;
      for (long delta = 0; delta <= inst.observed_count; ++delta) {
        for (auto form : {TaeForm::equal, TaeForm::at_most, TaeForm::at_least}) {
          const auto e = test_tae_enumeration(prob, delta, form);
          const auto b = test_tae_bnb(prob, delta, false, form);
          const auto r = test_tae_bnb(prob, delta, true, form);
          CHECK(e.accepted() == b.accepted());
          if (e.accepted()) CHECK(r.accepted());
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("confidence sets are intervals containing the accepted points") {
  std::mt19937_64 eng(44);
  for (int rep = 0; rep < 25; ++rep) {
    const auto [d, inst] = random_instance(eng, 5);
    const auto prob = build_tae_problem(d, inst);
    if (prob.combinations() > 1e4) continue;
    const auto ci = tae_confidence_set(prob, TaeMode::enumeration);
    const auto cb = tae_confidence_set(prob, TaeMode::branch_and_bound);
    CHECK(ci.lo == cb.lo);
    CHECK(ci.hi == cb.hi);
    for (long delta = 0; delta <= inst.observed_count; ++delta) {
      if (test_tae_enumeration(prob, delta).accepted()) {
        REQUIRE_FALSE(ci.empty());
        CHECK(*ci.lo <= delta);
        CHECK(delta <= *ci.hi);
      }
    }
    if (!ci.empty()) {
      CHECK(*ci.hi <= inst.observed_count);
      CHECK(*ci.lo >= 0);
    }
  }
}

TEST_CASE("vanishing alpha widens the interval to everything") {
  std::vector<MatchedSet> sets;
  for (int i = 0; i < 5; ++i) sets.push_back(MatchedSet{"s" + std::to_string(i), {0.0, 0.3, 0.9}, {0, 1, 1}});
  const MatchedDesign d(sets);
  const auto inst = TaeInstance::make(d, 0.5, 0.0, 1e-9, SensitivityParameter(0.2));
  const auto ci = tae_confidence_set(build_tae_problem(d, inst), TaeMode::branch_and_bound);
  REQUIRE_FALSE(ci.empty());
  CHECK(*ci.lo == 0);
  CHECK(*ci.hi == inst.observed_count);
}

TEST_CASE("candidate moments bracket every grid allocation") {
  std::mt19937_64 eng(45);
  for (int rep = 0; rep < 15; ++rep) {
    const auto [d, inst] = random_instance(eng, 3);
    for (const auto& s : d.sets()) {
      if (s.size() > 3) continue;
      for (const auto& c : enumerate_compatible(s, inst)) {
        CHECK(c.V_low >= 0.0);
        CHECK(c.V_upp >= 0.0);
        CHECK(c.t >= 0);
        const long tae = [&] {
          long k = 0;
          for (std::size_t j = 0; j < s.size(); ++j) k += s.doses[j] > inst.c ? s.outcomes[j] - c.r0[j] : 0;
          return k;
        }();
        CHECK(tae >= 0);
        const double pb = pi_bar(s, inst, c.r0);
        CHECK(pb == doctest::Approx(c.E_upp).epsilon(1e-12));
        const MatchedDesign one({MatchedSet{s.id, s.doses, c.r0}});
        const std::size_t n = s.size();
        std::size_t combos = 1;
        for (std::size_t k = 0; k < n; ++k) combos *= 5;
        for (std::size_t code = 0; code < combos; ++code) {
          std::vector<double> u(n);
          std::size_t x = code;
          for (std::size_t k = 0; k < n; ++k, x /= 5) u[k] = static_cast<double>(x % 5) / 4.0;
          const double E = moments_at_u(one, StatisticSpec::threshold(inst.c), inst.gp, ConfounderAllocation(u)).mean;
          CHECK(E >= c.E_low - 1e-12);
          CHECK(E <= c.E_upp + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("pi bar values") {
  const MatchedSet s{"a", {0.1, 0.6, 0.8}, {1, 1, 0}};
  const MatchedDesign d({s});
  const auto g0 = TaeInstance::make(d, 0.5, 0.0, 0.05, SensitivityParameter(0.0));
  CHECK(pi_bar(s, g0, {0, 0, 0}) == 0.0);
  CHECK(pi_bar(s, g0, {1, 0, 0}) == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(pi_bar(s, g0, {2, 0, 0}), DomainError);
}

TEST_CASE("separability on binary-contribution designs") {
  std::vector<MatchedSet> sets;
  std::mt19937_64 eng(46);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 8; ++i) sets.push_back(MatchedSet{"s" + std::to_string(i), {0.0, 0.2 + 0.8 * U(eng)}, {0, 1}});
  const MatchedDesign d(sets);
  const auto inst = TaeInstance::make(d, 0.1, 0.0, 0.05, SensitivityParameter(0.3));
  REQUIRE(binary_contribution(d, inst));
  const auto full = separability_test(d, inst, inst.observed_count);
  CHECK(full.accepted());
  const auto none = separability_test(d, inst, 0);
  CHECK(none.expectation.has_value());
  const auto prob = build_tae_problem(d, inst);
  const auto sel = separability_selection(prob, d, 3);
  CHECK(sel.size() == d.num_sets());
  CHECK_FALSE(binary_contribution(MatchedDesign({MatchedSet{"a", {0.5, 0.9}, {1, 1}}}), inst));
}
