#include <cmath>
#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <random>

#include "doctest.h"
#include "dosesens/assignment.hpp"
#include "dosesens/error.hpp"
#include "oracle.hpp"

using namespace dosesens;

namespace {

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// Key for grouping permutations by stratum table and u pattern.
std::vector<double> table_key(const StratumTable& t) {
  std::vector<double> k = t.s1;
  k.push_back(-1.0);
  k.insert(k.end(), t.s0.begin(), t.s0.end());
  return k;
}

}  // namespace

TEST_CASE("uniform weights at gamma 0") {
  const MatchedSet s{"a", {0.1, 0.3, 0.8}, {0, 1, 0}};
  const auto d = assignment_probabilities(s, ConfounderAllocation({0.2, 0.9, 0.4}), SensitivityParameter(0.0),
                                          AssignmentMode::full);
  REQUIRE(d.size() == 6);
  for (double w : d.weights) CHECK(w == doctest::Approx(1.0 / 6).epsilon(1e-14));
  // every unit receives every dose exactly twice
  for (int j = 0; j < 3; ++j)
    for (int p = 0; p < 3; ++p) {
      int c = 0;
      for (const auto& a : d.assignments) c += a[j] == p;
      CHECK(c == 2);
    }
}

TEST_CASE("pair with gamma ln 2") {
  const MatchedSet s{"a", {0.0, 1.0}, {0, 1}};
  const auto d = assignment_probabilities(s, ConfounderAllocation({0.0, 1.0}), SensitivityParameter(std::log(2.0)),
                                          AssignmentMode::full);
  double unit2_high = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k)
    if (d.assignments[k][1] == 1) unit2_high += d.weights[k];
  CHECK(unit2_high == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(tv_from_uniform(s, SensitivityParameter(std::log(2.0)), ConfounderAllocation({0.0, 1.0})) ==
        doctest::Approx(1.0 / 6).epsilon(1e-14));
}

TEST_CASE("weights match the brute-force oracle") {
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 2 + rep % 4;
    MatchedSet s{"a", {}, {}};
    std::vector<double> u(n);
    for (std::size_t j = 0; j < n; ++j) {
      s.doses.push_back(U(eng) * 3);
      s.outcomes.push_back(U(eng) < 0.5);
      u[j] = U(eng);
    }
    const double gamma = 3 * U(eng);
    const auto d = assignment_probabilities(s, ConfounderAllocation(u), SensitivityParameter(gamma),
                                            AssignmentMode::full);
    CHECK(std::abs(sum(d.weights) - 1.0) <= 1e-12);
    // oracle weights indexed by "unit j gets dose pi(j)" in lexicographic order
    const auto ref = oracle::set_distribution(s.doses, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), u,
                                              gamma);
    std::map<std::vector<int>, double> got;
    for (std::size_t k = 0; k < d.size(); ++k) got[d.assignments[k]] = d.weights[k];
    std::vector<int> pi(n);
    std::iota(pi.begin(), pi.end(), 0);
    std::size_t k = 0;
    do {
      CHECK(std::abs(got.at(pi) - ref[k].prob) <= 1e-12);
      ++k;
    } while (std::next_permutation(pi.begin(), pi.end()));
  }
}

TEST_CASE("aggregated mode equals full mode grouped by table") {
  std::mt19937_64 eng(12);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t n = 2 + rep % 5;
    MatchedSet s{"a", {}, {}};
    for (std::size_t j = 0; j < n; ++j) {
      s.doses.push_back(U(eng));
      s.outcomes.push_back(U(eng) < 0.5);
    }
    std::vector<double> u(s.outcomes.begin(), s.outcomes.end());
    if (rep % 2) {
      for (auto& x : u) x = U(eng) < 0.5;
    }
    const SensitivityParameter gp(2 * U(eng));
    const ConfounderAllocation ua(u);
    const auto full = assignment_probabilities(s, ua, gp, AssignmentMode::full);
    const auto agg = assignment_probabilities(s, ua, gp, AssignmentMode::aggregated);
    CHECK(std::abs(sum(agg.weights) - 1.0) <= 1e-12);
    // u binary and equal to R: tables identify the classes. Otherwise key on
    // the dose set received by each (R, u) class.
    auto key = [&](const AssignmentDistribution& d, std::size_t k) {
      std::map<std::pair<int, double>, std::vector<double>> cls;
      if (d.representation == AssignmentMode::full) {
        for (std::size_t j = 0; j < n; ++j) cls[{s.outcomes[j], u[j]}].push_back(s.doses[d.assignments[k][j]]);
      } else {
        for (std::size_t p = 0; p < n; ++p) {
          const int unit = d.groups[d.assignments[k][p]].front();
          cls[{s.outcomes[unit], u[unit]}].push_back(s.doses[p]);
        }
      }
      for (auto& [c, v] : cls) std::sort(v.begin(), v.end());
      return cls;
    };
    std::map<std::map<std::pair<int, double>, std::vector<double>>, double> a, b;
    for (std::size_t k = 0; k < full.size(); ++k) a[key(full, k)] += full.weights[k];
    for (std::size_t k = 0; k < agg.size(); ++k) b[key(agg, k)] += agg.weights[k];
    REQUIRE(a.size() == b.size());
    for (const auto& [k, w] : a) CHECK(std::abs(w - b.at(k)) <= 1e-12);
    // table view agrees too
    std::map<std::vector<double>, double> ta, tb;
    for (std::size_t k = 0; k < full.size(); ++k) ta[table_key(full.table(k, s))] += full.weights[k];
    for (std::size_t k = 0; k < agg.size(); ++k) tb[table_key(agg.table(k, s))] += agg.weights[k];
    for (const auto& [k, w] : ta) CHECK(std::abs(w - tb.at(k)) <= 1e-12);
  }
}

TEST_CASE("support of three doses") {
  const MatchedSet s{"a", {0.1, 0.3, 0.8}, {1, 0, 0}};
  const auto d = assignment_probabilities(s, ConfounderAllocation::adversarial(s), SensitivityParameter(1.0),
                                          AssignmentMode::full);
  std::set<std::vector<int>> seen(d.assignments.begin(), d.assignments.end());
  CHECK(seen.size() == 6);
}

TEST_CASE("total variation") {
  const MatchedSet s{"a", {0.0, 0.4, 1.0}, {0, 1, 1}};
  CHECK(tv_from_uniform(s, SensitivityParameter(0.0), ConfounderAllocation::adversarial(s)) ==
        doctest::Approx(0.0));
  CHECK(tv_from_uniform(s, SensitivityParameter(0.7), ConfounderAllocation::adversarial(s)) > 0.0);
  // zero iff gamma = 0 or u constant, over binary u on n <= 4
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (std::size_t n = 2; n <= 4; ++n) {
    MatchedSet t{"b", {}, std::vector<int>(n, 0)};
    for (std::size_t j = 0; j < n; ++j) t.doses.push_back(U(eng));
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      std::vector<double> u(n);
      for (std::size_t j = 0; j < n; ++j) u[j] = (mask >> j) & 1u;
      const bool constant = mask == 0 || mask == (1u << n) - 1;
      const double tv = tv_from_uniform(t, SensitivityParameter(0.8), ConfounderAllocation(u));
      CHECK((tv <= 1e-14) == constant);
      CHECK(tv < 1.0);
    }
  }
}

TEST_CASE("regularity l") {
  const SensitivityParameter g0(0.0), g1(1.0), g2(2.0);
  CHECK(regularity_l(MatchedSet{"a", {0.0, 1.0}, {0, 1}}, g0) == doctest::Approx(0.5));
  CHECK(regularity_l(MatchedSet{"a", {0.0, 1.0}, {0, 1}}, g1) == doctest::Approx(1.0 / (1.0 + std::exp(1.0))));
  CHECK(regularity_l(MatchedSet{"a", {0.0, 0.5, 1.0}, {0, 1, 0}}, g2) ==
        doctest::Approx(1.0 / (1.0 + 2.0 * std::exp(2.0))));
  CHECK_THROWS_AS(regularity_l(MatchedSet{"a", {0.0, 1.0}, {1, 1}}, g1), DomainError);
}

TEST_CASE("logit bound") {
  const auto i0 = logit_bound_margin(0.0, 1.0, SensitivityParameter(0.0));
  CHECK(i0.lo == 0.0);
  CHECK(i0.hi == 0.0);
  CHECK(pair_assignment_logit(0.0, 1.0, 0.3, 0.9, SensitivityParameter(0.0)) == doctest::Approx(0.0));
  const SensitivityParameter g1(1.0);
  CHECK(pair_assignment_logit(0.0, 1.0, 1.0, 0.0, g1) == doctest::Approx(1.0));
  CHECK(pair_assignment_logit(0.0, 1.0, 0.5, 0.5, g1) == doctest::Approx(0.0).epsilon(1e-12));
  const SensitivityParameter g(1.3);
  const auto b = logit_bound_margin(0.2, 0.9, g);
  for (int a = 0; a <= 20; ++a)
    for (int c = 0; c <= 20; ++c) {
      const double l = pair_assignment_logit(0.2, 0.9, a / 20.0, c / 20.0, g);
      CHECK(b.contains(l, 1e-12));
    }
}

TEST_CASE("allocations and parameters") {
  CHECK_THROWS_AS(ConfounderAllocation({0.5, 1.2}), DomainError);
  CHECK_THROWS_AS(SensitivityParameter(-0.1), DomainError);
  CHECK(SensitivityParameter::from_Gamma(std::exp(1.5)).gamma == doctest::Approx(1.5));
  const MatchedSet s{"a", {0.1, 0.2}, {1, 0}};
  CHECK(ConfounderAllocation::adversarial(s)[0] == 1.0);
  CHECK(ConfounderAllocation::adversarial(s)[1] == 0.0);
  const SensitivityParameter t(1.0, MonotoneMap({{0.0, 0.0}, {1.0, 2.0}}));
  CHECK(t.exposure(0.5) == doctest::Approx(1.0));
}

TEST_CASE("full mode respects the cap") {
  MatchedSet s{"a", std::vector<double>(11), std::vector<int>(11, 0)};
  for (std::size_t j = 0; j < 11; ++j) s.doses[j] = static_cast<double>(j);
  CHECK_THROWS_AS(assignment_probabilities(s, ConfounderAllocation::constant(11, 0.0), SensitivityParameter(1.0),
                                           AssignmentMode::full),
                  CapExceeded);
  s.outcomes[3] = 1;
  const auto agg = assignment_probabilities(s, ConfounderAllocation::adversarial(s), SensitivityParameter(1.0),
                                            AssignmentMode::aggregated);
  CHECK(agg.size() == 11);
}
