#include <algorithm>
#include <random>

#include "doctest.h"
#include "dosesens/error.hpp"
#include "dosesens/statistics.hpp"

using namespace dosesens;

namespace {

const MatchedSet kExample{"1", {0.1, 0.44, 0.54, 0.73, 0.8}, {0, 0, 0, 1, 1}};

std::vector<StatisticSpec> builtins() {
  return {StatisticSpec::perm_t(),      StatisticSpec::threshold(0.5), StatisticSpec::parse("rank-within"),
          StatisticSpec::power(0.5),    StatisticSpec::power(3.0),
          StatisticSpec::parse("custom:0/0;0.3/1;0.6/1.5;1/4")};
}

}  // namespace

TEST_CASE("per-stratum values on the five-unit example") {
  CHECK(per_stratum(StatisticSpec::perm_t(), kExample) == doctest::Approx(1.53).epsilon(1e-14));
  CHECK(per_stratum(StatisticSpec::threshold(0.5), kExample) == 2.0);
  CHECK(per_stratum(StatisticSpec::threshold(0.75), kExample) == 1.0);
  const MatchedSet ones{"a", {0.2, 0.6, 0.9}, {1, 1, 1}};
  CHECK(per_stratum(StatisticSpec::threshold(0.5), ones) == 2.0);
  const MatchedSet zeros{"a", {0.2, 0.6, 0.9}, {0, 0, 0}};
  for (const auto& s : builtins()) CHECK(per_stratum(s, zeros) == 0.0);
  CHECK(per_stratum(StatisticSpec::parse("rank-within"), MatchedSet{"a", {0.2, 0.7}, {0, 1}}) == 2.0);
}

TEST_CASE("ranks average ties") {
  const MatchedSet s{"a", {0.3, 0.3, 0.9}, {1, 0, 0}};
  const auto r = dose_scores(StatisticSpec::parse("rank-within"), s);
  CHECK(r == std::vector<double>{1.5, 1.5, 3.0});
  const MatchedDesign d({MatchedSet{"a", {0.1, 0.5}, {0, 1}}, MatchedSet{"b", {0.5, 0.9}, {1, 0}}});
  const auto ra = dose_scores(StatisticSpec::parse("rank-across"), d);
  CHECK(ra[0] == std::vector<double>{1.0, 2.5});
  CHECK(ra[1] == std::vector<double>{2.5, 4.0});
  CHECK(evaluate(StatisticSpec::parse("rank-across"), d) == 5.0);
}

TEST_CASE("evaluate is the sum of per-stratum values") {
  std::mt19937_64 eng(21);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<MatchedSet> sets;
  for (int i = 0; i < 25; ++i) {
    MatchedSet s{"s" + std::to_string(i), {}, {}};
    const int n = 2 + i % 3;
    for (int j = 0; j < n; ++j) {
      s.doses.push_back(U(eng));
      s.outcomes.push_back(U(eng) < 0.4);
    }
    sets.push_back(s);
  }
  const MatchedDesign d(sets);
  for (const auto& spec : builtins()) {
    double total = 0.0;
    for (std::size_t i = 0; i < d.num_sets(); ++i) total += per_stratum(spec, d, i);
    CHECK(evaluate(spec, d) == total);
  }
  // threshold equals perm_t on the indicator doses
  std::vector<MatchedSet> ind;
  for (auto s : sets) {
    for (auto& z : s.doses) z = z > 0.5 ? 1.0 : 0.0;
    ind.push_back(s);
  }
  CHECK(evaluate(StatisticSpec::threshold(0.5), d) == evaluate(StatisticSpec::perm_t(), MatchedDesign(ind)));
}

TEST_CASE("conditional isotonicity by enumeration") {
  std::mt19937_64 eng(22);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 2 + rep % 4;
    std::vector<double> z(n);
    for (auto& x : z) x = U(eng);
    std::vector<int> r(n, 0);
    const std::size_t m = 1 + rep % (n - 1);
    std::fill(r.end() - static_cast<long>(m), r.end(), 1);
    // every arrangement of the outcome vector over the same doses
    std::vector<MatchedSet> arr;
    std::vector<int> rr = r;
    std::sort(rr.begin(), rr.end());
    do arr.push_back(MatchedSet{"a", z, rr});
    while (std::next_permutation(rr.begin(), rr.end()));
    for (const auto& spec : builtins()) {
      for (const auto& a : arr)
        for (const auto& b : arr) {
          if (!leq(stratum_table(a), stratum_table(b))) continue;
          CHECK(per_stratum(spec, a) <= per_stratum(spec, b) + 1e-12);
        }
    }
  }
}

TEST_CASE("spec parsing") {
  CHECK(StatisticSpec::parse("t").kind == StatisticSpec::Kind::perm_t);
  const auto th = StatisticSpec::parse("threshold:0.1");
  CHECK(th.kind == StatisticSpec::Kind::threshold);
  CHECK(th.param == 0.1);
  CHECK(StatisticSpec::parse("neg:t").negate);
  CHECK(dose_score(StatisticSpec::parse("neg:t"), 0.4) == -0.4);
  CHECK(dose_score(StatisticSpec::power(2.0), 0.5) == 0.25);
  for (const auto& s : builtins()) CHECK(StatisticSpec::parse(s.to_string()).to_string() == s.to_string());
  CHECK_THROWS_AS(StatisticSpec::parse("bogus"), ParseError);
  CHECK_THROWS_AS(StatisticSpec::parse("threshold:x"), ParseError);
  CHECK_THROWS(StatisticSpec::parse("custom:0/1;1/0"));
  CHECK(is_adaptive("adaptive:t,threshold:0.1"));
  const auto a = AdaptiveSpec::parse("adaptive:t,threshold:0.1");
  REQUIRE(a.components.size() == 2);
  CHECK(a.components[1].param == 0.1);
  CHECK_THROWS(AdaptiveSpec::parse("adaptive:t"));
}

TEST_CASE("adaptive p") {
  const auto a = AdaptiveSpec::parse("adaptive:t,threshold:0.1");
  CHECK(adaptive_p(a, {0.02, 0.5}) == doctest::Approx(0.04));
  CHECK(adaptive_p(a, {0.8, 0.9}) == 1.0);
  CHECK(adaptive_p(a, {0.03, 0.03}) == doctest::Approx(0.06));
}

TEST_CASE("degenerate thresholds") {
  const MatchedDesign d({kExample});
  CHECK(degenerate(StatisticSpec::threshold(0.8), d));
  CHECK(degenerate(StatisticSpec::threshold(0.05), d));
  CHECK_FALSE(degenerate(StatisticSpec::threshold(0.5), d));
  CHECK_FALSE(degenerate(StatisticSpec::perm_t(), d));
}
