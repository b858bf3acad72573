#include "dosesens/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dosesens/error.hpp"

namespace dosesens {

SensitivityParameter::SensitivityParameter(double g, std::optional<MonotoneMap> transform)
    : gamma(g), dose_transform(std::move(transform)) {
  if (!std::isfinite(g) || g < 0.0) throw DomainError("gamma must be finite and >= 0");
}

SensitivityParameter SensitivityParameter::from_Gamma(double Gamma) {
  if (!std::isfinite(Gamma) || Gamma < 1.0) throw DomainError("Gamma must be finite and >= 1");
  return SensitivityParameter(std::log(Gamma));
}

double SensitivityParameter::Gamma() const { return std::exp(gamma); }

double SensitivityParameter::exposure(double dose) const {
  return dose_transform ? (*dose_transform)(dose) : dose;
}

ConfounderAllocation::ConfounderAllocation(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("confounder values must lie in [0,1]");
  }
}

ConfounderAllocation ConfounderAllocation::adversarial(const MatchedSet& set) {
  return ConfounderAllocation(std::vector<double>(set.outcomes.begin(), set.outcomes.end()));
}

ConfounderAllocation ConfounderAllocation::adversarial(const MatchedDesign& design) {
  auto r = design.all_outcomes();
  return ConfounderAllocation(std::vector<double>(r.begin(), r.end()));
}

ConfounderAllocation ConfounderAllocation::constant(std::size_t n, double value) {
  return ConfounderAllocation(std::vector<double>(n, value));
}

ConfounderAllocation ConfounderAllocation::for_set(const MatchedDesign& design, std::size_t i) const {
  if (values_.size() != design.num_units()) {
    throw DomainError("confounder allocation length does not match the design");
  }
  const auto off = design.unit_offset(i);
  const auto n = design.set(i).size();
  return ConfounderAllocation(std::vector<double>(values_.begin() + off, values_.begin() + off + n));
}

namespace {

double factorial(std::size_t n) {
  double f = 1.0;
  for (std::size_t k = 2; k <= n; ++k) f *= static_cast<double>(k);
  return f;
}

}  // namespace

StratumSupport StratumSupport::build(const StratumInput& in, AssignmentMode mode,
                                     std::size_t full_size_cap, std::size_t support_cap) {
  const std::size_t n = in.exposure.size();
  if (in.dose_score.size() != n || in.unit_weight.size() != n || in.unit_u.size() != n) {
    throw DomainError("stratum input vectors differ in length");
  }
  if (n == 0) throw DomainError("empty stratum");
  if (mode == AssignmentMode::full && n > full_size_cap) {
    throw CapExceeded("set of size " + std::to_string(n) + " exceeds enumeration cap " +
                      std::to_string(full_size_cap));
  }

  StratumSupport s;
  std::vector<double> gw, gu;
  std::vector<int> label_of(n);
  for (std::size_t j = 0; j < n; ++j) {
    int g = -1;
    if (mode == AssignmentMode::aggregated) {
      for (std::size_t k = 0; k < gw.size(); ++k) {
        if (gw[k] == in.unit_weight[j] && gu[k] == in.unit_u[j]) {
          g = static_cast<int>(k);
          break;
        }
      }
    }
    if (g < 0) {
      g = static_cast<int>(gw.size());
      gw.push_back(in.unit_weight[j]);
      gu.push_back(in.unit_u[j]);
      s.groups_.emplace_back();
    }
    s.groups_[g].push_back(static_cast<int>(j));
    label_of[j] = g;
  }

  double mult = 1.0;
  for (const auto& g : s.groups_) mult *= factorial(g.size());
  s.multiplicity_ = mult;
  const double count = std::round(factorial(n) / mult);
  if (count > static_cast<double>(support_cap)) {
    throw CapExceeded("stratum support of " + std::to_string(static_cast<long long>(count)) +
                      " points exceeds cap " + std::to_string(support_cap));
  }

  std::vector<int> labels(label_of);
  std::sort(labels.begin(), labels.end());
  const auto reserve = static_cast<std::size_t>(count);
  s.exponents_.reserve(reserve);
  s.values_.reserve(reserve);
  s.labels_.reserve(reserve);
  do {
    double a = 0.0, v = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      a += in.exposure[p] * gu[labels[p]];
      v += in.dose_score[p] * gw[labels[p]];
    }
    s.exponents_.push_back(a);
    s.values_.push_back(v);
    s.labels_.push_back(labels);
  } while (std::next_permutation(labels.begin(), labels.end()));
  return s;
}

std::vector<double> StratumSupport::probabilities(double gamma) const {
  std::vector<double> p(exponents_.size());
  const double amax = *std::max_element(exponents_.begin(), exponents_.end());
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(gamma * (exponents_[k] - amax));
    total += p[k];
  }
  for (double& x : p) x /= total;
  return p;
}

Moments StratumSupport::moments(double gamma) const {
  const auto p = probabilities(gamma);
  Moments m;
  for (std::size_t k = 0; k < p.size(); ++k) m.mean += p[k] * values_[k];
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = values_[k] - m.mean;
    m.variance += p[k] * d * d;
  }
  return m;
}

StratumSampler::StratumSampler(const StratumSupport& support, double gamma) {
  const auto p = support.probabilities(gamma);
  const auto v = support.values();
  // Support points sharing a value are merged so constant strata cost nothing.
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  double acc = 0.0;
  for (auto k : order) {
    if (!values_.empty() && values_.back() == v[k]) {
      acc += p[k];
      cdf_.back() = acc;
      continue;
    }
    acc += p[k];
    values_.push_back(v[k]);
    cdf_.push_back(acc);
  }
}

double StratumSampler::draw(Engine& engine) const {
  if (values_.size() == 1) return values_[0];
  std::uniform_real_distribution<double> unif(0.0, cdf_.back());
  const double x = unif(engine);
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), x);
  if (it == cdf_.end()) --it;
  return values_[static_cast<std::size_t>(it - cdf_.begin())];
}

StratumTable AssignmentDistribution::table(std::size_t k, const MatchedSet& set) const {
  StratumTable t;
  const auto& a = assignments.at(k);
  if (representation == AssignmentMode::full) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      (set.outcomes[j] ? t.s1 : t.s0).push_back(set.doses[a[j]]);
    }
  } else {
    for (std::size_t p = 0; p < a.size(); ++p) {
      const int unit = groups[a[p]].front();
      (set.outcomes[unit] ? t.s1 : t.s0).push_back(set.doses[p]);
    }
  }
  std::sort(t.s0.begin(), t.s0.end());
  std::sort(t.s1.begin(), t.s1.end());
  return t;
}

namespace {

StratumInput input_for(const MatchedSet& set, const ConfounderAllocation& u, const SensitivityParameter& gp) {
  if (u.size() != set.size()) throw DomainError("confounder allocation length does not match the set");
  StratumInput in;
  for (double z : set.doses) in.exposure.push_back(gp.exposure(z));
  in.dose_score.assign(set.size(), 0.0);
  in.unit_weight.assign(set.outcomes.begin(), set.outcomes.end());
  in.unit_u.assign(u.values().begin(), u.values().end());
  return in;
}

}  // namespace

AssignmentDistribution assignment_probabilities(const MatchedSet& set, const ConfounderAllocation& u,
                                                const SensitivityParameter& gp, AssignmentMode mode,
                                                std::size_t full_size_cap) {
  const auto support = StratumSupport::build(input_for(set, u, gp), mode, full_size_cap);
  AssignmentDistribution d;
  d.representation = mode;
  d.weights = support.probabilities(gp.gamma);
  d.groups = support.groups();
  if (mode == AssignmentMode::full) {
    // Groups are single units in unit order, so labels[p] is the unit at p.
    for (const auto& labels : support.labels()) {
      std::vector<int> pos(labels.size());
      for (std::size_t p = 0; p < labels.size(); ++p) pos[labels[p]] = static_cast<int>(p);
      d.assignments.push_back(std::move(pos));
    }
  } else {
    d.assignments = support.labels();
  }
  return d;
}

double tv_from_uniform(const MatchedSet& set, const SensitivityParameter& gp, const ConfounderAllocation& u) {
  if (set.size() > kDefaultEnumerationCap) {
    throw CapExceeded("set of size " + std::to_string(set.size()) + " exceeds enumeration cap");
  }
  auto in = input_for(set, u, gp);
  in.unit_weight.assign(set.size(), 0.0);
  const auto support = StratumSupport::build(in, AssignmentMode::aggregated);
  const auto p = support.probabilities(gp.gamma);
  // Every permutation inside one support point has the same weight.
  const double uniform = support.multiplicity() / factorial(set.size());
  double tv = 0.0;
  for (double x : p) tv += std::abs(x - uniform);
  return 0.5 * tv;
}

double regularity_l(const MatchedSet& set, const SensitivityParameter& gp) {
  const std::size_t n = set.size();
  const std::size_t m = set.events();
  if (m == 0 || m == n) throw DomainError("regularity l is undefined for concordant set '" + set.id + "'");
  std::vector<double> z;
  for (double d : set.doses) z.push_back(gp.exposure(d));
  std::sort(z.begin(), z.end());
  const std::size_t ceil_half = (n + 1) / 2;
  const std::size_t floor_half = n / 2;
  double top = 0.0, bottom = 0.0;
  for (std::size_t j = ceil_half; j < n; ++j) top += z[j];
  for (std::size_t j = 0; j < floor_half; ++j) bottom += z[j];
  double binom = 1.0;
  for (std::size_t k = 1; k <= m; ++k) binom = binom * static_cast<double>(n - m + k) / static_cast<double>(k);
  return 1.0 / (1.0 + (binom - 1.0) * std::exp(gp.gamma * (top - bottom)));
}

Interval logit_bound_margin(double z_low, double z_high, const SensitivityParameter& gp) {
  if (!(z_low < z_high)) throw DomainError("logit bound needs z_low < z_high");
  const double w = gp.gamma * (gp.exposure(z_high) - gp.exposure(z_low));
  return {-w, w};
}

double pair_assignment_logit(double z_low, double z_high, double u_first, double u_second,
                             const SensitivityParameter& gp) {
  MatchedSet pair{"pair", {z_low, z_high}, {0, 0}};
  const auto d = assignment_probabilities(pair, ConfounderAllocation({u_first, u_second}), gp,
                                          AssignmentMode::full);
  double p_first_high = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (d.assignments[k][0] == 1) p_first_high += d.weights[k];
  }
  return std::log(p_first_high) - std::log1p(-p_first_high);
}

}  // namespace dosesens
