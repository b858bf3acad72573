#include "dosesens/statistics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dosesens/error.hpp"

namespace dosesens {

namespace {

double parse_real(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError("bad " + what + " in statistic spec: '" + s + "'");
  }
  return v;
}

std::string format_real(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

// Average ranks (1-based) of values.
std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t k = 0;
  while (k < idx.size()) {
    std::size_t e = k;
    while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[k]]) ++e;
    const double avg = 0.5 * static_cast<double>(k + e) + 1.0;
    for (std::size_t q = k; q <= e; ++q) r[idx[q]] = avg;
    k = e + 1;
  }
  return r;
}

}  // namespace

StatisticSpec StatisticSpec::perm_t() { return {}; }

StatisticSpec StatisticSpec::threshold(double c) {
  StatisticSpec s;
  s.kind = Kind::threshold;
  s.param = c;
  return s;
}

StatisticSpec StatisticSpec::power(double a) {
  if (!(a > 0.0)) throw DomainError("power statistic needs a > 0");
  StatisticSpec s;
  s.kind = Kind::power;
  s.param = a;
  return s;
}

StatisticSpec StatisticSpec::parse(const std::string& text) {
  std::string t = text;
  bool negate = false;
  if (t.rfind("neg:", 0) == 0) {
    negate = true;
    t = t.substr(4);
  }
  StatisticSpec s;
  const auto colon = t.find(':');
  const std::string head = t.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : t.substr(colon + 1);
  auto no_arg = [&] {
    if (colon != std::string::npos) throw ParseError("statistic '" + head + "' takes no argument");
  };
  if (head == "t" || head == "perm_t") {
    no_arg();
  } else if (head == "threshold") {
    s = threshold(parse_real(arg, "threshold"));
  } else if (head == "rank-within" || head == "rank_within") {
    no_arg();
    s.kind = Kind::rank_within;
  } else if (head == "rank-across" || head == "rank_across") {
    no_arg();
    s.kind = Kind::rank_across;
  } else if (head == "power") {
    const double a = parse_real(arg, "exponent");
    if (!(a > 0.0)) throw ParseError("power statistic needs a > 0");
    s = power(a);
  } else if (head == "custom") {
    s.kind = Kind::custom;
    try {
      s.table = MonotoneMap::parse(arg);
    } catch (const DomainError& e) {
      throw ParseError(std::string("custom statistic: ") + e.what());
    }
  } else {
    throw ParseError("unknown statistic '" + text + "'");
  }
  s.negate = negate;
  return s;
}

std::string StatisticSpec::to_string() const {
  std::string s;
  switch (kind) {
    case Kind::perm_t: s = "t"; break;
    case Kind::threshold: s = "threshold:" + format_real(param); break;
    case Kind::rank_within: s = "rank-within"; break;
    case Kind::rank_across: s = "rank-across"; break;
    case Kind::power: s = "power:" + format_real(param); break;
    case Kind::custom: s = "custom:" + table->to_string(); break;
  }
  return negate ? "neg:" + s : s;
}

bool is_adaptive(const std::string& text) { return text.rfind("adaptive:", 0) == 0; }

AdaptiveSpec AdaptiveSpec::parse(const std::string& text) {
  if (!is_adaptive(text)) throw ParseError("adaptive spec must start with 'adaptive:'");
  AdaptiveSpec a;
  std::stringstream ss(text.substr(9));
  std::string item;
  while (std::getline(ss, item, ',')) a.components.push_back(StatisticSpec::parse(item));
  if (a.components.size() < 2) throw ParseError("adaptive spec needs at least two components");
  return a;
}

std::string AdaptiveSpec::to_string() const {
  std::string s = "adaptive:";
  for (std::size_t k = 0; k < components.size(); ++k) {
    if (k) s += ',';
    s += components[k].to_string();
  }
  return s;
}

double dose_score(const StatisticSpec& spec, double z) {
  double m = 0.0;
  switch (spec.kind) {
    case StatisticSpec::Kind::perm_t: m = z; break;
    case StatisticSpec::Kind::threshold: m = z > spec.param ? 1.0 : 0.0; break;
    case StatisticSpec::Kind::power:
      if (z < 0.0) throw DomainError("power statistic needs nonnegative doses");
      m = std::pow(z, spec.param);
      break;
    case StatisticSpec::Kind::custom: m = (*spec.table)(z); break;
    default: throw DomainError("rank statistics have no per-dose score");
  }
  return spec.negate ? -m : m;
}

std::vector<double> dose_scores(const StatisticSpec& spec, const MatchedSet& set) {
  if (spec.kind == StatisticSpec::Kind::rank_across) {
    throw DomainError("rank-across scores need the whole design");
  }
  if (spec.kind == StatisticSpec::Kind::rank_within) {
    auto r = average_ranks(set.doses);
    if (spec.negate) for (double& x : r) x = -x;
    return r;
  }
  std::vector<double> m;
  m.reserve(set.size());
  for (double z : set.doses) m.push_back(dose_score(spec, z));
  return m;
}

std::vector<std::vector<double>> dose_scores(const StatisticSpec& spec, const MatchedDesign& design) {
  std::vector<std::vector<double>> out;
  out.reserve(design.num_sets());
  if (spec.kind == StatisticSpec::Kind::rank_across) {
    auto r = average_ranks(design.all_doses());
    for (std::size_t i = 0; i < design.num_sets(); ++i) {
      const auto off = design.unit_offset(i);
      std::vector<double> m(r.begin() + off, r.begin() + off + design.set(i).size());
      if (spec.negate) for (double& x : m) x = -x;
      out.push_back(std::move(m));
    }
    return out;
  }
  for (const auto& s : design.sets()) out.push_back(dose_scores(spec, s));
  return out;
}

namespace {

double dot_outcomes(const std::vector<double>& m, const MatchedSet& set) {
  double q = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) q += m[j] * set.outcomes[j];
  return q;
}

}  // namespace

double per_stratum(const StatisticSpec& spec, const MatchedSet& set) {
  return dot_outcomes(dose_scores(spec, set), set);
}

double per_stratum(const StatisticSpec& spec, const MatchedDesign& design, std::size_t i) {
  if (spec.kind != StatisticSpec::Kind::rank_across) return per_stratum(spec, design.set(i));
  return dot_outcomes(dose_scores(spec, design)[i], design.set(i));
}

double evaluate(const StatisticSpec& spec, const MatchedDesign& design) {
  const auto m = dose_scores(spec, design);
  double t = 0.0;
  for (std::size_t i = 0; i < design.num_sets(); ++i) t += dot_outcomes(m[i], design.set(i));
  return t;
}

bool degenerate(const StatisticSpec& spec, const MatchedDesign& design) {
  if (spec.kind != StatisticSpec::Kind::threshold) return false;
  const auto z = design.all_doses();
  const auto [lo, hi] = std::minmax_element(z.begin(), z.end());
  return !(spec.param >= *lo && spec.param < *hi);
}

double adaptive_p(const AdaptiveSpec& spec, const std::vector<double>& component_p) {
  if (component_p.empty()) throw DomainError("adaptive_p needs at least one p-value");
  if (!spec.components.empty() && component_p.size() != spec.components.size()) {
    throw DomainError("adaptive_p: one p-value per component expected");
  }
  const double k = static_cast<double>(component_p.size());
  return std::min(1.0, k * *std::min_element(component_p.begin(), component_p.end()));
}

}  // namespace dosesens
