#include "dosesens/hardness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "dosesens/attributable.hpp"
#include "dosesens/error.hpp"

namespace dosesens {

namespace {

// Largest set the program is emitted for; n! p-variables per set.
constexpr std::size_t kMaxSignomialSet = 8;

std::string fmt(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& tok) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw ParseError("bad number in program text: '" + tok + "'");
  }
  if (used != tok.size()) throw ParseError("bad number in program text: '" + tok + "'");
  return v;
}

std::string name(const char* prefix, std::initializer_list<std::size_t> idx) {
  std::string s = prefix;
  for (auto k : idx) s += "_" + std::to_string(k + 1);
  return s;
}

struct SortedSet {
  std::vector<double> z;        // exposures, ascending
  std::vector<double> dose;     // doses in the same order
};

SortedSet sorted_exposures(const MatchedSet& set, const SensitivityParameter& gp) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return set.doses[a] < set.doses[b]; });
  SortedSet out;
  for (auto k : order) {
    out.dose.push_back(set.doses[k]);
    out.z.push_back(gp.exposure(set.doses[k]));
  }
  return out;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

int SignomialProgram::index_of(const std::string& n) const {
  for (std::size_t k = 0; k < variables.size(); ++k)
    if (variables[k].name == n) return static_cast<int>(k);
  return -1;
}

SignomialCounts counts(const SignomialProgram& program) {
  SignomialCounts c;
  for (const auto& v : program.variables) {
    if (v.name.starts_with("p_")) ++c.p_vars;
    else if (v.name.starts_with("s_")) ++c.s_vars;
    else if (v.name.starts_with("w_")) ++c.w_vars;
  }
  c.products = program.products.size();
  c.sums = program.sums.size();
  c.powers = program.powers.size();
  c.boxes = program.boxes.size();
  return c;
}

SignomialProgram formulate_signomial(const MatchedDesign& design, const std::vector<double>& q,
                                     const SensitivityParameter& gp, double alpha, double t_obs) {
  if (q.size() != design.num_units()) throw DomainError("score vector length does not match the design");
  SignomialProgram prog;
  prog.objective.t = t_obs;
  prog.objective.chi2 = chi2_one_sided(alpha);
  const double g = gp.gamma;
  const double inf = std::numeric_limits<double>::infinity();

  for (std::size_t i = 0; i < design.num_sets(); ++i) {
    const auto& set = design.set(i);
    const std::size_t n = set.size();
    if (n > kMaxSignomialSet)
      throw CapExceeded("set " + set.id + " has " + std::to_string(n) + " units; the program is emitted for at most " +
                        std::to_string(kMaxSignomialSet));
    const auto ss = sorted_exposures(set, gp);
    if (ss.z.front() == 0.0)
      throw DomainError("set " + set.id + " has minimum exposure zero; the power links are undefined");
    const auto off = design.unit_offset(i);

    // w_i_j_k: j sorted dose, k unit
    std::vector<std::vector<int>> w(n, std::vector<int>(n));
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(g * ss.z[j]);
      for (std::size_t k = 0; k < n; ++k) {
        w[j][k] = static_cast<int>(prog.variables.size());
        prog.variables.push_back({name("w", {i, j, k}), std::min(1.0, e), std::max(1.0, e)});
      }
    }
    const int s = static_cast<int>(prog.variables.size());
    prog.variables.push_back({name("s", {i}), 0.0, inf});

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    SignomialProgram::Sum sum{s, {}};
    std::vector<std::pair<int, double>> stratum;
    std::size_t k = 0;
    do {
      const int p = static_cast<int>(prog.variables.size());
      prog.variables.push_back({name("p", {i, k}), 0.0, 1.0});
      std::vector<int> term(n);
      double qv = 0.0;
      for (std::size_t u = 0; u < n; ++u) {
        term[u] = w[perm[u]][u];
        qv += ss.dose[perm[u]] * q[off + u];
      }
      prog.products.push_back({p, s, term});
      sum.terms.push_back(std::move(term));
      stratum.emplace_back(p, qv);
      ++k;
    } while (std::next_permutation(perm.begin(), perm.end()));
    prog.sums.push_back(std::move(sum));
    prog.objective.strata.push_back(std::move(stratum));

    for (std::size_t j = 1; j < n; ++j)
      for (std::size_t u = 0; u < n; ++u) prog.powers.push_back({w[j][u], w[0][u], ss.z[j] / ss.z[0]});
    const double e1 = std::exp(g * ss.z[0]);
    for (std::size_t u = 0; u < n; ++u) prog.boxes.push_back({w[0][u], std::min(1.0, e1), std::max(1.0, e1)});
  }
  return prog;
}

void write_signomial(std::ostream& out, const SignomialProgram& prog) {
  const auto& v = prog.variables;
  out << "signomial 1\n";
  for (const auto& x : v) out << "var " << x.name << " in [" << fmt(x.lo) << ',' << fmt(x.hi) << "]\n";
  for (const auto& c : prog.products) {
    out << "con product " << v[c.p].name << ' ' << v[c.s].name << " :";
    for (int k : c.w) out << ' ' << v[k].name;
    out << '\n';
  }
  for (const auto& c : prog.sums) {
    out << "con sum " << v[c.s].name << " :";
    for (std::size_t t = 0; t < c.terms.size(); ++t) {
      if (t) out << " |";
      for (int k : c.terms[t]) out << ' ' << v[k].name;
    }
    out << '\n';
  }
  for (const auto& c : prog.powers)
    out << "con power " << v[c.target].name << ' ' << v[c.base].name << ' ' << fmt(c.exponent) << '\n';
  for (const auto& c : prog.boxes) out << "con box " << v[c.var].name << " in [" << fmt(c.lo) << ',' << fmt(c.hi) << "]\n";
  out << "obj quad t=" << fmt(prog.objective.t) << " chi2=" << fmt(prog.objective.chi2) << '\n';
  for (const auto& st : prog.objective.strata) {
    out << "obj stratum";
    for (const auto& [p, qv] : st) out << ' ' << v[p].name << ':' << fmt(qv);
    out << '\n';
  }
  out << "end\n";
}

SignomialProgram parse_signomial(std::istream& in) {
  SignomialProgram prog;
  std::unordered_map<std::string, int> index;
  auto lookup = [&](const std::string& n) {
    auto it = index.find(n);
    if (it == index.end()) throw ParseError("unknown variable '" + n + "'");
    return it->second;
  };
  std::string line;
  bool header = false, ended = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (ended) throw ParseError("text after 'end' on line " + std::to_string(lineno));
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if ((kind == "con" || kind == "obj") && !tok.empty()) {
      kind += " " + tok.front();
      tok.erase(tok.begin());
    }
    auto need = [&](bool ok) {
      if (!ok) throw ParseError("malformed '" + kind + "' on line " + std::to_string(lineno));
    };
    // "in [lo,hi]" at tok[at]
    auto bounds = [&](std::size_t at) {
      need(tok.size() == at + 2 && tok[at] == "in");
      const auto& b = tok[at + 1];
      const auto comma = b.find(',');
      need(b.size() > 4 && b.front() == '[' && b.back() == ']' && comma != std::string::npos);
      return std::pair{parse_double(b.substr(1, comma - 1)), parse_double(b.substr(comma + 1, b.size() - comma - 2))};
    };
    auto keyed = [&](const std::string& t, const std::string& key) {
      need(t.starts_with(key + "="));
      return parse_double(t.substr(key.size() + 1));
    };
    if (!header) {
      need(kind == "signomial" && tok.size() == 1 && tok[0] == "1");
      header = true;
    } else if (kind == "var") {
      need(!tok.empty() && !index.contains(tok[0]));
      const auto [lo, hi] = bounds(1);
      index[tok[0]] = static_cast<int>(prog.variables.size());
      prog.variables.push_back({tok[0], lo, hi});
    } else if (kind == "con product") {
      need(tok.size() >= 4 && tok[2] == ":");
      SignomialProgram::Product c{lookup(tok[0]), lookup(tok[1]), {}};
      for (std::size_t k = 3; k < tok.size(); ++k) c.w.push_back(lookup(tok[k]));
      prog.products.push_back(std::move(c));
    } else if (kind == "con sum") {
      need(tok.size() >= 3 && tok[1] == ":");
      SignomialProgram::Sum c{lookup(tok[0]), {{}}};
      for (std::size_t k = 2; k < tok.size(); ++k) {
        if (tok[k] == "|") {
          need(!c.terms.back().empty());
          c.terms.emplace_back();
        } else {
          c.terms.back().push_back(lookup(tok[k]));
        }
      }
      need(!c.terms.back().empty());
      prog.sums.push_back(std::move(c));
    } else if (kind == "con power") {
      need(tok.size() == 3);
      prog.powers.push_back({lookup(tok[0]), lookup(tok[1]), parse_double(tok[2])});
    } else if (kind == "con box") {
      need(!tok.empty());
      const auto [lo, hi] = bounds(1);
      prog.boxes.push_back({lookup(tok[0]), lo, hi});
    } else if (kind == "obj quad") {
      need(tok.size() == 2);
      prog.objective.t = keyed(tok[0], "t");
      prog.objective.chi2 = keyed(tok[1], "chi2");
    } else if (kind == "obj stratum") {
      std::vector<std::pair<int, double>> st;
      for (const auto& t : tok) {
        const auto colon = t.rfind(':');
        need(colon != std::string::npos && colon > 0);
        st.emplace_back(lookup(t.substr(0, colon)), parse_double(t.substr(colon + 1)));
      }
      prog.objective.strata.push_back(std::move(st));
    } else if (kind == "end") {
      need(tok.empty());
      ended = true;
    } else {
      throw ParseError("unknown record '" + kind + "' on line " + std::to_string(lineno));
    }
  }
  if (!header || !ended) throw ParseError("program text is truncated");
  return prog;
}

ReparametrizationCheck check_reparametrization(const SignomialProgram& prog, const MatchedDesign& design,
                                               const std::vector<double>& q, const SensitivityParameter& gp,
                                               const ConfounderAllocation& u) {
  if (u.size() != design.num_units()) throw DomainError("allocation length does not match the design");
  std::vector<double> x(prog.variables.size(), std::numeric_limits<double>::quiet_NaN());
  auto set_var = [&](const std::string& n, double value) {
    const int k = prog.index_of(n);
    if (k < 0) throw DomainError("program has no variable " + n);
    x[k] = value;
  };
  for (std::size_t i = 0; i < design.num_sets(); ++i) {
    const auto& set = design.set(i);
    const auto ss = sorted_exposures(set, gp);
    const auto off = design.unit_offset(i);
    for (std::size_t j = 0; j < set.size(); ++j)
      for (std::size_t k = 0; k < set.size(); ++k) set_var(name("w", {i, j, k}), std::exp(gp.gamma * ss.z[j] * u[off + k]));
  }
  // s from the sum, then p from the product
  for (const auto& c : prog.sums) {
    double s = 0.0;
    for (const auto& term : c.terms) {
      double m = 1.0;
      for (int k : term) m *= x[k];
      s += m;
    }
    x[c.s] = s;
  }
  for (const auto& c : prog.products) {
    double m = 1.0;
    for (int k : c.w) m *= x[k];
    x[c.p] = m / x[c.s];
  }

  ReparametrizationCheck out;
  auto note = [&](double r) { out.max_residual = std::max(out.max_residual, r); };
  for (const auto& c : prog.products) {
    double m = 1.0;
    for (int k : c.w) m *= x[k];
    note(rel(x[c.p] * x[c.s], m));
  }
  for (const auto& c : prog.sums) {
    double s = 0.0;
    for (const auto& term : c.terms) {
      double m = 1.0;
      for (int k : term) m *= x[k];
      s += m;
    }
    note(rel(x[c.s], s));
  }
  for (const auto& c : prog.powers) note(rel(x[c.target], std::pow(x[c.base], c.exponent)));
  for (const auto& c : prog.boxes) {
    const double v = x[c.var];
    note(std::max({0.0, c.lo - v, v - c.hi}) / std::max(1.0, std::abs(v)));
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto& var = prog.variables[k];
    if (std::isnan(x[k])) throw DomainError("variable " + var.name + " was not set");
    note(std::max({0.0, var.lo - x[k], x[k] - var.hi}) / std::max(1.0, std::abs(x[k])));
  }

  double mu = 0.0, var = 0.0;
  for (const auto& st : prog.objective.strata) {
    double m1 = 0.0, m2 = 0.0;
    for (const auto& [p, qv] : st) {
      m1 += x[p] * qv;
      m2 += x[p] * qv * qv;
    }
    mu += m1;
    var += m2 - m1 * m1;
  }
  const double t = prog.objective.t, chi2 = prog.objective.chi2;
  out.zeta_p = (t - mu) * (t - mu) - chi2 * var;
  const auto mom = moments_at_u(design, q, gp, u);
  out.zeta_u = (t - mom.mean) * (t - mom.mean) - chi2 * mom.variance;
  return out;
}

MatchedDesign counterexample_design() {
  MatchedSet s;
  s.id = "1";
  s.doses = {0.1, 0.44, 0.54, 0.73, 0.8};
  s.outcomes = {0, 0, 0, 1, 1};
  return MatchedDesign({s});
}

std::vector<double> counterexample_scores() { return {1.5, 1.5, 3.0, 4.5, 4.5}; }

CounterexampleReport verify_counterexample(const CounterexampleOptions& options) {
  const SensitivityParameter gp(options.gamma);
  const auto design = counterexample_design();
  const auto& set = design.set(0);
  CounterexampleReport rep;
  rep.gamma = options.gamma;
  rep.doses = set.doses;
  if (options.binary_scores) {
    rep.scores.assign(set.outcomes.begin(), set.outcomes.end());
    rep.t_obs = 0.0;
    for (std::size_t k = 0; k < set.size(); ++k) rep.t_obs += set.doses[k] * rep.scores[k];
  } else {
    rep.scores = counterexample_scores();
    rep.t_obs = kCounterexampleT;
  }

  std::vector<std::size_t> perm(set.size());
  std::iota(perm.begin(), perm.end(), 0);
  do {
    double tv = 0.0;
    for (std::size_t k = 0; k < set.size(); ++k) tv += set.doses[perm[k]] * rep.scores[k];
    if (tv >= rep.t_obs - 1e-10 * std::max(1.0, std::abs(rep.t_obs))) ++rep.statistic_support_hits;
  } while (std::next_permutation(perm.begin(), perm.end()));

  if (options.gamma == 0.0) {
    rep.skipped = true;
    rep.notice = "gamma = 0: every allocation gives the uniform assignment, nothing to search";
    rep.pass = true;
    return rep;
  }

  const auto res = brute_force_worst_p(design, rep.scores, gp, rep.t_obs, options.search);
  rep.u_star.assign(res.u_star.values().begin(), res.u_star.values().end());
  rep.best_corner.assign(res.best_corner.values().begin(), res.best_corner.values().end());
  rep.p_star = res.p_at_u_star;
  rep.p_best_corner = res.p_best_corner;
  rep.corner_gap = rep.p_star - rep.p_best_corner;

  auto fail = [&](std::string msg) { rep.failures.push_back(std::move(msg)); };
  if (options.binary_scores) {
    const double p_r =
        tail_probability_at(design, rep.scores, gp, ConfounderAllocation::adversarial(design), rep.t_obs);
    rep.gap_to_outcome_allocation = std::abs(rep.p_star - p_r);
    if (*rep.gap_to_outcome_allocation > 1e-9) fail("binary scores: the maximum is not attained at u = R");
  } else if (options.gamma == 2.0) {
    const auto& u = rep.u_star;
    if (u[0] > 1e-6 || u[1] > 1e-6) fail("u1, u2 are not at 0");
    if (u[3] < 1.0 - 1e-6 || u[4] < 1.0 - 1e-6) fail("u4, u5 are not at 1");
    if (std::abs(u[2] - kCounterexampleU3) > 1e-3) fail("u3 is not near the interior maximizer");
    if (!(rep.corner_gap > 0.0)) fail("no corner gap");
  } else {
    rep.notice = "checks on the maximizer are defined for gamma = 2 only";
  }
  rep.pass = rep.failures.empty();
  return rep;
}

}  // namespace dosesens
