#include "dosesens/balance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "dosesens/error.hpp"
#include "dosesens/parallel.hpp"
#include "dosesens/rng.hpp"

namespace dosesens {

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) throw DomainError("standard deviation needs at least two values");
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double smd(const std::vector<double>& values, const std::vector<int>& group, double sd_whole) {
  if (values.size() != group.size()) throw DomainError("values and group labels differ in length");
  if (!(sd_whole > 0.0) || !std::isfinite(sd_whole)) throw DomainError("whole-sample sd must be positive");
  double s[2] = {0.0, 0.0};
  std::size_t n[2] = {0, 0};
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (group[k] != 0 && group[k] != 1) throw DomainError("group labels must be 0 or 1");
    s[group[k]] += values[k];
    ++n[group[k]];
  }
  if (n[0] == 0 || n[1] == 0) throw DomainError("both groups must be nonempty");
  return (s[1] / static_cast<double>(n[1]) - s[0] / static_cast<double>(n[0])) / sd_whole;
}

MedianSplit median_split_groups(const MatchedDesign& design) {
  MedianSplit out;
  out.high.reserve(design.num_units());
  for (const auto& set : design.sets()) {
    auto d = set.doses;
    std::sort(d.begin(), d.end());
    const std::size_t n = d.size();
    const double med = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
    for (double z : set.doses) out.high.push_back(z > med ? 1 : 0);
    if (d.front() == d.back()) out.degenerate_sets.push_back(set.id);
  }
  return out;
}

double kolmogorov_sf(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // Jacobi form converges fast for small lambda
    double cdf = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double a = (2 * k - 1) * pi / lambda;
      const double term = std::exp(-a * a / 8.0);
      cdf += term;
      if (term < 1e-17 * cdf) break;
    }
    cdf *= std::sqrt(2.0 * pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sf = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sf += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(sf, 0.0, 1.0);
}

KsResult ks_two_sample(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || y.empty()) throw DomainError("KS test needs two nonempty samples");
  auto a = x, b = y;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double D = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    D = std::max(D, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  KsResult r;
  r.D = D;
  r.p = kolmogorov_sf(std::sqrt(n * m / (n + m)) * D);
  return r;
}

namespace {

struct Half {
  std::vector<std::size_t> sets;
  std::vector<std::size_t> units;  // flattened unit indices
};

Half make_half(const MatchedDesign& design, std::vector<std::size_t> sets) {
  std::sort(sets.begin(), sets.end());
  Half h;
  h.sets = std::move(sets);
  for (auto i : h.sets)
    for (std::size_t j = 0; j < design.set(i).size(); ++j) h.units.push_back(design.unit_offset(i) + j);
  return h;
}

// OLS of dose on [1, X] over the half's units; ridge when rank deficient.
Eigen::VectorXd fit(const Half& h, const std::vector<double>& dose, const std::vector<std::vector<double>>& cols,
                    bool& ridge) {
  const auto n = static_cast<Eigen::Index>(h.units.size());
  const auto p = static_cast<Eigen::Index>(cols.size() + 1);
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd z(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto u = h.units[static_cast<std::size_t>(r)];
    X(r, 0) = 1.0;
    for (Eigen::Index c = 1; c < p; ++c) X(r, c) = cols[static_cast<std::size_t>(c - 1)][u];
    z(r) = dose[u];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() == p) return qr.solve(z);
  ridge = true;
  const Eigen::MatrixXd A = X.transpose() * X + kRidgeJitter * Eigen::MatrixXd::Identity(p, p);
  return A.ldlt().solve(X.transpose() * z);
}

struct Scored {
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;
};

Scored permutation_p(const MatchedDesign& design, const Half& h, const std::vector<double>& g, std::size_t reps,
                     std::uint64_t seed, std::uint64_t direction) {
  Scored out;
  bool moves = false;
  for (auto i : h.sets) {
    const auto& set = design.set(i);
    const auto off = design.unit_offset(i);
    const auto [gmin, gmax] = std::minmax_element(g.begin() + off, g.begin() + off + set.size());
    const auto [dmin, dmax] = std::minmax_element(set.doses.begin(), set.doses.end());
    const double scale = std::max({1.0, std::abs(*gmin), std::abs(*gmax)});
    if (*gmax - *gmin > 1e-12 * scale && *dmax > *dmin) moves = true;
    for (std::size_t j = 0; j < set.size(); ++j) out.t += set.doses[j] * g[off + j];
  }
  if (!moves) {
    out.degenerate = true;
    return out;
  }
  std::vector<double> tstar(reps);
  parallel_for(reps, [&](std::size_t r) {
    auto eng = substream(seed, 2 * r + direction, stream_tag::kPermutation);
    double t = 0.0;
    std::vector<double> d;
    for (auto i : h.sets) {
      const auto& set = design.set(i);
      const auto off = design.unit_offset(i);
      d = set.doses;
      std::shuffle(d.begin(), d.end(), eng);
      for (std::size_t j = 0; j < d.size(); ++j) t += d[j] * g[off + j];
    }
    tstar[r] = t;
  });
  const double cut = out.t - 1e-10 * std::max(1.0, std::abs(out.t));
  const auto hits = std::count_if(tstar.begin(), tstar.end(), [&](double t) { return t >= cut; });
  out.p = (1.0 + static_cast<double>(hits)) / (static_cast<double>(reps) + 1.0);
  return out;
}

}  // namespace

BalanceTestResult balance_randomization_test(const MatchedDesign& design, const BalanceTestOptions& options) {
  if (!design.covariates() || design.covariates()->empty()) throw DomainError("the design has no covariates");
  if (design.num_sets() < 2) throw DomainError("the split needs at least two matched sets");
  if (options.permutation_reps == 0) throw DomainError("permutation_reps must be positive");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  const auto& cov = *design.covariates();

  BalanceTestResult res;
  res.permutation_reps = options.permutation_reps;
  res.seed = options.seed;
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 0; c < cov.names.size(); ++c) {
    if (cov.column_complete(c)) {
      cols.push_back(cov.column(c));
      res.covariates_used.push_back(cov.names[c]);
    } else {
      res.covariates_dropped.push_back(cov.names[c]);
    }
  }
  if (cols.empty()) throw DomainError("no covariate column is complete");

  std::vector<std::size_t> idx(design.num_sets());
  std::iota(idx.begin(), idx.end(), 0);
  auto eng = substream(options.seed, 0, stream_tag::kSplit);
  std::shuffle(idx.begin(), idx.end(), eng);
  const std::size_t n1 = (idx.size() + 1) / 2;
  const auto h1 = make_half(design, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n1)});
  const auto h2 = make_half(design, {idx.begin() + static_cast<std::ptrdiff_t>(n1), idx.end()});
  res.part1 = h1.sets;
  res.part2 = h2.sets;

  const auto dose = design.all_doses();
  const auto b1 = fit(h1, dose, cols, res.ridge_used);
  const auto b2 = fit(h2, dose, cols, res.ridge_used);
  auto predict = [&](const Eigen::VectorXd& b, const Half& h) {
    std::vector<double> g(design.num_units(), 0.0);
    for (auto u : h.units) {
      double v = b(0);
      for (std::size_t c = 0; c < cols.size(); ++c) v += b(static_cast<Eigen::Index>(c + 1)) * cols[c][u];
      g[u] = v;
    }
    return g;
  };
  const auto s12 = permutation_p(design, h2, predict(b1, h2), options.permutation_reps, options.seed, 0);
  const auto s21 = permutation_p(design, h1, predict(b2, h1), options.permutation_reps, options.seed, 1);
  res.t_1to2 = s12.t;
  res.p_1to2 = s12.p;
  res.degenerate_1to2 = s12.degenerate;
  res.t_2to1 = s21.t;
  res.p_2to1 = s21.p;
  res.degenerate_2to1 = s21.degenerate;
  res.reject = std::min(res.p_1to2, res.p_2to1) < options.alpha / 2.0;
  return res;
}

UnitSample parse_unit_sample(std::istream& in) {
  UnitSample s;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty unit sample");
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    for (std::string cell; std::getline(ss, cell, ',');) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      out.push_back(cell);
    }
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  const auto header = split(line);
  if (header.empty() || header[0] != "dose") throw ParseError("unit sample header must start with 'dose'");
  s.names.assign(header.begin() + 1, header.end());
  s.columns.resize(s.names.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ParseError("unit sample line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                       " fields, expected " + std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[c].size() || !std::isfinite(v))
        throw ParseError("unit sample line " + std::to_string(lineno) + ": bad value '" + cells[c] + "'");
      (c == 0 ? s.dose : s.columns[c - 1]).push_back(v);
    }
  }
  if (s.dose.size() < 2) throw ParseError("unit sample needs at least two rows");
  return s;
}

BalanceReport balance_report(const MatchedDesign& design, const std::optional<UnitSample>& before) {
  if (!design.covariates() || design.covariates()->empty()) throw DomainError("the design has no covariates");
  const auto& cov = *design.covariates();
  BalanceReport rep;
  rep.split = median_split_groups(design);
  rep.before_source = before ? "unit-sample" : "pooled";

  // Pooled split of the before sample at its overall median dose.
  const auto pre_dose = before ? before->dose : design.all_doses();
  auto sorted = pre_dose;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  const double med = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  std::vector<int> pre_group(m);
  for (std::size_t k = 0; k < m; ++k) pre_group[k] = pre_dose[k] > med ? 1 : 0;

  auto means = [](const std::vector<double>& v, const std::vector<int>& g) {
    std::vector<double> lo, hi;
    for (std::size_t k = 0; k < v.size(); ++k) (g[k] ? hi : lo).push_back(v[k]);
    return std::pair{lo, hi};
  };
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };

  for (std::size_t c = 0; c < cov.names.size(); ++c) {
    if (!cov.column_complete(c)) {
      rep.covariates_dropped.push_back(cov.names[c]);
      continue;
    }
    const auto after = cov.column(c);
    std::vector<double> pre;
    if (before) {
      const auto it = std::find(before->names.begin(), before->names.end(), cov.names[c]);
      if (it == before->names.end())
        throw DomainError("covariate " + cov.names[c] + " is missing from the before-matching sample");
      pre = before->columns[static_cast<std::size_t>(it - before->names.begin())];
    } else {
      pre = after;
    }
    const double sd = sample_sd(pre);
    BalanceRow row;
    row.name = cov.names[c];
    const auto [plo, phi] = means(pre, pre_group);
    const auto [alo, ahi] = means(after, rep.split.high);
    if (plo.empty() || phi.empty() || alo.empty() || ahi.empty())
      throw DomainError("a dose group is empty; balance is undefined");
    row.below = mean(plo);
    row.above = mean(phi);
    row.smd_before = smd(pre, pre_group, sd);
    row.ks_p_before = ks_two_sample(plo, phi).p;
    row.mean_low = mean(alo);
    row.mean_high = mean(ahi);
    row.smd_after = smd(after, rep.split.high, sd);
    row.ks_p_after = ks_two_sample(alo, ahi).p;
    rep.rows.push_back(row);
  }
  return rep;
}

void write_balance_csv(std::ostream& out, const BalanceReport& report) {
  auto f = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return std::string(buf);
  };
  out << "confounder,Below,Above,SMD,KS p,Low,High,SMD,KS p\n";
  for (const auto& r : report.rows) {
    std::string name = r.name;
    if (name.find_first_of(",\"") != std::string::npos) {
      std::string q = "\"";
      for (char ch : name) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      name = q + "\"";
    }
    out << name << ',' << f(r.below) << ',' << f(r.above) << ',' << f(r.smd_before) << ',' << f(r.ks_p_before) << ','
        << f(r.mean_low) << ',' << f(r.mean_high) << ',' << f(r.smd_after) << ',' << f(r.ks_p_after) << '\n';
  }
}

}  // namespace dosesens
