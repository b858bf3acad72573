#include "cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dosesens/assignment.hpp"
#include "dosesens/attributable.hpp"
#include "dosesens/balance.hpp"
#include "dosesens/design.hpp"
#include "dosesens/design_sensitivity.hpp"
#include "dosesens/error.hpp"
#include "dosesens/hardness.hpp"
#include "dosesens/parallel.hpp"
#include "dosesens/sharp_null.hpp"
#include "dosesens/statistics.hpp"
#include "json.hpp"

#ifndef DOSESENS_VERSION
#define DOSESENS_VERSION "0.0.0"
#endif

namespace dosesens::cli {

using nlohmann::ordered_json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw Error("SHA-256 failed");
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[k]);
  return hex.str();
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write to '" + path + "' failed");
}

std::string num(double x) {
  if (std::isnan(x)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

// Finite doubles as numbers, the rest as null (JSON has no inf/nan).
ordered_json real(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

struct Input {
  std::string bytes;
  std::string digest;
};

Input load(const std::string& path) {
  Input in;
  in.bytes = read_file(path);
  in.digest = sha256_hex(in.bytes);
  return in;
}

MatchedDesign design_from(const Input& in, const ParseOptions& po = {}) {
  std::istringstream ss(in.bytes);
  return parse_design(ss, po);
}

SensitivityParameter make_gp(double gamma, const std::string& transform) {
  if (transform.empty()) return SensitivityParameter(gamma);
  return SensitivityParameter(gamma, MonotoneMap::parse(transform));
}

// Shared options; each subcommand fills the ones it uses.
struct Common {
  std::string input;
  std::string output;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct Report {
  std::string command;
  ordered_json config = ordered_json::object();
  ordered_json inputs = ordered_json::object();
  std::uint64_t seed = 1;
  ordered_json result = ordered_json::object();

  std::string dump() const {
    ordered_json j;
    j["tool"] = "dosesens";
    j["version"] = DOSESENS_VERSION;
    j["command"] = command;
    j["provenance"] = {{"seed", seed}, {"inputs", inputs}, {"config", config}};
    j["result"] = result;
    return j.dump(2) + "\n";
  }
};

ordered_json sharp_point(const SharpNullResult& r) {
  ordered_json j;
  j["gamma"] = r.gamma;
  j["Gamma"] = r.Gamma();
  j["t_obs"] = r.t_obs;
  j["p_worst"] = r.p_worst;
  j["method"] = to_string(r.method);
  j["mc_se"] = opt(r.mc_se);
  j["seed"] = r.seed;
  j["reps"] = r.reps;
  j["mean"] = r.moments ? ordered_json(r.moments->mean) : ordered_json(nullptr);
  j["variance"] = r.moments ? ordered_json(r.moments->variance) : ordered_json(nullptr);
  j["degenerate"] = r.degenerate;
  j["small_sample"] = r.small_sample;
  j["regularity_ratio"] = opt(r.regularity_ratio);
  return j;
}

SharpNullResult sharp_one(const MatchedDesign& d, const StatisticSpec& spec, const SensitivityParameter& gp,
                          PMethod method, const McOptions& mc) {
  return method == PMethod::normal ? worst_case_p_normal(d, spec, gp) : worst_case_p_exact_mc(d, spec, gp, mc);
}

// --- sharp-null -------------------------------------------------------------

struct SharpArgs {
  std::string stat = "t";
  std::vector<double> gammas{0.0};
  std::string method = "normal";
  std::size_t reps = 10000;
  double alpha = 0.05;
  std::string transform;
  std::string curve;
};

Report cmd_sharp(const Common& c, const SharpArgs& a) {
  const auto in = load(c.input);
  const auto design = design_from(in);
  const auto method = parse_method(a.method);
  if (a.gammas.empty()) throw DomainError("empty gamma grid");
  if (!std::is_sorted(a.gammas.begin(), a.gammas.end())) throw DomainError("gamma grid must be sorted ascending");
  for (double g : a.gammas)
    if (!(g >= 0.0)) throw DomainError("gamma values must be >= 0");
  const McOptions mc{a.reps, c.seed};

  Report rep;
  rep.command = "sharp-null";
  rep.seed = c.seed;
  rep.inputs["design_sha256"] = in.digest;
  rep.config = {{"statistic", a.stat}, {"gamma", a.gammas}, {"method", to_string(method)}, {"reps", a.reps},
                {"alpha", a.alpha}, {"transform", a.transform.empty() ? ordered_json(nullptr) : ordered_json(a.transform)}};

  std::vector<ordered_json> points;
  std::vector<double> pw;
  if (is_adaptive(a.stat)) {
    const auto ad = AdaptiveSpec::parse(a.stat);
    for (double g : a.gammas) {
      const auto gp = make_gp(g, a.transform);
      std::vector<double> ps;
      ordered_json comps = ordered_json::array();
      for (const auto& s : ad.components) {
        const auto r = sharp_one(design, s, gp, method, mc);
        ps.push_back(r.p_worst);
        auto j = sharp_point(r);
        j["statistic"] = s.to_string();
        comps.push_back(j);
      }
      ordered_json j;
      j["gamma"] = g;
      j["Gamma"] = gp.Gamma();
      j["p_worst"] = adaptive_p(ad, ps);
      j["method"] = to_string(method);
      j["seed"] = c.seed;
      j["reps"] = method == PMethod::exact_mc ? a.reps : 0;
      j["components"] = comps;
      pw.push_back(j["p_worst"].get<double>());
      points.push_back(j);
    }
  } else {
    const auto spec = StatisticSpec::parse(a.stat);
    std::vector<SharpNullResult> curve;
    for (double g : a.gammas) curve.push_back(sharp_one(design, spec, make_gp(g, a.transform), method, mc));
    for (const auto& r : curve) {
      points.push_back(sharp_point(r));
      pw.push_back(r.p_worst);
    }
  }

  if (points.size() == 1) {
    rep.result = points.front();
  } else {
    rep.result["curve"] = points;
    std::optional<double> cp;
    for (std::size_t k = 0; k < pw.size(); ++k)
      if (pw[k] > a.alpha) {
        cp = std::exp(a.gammas[k]);
        break;
      }
    rep.result["changepoint_Gamma"] = opt(cp);
  }
  if (!a.curve.empty()) {
    std::ostringstream csv;
    csv << "Gamma,p_worst\n";
    for (std::size_t k = 0; k < pw.size(); ++k) csv << num(std::exp(a.gammas[k])) << ',' << num(pw[k]) << '\n';
    write_text(a.curve, csv.str());
  }
  return rep;
}

// --- tae ----------------------------------------------------------------------

struct TaeArgs {
  double c = 0.5;
  double eps = 0.0;
  double gamma = 0.0;
  double alpha = 0.05;
  std::optional<long> delta;
  bool ci = false;
  std::string solver = "enum";
  std::string form = "equal";
  std::string sides = "both";
  std::size_t node_budget = kNodeBudget;
  std::string transform;
};

TaeForm parse_form(const std::string& s) {
  if (s == "equal") return TaeForm::equal;
  if (s == "at-most" || s == "at_most") return TaeForm::at_most;
  if (s == "at-least" || s == "at_least") return TaeForm::at_least;
  throw DomainError("unknown form '" + s + "'");
}

std::string form_name(TaeForm f) {
  switch (f) {
    case TaeForm::equal: return "equal";
    case TaeForm::at_most: return "at-most";
    case TaeForm::at_least: return "at-least";
  }
  return "equal";
}

Report cmd_tae(const Common& c, const TaeArgs& a) {
  if (a.ci == a.delta.has_value()) throw DomainError("give exactly one of --delta and --ci");
  const auto in = load(c.input);
  const auto design = design_from(in);
  const auto gp = make_gp(a.gamma, a.transform);
  const auto inst = TaeInstance::make(design, a.c, a.eps, a.alpha, gp);
  const auto mode = parse_tae_mode(a.solver);
  const auto form = parse_form(a.form);
  TaeSides sides = TaeSides::both;
  if (a.sides == "upper") sides = TaeSides::upper;
  else if (a.sides != "both") throw DomainError("unknown sides '" + a.sides + "'");

  Report rep;
  rep.command = "tae";
  rep.seed = c.seed;
  rep.inputs["design_sha256"] = in.digest;
  rep.config = {{"threshold", a.c}, {"eps", a.eps},         {"gamma", a.gamma},
                {"alpha", a.alpha}, {"solver", to_string(mode)}, {"form", form_name(form)},
                {"sides", a.sides}, {"node_budget", a.node_budget},
                {"delta", a.delta ? ordered_json(*a.delta) : ordered_json(nullptr)}, {"ci", a.ci}};

  auto& r = rep.result;
  r["threshold"] = a.c;
  r["gamma"] = a.gamma;
  r["Gamma"] = gp.Gamma();
  r["alpha"] = a.alpha;
  r["observed_count"] = inst.observed_count;
  r["mode"] = to_string(mode);

  if (mode == TaeMode::separability) {
    if (!binary_contribution(design, inst))
      throw DomainError("the separability solver needs every set to contribute 0 or 1 to the pivot count");
    if (a.ci) {
      std::optional<long> lo, hi;
      for (long d = 0; d <= inst.observed_count; ++d)
        if (separability_test(design, inst, d).accepted()) {
          if (!lo) lo = d;
          hi = d;
        }
      r["interval"] = {{"lo", lo ? ordered_json(*lo) : ordered_json(nullptr)},
                       {"hi", hi ? ordered_json(*hi) : ordered_json(nullptr)}};
      r["empty"] = !lo.has_value();
    } else {
      const auto t = separability_test(design, inst, *a.delta);
      r["delta"] = *a.delta;
      r["decision"] = to_string(t.decision);
      r["nodes_explored"] = t.nodes_explored;
      r["p_value"] = opt(t.p_value);
      r["expectation"] = opt(t.expectation);
    }
    return rep;
  }

  const auto problem = build_tae_problem(design, inst, sides);
  r["chi2"] = problem.chi2;
  r["combinations"] = problem.combinations();
  if (a.ci) {
    const auto iv = tae_confidence_set(problem, mode);
    r["interval"] = {{"lo", iv.lo ? ordered_json(*iv.lo) : ordered_json(nullptr)},
                     {"hi", iv.hi ? ordered_json(*iv.hi) : ordered_json(nullptr)}};
    r["empty"] = iv.empty();
    return rep;
  }
  const auto t = mode == TaeMode::enumeration
                     ? test_tae_enumeration(problem, *a.delta, form)
                     : test_tae_bnb(problem, *a.delta, mode == TaeMode::relaxed, form, a.node_budget);
  r["delta"] = *a.delta;
  r["form"] = form_name(form);
  r["decision"] = to_string(t.decision);
  r["nodes_explored"] = t.nodes_explored;
  r["optimal_y"] = t.optimal_y ? real(*t.optimal_y) : ordered_json(nullptr);
  return rep;
}

// --- design-sens / power ----------------------------------------------------

struct DgpArgs {
  std::string dgp;  // JSON text or path to a JSON file
  std::string f = "power:0.25";
  double beta = 1.5;
  std::string dose_law = "unif";
  double effect_mean = 0.0;
};

DgpSpec make_dgp(const DgpArgs& a, const CLI::App& sub) {
  std::string f = a.f, law = a.dose_law;
  double beta = a.beta, mean = a.effect_mean;
  if (!a.dgp.empty()) {
    const std::string text = std::filesystem::exists(a.dgp) ? read_file(a.dgp) : a.dgp;
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const std::exception& e) {
      throw ParseError(std::string("bad --dgp JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("--dgp must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (k == "f") f = it->get<std::string>();
      else if (k == "beta") beta = it->get<double>();
      else if (k == "dose_law") law = it->get<std::string>();
      else if (k == "effect_mean") mean = it->get<double>();
      else throw ParseError("unknown --dgp key '" + k + "'");
    }
  }
  // explicit flags win over the block
  if (sub.count("--f")) f = a.f;
  if (sub.count("--beta")) beta = a.beta;
  if (sub.count("--dose-law")) law = a.dose_law;
  if (sub.count("--effect-mean")) mean = a.effect_mean;
  DgpSpec d;
  d.f = ResponseCurve::parse(f);
  d.beta = beta;
  d.dose_law = DoseLaw::parse(law);
  d.effect_mean = mean;
  return d;
}

ordered_json dgp_json(const DgpSpec& d) {
  return {{"f", d.f.to_string()}, {"beta", d.beta}, {"dose_law", d.dose_law.to_string()}, {"effect_mean", d.effect_mean}};
}

struct DsArgs {
  std::string stat = "t";
  std::size_t mc_draws = 100000;
  double tol = 1e-2;
  std::string curve;
};

Report cmd_design_sens(const Common& c, const DgpArgs& ga, const DsArgs& a, const CLI::App& sub) {
  const auto dgp = make_dgp(ga, sub);
  DesignSensitivityOptions o;
  o.mc_draws = a.mc_draws;
  o.tol = a.tol;
  o.seed = c.seed;
  Report rep;
  rep.command = "design-sens";
  rep.seed = c.seed;
  rep.config = {{"dgp", dgp_json(dgp)}, {"statistic", a.stat}, {"mc_draws", a.mc_draws}, {"tol", a.tol}};

  std::vector<StatisticSpec> specs;
  if (is_adaptive(a.stat)) specs = AdaptiveSpec::parse(a.stat).components;
  else specs.push_back(StatisticSpec::parse(a.stat));
  ordered_json comps = ordered_json::array();
  std::optional<DesignSensitivityResult> best;
  std::ostringstream csv;
  csv << "statistic,gamma,Gamma,phi,se,mean_q\n";
  for (const auto& s : specs) {
    const auto r = solve_design_sensitivity(dgp, s, o);
    ordered_json j;
    j["statistic"] = s.to_string();
    j["gamma_tilde"] = r.gamma_tilde;
    j["Gamma_tilde"] = r.Gamma_tilde;
    j["bracket"] = {r.bracket_lo, r.bracket_hi};
    j["mean_q"] = r.mean_q;
    j["pilot_correlation"] = r.pilot_correlation;
    j["evaluations"] = r.phi_samples.size();
    comps.push_back(j);
    auto samples = r.phi_samples;
    std::sort(samples.begin(), samples.end(), [](auto& x, auto& y) { return x.gamma < y.gamma; });
    for (const auto& p : samples)
      csv << s.to_string() << ',' << num(p.gamma) << ',' << num(std::exp(p.gamma)) << ',' << num(p.estimate) << ','
          << num(p.se) << ',' << num(r.mean_q) << '\n';
    if (!best || r.gamma_tilde > best->gamma_tilde) best = r;
  }
  // an adaptive combination inherits the larger design sensitivity
  rep.result["gamma_tilde"] = best->gamma_tilde;
  rep.result["Gamma_tilde"] = best->Gamma_tilde;
  rep.result["mc_draws"] = a.mc_draws;
  rep.result["components"] = comps;
  if (!a.curve.empty()) write_text(a.curve, csv.str());
  return rep;
}

struct PowerArgs {
  std::string stat = "t";
  std::vector<double> Gammas;
  std::size_t I = 2000;
  std::size_t sim_reps = 200;
  double alpha = 0.05;
  std::string curve;
};

Report cmd_power(const Common& c, const DgpArgs& ga, const PowerArgs& a, const CLI::App& sub) {
  const auto dgp = make_dgp(ga, sub);
  if (a.Gammas.empty()) throw DomainError("--Gamma needs at least one value");
  PowerOptions o;
  o.I = a.I;
  o.alpha = a.alpha;
  o.sim_reps = a.sim_reps;
  o.seed = c.seed;
  Report rep;
  rep.command = "power";
  rep.seed = c.seed;
  rep.config = {{"dgp", dgp_json(dgp)}, {"statistic", a.stat}, {"Gamma", a.Gammas},
                {"I", a.I},             {"sim_reps", a.sim_reps}, {"alpha", a.alpha}};
  ordered_json pts = ordered_json::array();
  std::ostringstream csv;
  csv << "Gamma,power,se\n";
  for (double G : a.Gammas) {
    if (!(G >= 1.0)) throw DomainError("Gamma values must be >= 1");
    const double g = std::log(G);
    const auto r = is_adaptive(a.stat) ? simulate_power(dgp, AdaptiveSpec::parse(a.stat), g, o)
                                       : simulate_power(dgp, StatisticSpec::parse(a.stat), g, o);
    pts.push_back({{"gamma", r.gamma}, {"Gamma", G}, {"power", r.power}, {"se", r.se},
                   {"rejections", r.rejections}, {"reps", r.reps}});
    csv << num(G) << ',' << num(r.power) << ',' << num(r.se) << '\n';
  }
  rep.result["points"] = pts;
  if (!a.curve.empty()) write_text(a.curve, csv.str());
  return rep;
}

// --- balance ------------------------------------------------------------------

struct BalanceArgs {
  std::string before;
  double alpha = 0.1;
  std::size_t perm_reps = 2000;
  std::string csv;
};

Report cmd_balance(const Common& c, const BalanceArgs& a, std::ostream& err) {
  const auto in = load(c.input);
  const auto design = design_from(in);
  Report rep;
  rep.command = "balance";
  rep.seed = c.seed;
  rep.inputs["design_sha256"] = in.digest;
  std::optional<UnitSample> before;
  if (!a.before.empty()) {
    const auto b = load(a.before);
    std::istringstream ss(b.bytes);
    before = parse_unit_sample(ss);
    rep.inputs["before_sha256"] = b.digest;
  }
  rep.config = {{"alpha", a.alpha}, {"permutation_reps", a.perm_reps}, {"before", !a.before.empty()}};

  const auto table = balance_report(design, before);
  const auto test = balance_randomization_test(design, {a.alpha, a.perm_reps, c.seed});
  for (const auto& n : test.covariates_dropped) err << "warning: covariate " << n << " has missing values; dropped\n";

  ordered_json rows = ordered_json::array();
  for (const auto& r : table.rows)
    rows.push_back({{"name", r.name},
                    {"below", r.below},
                    {"above", r.above},
                    {"smd_before", r.smd_before},
                    {"ks_p_before", r.ks_p_before},
                    {"mean_low", r.mean_low},
                    {"mean_high", r.mean_high},
                    {"smd_after", r.smd_after},
                    {"ks_p_after", r.ks_p_after}});
  rep.result["before_source"] = table.before_source;
  rep.result["rows"] = rows;
  rep.result["degenerate_sets"] = table.split.degenerate_sets;
  rep.result["randomization_test"] = {{"p_1to2", test.p_1to2},
                                      {"p_2to1", test.p_2to1},
                                      {"reject", test.reject},
                                      {"t_1to2", test.t_1to2},
                                      {"t_2to1", test.t_2to1},
                                      {"part1_sets", test.part1.size()},
                                      {"part2_sets", test.part2.size()},
                                      {"ridge_used", test.ridge_used},
                                      {"degenerate_1to2", test.degenerate_1to2},
                                      {"degenerate_2to1", test.degenerate_2to1},
                                      {"covariates_used", test.covariates_used},
                                      {"covariates_dropped", test.covariates_dropped}};
  if (!a.csv.empty()) {
    std::ostringstream out;
    write_balance_csv(out, table);
    write_text(a.csv, out.str());
  }
  return rep;
}

// --- demo-hardness ------------------------------------------------------------

struct HardnessArgs {
  double gamma = 2.0;
  bool binary_scores = false;
  std::string program;
};

Report cmd_hardness(const Common& c, const HardnessArgs& a) {
  CounterexampleOptions o;
  o.gamma = a.gamma;
  o.binary_scores = a.binary_scores;
  o.search.seed = c.seed;
  const auto r = verify_counterexample(o);
  Report rep;
  rep.command = "demo-hardness";
  rep.seed = c.seed;
  rep.config = {{"gamma", a.gamma}, {"binary_scores", a.binary_scores}};
  auto& j = rep.result;
  j["pass"] = r.pass;
  j["skipped"] = r.skipped;
  j["notice"] = r.notice.empty() ? ordered_json(nullptr) : ordered_json(r.notice);
  j["gamma"] = r.gamma;
  j["t_obs"] = r.t_obs;
  j["doses"] = r.doses;
  j["scores"] = r.scores;
  j["u_star"] = r.u_star;
  j["p_star"] = r.skipped ? ordered_json(nullptr) : ordered_json(r.p_star);
  j["best_corner"] = r.best_corner;
  j["p_best_corner"] = r.skipped ? ordered_json(nullptr) : ordered_json(r.p_best_corner);
  j["corner_gap"] = r.skipped ? ordered_json(nullptr) : ordered_json(r.corner_gap);
  j["gap_to_outcome_allocation"] = opt(r.gap_to_outcome_allocation);
  j["permutations_at_or_above_t"] = r.statistic_support_hits;
  j["failures"] = r.failures;

  if (!a.program.empty()) {
    const auto design = counterexample_design();
    const auto prog = formulate_signomial(design, r.scores, SensitivityParameter(a.gamma), 0.05, r.t_obs);
    std::ostringstream text;
    write_signomial(text, prog);
    write_text(a.program, text.str());
    const auto k = counts(prog);
    j["program"] = {{"p_vars", k.p_vars},     {"s_vars", k.s_vars}, {"w_vars", k.w_vars},
                    {"products", k.products}, {"sums", k.sums},     {"powers", k.powers},
                    {"boxes", k.boxes},       {"sha256", sha256_hex(text.str())}};
  }
  return rep;
}

// --- validate -----------------------------------------------------------------

struct ValidateArgs {
  std::size_t cap = kDefaultEnumerationCap;
  bool strict_ties = false;
  std::string tv;
  double gamma = 0.0;
};

Report cmd_validate(const Common& c, const ValidateArgs& a) {
  const auto in = load(c.input);
  ParseOptions po;
  po.strict_ties = a.strict_ties;
  const auto design = design_from(in, po);
  const auto d = validate(design, a.cap);
  Report rep;
  rep.command = "validate";
  rep.seed = c.seed;
  rep.inputs["design_sha256"] = in.digest;
  rep.config = {{"enumeration_cap", a.cap}, {"strict_ties", a.strict_ties}, {"tv_gamma", a.gamma}};
  ordered_json sets = ordered_json::array();
  for (const auto& s : d.sets)
    sets.push_back({{"id", s.id},
                    {"size", s.size},
                    {"events", s.events},
                    {"concordant", s.concordant},
                    {"tied_doses", s.tied_doses},
                    {"enumerable", s.enumerable}});
  auto& r = rep.result;
  r["num_sets"] = d.num_sets;
  r["num_units"] = d.num_units;
  r["num_events"] = d.num_events;
  r["num_concordant"] = d.num_concordant;
  r["num_tied"] = d.num_tied;
  r["num_not_enumerable"] = d.num_not_enumerable;
  r["covariates"] = design.covariates() ? ordered_json(design.covariates()->names) : ordered_json::array();
  r["sets"] = sets;
  if (!a.tv.empty()) {
    const SensitivityParameter gp(a.gamma);
    std::ostringstream csv;
    csv << "set_id,n,m,tv\n";
    for (const auto& s : design.sets()) {
      csv << s.id << ',' << s.size() << ',' << s.events() << ',';
      try {
        csv << num(tv_from_uniform(s, gp, ConfounderAllocation::adversarial(s))) << '\n';
      } catch (const CapExceeded&) {
        csv << "NA\n";
      }
    }
    write_text(a.tv, csv.str());
  }
  return rep;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sensitivity analysis for matched designs with continuous doses", "dosesens"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("dosesens ") + DOSESENS_VERSION);
  Common c;
  auto common = [&](CLI::App* s, bool needs_input) {
    auto* o = s->add_option("--input,-i", c.input, "design CSV");
    if (needs_input) o->required()->check(CLI::ExistingFile);
    s->add_option("--output,-o", c.output, "write the JSON report here instead of stdout");
    s->add_option("--seed", c.seed, "random seed")->capture_default_str();
    s->add_option("--threads", c.threads, "worker thread cap (0: DOSESENS_THREADS or all cores)");
  };

  SharpArgs sa;
  auto* sharp = app.add_subcommand("sharp-null", "worst-case p-value under the sharp null");
  common(sharp, true);
  sharp->add_option("--stat", sa.stat, "statistic spec")->capture_default_str();
  sharp->add_option("--gamma", sa.gammas, "gamma or ascending gamma grid")->delimiter(',')->capture_default_str();
  sharp->add_option("--method", sa.method, "exact-mc | normal")->capture_default_str();
  sharp->add_option("--reps", sa.reps, "Monte Carlo replicates")->capture_default_str();
  sharp->add_option("--alpha", sa.alpha, "level for the changepoint")->capture_default_str();
  sharp->add_option("--transform", sa.transform, "dose transform knots x0/y0;x1/y1;...");
  sharp->add_option("--curve", sa.curve, "write Gamma,p_worst CSV");

  TaeArgs ta;
  std::optional<long> delta;
  auto* tae = app.add_subcommand("tae", "threshold attributable effect");
  common(tae, true);
  tae->add_option("--threshold", ta.c, "dose threshold c")->capture_default_str();
  tae->add_option("--eps", ta.eps, "doses <= eps reveal r(0)")->capture_default_str();
  tae->add_option("--gamma", ta.gamma)->capture_default_str();
  tae->add_option("--alpha", ta.alpha)->capture_default_str();
  tae->add_option("--delta", delta, "hypothesized TAE");
  tae->add_flag("--ci", ta.ci, "confidence set instead of a single test");
  tae->add_option("--solver", ta.solver, "enum | bnb | relaxed | separability")->capture_default_str();
  tae->add_option("--form", ta.form, "equal | at-most | at-least")->capture_default_str();
  tae->add_option("--sides", ta.sides, "both | upper")->capture_default_str();
  tae->add_option("--node-budget", ta.node_budget)->capture_default_str();
  tae->add_option("--transform", ta.transform, "dose transform knots");

  DgpArgs ga;
  auto dgp_opts = [&](CLI::App* s) {
    s->add_option("--dgp", ga.dgp, "JSON object {f, beta, dose_law, effect_mean} or a file holding one");
    s->add_option("--f", ga.f, "response curve")->capture_default_str();
    s->add_option("--beta", ga.beta)->capture_default_str();
    s->add_option("--dose-law", ga.dose_law)->capture_default_str();
    s->add_option("--effect-mean", ga.effect_mean)->capture_default_str();
  };
  DsArgs da;
  auto* ds = app.add_subcommand("design-sens", "design sensitivity by Monte Carlo and bisection");
  common(ds, false);
  dgp_opts(ds);
  ds->add_option("--stat", da.stat)->capture_default_str();
  ds->add_option("--mc-draws", da.mc_draws)->capture_default_str();
  ds->add_option("--tol", da.tol)->capture_default_str();
  ds->add_option("--curve", da.curve, "write the phi evaluations as CSV");

  PowerArgs pa;
  auto* pw = app.add_subcommand("power", "simulated power of the sensitivity analysis");
  common(pw, false);
  dgp_opts(pw);
  pw->add_option("--stat", pa.stat)->capture_default_str();
  pw->add_option("--Gamma", pa.Gammas, "Gamma values")->delimiter(',')->required();
  pw->add_option("--sets", pa.I, "matched sets per simulated design")->capture_default_str();
  pw->add_option("--sim-reps", pa.sim_reps)->capture_default_str();
  pw->add_option("--alpha", pa.alpha)->capture_default_str();
  pw->add_option("--curve", pa.curve, "write Gamma,power,se CSV");

  BalanceArgs ba;
  auto* bal = app.add_subcommand("balance", "covariate balance diagnostics");
  common(bal, true);
  bal->add_option("--before", ba.before, "unmatched sample CSV (dose,<covariates>)")->check(CLI::ExistingFile);
  bal->add_option("--alpha", ba.alpha)->capture_default_str();
  bal->add_option("--perm-reps", ba.perm_reps)->capture_default_str();
  bal->add_option("--csv", ba.csv, "write the balance table CSV");

  HardnessArgs ha;
  auto* hard = app.add_subcommand("demo-hardness", "interior-maximizer counterexample and signomial program");
  common(hard, false);
  hard->add_option("--gamma", ha.gamma)->capture_default_str();
  hard->add_flag("--binary-scores", ha.binary_scores, "use the outcome vector as scores");
  hard->add_option("--program", ha.program, "write the signomial program text");

  ValidateArgs va;
  auto* val = app.add_subcommand("validate", "design diagnostics");
  common(val, true);
  val->add_option("--cap", va.cap, "enumeration cap on set size")->capture_default_str();
  val->add_flag("--strict-ties", va.strict_ties, "reject tied doses within a set");
  val->add_option("--tv", va.tv, "write set_id,n,m,tv CSV at u = R");
  val->add_option("--gamma", va.gamma, "gamma for --tv")->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    set_thread_count(c.threads);
    Report rep;
    if (sharp->parsed()) rep = cmd_sharp(c, sa);
    else if (tae->parsed()) {
      ta.delta = delta;
      rep = cmd_tae(c, ta);
    } else if (ds->parsed()) rep = cmd_design_sens(c, ga, da, *ds);
    else if (pw->parsed()) rep = cmd_power(c, ga, pa, *pw);
    else if (bal->parsed()) rep = cmd_balance(c, ba, err);
    else if (hard->parsed()) rep = cmd_hardness(c, ha);
    else rep = cmd_validate(c, va);
    const auto text = rep.dump();
    if (c.output.empty()) out << text;
    else write_text(c.output, text);
    if (hard->parsed() && !rep.result["pass"].get<bool>()) {
      err << "counterexample check failed\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    err << "dosesens: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace dosesens::cli
