#include "dosesens/design.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dosesens/error.hpp"

namespace dosesens {

std::size_t MatchedSet::events() const {
  return static_cast<std::size_t>(std::count(outcomes.begin(), outcomes.end(), 1));
}

bool MatchedSet::concordant() const {
  const std::size_t m = events();
  return m == 0 || m == size();
}

bool MatchedSet::has_tied_doses() const {
  std::vector<double> sorted = doses;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

std::vector<double> CovariateTable::column(std::size_t c) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    if (!row.at(c)) throw DomainError("covariate '" + names.at(c) + "' has missing values");
    out.push_back(*row[c]);
  }
  return out;
}

bool CovariateTable::column_complete(std::size_t c) const {
  return std::all_of(rows.begin(), rows.end(), [c](const auto& row) { return row.at(c).has_value(); });
}

MatchedDesign::MatchedDesign(std::vector<MatchedSet> sets, std::optional<CovariateTable> covariates)
    : sets_(std::move(sets)), covariates_(std::move(covariates)) {
  if (sets_.empty()) throw DomainError("design has no matched sets");
  std::set<std::string> ids;
  offsets_.reserve(sets_.size());
  for (const auto& s : sets_) {
    if (!ids.insert(s.id).second) throw DomainError("duplicate set id '" + s.id + "'");
    if (s.doses.size() != s.outcomes.size())
      throw DomainError("set '" + s.id + "': dose and outcome counts differ");
    if (s.size() < 2) throw DomainError("set '" + s.id + "': set size < 2");
    for (double z : s.doses)
      if (!std::isfinite(z)) throw DomainError("set '" + s.id + "': non-finite dose");
    for (int r : s.outcomes)
      if (r != 0 && r != 1) throw DomainError("set '" + s.id + "': non-binary outcome");
    offsets_.push_back(num_units_);
    num_units_ += s.size();
  }
  if (covariates_) {
    if (covariates_->rows.size() != num_units_)
      throw DomainError("covariate table must have one row per unit");
    for (const auto& row : covariates_->rows)
      if (row.size() != covariates_->names.size())
        throw DomainError("covariate row width does not match header");
  }
}

std::vector<double> MatchedDesign::all_doses() const {
  std::vector<double> out;
  out.reserve(num_units_);
  for (const auto& s : sets_) out.insert(out.end(), s.doses.begin(), s.doses.end());
  return out;
}

std::vector<int> MatchedDesign::all_outcomes() const {
  std::vector<int> out;
  out.reserve(num_units_);
  for (const auto& s : sets_) out.insert(out.end(), s.outcomes.begin(), s.outcomes.end());
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV record. Double-quoted fields may contain commas; a doubled
// quote inside a quoted field is a literal quote.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field");
  fields.push_back(trim(cur));
  return fields;
}

double parse_real(const std::string& text, std::size_t line_no, const char* what) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line_no) + ": malformed " + what + " '" + text + "'");
  return v;
}

int parse_outcome(const std::string& text, std::size_t line_no) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  throw ParseError("line " + std::to_string(line_no) + ": non-binary outcome '" + text + "'");
}

}  // namespace

MatchedDesign parse_design(std::istream& in, const ParseOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!trim(line).empty()) {
      header = split_record(line);
      break;
    }
  }
  if (header.size() < 3 || header[0] != "set_id" || header[1] != "dose" || header[2] != "outcome")
    throw ParseError("header must start with set_id,dose,outcome");
  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) throw ParseError("duplicate column '" + h + "' in header");
  }
  const std::size_t ncov = header.size() - 3;

  std::vector<MatchedSet> sets;
  std::vector<std::vector<std::vector<std::optional<double>>>> cov_rows;
  std::unordered_map<std::string, std::size_t> index;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_record(line);
    if (fields.size() != header.size())
      throw ParseError("line " + std::to_string(line_no) + ": malformed row (expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()) + ")");
    if (fields[0].empty()) throw ParseError("line " + std::to_string(line_no) + ": empty set_id");
    auto [it, inserted] = index.try_emplace(fields[0], sets.size());
    if (inserted) {
      sets.push_back(MatchedSet{fields[0], {}, {}});
      cov_rows.emplace_back();
    }
    MatchedSet& s = sets[it->second];
    s.doses.push_back(parse_real(fields[1], line_no, "dose"));
    s.outcomes.push_back(parse_outcome(fields[2], line_no));
    std::vector<std::optional<double>> row(ncov);
    for (std::size_t c = 0; c < ncov; ++c) {
      const auto& cell = fields[3 + c];
      if (!cell.empty()) row[c] = parse_real(cell, line_no, "covariate");
    }
    cov_rows[it->second].push_back(std::move(row));
  }
  if (sets.empty()) throw ParseError("design file has no data rows");
  for (const auto& s : sets) {
    if (s.size() < 2) throw ParseError("set '" + s.id + "': set size < 2");
    if (options.strict_ties && s.has_tied_doses())
      throw ParseError("set '" + s.id + "': tied doses (strict mode)");
  }

  std::optional<CovariateTable> covariates;
  if (ncov > 0) {
    CovariateTable table;
    table.names.assign(header.begin() + 3, header.end());
    for (auto& rows : cov_rows)
      for (auto& r : rows) table.rows.push_back(std::move(r));
    covariates = std::move(table);
  }
  return MatchedDesign(std::move(sets), std::move(covariates));
}

MatchedDesign parse_design_file(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open design file '" + path + "'");
  return parse_design(in, options);
}

void write_design(std::ostream& out, const MatchedDesign& design) {
  const auto& cov = design.covariates();
  out << "set_id,dose,outcome";
  if (cov)
    for (const auto& name : cov->names) out << ',' << name;
  out << '\n';
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  std::size_t unit = 0;
  for (const auto& s : design.sets()) {
    for (std::size_t j = 0; j < s.size(); ++j, ++unit) {
      out << s.id << ',' << s.doses[j] << ',' << s.outcomes[j];
      if (cov) {
        for (const auto& cell : cov->rows[unit]) {
          out << ',';
          if (cell) out << *cell;
        }
      }
      out << '\n';
    }
  }
  out.precision(old_precision);
}

StratumTable stratum_table(const MatchedSet& set) {
  StratumTable t;
  for (std::size_t j = 0; j < set.size(); ++j)
    (set.outcomes[j] == 1 ? t.s1 : t.s0).push_back(set.doses[j]);
  std::sort(t.s0.begin(), t.s0.end());
  std::sort(t.s1.begin(), t.s1.end());
  return t;
}

LatticeElement lattice_element(const MatchedDesign& design) {
  LatticeElement e;
  e.tables.reserve(design.num_sets());
  for (const auto& s : design.sets()) e.tables.push_back(stratum_table(s));
  return e;
}

namespace {

void check_compatible(const StratumTable& a, const StratumTable& b) {
  if (a.s1.size() != b.s1.size() || a.s0.size() != b.s0.size())
    throw DomainError("lattice operands have mismatched stratum shapes");
}

std::vector<double> all_doses(const StratumTable& t) {
  std::vector<double> all(t.s0);
  all.insert(all.end(), t.s1.begin(), t.s1.end());
  std::sort(all.begin(), all.end());
  return all;
}

StratumTable with_s1(const StratumTable& base, std::vector<double> s1) {
  const std::vector<double> all = all_doses(base);
  StratumTable out;
  std::set_difference(all.begin(), all.end(), s1.begin(), s1.end(), std::back_inserter(out.s0));
  if (out.s0.size() + s1.size() != all.size())
    throw DomainError("lattice operands do not share a dose multiset");
  out.s1 = std::move(s1);
  return out;
}

template <class Pick>
StratumTable combine(const StratumTable& a, const StratumTable& b, Pick pick) {
  check_compatible(a, b);
  if (all_doses(a) != all_doses(b)) throw DomainError("lattice operands do not share a dose multiset");
  std::vector<double> s1(a.s1.size());
  for (std::size_t k = 0; k < s1.size(); ++k) s1[k] = pick(a.s1[k], b.s1[k]);
  return with_s1(a, std::move(s1));
}

template <class Op>
LatticeElement combine_all(const LatticeElement& a, const LatticeElement& b, Op op) {
  if (a.tables.size() != b.tables.size()) throw DomainError("lattice operands have different set counts");
  LatticeElement out;
  out.tables.reserve(a.tables.size());
  for (std::size_t i = 0; i < a.tables.size(); ++i) out.tables.push_back(op(a.tables[i], b.tables[i]));
  return out;
}

}  // namespace

StratumTable join(const StratumTable& a, const StratumTable& b) {
  return combine(a, b, [](double x, double y) { return std::max(x, y); });
}

StratumTable meet(const StratumTable& a, const StratumTable& b) {
  return combine(a, b, [](double x, double y) { return std::min(x, y); });
}

bool leq(const StratumTable& a, const StratumTable& b) {
  check_compatible(a, b);
  for (std::size_t k = 0; k < a.s1.size(); ++k)
    if (a.s1[k] > b.s1[k]) return false;
  return true;
}

LatticeElement join(const LatticeElement& a, const LatticeElement& b) {
  return combine_all(a, b, [](const StratumTable& x, const StratumTable& y) { return join(x, y); });
}

LatticeElement meet(const LatticeElement& a, const LatticeElement& b) {
  return combine_all(a, b, [](const StratumTable& x, const StratumTable& y) { return meet(x, y); });
}

bool leq(const LatticeElement& a, const LatticeElement& b) {
  if (a.tables.size() != b.tables.size()) throw DomainError("lattice operands have different set counts");
  for (std::size_t i = 0; i < a.tables.size(); ++i)
    if (!leq(a.tables[i], b.tables[i])) return false;
  return true;
}

double sum_s1(const LatticeElement& e) {
  double total = 0.0;
  for (const auto& t : e.tables)
    for (double z : t.s1) total += z;
  return total;
}

DesignDiagnostics validate(const MatchedDesign& design, std::size_t enumeration_cap) {
  DesignDiagnostics d;
  d.enumeration_cap = enumeration_cap;
  d.num_sets = design.num_sets();
  d.num_units = design.num_units();
  for (const auto& s : design.sets()) {
    SetDiagnostics sd;
    sd.id = s.id;
    sd.size = s.size();
    sd.events = s.events();
    sd.concordant = s.concordant();
    sd.tied_doses = s.has_tied_doses();
    sd.enumerable = s.size() <= enumeration_cap;
    d.num_events += sd.events;
    d.num_concordant += sd.concordant ? 1 : 0;
    d.num_tied += sd.tied_doses ? 1 : 0;
    d.num_not_enumerable += sd.enumerable ? 0 : 1;
    d.sets.push_back(std::move(sd));
  }
  return d;
}

}  // namespace dosesens
