#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dosesens {

/// One matched set: the doses actually received and the binary outcomes, in
/// file order. Unit j of the set is (doses[j], outcomes[j]).
struct MatchedSet {
  std::string id;
  std::vector<double> doses;
  std::vector<int> outcomes;

  std::size_t size() const { return doses.size(); }
  /// Number of units with outcome 1.
  std::size_t events() const;
  bool concordant() const;
  bool has_tied_doses() const;
};

/// Named real covariates, one row per unit in design order (set by set, unit
/// by unit). Missing cells are std::nullopt.
struct CovariateTable {
  std::vector<std::string> names;
  std::vector<std::vector<std::optional<double>>> rows;

  bool empty() const { return names.empty(); }
  /// Column `c` as a vector; throws DomainError when any cell is missing.
  std::vector<double> column(std::size_t c) const;
  bool column_complete(std::size_t c) const;
};

class MatchedDesign {
 public:
  MatchedDesign() = default;
  /// Validates every invariant: at least one set, unique ids, n_i >= 2,
  /// finite doses, outcomes in {0,1}, covariate rows matching the unit count.
  explicit MatchedDesign(std::vector<MatchedSet> sets,
                         std::optional<CovariateTable> covariates = std::nullopt);

  const std::vector<MatchedSet>& sets() const { return sets_; }
  const MatchedSet& set(std::size_t i) const { return sets_.at(i); }
  std::size_t num_sets() const { return sets_.size(); }
  std::size_t num_units() const { return num_units_; }
  const std::optional<CovariateTable>& covariates() const { return covariates_; }

  /// Offset of set i's first unit in the flattened unit order.
  std::size_t unit_offset(std::size_t i) const { return offsets_.at(i); }

  std::vector<double> all_doses() const;
  std::vector<int> all_outcomes() const;

 private:
  std::vector<MatchedSet> sets_;
  std::optional<CovariateTable> covariates_;
  std::vector<std::size_t> offsets_;
  std::size_t num_units_ = 0;
};

struct ParseOptions {
  /// Reject any set containing tied doses instead of accepting them.
  bool strict_ties = false;
};

/// Reads the design CSV format: header `set_id,dose,outcome[,<covariate>...]`.
/// Units are grouped by set_id in order of first appearance, preserving file
/// order within a set.
MatchedDesign parse_design(std::istream& in, const ParseOptions& options = {});
MatchedDesign parse_design_file(const std::string& path, const ParseOptions& options = {});

/// Writes the design back in the same CSV format (sets contiguous).
void write_design(std::ostream& out, const MatchedDesign& design);

/// The doses of a set split by outcome and sorted ascending.
struct StratumTable {
  std::vector<double> s0;
  std::vector<double> s1;

  friend bool operator==(const StratumTable&, const StratumTable&) = default;
};

StratumTable stratum_table(const MatchedSet& set);

/// Element of the product lattice over all matched sets.
struct LatticeElement {
  std::vector<StratumTable> tables;

  friend bool operator==(const LatticeElement&, const LatticeElement&) = default;
};

LatticeElement lattice_element(const MatchedDesign& design);

/// Stratum-level lattice operations. Both tables must describe the same dose
/// multiset with the same number of events; join/meet take the elementwise
/// max/min of s1 and recompute s0 as the complement.
StratumTable join(const StratumTable& a, const StratumTable& b);
StratumTable meet(const StratumTable& a, const StratumTable& b);
bool leq(const StratumTable& a, const StratumTable& b);

LatticeElement join(const LatticeElement& a, const LatticeElement& b);
LatticeElement meet(const LatticeElement& a, const LatticeElement& b);
bool leq(const LatticeElement& a, const LatticeElement& b);

/// Sum of every s1 entry across strata.
double sum_s1(const LatticeElement& e);

inline constexpr std::size_t kDefaultEnumerationCap = 10;

struct SetDiagnostics {
  std::string id;
  std::size_t size = 0;
  std::size_t events = 0;
  bool concordant = false;
  bool tied_doses = false;
  bool enumerable = true;
};

struct DesignDiagnostics {
  std::vector<SetDiagnostics> sets;
  std::size_t num_sets = 0;
  std::size_t num_units = 0;
  std::size_t num_events = 0;
  std::size_t num_concordant = 0;
  std::size_t num_tied = 0;
  std::size_t num_not_enumerable = 0;
  std::size_t enumeration_cap = kDefaultEnumerationCap;
};

DesignDiagnostics validate(const MatchedDesign& design,
                           std::size_t enumeration_cap = kDefaultEnumerationCap);

}  // namespace dosesens
