#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dosesens {

// Nondecreasing piecewise-linear map given by knots (x_k, y_k) with strictly
// increasing x. Values left/right of the knot range take the end values.
class MonotoneMap {
 public:
  explicit MonotoneMap(std::vector<std::pair<double, double>> knots);

  double operator()(double x) const;
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

  // "x0/y0;x1/y1;..." as used in statistic and config strings.
  static MonotoneMap parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const MonotoneMap&, const MonotoneMap&) = default;

 private:
  std::vector<std::pair<double, double>> knots_;
};

}  // namespace dosesens
