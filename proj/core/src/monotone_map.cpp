#include "dosesens/monotone_map.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "dosesens/error.hpp"

namespace dosesens {

namespace {

double parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError("bad number in monotone map: '" + s + "'");
  }
  return v;
}

}  // namespace

MonotoneMap::MonotoneMap(std::vector<std::pair<double, double>> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw DomainError("monotone map needs at least one knot");
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (!std::isfinite(knots_[k].first) || !std::isfinite(knots_[k].second)) {
      throw DomainError("monotone map knots must be finite");
    }
    if (k > 0) {
      if (knots_[k].first <= knots_[k - 1].first) {
        throw DomainError("monotone map knots must have strictly increasing x");
      }
      if (knots_[k].second < knots_[k - 1].second) {
        throw DomainError("monotone map must be nondecreasing");
      }
    }
  }
}

double MonotoneMap::operator()(double x) const {
  if (x <= knots_.front().first) return knots_.front().second;
  if (x >= knots_.back().first) return knots_.back().second;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x,
                             [](double v, const auto& k) { return v < k.first; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (x - lo.first) / (hi.first - lo.first);
  return lo.second + w * (hi.second - lo.second);
}

MonotoneMap MonotoneMap::parse(const std::string& text) {
  std::vector<std::pair<double, double>> knots;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    auto slash = item.find('/');
    if (slash == std::string::npos) throw ParseError("monotone map knot must be x/y: '" + item + "'");
    knots.emplace_back(parse_number(item.substr(0, slash)), parse_number(item.substr(slash + 1)));
  }
  return MonotoneMap(std::move(knots));
}

std::string MonotoneMap::to_string() const {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (k) out << ';';
    out << knots_[k].first << '/' << knots_[k].second;
  }
  return out.str();
}

}  // namespace dosesens
