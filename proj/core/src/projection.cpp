#include "topopt/projection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace topopt::projection {

namespace {

double clamped_sum(std::span<const double> v, double lambda, double lo, double hi) {
  double s = 0.0;
  for (double x : v) s += std::clamp(x - lambda, lo, hi);
  return s;
}

void write_clamped(std::span<const double> v, double lambda, double lo, double hi,
                   std::span<double> out) {
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp(v[i] - lambda, lo, hi);
}

// sum(clamp(v - lambda)) is continuous and nonincreasing in lambda.
double bisect_lambda(std::span<const double> v, const SimplexBounds& b) {
  double lo = 0.0;
  double hi = *std::max_element(v.begin(), v.end()) - b.v_lo;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (clamped_sum(v, mid, b.v_lo, b.v_hi) > b.v_bar)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

} // namespace

void SimplexBounds::validate(std::size_t n) const {
  if (!(v_lo > 0.0 && v_lo < v_hi))
    throw std::invalid_argument("simplex bounds need 0 < v_lo < v_hi");
  const double dn = static_cast<double>(n);
  if (!(v_bar >= dn * v_lo && v_bar <= dn * v_hi))
    throw std::invalid_argument("simplex bounds infeasible: v_bar = " + std::to_string(v_bar) +
                                " outside [n*v_lo, n*v_hi] for n = " + std::to_string(n));
}

Vector project_box(std::span<const double> v, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("project_box needs lo < hi");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp(v[i], lo, hi);
  return out;
}

double project_simplex(std::span<const double> v, const SimplexBounds& bounds,
                       std::span<double> out) {
  bounds.validate(v.size());
  if (out.size() != v.size()) throw std::invalid_argument("project_simplex: output length");
  const double lo = bounds.v_lo;
  const double hi = bounds.v_hi;

  if (clamped_sum(v, 0.0, lo, hi) <= bounds.v_bar) {
    write_clamped(v, 0.0, lo, hi, out);
    return 0.0;
  }

  // Breakpoints: v_e - hi (element leaves the upper bound, slope -1) and
  // v_e - lo (element reaches the lower bound, slope +1).
  std::vector<std::pair<double, int>> nodes;
  nodes.reserve(2 * v.size());
  for (double x : v) {
    nodes.emplace_back(x - hi, -1);
    nodes.emplace_back(x - lo, +1);
  }
  std::sort(nodes.begin(), nodes.end());

  double lambda = -1.0;
  double slope = 0.0;
  double rhs = static_cast<double>(v.size()) * hi;
  double last = nodes.front().first;
  for (std::size_t i = 0; i < nodes.size();) {
    const double at = nodes[i].first;
    const double rhs_at = rhs + slope * (at - last);
    if (slope < 0.0 && rhs_at <= bounds.v_bar) {
      lambda = last + (rhs - bounds.v_bar) / (-slope);
      break;
    }
    rhs = rhs_at;
    last = at;
    // Coincident breakpoints are consumed together before the next test.
    for (; i < nodes.size() && nodes[i].first == at; ++i) slope += nodes[i].second;
  }
  if (lambda < 0.0) lambda = bisect_lambda(v, bounds);

  write_clamped(v, lambda, lo, hi, out);
  if (std::abs(sum(out) - bounds.v_bar) > 1e-7) {
    lambda = bisect_lambda(v, bounds);
    write_clamped(v, lambda, lo, hi, out);
  }
  return lambda;
}

Vector project_simplex(std::span<const double> v, const SimplexBounds& bounds) {
  Vector out(v.size());
  project_simplex(v, bounds, out);
  return out;
}

} // namespace topopt::projection
