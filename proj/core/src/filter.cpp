#include "topopt/filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace topopt::filter {

namespace {

void check(std::span<const double> field, int nx, int ny) {
  if (nx < 1 || ny < 1 || field.size() != static_cast<std::size_t>(nx) * ny)
    throw std::invalid_argument("filter: field length " + std::to_string(field.size()) +
                                " does not match " + std::to_string(nx) + "x" +
                                std::to_string(ny));
}

// One truncated, renormalized 1-D pass along a line of `len` samples spaced
// `stride` apart. Forward: out[i] = sum_k w[i-k+c] in[k] / norm[i].
// Transposed: out[k] = sum_i w[i-k+c] in[i] / norm[i].
void pass_1d(const double* in, double* out, int len, std::ptrdiff_t stride,
             const Vector& w, bool transpose) {
  const int c = static_cast<int>(w.size()) / 2;
  for (int i = 0; i < len; ++i) out[i * stride] = 0.0;
  for (int i = 0; i < len; ++i) {
    const int lo = std::max(0, i - c);
    const int hi = std::min(len - 1, i + c);
    double norm = 0.0;
    for (int k = lo; k <= hi; ++k) norm += w[static_cast<std::size_t>(k - i + c)];
    if (!transpose) {
      double s = 0.0;
      for (int k = lo; k <= hi; ++k) s += w[static_cast<std::size_t>(k - i + c)] * in[k * stride];
      out[i * stride] = s / norm;
    } else {
      const double scaled = in[i * stride] / norm;
      for (int k = lo; k <= hi; ++k)
        out[k * stride] += w[static_cast<std::size_t>(k - i + c)] * scaled;
    }
  }
}

void pass_x(std::span<const double> in, std::span<double> out, int nx, int ny, const Vector& w,
            bool transpose) {
  for (int r = 0; r < ny; ++r)
    pass_1d(in.data() + static_cast<std::ptrdiff_t>(r) * nx,
            out.data() + static_cast<std::ptrdiff_t>(r) * nx, nx, 1, w, transpose);
}

void pass_y(std::span<const double> in, std::span<double> out, int nx, int ny, const Vector& w,
            bool transpose) {
  for (int col = 0; col < nx; ++col)
    pass_1d(in.data() + col, out.data() + col, ny, nx, w, transpose);
}

} // namespace

void FilterSpec::validate() const {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("filter size must be odd and >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("filter sigma must be > 0");
}

Vector gaussian_weights(const FilterSpec& spec) {
  spec.validate();
  const int c = spec.size / 2;
  Vector w(static_cast<std::size_t>(spec.size));
  double total = 0.0;
  for (int i = 0; i < spec.size; ++i) {
    const double d = i - c;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * spec.sigma * spec.sigma));
  }
  // Sum symmetric pairs outward-in so w[i] == w[size-1-i] stays exact.
  for (int i = 0; i < c; ++i) total += 2.0 * w[static_cast<std::size_t>(i)];
  total += w[static_cast<std::size_t>(c)];
  for (double& x : w) x /= total;
  return w;
}

Vector apply_filter(std::span<const double> field, int nx, int ny, const FilterSpec& spec) {
  check(field, nx, ny);
  const Vector w = gaussian_weights(spec);
  Vector tmp(field.size()), out(field.size());
  pass_x(field, tmp, nx, ny, w, false);
  pass_y(tmp, out, nx, ny, w, false);
  // Rounding can leave a convex combination an ulp outside the input range.
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  for (double& x : out) x = std::clamp(x, *lo, *hi);
  return out;
}

Vector apply_filter_adjoint(std::span<const double> field, int nx, int ny,
                            const FilterSpec& spec) {
  check(field, nx, ny);
  const Vector w = gaussian_weights(spec);
  Vector tmp(field.size()), out(field.size());
  pass_y(field, tmp, nx, ny, w, true);
  pass_x(tmp, out, nx, ny, w, true);
  return out;
}

} // namespace topopt::filter
