#include "topopt/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace topopt::krylov {

Vector householder_lstsq(std::span<double> columns, std::size_t rows, std::size_t cols,
                         std::span<const double> rhs, double drop_tol, int* rank) {
  if (columns.size() != rows * cols || rhs.size() != rows)
    throw std::invalid_argument("householder_lstsq: dimension mismatch");
  Vector y(rhs.begin(), rhs.end());
  Vector col_norm(cols);
  for (std::size_t j = 0; j < cols; ++j)
    col_norm[j] = norm2(columns.subspan(j * rows, rows));

  std::vector<std::size_t> kept;
  Vector diag;
  std::size_t k = 0;  // next pivot row
  for (std::size_t j = 0; j < cols && k < rows; ++j) {
    double* a = columns.data() + j * rows;
    double s = 0.0;
    for (std::size_t i = k; i < rows; ++i) s += a[i] * a[i];
    const double nrm = std::sqrt(s);
    if (!(nrm > drop_tol * col_norm[j])) continue;

    const double alpha = a[k] > 0.0 ? -nrm : nrm;
    // v = a[k:] - alpha e_k, stored in place; v^T v = 2 nrm (nrm + |a_k|).
    a[k] -= alpha;
    const double vtv = 2.0 * nrm * (nrm + std::abs(a[k] + alpha));
    auto reflect = [&](double* x) {
      double d = 0.0;
      for (std::size_t i = k; i < rows; ++i) d += a[i] * x[i];
      const double scale = 2.0 * d / vtv;
      for (std::size_t i = k; i < rows; ++i) x[i] -= scale * a[i];
    };
    for (std::size_t j2 = j + 1; j2 < cols; ++j2) reflect(columns.data() + j2 * rows);
    reflect(y.data());

    kept.push_back(j);
    diag.push_back(alpha);
    ++k;
  }

  // Back substitution on the kept columns: R[r][c] lives in column kept[c], row r.
  const std::size_t r_dim = kept.size();
  Vector d_kept(r_dim, 0.0);
  for (std::size_t r = r_dim; r-- > 0;) {
    double s = y[r];
    for (std::size_t c = r + 1; c < r_dim; ++c) s -= columns[kept[c] * rows + r] * d_kept[c];
    d_kept[r] = s / diag[r];
  }
  Vector coeffs(cols, 0.0);
  for (std::size_t c = 0; c < r_dim; ++c) coeffs[kept[c]] = d_kept[c];
  if (rank) *rank = static_cast<int>(r_dim);
  return coeffs;
}

KrylovPreconditioner::KrylovPreconditioner(int dim, double drop_tol)
    : dim_(dim), drop_tol_(drop_tol) {
  if (dim < 1) throw std::invalid_argument("Krylov dimension must be >= 1");
}

ApplyInfo KrylovPreconditioner::apply(const fea::GridModel& grid,
                                      std::span<const double> activation,
                                      std::span<const double> b, std::span<double> out) {
  const std::size_t n = grid.num_dofs();
  if (b.size() != n || out.size() != n)
    throw std::invalid_argument("krylov apply: vector length must be 2N");
  std::fill(out.begin(), out.end(), 0.0);

  const double nb = norm2(b);
  if (nb == 0.0) return {};

  const std::size_t m_max = static_cast<std::size_t>(dim_) + 1;
  basis_.resize((m_max + 1) * n);
  Vector scale(m_max + 1, 0.0);  // scale[j] = ||K p_{j-1}||

  auto p = [&](std::size_t j) { return std::span<double>(basis_.data() + j * n, n); };
  for (std::size_t i = 0; i < n; ++i) basis_[i] = b[i] / nb;

  std::size_t m = 0;
  for (std::size_t j = 1; j <= m_max; ++j) {
    auto next = p(j);
    fea::apply_stiffness(grid, activation, p(j - 1), next);
    const double nj = norm2(next);
    if (!(nj > 0.0) || !std::isfinite(nj)) break;
    for (double& x : next) x /= nj;
    scale[j] = nj;
    m = j;
  }
  if (m == 0) return {};

  work_.assign(basis_.begin() + static_cast<std::ptrdiff_t>(n),
               basis_.begin() + static_cast<std::ptrdiff_t>((m + 1) * n));
  int rank = 0;
  const Vector d = householder_lstsq(work_, n, m, p(0), drop_tol_, &rank);

  // K x = nb * sum_j d_j p_j  with  x = nb * sum_j d_j p_{j-1} / n_j.
  for (std::size_t j = 1; j <= m; ++j) {
    if (d[j - 1] == 0.0) continue;
    axpy(nb * d[j - 1] / scale[j], p(j - 1), out);
  }
  return {static_cast<int>(m), rank};
}

Vector krylov_apply(const fea::GridModel& grid, std::span<const double> activation,
                    std::span<const double> b, int dim) {
  KrylovPreconditioner pre(dim);
  Vector out(b.size());
  pre.apply(grid, activation, b, out);
  return out;
}

} // namespace topopt::krylov
