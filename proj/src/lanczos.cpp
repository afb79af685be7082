#include "sharpdim/lanczos.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sharpdim {

namespace {

constexpr double kBreakdownTol = 1e-12;
constexpr int kMaxQlIterations = 100;

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void orthogonalize(const std::vector<Vector>& basis, std::span<double> w) {
  // Classical Gram-Schmidt: all projections from the same w, then subtract.
  std::vector<double> coeffs(basis.size());
  for (std::size_t k = 0; k < basis.size(); ++k) coeffs[k] = dot(basis[k], w);
  for (std::size_t k = 0; k < basis.size(); ++k) axpy(-coeffs[k], basis[k], w);
}

}  // namespace

LanczosResult lanczos_tridiagonalize(const SymmetricOperator& op, std::span<const double> probe,
                                     std::size_t m, bool full_reorth) {
  const std::size_t n = op.dim();
  if (probe.size() != n) throw std::invalid_argument("dim mismatch");
  if (m < 1 || m > n) throw std::invalid_argument("lanczos: step count must satisfy 1 <= m <= N");
  if (std::abs(norm2(probe) - 1.0) > 1e-12) throw std::invalid_argument("lanczos: probe must have unit norm");

  LanczosResult res;
  res.alpha.reserve(m);
  res.beta.reserve(m);
  std::vector<Vector> basis;
  if (full_reorth) basis.reserve(m);

  Vector q(probe.begin(), probe.end());
  Vector q_prev(n, 0.0);
  Vector w(n, 0.0);
  double beta_prev = 0.0;
  double scale = 0.0;

  for (std::size_t j = 0; j < m; ++j) {
    op.apply(q, w);
    const double a = dot(q, w);
    axpy(-a, q, w);
    if (j > 0) axpy(-beta_prev, q_prev, w);
    res.alpha.push_back(a);
    if (full_reorth) {
      basis.push_back(q);
      orthogonalize(basis, w);
      orthogonalize(basis, w);
    }
    const double b = norm2(w);
    scale = std::max(scale, std::abs(a) + b);
    res.steps_taken = j + 1;
    res.residual = b;
    if (j + 1 == m || b < kBreakdownTol * scale) break;

    res.beta.push_back(b);
    std::swap(q_prev, q);
    for (std::size_t i = 0; i < n; ++i) q[i] = w[i] / b;
    beta_prev = b;
  }
  if (full_reorth) res.basis = std::move(basis);
  return res;
}

TridiagEigen tridiag_eigendecompose(std::span<const double> alpha, std::span<const double> beta) {
  const std::size_t n = alpha.size();
  if (n == 0) throw std::invalid_argument("tridiag: empty diagonal");
  if (beta.size() + 1 != n) throw std::invalid_argument("tridiag: off-diagonal must have length n-1");
  for (double x : alpha)
    if (!std::isfinite(x)) throw std::invalid_argument("tridiag: non-finite input");
  for (double x : beta)
    if (!std::isfinite(x)) throw std::invalid_argument("tridiag: non-finite input");

  std::vector<double> d(alpha.begin(), alpha.end());
  std::vector<double> e(n, 0.0);
  std::copy(beta.begin(), beta.end(), e.begin());
  std::vector<double> z(n, 0.0);  // first row of the eigenvector matrix
  z[0] = 1.0;
  const double eps = std::numeric_limits<double>::epsilon();

  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd) break;
      }
      if (m != l) {
        if (++iter > kMaxQlIterations) throw std::runtime_error("tridiag: QL iteration did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        bool deflated = false;
        for (std::size_t ii = m; ii-- > l;) {
          double f = s * e[ii];
          const double b = c * e[ii];
          r = std::hypot(f, g);
          e[ii + 1] = r;
          if (r == 0.0) {
            d[ii + 1] -= p;
            e[m] = 0.0;
            deflated = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[ii + 1] - p;
          r = (d[ii] - g) * s + 2.0 * c * b;
          p = s * r;
          d[ii + 1] = g + p;
          g = c * r - b;
          f = z[ii + 1];
          z[ii + 1] = s * z[ii] + c * f;
          z[ii] = c * z[ii] - s * f;
        }
        if (deflated) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  TridiagEigen out;
  out.values.reserve(n);
  out.first_components.reserve(n);
  for (std::size_t k : order) {
    out.values.push_back(d[k]);
    out.first_components.push_back(z[k]);
  }
  return out;
}

QuadratureMeasure quadrature_from_lanczos(const LanczosResult& res) {
  auto eig = tridiag_eigendecompose(res.alpha, res.beta);
  QuadratureMeasure q;
  q.nodes = std::move(eig.values);
  q.weights.resize(q.nodes.size());
  for (std::size_t i = 0; i < q.nodes.size(); ++i) q.weights[i] = eig.first_components[i] * eig.first_components[i];
  return q;
}

}  // namespace sharpdim
