#include "sharpdim/linops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sharpdim/rng.hpp"

namespace sharpdim {

DenseSymmetric::DenseSymmetric(std::size_t n, std::vector<double> values)
    : order(n), entries(std::move(values)) {
  if (entries.size() != n * n) throw std::invalid_argument("dim mismatch");
}

DenseSymmetric DenseSymmetric::identity(std::size_t n) {
  DenseSymmetric m(n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseSymmetric DenseSymmetric::diagonal(std::span<const double> diag) {
  DenseSymmetric m(diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

SymmetricOperator::SymmetricOperator(std::size_t dim, ApplyFn fn) : dim_(dim), fn_(std::move(fn)) {
  if (dim_ == 0) throw std::invalid_argument("operator dimension must be positive");
}

void SymmetricOperator::apply(std::span<const double> v, std::span<double> out) const {
  if (v.size() != dim_ || out.size() != dim_) throw std::invalid_argument("dim mismatch");
  fn_(v, out);
}

Vector SymmetricOperator::apply(std::span<const double> v) const {
  Vector out(dim_, 0.0);
  apply(v, out);
  return out;
}

Vector apply(const SymmetricOperator& op, std::span<const double> v) { return op.apply(v); }

SymmetricOperator make_dense_operator(DenseSymmetric m) {
  const std::size_t n = m.order;
  return SymmetricOperator(n, [m = std::move(m)](std::span<const double> v, std::span<double> out) {
    const std::size_t n = m.order;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = m.entries.data() + i * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += row[j] * v[j];
      out[i] = acc;
    }
  });
}

SymmetricOperator make_diagonal_operator(std::vector<double> diag) {
  const std::size_t n = diag.size();
  return SymmetricOperator(n, [d = std::move(diag)](std::span<const double> v, std::span<double> out) {
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] * v[i];
  });
}

SymmetricOperator make_scaled_identity(std::size_t n, double c) {
  return SymmetricOperator(n, [c](std::span<const double> v, std::span<double> out) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = c * v[i];
  });
}

double max_asymmetry(const DenseSymmetric& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.order; ++i)
    for (std::size_t j = i + 1; j < m.order; ++j) worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
  return worst;
}

bool check_symmetry(const DenseSymmetric& m) {
  double scale = 0.0;
  for (double x : m.entries) scale = std::max(scale, std::abs(x));
  return max_asymmetry(m) <= 1e-10 * scale;
}

DenseSymmetric assemble_dense(const SymmetricOperator& op) {
  const std::size_t n = op.dim();
  DenseSymmetric m(n);
  Vector e(n, 0.0), col(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    op.apply(e, col);
    e[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) m(i, j) = col[i];
  }
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double probe_asymmetry(const SymmetricOperator& op, std::size_t probes, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss;
  const std::size_t n = op.dim();
  Vector u(n), v(n), au(n), av(n);
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    for (auto& x : u) x = gauss(rng);
    for (auto& x : v) x = gauss(rng);
    op.apply(u, au);
    op.apply(v, av);
    const double nu = norm2(u);
    const double scale = nu * norm2(v) * (norm2(au) / nu);
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(dot(u, av) - dot(v, au)) / scale);
  }
  return worst;
}

}  // namespace sharpdim
