#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sharpdim {

using Vector = std::vector<double>;

/// Row-major dense symmetric matrix. Used as a test oracle and for small
/// exact Hessians; estimators never require dense storage.
struct DenseSymmetric {
  std::size_t order = 0;
  std::vector<double> entries;  // order * order, row-major

  DenseSymmetric() = default;
  explicit DenseSymmetric(std::size_t n) : order(n), entries(n * n, 0.0) {}
  DenseSymmetric(std::size_t n, std::vector<double> values);

  static DenseSymmetric identity(std::size_t n);
  static DenseSymmetric diagonal(std::span<const double> diag);

  double& operator()(std::size_t i, std::size_t j) { return entries[i * order + j]; }
  double operator()(std::size_t i, std::size_t j) const { return entries[i * order + j]; }
};

/// Matrix-free symmetric operator: only the order and the action v -> A v
/// are exposed. `apply` must not mutate shared state so that one operator
/// can be applied from several threads.
class SymmetricOperator {
 public:
  using ApplyFn = std::function<void(std::span<const double>, std::span<double>)>;

  SymmetricOperator(std::size_t dim, ApplyFn fn);

  std::size_t dim() const noexcept { return dim_; }

  /// out = A v. Throws std::invalid_argument("dim mismatch") on size errors.
  void apply(std::span<const double> v, std::span<double> out) const;
  Vector apply(std::span<const double> v) const;

 private:
  std::size_t dim_;
  ApplyFn fn_;
};

Vector apply(const SymmetricOperator& op, std::span<const double> v);

SymmetricOperator make_dense_operator(DenseSymmetric m);
SymmetricOperator make_diagonal_operator(std::vector<double> diag);
SymmetricOperator make_scaled_identity(std::size_t n, double c = 1.0);

/// True iff max |m_ij - m_ji| <= 1e-10 * max |m|.
bool check_symmetry(const DenseSymmetric& m);

/// Largest asymmetry max |m_ij - m_ji|.
double max_asymmetry(const DenseSymmetric& m);

/// Assembles the dense matrix column by column (N applications).
DenseSymmetric assemble_dense(const SymmetricOperator& op);

/// Random-probe symmetry test: worst |u'Av - v'Au| / (|u||v| |Au|/|u|) over
/// `probes` random Gaussian pairs.
double probe_asymmetry(const SymmetricOperator& op, std::size_t probes, std::uint64_t seed);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace sharpdim
