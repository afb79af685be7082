#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sharpdim/linops.hpp"

namespace sharpdim {

struct LanczosResult {
  std::size_t steps_taken = 0;
  std::vector<double> alpha;  // diagonal of T, size steps_taken
  std::vector<double> beta;   // off-diagonal of T, size steps_taken - 1, all >= 0
  double residual = 0.0;      // norm of the last (discarded) Krylov residual
  /// Orthonormal Lanczos vectors (steps_taken of length N); kept only when
  /// full reorthogonalization is enabled.
  std::optional<std::vector<Vector>> basis;
};

/// Gauss quadrature rule induced by a Lanczos run: Ritz values (ascending)
/// and squared first components of the Ritz vectors.
struct QuadratureMeasure {
  std::vector<double> nodes;
  std::vector<double> weights;
};

struct TridiagEigen {
  std::vector<double> values;            // ascending
  std::vector<double> first_components;  // first entry of each orthonormal eigenvector
};

/// Runs m steps of the symmetric Lanczos recurrence from a unit probe.
/// With `full_reorth` each new vector is orthogonalized twice against every
/// stored basis vector (classical Gram-Schmidt, two passes). Stops early when
/// the residual falls below 1e-12 times the running max of |alpha| + beta.
LanczosResult lanczos_tridiagonalize(const SymmetricOperator& op, std::span<const double> probe,
                                     std::size_t m, bool full_reorth = true);

/// Implicit-shift QL on a symmetric tridiagonal pair, accumulating only the
/// first row of the eigenvector matrix.
TridiagEigen tridiag_eigendecompose(std::span<const double> alpha, std::span<const double> beta);

QuadratureMeasure quadrature_from_lanczos(const LanczosResult& res);

}  // namespace sharpdim
