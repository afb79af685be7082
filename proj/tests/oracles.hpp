// Independent reference computations shared by the test suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sharpdim/linops.hpp"

namespace oracle {

inline Eigen::MatrixXd to_eigen(const sharpdim::DenseSymmetric& m) {
  Eigen::MatrixXd a(m.order, m.order);
  for (std::size_t i = 0; i < m.order; ++i)
    for (std::size_t j = 0; j < m.order; ++j) a(i, j) = m.entries[i * m.order + j];
  return a;
}

// Ascending eigenvalues via Eigen's dense solver.
inline std::vector<double> eigenvalues(const sharpdim::DenseSymmetric& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(m), Eigen::EigenvaluesOnly);
  const auto& v = es.eigenvalues();
  return {v.data(), v.data() + v.size()};
}

inline sharpdim::DenseSymmetric random_symmetric(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  sharpdim::DenseSymmetric m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = g(rng);
      m(i, j) = v;
      m(j, i) = v;
    }
  return m;
}

// O(n^2) Kendall tau-b by pair enumeration.
inline double kendall_brute(const std::vector<double>& x, const std::vector<double>& y) {
  long long c = 0, d = 0, tx = 0, ty = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++tx;
      } else if (dy == 0) {
        ++ty;
      } else if ((dx > 0) == (dy > 0)) {
        ++c;
      } else {
        ++d;
      }
    }
  return static_cast<double>(c - d) /
         std::sqrt(static_cast<double>(c + d + ty) * static_cast<double>(c + d + tx));
}

// Straight reading of the discrete formula: the largest j with a nonnegative
// prefix sum over all j, then linear interpolation into the next value.
inline double sd_scan(const std::vector<double>& desc) {
  const std::size_t d = desc.size();
  std::size_t j = 0;
  double s = 0.0, best = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    s += desc[k];
    if (s >= 0.0) {
      j = k + 1;
      best = s;
    }
  }
  if (j == 0) return 0.0;
  if (j == d) return static_cast<double>(d);
  return std::clamp(static_cast<double>(j) + best / std::abs(desc[j]), 0.0, static_cast<double>(d));
}

inline double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace oracle
