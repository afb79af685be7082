#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sharpdim/linops.hpp"

using namespace sharpdim;

TEST_CASE("apply on small operators") {
  const Vector v3 = {1, 2, 3};
  CHECK(sharpdim::apply(make_scaled_identity(3), v3) == v3);
  CHECK(sharpdim::apply(make_diagonal_operator({1, 3}), Vector{1, 1}) == Vector{1, 3});
  DenseSymmetric m(2, {2, 1, 1, 2});
  CHECK(sharpdim::apply(make_dense_operator(m), Vector{1, -1}) == Vector{1, -1});
}

TEST_CASE("apply rejects wrong length") {
  auto op = make_scaled_identity(3);
  CHECK_THROWS_AS(sharpdim::apply(op, Vector{1, 2}), std::invalid_argument);
}

TEST_CASE("check_symmetry") {
  CHECK(check_symmetry(DenseSymmetric(2, {1, 2, 2, 1})));
  CHECK_FALSE(check_symmetry(DenseSymmetric(2, {1, 2, 3, 1})));
  CHECK(check_symmetry(DenseSymmetric(3)));
}

TEST_CASE("random-probe symmetry and linearity on dense operators") {
  std::mt19937_64 rng(7);
  const auto m = oracle::random_symmetric(30, rng);
  const auto op = make_dense_operator(m);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    Vector u(30), v(30);
    for (auto& x : u) x = g(rng);
    for (auto& x : v) x = g(rng);
    const auto au = sharpdim::apply(op, u), av = sharpdim::apply(op, v);
    const double lhs = std::abs(dot(u, av) - dot(v, au));
    CHECK(lhs <= 1e-8 * norm2(u) * norm2(v) * (norm2(au) / norm2(u)));

    const double a = g(rng), b = g(rng);
    Vector w(30);
    for (std::size_t i = 0; i < 30; ++i) w[i] = a * u[i] + b * v[i];
    const auto aw = sharpdim::apply(op, w);
    Vector expect(30);
    for (std::size_t i = 0; i < 30; ++i) expect[i] = a * au[i] + b * av[i];
    CHECK(oracle::rel_l2(aw, expect) < 1e-10);
  }
  CHECK(probe_asymmetry(op, 50, 3) < 1e-12);
}

TEST_CASE("apply is deterministic") {
  std::mt19937_64 rng(1);
  const auto op = make_dense_operator(oracle::random_symmetric(17, rng));
  Vector v(17, 0.25);
  CHECK(sharpdim::apply(op, v) == sharpdim::apply(op, v));
}

TEST_CASE("assemble_dense recovers the matrix") {
  std::mt19937_64 rng(2);
  const auto m = oracle::random_symmetric(9, rng);
  const auto back = assemble_dense(make_dense_operator(m));
  CHECK(back.entries == m.entries);
  CHECK(max_asymmetry(back) == 0.0);
}

TEST_CASE("probe_asymmetry flags a nonsymmetric apply") {
  SymmetricOperator op(2, [](std::span<const double> in, std::span<double> out) {
    out[0] = in[0] + 2 * in[1];
    out[1] = 3 * in[0] + in[1];
  });
  CHECK(probe_asymmetry(op, 10, 0) > 1e-3);
}
