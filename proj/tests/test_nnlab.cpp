#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "oracles.hpp"
#include "sharpdim/nnlab.hpp"

using namespace sharpdim;
using namespace sharpdim::nn;

namespace {

Batch random_batch(std::size_t n, std::size_t in, std::size_t classes, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Batch b;
  b.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x.data()[i] = g(rng);
  for (std::size_t i = 0; i < n; ++i) b.y.push_back(static_cast<int>(rng() % classes));
  return b;
}

MlpModel random_model(std::vector<std::size_t> dims, bool bias, Activation a, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  auto m = MlpModel::glorot(std::move(dims), bias, a, rng);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& w : m.weights) w = scale * w + 0.1 * g(rng);
  return m;
}

std::vector<double> fd_grad(const MlpModel& m, const Batch& b, double h = 1e-6) {
  std::vector<double> g(m.param_count());
  MlpModel t = m;
  for (std::size_t i = 0; i < g.size(); ++i) {
    t.weights[i] = m.weights[i] + h;
    const double up = loss_only(t, b);
    t.weights[i] = m.weights[i] - h;
    const double dn = loss_only(t, b);
    t.weights[i] = m.weights[i];
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

std::vector<double> fd_hvp(const MlpModel& m, const Batch& b, const std::vector<double>& v, double h = 1e-5) {
  MlpModel up = m, dn = m;
  for (std::size_t i = 0; i < v.size(); ++i) {
    up.weights[i] += h * v[i];
    dn.weights[i] -= h * v[i];
  }
  const auto gu = loss_and_grad(up, b).grad, gd = loss_and_grad(dn, b).grad;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (gu[i] - gd[i]) / (2 * h);
  return out;
}

void write_be32(std::ofstream& f, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "sharpdim_test_nnlab";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("parameter counts") {
  const std::vector<std::size_t> small = {784, 16, 16, 10};
  CHECK(MlpModel::param_count_for(small, false) == 12960);
  const std::vector<std::size_t> big = {784, 200, 200, 200, 200, 10};
  CHECK(MlpModel::param_count_for(big, false) == 278800);
  const std::vector<std::size_t> b = {3, 4, 2};
  CHECK(MlpModel::param_count_for(b, true) == 3 * 4 + 4 + 4 * 2 + 2);
}

TEST_CASE("forward passes") {
  const auto z = MlpModel::zeros({3, 4, 2}, true, Activation::relu);
  CHECK(forward(z, std::vector<double>{1, 2, 3}) == std::vector<double>{0, 0});

  auto lin = MlpModel::zeros({1, 1}, false, Activation::relu);
  lin.weights = {2.0};
  CHECK(forward(lin, std::vector<double>{3.0}) == std::vector<double>{6.0});

  // 2-2-2 ReLU: h = relu(W1 x), out = W2 h.
  auto m = MlpModel::zeros({2, 2, 2}, false, Activation::relu);
  m.weights = {1, -1, 2, 1, /* W2 */ 1, 2, -1, 3};
  const auto out = forward(m, std::vector<double>{1.0, 2.0});
  // W1 x = (-1, 4) -> relu (0, 4); W2 h = (8, 12).
  CHECK(out == std::vector<double>{8.0, 12.0});
  CHECK_THROWS(forward(m, std::vector<double>{1.0}));
}

TEST_CASE("losses") {
  std::mt19937_64 rng(1);
  const auto z = MlpModel::zeros({5, 3, 4}, false, Activation::gelu);
  const auto b = random_batch(6, 5, 4, rng);
  CHECK(loss_only(z, b) == doctest::Approx(std::log(4.0)));

  const auto m = random_model({5, 3, 4}, true, Activation::gelu, 2);
  Batch one = random_batch(1, 5, 4, rng);
  Batch two;
  two.x.resize(2, 5);
  two.x.row(0) = one.x.row(0);
  two.x.row(1) = one.x.row(0);
  two.y = {one.y[0], one.y[0]};
  const auto a = loss_and_grad(m, one), c = loss_and_grad(m, two);
  CHECK(a.loss == doctest::Approx(c.loss).epsilon(1e-14));
  CHECK(oracle::rel_l2(c.grad, a.grad) < 1e-14);
}

TEST_CASE("gradient matches finite differences") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 5; ++t) {
    const auto m = random_model({4, 5, 3}, t % 2 == 0, Activation::gelu, 10 + t);
    const auto b = random_batch(7, 4, 3, rng);
    CHECK(oracle::rel_l2(loss_and_grad(m, b).grad, fd_grad(m, b)) < 1e-6);
  }
}

TEST_CASE("HVP: finite differences, linearity and zero") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int t = 0; t < 5; ++t) {
    const auto m = random_model({3, 4, 4, 2}, true, Activation::gelu, 20 + t);
    const auto b = random_batch(8, 3, 2, rng);
    std::vector<double> u(m.param_count()), v(m.param_count());
    for (auto& x : u) x = g(rng);
    for (auto& x : v) x = g(rng);
    CHECK(oracle::rel_l2(hvp(m, b, v), fd_hvp(m, b, v)) < 1e-5);

    std::vector<double> s(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) s[i] = u[i] + v[i];
    const auto hu = hvp(m, b, u), hv = hvp(m, b, v), hs = hvp(m, b, s);
    std::vector<double> sum(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) sum[i] = hu[i] + hv[i];
    CHECK(oracle::rel_l2(hs, sum) < 1e-10);

    const auto h0 = hvp(m, b, std::vector<double>(u.size(), 0.0));
    for (double x : h0) CHECK(x == 0.0);
  }
}

TEST_CASE("ReLU HVP away from kinks") {
  std::mt19937_64 rng(5);
  const auto m = random_model({4, 6, 3}, true, Activation::relu, 30);
  const auto b = random_batch(10, 4, 3, rng);
  std::vector<double> v(m.param_count());
  std::normal_distribution<double> g;
  for (auto& x : v) x = g(rng);
  CHECK(oracle::rel_l2(hvp(m, b, v), fd_hvp(m, b, v, 1e-6)) < 1e-5);
}

TEST_CASE("linear model Hessian matches the closed form") {
  std::mt19937_64 rng(6);
  const std::size_t in = 3, k = 4, n = 5;
  const auto m = random_model({in, k}, false, Activation::relu, 40);
  const auto b = random_batch(n, in, k, rng);
  // H[(a,i),(c,j)] = mean_s (p_a d_ac - p_a p_c) x_i x_j
  DenseSymmetric ref(in * k);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> x(in);
    for (std::size_t i = 0; i < in; ++i) x[i] = b.x(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i));
    auto logits = forward(m, x);
    double mx = *std::max_element(logits.begin(), logits.end()), z = 0.0;
    for (auto& l : logits) z += (l = std::exp(l - mx));
    for (auto& l : logits) l /= z;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t i = 0; i < in; ++i)
          for (std::size_t j = 0; j < in; ++j)
            ref(a * in + i, c * in + j) += ((a == c ? logits[a] : 0.0) - logits[a] * logits[c]) * x[i] * x[j] / n;
  }
  const auto h = exact_hessian(m, b);
  double err = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < h.entries.size(); ++i) {
    err = std::max(err, std::abs(h.entries[i] - ref.entries[i]));
    scale = std::max(scale, std::abs(ref.entries[i]));
  }
  CHECK(err <= 1e-8 * scale);
}

TEST_CASE("generic operators through the Hessian paths") {
  const auto one = make_scaled_identity(1);
  CHECK(sharpdim::apply(one, Vector{1.0}) == Vector{1.0});
  const auto quad = make_diagonal_operator({2, 4});
  CHECK(sharpdim::apply(quad, Vector{1, 1}) == Vector{2, 4});
  const auto h = assemble_hessian(quad);
  CHECK(h.entries == std::vector<double>{2, 0, 0, 4});

  SymmetricOperator skew(2, [](std::span<const double> in, std::span<double> out) {
    out[0] = in[1];
    out[1] = 0.0;
  });
  CHECK_THROWS(assemble_hessian(skew));
}

TEST_CASE("minibatch operator on a 2-4-2 net matches finite differences") {
  std::mt19937_64 rng(7);
  const auto m = random_model({2, 4, 2}, false, Activation::gelu, 50);
  const auto b = random_batch(8, 2, 2, rng);
  const auto op = minibatch_hessian_operator(m, b);
  CHECK(op.dim() == m.param_count());
  std::vector<double> v(op.dim());
  std::normal_distribution<double> g;
  for (auto& x : v) x = g(rng);
  CHECK(oracle::rel_l2(sharpdim::apply(op, v), fd_hvp(m, b, v)) < 1e-5);
  CHECK_THROWS(minibatch_hessian_operator(m, Batch{}));
}

TEST_CASE("exact Hessian eigenvalues on a 2-3-2 GELU net") {
  std::mt19937_64 rng(8);
  const auto m = random_model({2, 3, 2}, true, Activation::gelu, 60);
  const auto b = random_batch(6, 2, 2, rng);
  const auto h = exact_hessian(m, b);
  CHECK(check_symmetry(h));

  // Finite-difference Hessian from gradient differences.
  const std::size_t d = m.param_count();
  DenseSymmetric fd(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> e(d, 0.0);
    e[j] = 1.0;
    const auto col = fd_hvp(m, b, e);
    for (std::size_t i = 0; i < d; ++i) fd(i, j) = col[i];
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) fd(i, j) = fd(j, i) = 0.5 * (fd(i, j) + fd(j, i));
  const auto ours = symmetric_eigenvalues(h), ref = oracle::eigenvalues(fd);
  for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(ours[i] - ref[i]) < 1e-4);
}

TEST_CASE("exact Hessian size guard") {
  auto big = MlpModel::zeros({200, 101}, false, Activation::relu);
  Batch b;
  b.x = RowMatrix::Zero(1, 200);
  b.y = {0};
  CHECK_THROWS_WITH_AS(exact_hessian(big, b), doctest::Contains("SLQ"), std::invalid_argument);
}

TEST_CASE("SGD steps") {
  const auto data = synthetic_blobs(40, 3, 2, 9);
  auto m = random_model({3, 4, 2}, true, Activation::gelu, 70);
  const auto before = m.weights;
  OptimizerConfig cfg;
  cfg.eta = 0.0;
  cfg.batch_size = 8;
  Rng rng(1);
  OptimizerState st;
  sgd_epoch(m, data, cfg, rng, st);
  CHECK(m.weights == before);
  CHECK(st.steps == 5);

  // Full batch, no momentum or decay: plain gradient descent.
  cfg.eta = 0.1;
  cfg.batch_size = data.size();
  MlpModel gd = m;
  OptimizerState st2;
  for (int step = 0; step < 3; ++step) {
    sgd_epoch(m, data, cfg, rng, st2);
    const auto g = loss_and_grad(gd, full_batch(data)).grad;
    for (std::size_t i = 0; i < g.size(); ++i) gd.weights[i] -= 0.1 * g[i];
    CHECK(oracle::rel_l2(m.weights, gd.weights) < 1e-13);
  }

  // Weight decay enters as eta * wd * w.
  MlpModel wd = m, manual = m;
  cfg.weight_decay = 0.5;
  OptimizerState st3;
  sgd_epoch(wd, data, cfg, rng, st3);
  const auto g = loss_and_grad(manual, full_batch(data)).grad;
  for (std::size_t i = 0; i < g.size(); ++i) manual.weights[i] -= 0.1 * (g[i] + 0.5 * manual.weights[i]);
  CHECK(oracle::rel_l2(wd.weights, manual.weights) < 1e-13);
}

TEST_CASE("momentum accumulates velocity") {
  const auto data = synthetic_blobs(20, 3, 2, 10);
  auto m = random_model({3, 2}, false, Activation::relu, 71);
  MlpModel manual = m;
  OptimizerConfig cfg;
  cfg.eta = 0.05;
  cfg.batch_size = data.size();
  cfg.momentum = 0.9;
  Rng rng(2);
  OptimizerState st;
  std::vector<double> vel(m.param_count(), 0.0);
  for (int step = 0; step < 3; ++step) {
    sgd_epoch(m, data, cfg, rng, st);
    const auto g = loss_and_grad(manual, full_batch(data)).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      vel[i] = 0.9 * vel[i] + g[i];
      manual.weights[i] -= 0.05 * vel[i];
    }
  }
  CHECK(oracle::rel_l2(m.weights, manual.weights) < 1e-12);
}

TEST_CASE("training is deterministic and samples without replacement") {
  const auto data = synthetic_blobs(64, 4, 3, 11);
  OptimizerConfig cfg;
  cfg.batch_size = 10;
  auto run = [&] {
    Rng init(5), rng(6);
    auto m = MlpModel::glorot({4, 8, 3}, true, Activation::gelu, init);
    OptimizerState st;
    std::vector<std::vector<std::size_t>> trace;
    for (int e = 0; e < 3; ++e) sgd_epoch(m, data, cfg, rng, st, &trace);
    return std::pair{m.weights, trace};
  };
  const auto [w1, t1] = run();
  const auto [w2, t2] = run();
  CHECK(w1 == w2);
  CHECK(t1 == t2);
  CHECK(t1.size() == 3 * 7);
  for (const auto& idx : t1) {
    std::set<std::size_t> uniq(idx.begin(), idx.end());
    CHECK(uniq.size() == idx.size());
    CHECK(*uniq.rbegin() < 64);
  }
}

TEST_CASE("evaluation") {
  auto m = MlpModel::zeros({2, 2}, false, Activation::relu);
  m.weights = {1, 0, 0, 1};
  Dataset d;
  d.features.resize(3, 2);
  d.features << 2, 1, 0, 3, 5, 4;
  d.labels = {0, 0, 0};
  d.classes = 2;
  // Predictions 0, 1, 0 against labels 0, 0, 0.
  CHECK(evaluate(m, d).accuracy == doctest::Approx(2.0 / 3.0));
  d.labels = {0, 1, 0};
  CHECK(evaluate(m, d).accuracy == 1.0);

  const auto z = MlpModel::zeros({2, 5}, false, Activation::relu);
  d.classes = 5;
  CHECK(evaluate(z, d).loss == doctest::Approx(std::log(5.0)));
}

TEST_CASE("IDX loader") {
  const auto dir = temp_dir();
  const auto img = (dir / "img.idx").string(), lab = (dir / "lab.idx").string();
  {
    std::ofstream f(img, std::ios::binary);
    write_be32(f, 0x00000803);
    write_be32(f, 2);
    write_be32(f, 2);
    write_be32(f, 2);
    const unsigned char px[8] = {0, 255, 51, 102, 255, 0, 0, 255};
    f.write(reinterpret_cast<const char*>(px), 8);
  }
  {
    std::ofstream f(lab, std::ios::binary);
    write_be32(f, 0x00000801);
    write_be32(f, 2);
    const unsigned char l[2] = {7, 3};
    f.write(reinterpret_cast<const char*>(l), 2);
  }
  const auto d = load_mnist_idx(img, lab);
  CHECK(d.features.rows() == 2);
  CHECK(d.features.cols() == 4);
  CHECK(d.features(0, 1) == 1.0);
  CHECK(d.features(0, 2) == doctest::Approx(0.2));
  CHECK(d.features(0, 3) == doctest::Approx(0.4));
  CHECK(d.labels == std::vector<int>{7, 3});
  CHECK(d.classes == 10);

  const auto bad = (dir / "bad.idx").string();
  {
    std::ofstream f(bad, std::ios::binary);
    write_be32(f, 0x00000802);
    write_be32(f, 2);
  }
  CHECK_THROWS(load_mnist_idx(bad, lab));
  const auto short_lab = (dir / "short.idx").string();
  {
    std::ofstream f(short_lab, std::ios::binary);
    write_be32(f, 0x00000801);
    write_be32(f, 1);
    const unsigned char l[1] = {7};
    f.write(reinterpret_cast<const char*>(l), 1);
  }
  CHECK_THROWS(load_mnist_idx(img, short_lab));
}

TEST_CASE("modular addition data") {
  const auto [train, test] = modular_addition_dataset(97, 0.4, 0);
  CHECK(train.size() == 3763);
  CHECK(test.size() == 5646);
  CHECK(train.features.cols() == 194);

  const auto [tr5, te5] = modular_addition_dataset(5, 0.4, 3);
  CHECK(tr5.size() + te5.size() == 25);
  std::set<std::pair<int, int>> seen;
  for (const auto* d : {&tr5, &te5})
    for (std::size_t r = 0; r < d->size(); ++r) {
      int a = -1, b = -1;
      for (int j = 0; j < 5; ++j) {
        if (d->features(static_cast<Eigen::Index>(r), j) == 1.0) a = j;
        if (d->features(static_cast<Eigen::Index>(r), 5 + j) == 1.0) b = j;
      }
      CHECK(d->labels[r] == (a + b) % 5);
      seen.insert({a, b});
      if (a == 4 && b == 1) CHECK(d->labels[r] == 0);
    }
  CHECK(seen.size() == 25);
}

TEST_CASE("synthetic blobs") {
  const auto one = synthetic_blobs(30, 4, 1, 0);
  for (int l : one.labels) CHECK(l == 0);
  CHECK_THROWS(synthetic_blobs(0, 4, 2, 0));

  const auto data = synthetic_blobs(200, 2, 2, 12, 6.0);
  Rng rng(1);
  auto m = MlpModel::glorot({2, 2}, true, Activation::relu, rng);
  OptimizerConfig cfg;
  cfg.eta = 0.1;
  cfg.batch_size = 16;
  OptimizerState st;
  for (int e = 0; e < 300; ++e) sgd_epoch(m, data, cfg, rng, st);
  // Nearest class mean is the optimal linear rule for two isotropic blobs.
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(2, 2);
  Eigen::Vector2d counts = Eigen::Vector2d::Zero();
  for (std::size_t r = 0; r < data.labels.size(); ++r) {
    means.row(data.labels[r]) += data.features.row(static_cast<Eigen::Index>(r));
    counts[data.labels[r]] += 1.0;
  }
  for (int c = 0; c < 2; ++c) means.row(c) /= counts[c];
  double hits = 0.0;
  for (std::size_t r = 0; r < data.labels.size(); ++r) {
    const auto x = data.features.row(static_cast<Eigen::Index>(r));
    const int guess = (x - means.row(0)).squaredNorm() <= (x - means.row(1)).squaredNorm() ? 0 : 1;
    hits += guess == data.labels[r];
  }
  const double reference = hits / static_cast<double>(data.labels.size());
  CHECK(evaluate(m, data).accuracy >= reference - 0.03);
}

TEST_CASE("checkpoint round trip") {
  const auto m = random_model({3, 5, 2}, true, Activation::gelu, 80);
  const auto path = (temp_dir() / "m.bin").string();
  save_checkpoint(m, path);
  const auto back = load_checkpoint(path);
  CHECK(back.layer_dims == m.layer_dims);
  CHECK(back.use_bias);
  CHECK(back.activation == Activation::gelu);
  CHECK(back.weights == m.weights);
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTAMODEL";
  }
  CHECK_THROWS(load_checkpoint(path));
}
