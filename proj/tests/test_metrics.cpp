#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sharpdim/metrics.hpp"

using namespace sharpdim;

namespace {

RunRecord record(double eta, double bs, std::map<std::string, double> measures, double train_acc = 1.0,
                 double test_acc = 0.5) {
  RunRecord r;
  r.run_id = "r" + std::to_string(eta) + "_" + std::to_string(bs);
  r.hyperparams = {{"eta", eta}, {"batch_size", bs}, {"weight_decay", 0.0}, {"momentum", 0.0}, {"seed", 0.0}};
  r.train_loss = 0.1;
  r.test_loss = 0.2;
  r.train_acc = train_acc;
  r.test_acc = test_acc;
  r.measures = std::move(measures);
  return r;
}

std::vector<double> tied_vector(std::mt19937_64& rng, std::size_t n, int levels) {
  std::uniform_int_distribution<int> u(0, levels - 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng) * 0.5;
  return v;
}

}  // namespace

TEST_CASE("generalization gaps") {
  RunRecord r;
  r.train_acc = 0.9;
  r.test_acc = 0.9;
  r.train_loss = 0.1;
  r.test_loss = 0.9;
  CHECK(generalization_gap(r).acc_gap == 0.0);
  CHECK(generalization_gap(r).loss_gap == doctest::Approx(0.8));
  r.train_acc = 1.0;
  r.test_acc = 0.6;
  CHECK(generalization_gap(r).acc_gap == doctest::Approx(0.4));
  r.test_acc.reset();
  CHECK_THROWS(generalization_gap(r));
}

TEST_CASE("Kendall tau examples") {
  const std::vector<double> a = {1, 2, 3}, b = {3, 2, 1};
  CHECK(*kendall_tau(a, a) == 1.0);
  CHECK(*kendall_tau(a, b) == -1.0);
  const std::vector<double> x = {1, 2, 3, 4}, y = {1, 3, 2, 4};
  CHECK(*kendall_tau(x, y) == doctest::Approx(4.0 / 6.0));
  const std::vector<double> flat = {2, 2, 2};
  CHECK_FALSE(kendall_tau(flat, a).has_value());
  CHECK_THROWS(kendall_tau(x, a));
}

TEST_CASE("Kendall tau equals brute force exactly") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng() % 499;
    const auto x = tied_vector(rng, n, 2 + static_cast<int>(rng() % 20));
    const auto y = tied_vector(rng, n, 2 + static_cast<int>(rng() % 20));
    const auto fast = kendall_tau(x, y);
    REQUIRE(fast.has_value());
    CHECK(*fast == oracle::kendall_brute(x, y));
  }
}

TEST_CASE("Kendall tau symmetry and rank invariance") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(60), y(60), ex(60);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng);
    for (std::size_t i = 0; i < 60; ++i) ex[i] = std::exp(x[i]);
    CHECK(*kendall_tau(x, y) == *kendall_tau(y, x));
    CHECK(*kendall_tau(x, y) == *kendall_tau(ex, y));
  }
}

TEST_CASE("granulated coefficients") {
  std::vector<RunRecord> grid;
  for (double eta : {0.01, 0.02, 0.05, 0.1, 0.2})
    for (double bs : {16.0, 32.0, 64.0, 128.0, 256.0}) {
      const double v = std::log(eta) * 3.0 - std::log(bs);
      grid.push_back(record(eta, bs, {{"m", v}, {"t", v}}));
    }
  CHECK(granulated_kendall(grid, "m", "t", "eta") == 1.0);
  CHECK(granulated_kendall(grid, "m", "t", "batch_size") == 1.0);

  // Measure constant along eta in every group.
  std::vector<RunRecord> flat;
  for (double eta : {0.1, 0.2})
    for (double bs : {16.0, 32.0}) flat.push_back(record(eta, bs, {{"m", bs}, {"t", eta + bs}}));
  CHECK_THROWS(granulated_kendall(flat, "m", "t", "eta"));

  // 2x2 by hand: along eta, group bs=16 has tau +1, group bs=32 has tau -1.
  std::vector<RunRecord> hand = {record(0.1, 16, {{"m", 1}, {"t", 1}}), record(0.2, 16, {{"m", 2}, {"t", 5}}),
                                 record(0.1, 32, {{"m", 3}, {"t", 4}}), record(0.2, 32, {{"m", 4}, {"t", 2}})};
  CHECK(granulated_kendall(hand, "m", "t", "eta") == 0.0);
  // Along batch size: eta=0.1 (1,1),(3,4) -> +1; eta=0.2 (2,5),(4,2) -> -1.
  CHECK(granulated_kendall(hand, "m", "t", "batch_size") == 0.0);
}

TEST_CASE("planted per-axis monotonicity") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::vector<RunRecord> grid;
  for (double bs : {16.0, 32.0, 64.0, 128.0, 256.0}) {
    // A batch-size offset scrambles the global ordering; inside each slice
    // the target rises with eta.
    const double offset = 10.0 * g(rng);
    for (double eta : {0.01, 0.02, 0.05, 0.1, 0.2})
      grid.push_back(record(eta, bs, {{"m", eta}, {"t", offset + eta}}));
  }
  CHECK(granulated_kendall(grid, "m", "t", "eta") == 1.0);
  std::vector<double> ms, ts;
  for (const auto& r : grid) {
    ms.push_back(r.measures.at("m"));
    ts.push_back(r.measures.at("t"));
  }
  CHECK(*kendall_tau(ms, ts) < 1.0);
}

TEST_CASE("psi equals tau when only one axis varies") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g;
  std::vector<RunRecord> line;
  std::vector<double> xs, ys;
  for (double eta : {0.01, 0.02, 0.03, 0.04, 0.05, 0.06}) {
    const double m = g(rng), t = g(rng);
    line.push_back(record(eta, 32, {{"m", m}, {"t", t}}));
    xs.push_back(m);
    ys.push_back(t);
  }
  CHECK(granulated_kendall(line, "m", "t", "eta") == *kendall_tau(xs, ys));
}

TEST_CASE("correlation matrix") {
  std::vector<RunRecord> grid;
  for (double eta : {0.1, 0.2, 0.3})
    for (double bs : {16.0, 32.0, 64.0}) {
      const double t = eta * 7 + bs;
      grid.push_back(record(eta, bs, {{"same", t}, {"neg", -t}, {"target", t}}));
    }
  const auto cells = correlation_matrix(grid, {"same", "neg"}, {"target"});
  REQUIRE(cells.size() == 2);
  CHECK(*cells[0].tau == 1.0);
  CHECK(*cells[0].avg_psi == 1.0);
  CHECK(cells[0].psi.count("weight_decay") == 0);
  CHECK(*cells[1].tau == -1.0);

  std::ostringstream out;
  write_correlation_csv(out, cells);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "measure,target,tau,psi_lr,psi_bs,psi_wd,avg_psi");
  CHECK(row == "same,target,1,1,1,,1");

  CHECK_THROWS(correlation_matrix(grid, {"missing"}, {"target"}));
}

TEST_CASE("correlation matrix on a noisy 25-record fixture matches brute force") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::vector<RunRecord> grid;
  std::vector<double> ms, gaps;
  for (double eta : {0.01, 0.02, 0.05, 0.1, 0.2})
    for (double bs : {16.0, 32.0, 64.0, 128.0, 256.0}) {
      const double m = eta / bs + 1e-4 * g(rng);
      const double test_acc = 0.5 + 0.1 * std::round(10 * g(rng)) / 10;
      grid.push_back(record(eta, bs, {{"m", m}}, 1.0, test_acc));
      ms.push_back(m);
      gaps.push_back(std::abs(1.0 - test_acc));
    }
  const auto cells = correlation_matrix(grid, {"m"}, {"acc_gap"});
  CHECK(*cells[0].tau == oracle::kendall_brute(ms, gaps));
}

TEST_CASE("runs table round trip") {
  std::vector<RunRecord> recs = {record(0.1, 32, {{"sd_slq", 3.5}}), record(0.2, 64, {{"sd_slq", 1.25}})};
  const auto table = records_to_table(recs);
  CHECK(table.header[0] == "run_id");
  CHECK(table.rows[0][table.column("acc_gap")] == "0.5");
  const auto back = records_from_table(table);
  REQUIRE(back.size() == 2);
  CHECK(back[1].hyperparams.at("batch_size") == 64.0);
  CHECK(back[1].measures.at("sd_slq") == 1.25);
  CHECK(*back[0].value("acc_gap") == 0.5);
}
