#include "sharpdim/slq.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "sharpdim/csv.hpp"
#include "sharpdim/parallel.hpp"

namespace sharpdim {

double SpectralMeasure::total_mass() const {
  double s = 0.0;
  for (const auto& a : atoms) s += a.mass;
  return s;
}

Vector rademacher_probe(std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("rademacher_probe: n must be positive");
  const double c = 1.0 / std::sqrt(static_cast<double>(n));
  Vector v(n);
  for (auto& x : v) x = (rng() >> 63) ? c : -c;
  return v;
}

QuadratureMeasure slq_run(const SymmetricOperator& op, std::size_t steps, Rng& rng, bool full_reorth) {
  const Vector probe = rademacher_probe(op.dim(), rng);
  const std::size_t m = std::min(steps, op.dim());
  return quadrature_from_lanczos(lanczos_tridiagonalize(op, probe, m, full_reorth));
}

std::vector<QuadratureMeasure> slq_quadratures(const OperatorFactory& factory, const SlqConfig& cfg,
                                               std::size_t workers) {
  if (cfg.runs < 1 || cfg.steps < 1) throw std::invalid_argument("slq: runs and steps must be >= 1");
  std::vector<QuadratureMeasure> out(cfg.runs);
  std::vector<std::size_t> dims(cfg.runs, 0);
  parallel_for(cfg.runs, workers, [&](std::size_t i) {
    Rng rng = make_stream(cfg.seed, i);
    try {
      const SymmetricOperator op = factory(i, rng);
      dims[i] = op.dim();
      out[i] = slq_run(op, cfg.steps, rng, cfg.full_reorth);
    } catch (const std::exception& e) {
      throw std::runtime_error("slq run " + std::to_string(i) + ": " + e.what());
    }
  });
  for (std::size_t i = 1; i < dims.size(); ++i)
    if (dims[i] != dims[0]) throw std::runtime_error("slq run " + std::to_string(i) + ": operator dimension changed");
  return out;
}

SpectralMeasure pool_quadratures(const std::vector<QuadratureMeasure>& runs, std::size_t total_dim) {
  SpectralMeasure nu;
  nu.total_dim = total_dim;
  if (runs.empty()) return nu;
  const double scale = static_cast<double>(total_dim) / static_cast<double>(runs.size());
  for (const auto& q : runs)
    for (std::size_t l = 0; l < q.nodes.size(); ++l) nu.atoms.push_back({q.nodes[l], scale * q.weights[l]});
  return nu;
}

SpectralMeasure empirical_spectral_measure(const OperatorFactory& factory, const SlqConfig& cfg,
                                           std::size_t workers) {
  std::size_t dim = 0;
  OperatorFactory probe_dim = [&](std::size_t run, Rng& rng) {
    SymmetricOperator op = factory(run, rng);
    if (run == 0) dim = op.dim();
    return op;
  };
  auto runs = slq_quadratures(probe_dim, cfg, workers);
  return pool_quadratures(runs, dim);
}

double estimate_trace(const SpectralMeasure& nu) {
  double s = 0.0;
  for (const auto& a : nu.atoms) s += a.value * a.mass;
  return s;
}

double estimate_top_abs_eigenvalue(const SpectralMeasure& nu) {
  if (nu.atoms.empty()) throw std::invalid_argument("estimate_top_abs_eigenvalue: empty measure");
  double best = 0.0;
  for (const auto& a : nu.atoms) best = std::max(best, std::abs(a.value));
  return best;
}

void write_measure_csv(std::ostream& out, const SpectralMeasure& nu) {
  out << "value,mass\n";
  for (const auto& a : nu.atoms) out << format_double(a.value) << ',' << format_double(a.mass) << '\n';
}

}  // namespace sharpdim

namespace sharpdim {

double wasserstein1(const SpectralMeasure& a, const SpectralMeasure& b) {
  const double ma = a.total_mass(), mb = b.total_mass();
  if (!(ma > 0.0) || !(mb > 0.0)) throw std::invalid_argument("wasserstein1: measures must have positive mass");
  struct Event {
    double x;
    double da;
    double db;
  };
  std::vector<Event> ev;
  ev.reserve(a.atoms.size() + b.atoms.size());
  for (const auto& t : a.atoms) ev.push_back({t.value, t.mass / ma, 0.0});
  for (const auto& t : b.atoms) ev.push_back({t.value, 0.0, t.mass / mb});
  std::sort(ev.begin(), ev.end(), [](const Event& l, const Event& r) { return l.x < r.x; });
  double fa = 0.0, fb = 0.0, w = 0.0;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    fa += ev[i].da;
    fb += ev[i].db;
    w += std::abs(fa - fb) * (ev[i + 1].x - ev[i].x);
  }
  return w;
}

}  // namespace sharpdim
