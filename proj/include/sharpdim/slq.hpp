#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "sharpdim/lanczos.hpp"
#include "sharpdim/linops.hpp"
#include "sharpdim/rng.hpp"

namespace sharpdim {

struct Atom {
  double value = 0.0;
  double mass = 0.0;
};

/// Weighted atomic measure on the real line with total mass N.
struct SpectralMeasure {
  std::vector<Atom> atoms;
  std::size_t total_dim = 0;

  double total_mass() const;
};

struct SlqConfig {
  std::size_t runs = 500;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  bool full_reorth = true;
};

/// Produces the operator for one SLQ run. The generator is the run's private
/// stream (e.g. for drawing a minibatch); the probe is drawn from the same
/// stream afterwards.
using OperatorFactory = std::function<SymmetricOperator(std::size_t run, Rng& rng)>;

/// Unit vector with entries +-1/sqrt(n).
Vector rademacher_probe(std::size_t n, Rng& rng);

/// One Lanczos quadrature run on a fixed operator. `steps` is clamped to N.
QuadratureMeasure slq_run(const SymmetricOperator& op, std::size_t steps, Rng& rng, bool full_reorth = true);

/// Per-run quadrature measures, in run-index order. Run i uses the stream
/// make_stream(cfg.seed, i) for both its operator and its probe, so the
/// result is independent of `workers`.
std::vector<QuadratureMeasure> slq_quadratures(const OperatorFactory& factory, const SlqConfig& cfg,
                                               std::size_t workers = 1);

/// Pools per-run quadratures into nu = (N/R) sum_i sum_l w_il delta(a_il).
SpectralMeasure pool_quadratures(const std::vector<QuadratureMeasure>& runs, std::size_t total_dim);

SpectralMeasure empirical_spectral_measure(const OperatorFactory& factory, const SlqConfig& cfg,
                                           std::size_t workers = 1);

/// Sum of value * mass.
double estimate_trace(const SpectralMeasure& nu);

/// max |value| over atoms. Ritz values lie inside the spectrum, so this is a
/// lower estimate of the spectral radius.
double estimate_top_abs_eigenvalue(const SpectralMeasure& nu);

/// CSV with header `value,mass`.
void write_measure_csv(std::ostream& out, const SpectralMeasure& nu);

}  // namespace sharpdim

namespace sharpdim {

/// Wasserstein-1 distance between the probability measures nu_a / mass_a and
/// nu_b / mass_b (integral of |F_a - F_b|).
double wasserstein1(const SpectralMeasure& a, const SpectralMeasure& b);

}  // namespace sharpdim
