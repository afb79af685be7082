#pragma once

#include <cstddef>
#include <cstdint>
#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sharpdim/linops.hpp"
#include "sharpdim/sharpness.hpp"

namespace sharpdim::rds {

/// Noisy gradient descent on L(x) = |x|^2 / 2 - A cos(k x1) cos(k x2):
///   x_{t+1} = x_t - eta grad L(x_t) + xi_t,  xi_t ~ N(0, sigma^2 I).
struct ToySystem {
  double amplitude = 2.0;
  double frequency = 4.0;
  double eta = 0.15;
  double noise_sigma = 0.1;
  static constexpr std::size_t dim = 2;
};

/// Row-major P x dim particle positions.
struct ParticleCloud {
  std::size_t dim = 2;
  std::vector<double> points;

  std::size_t size() const { return dim == 0 ? 0 : points.size() / dim; }
  std::span<const double> point(std::size_t i) const { return {points.data() + i * dim, dim}; }
};

/// One noise draw per step, shared by every particle.
struct NoiseSequence {
  std::size_t dim = 2;
  std::vector<double> draws;  // T x dim
  std::uint64_t seed = 0;

  std::size_t length() const { return draws.size() / dim; }
};

NoiseSequence make_noise(std::size_t steps, std::size_t dim, double sigma, std::uint64_t seed);

ParticleCloud uniform_cloud(std::size_t count, double lo, double hi, std::uint64_t seed);

double toy_loss(const ToySystem& sys, std::span<const double> x);
std::array<double, 2> toy_grad(const ToySystem& sys, std::span<const double> x);
DenseSymmetric toy_hessian(const ToySystem& sys, std::span<const double> x);

/// I - eta * Hessian; additive noise does not enter the Jacobian.
DenseSymmetric one_step_jacobian(const ToySystem& sys, std::span<const double> x);

/// Log singular values of the one-step Jacobian, descending.
std::array<double, 2> log_singular_values(const ToySystem& sys, std::span<const double> x);

/// Advances every particle through the whole noise sequence.
ParticleCloud evolve_particles(const ToySystem& sys, const ParticleCloud& cloud, const NoiseSequence& noise,
                               std::size_t workers = 1);

/// As evolve_particles, also returning the RMS distance to the centroid
/// after each step.
std::pair<ParticleCloud, std::vector<double>> evolve_with_spread(const ToySystem& sys, const ParticleCloud& cloud,
                                                                 const NoiseSequence& noise, std::size_t workers = 1);

struct SnapshotPlan {
  std::size_t steps = 250;
  std::size_t realizations = 4;
  std::uint64_t seed = 0;
};

/// Sharpness exponents over the attractor: for each noise realization the
/// initial cloud is evolved to a fresh snapshot; ln sigma_k of the Jacobian is
/// maximized (sup) or averaged (mean) over the snapshot, then averaged over
/// realizations. Realization r uses noise seed stream_seed(plan.seed, r).
SharpnessSpectrum attractor_sharpness(const ToySystem& sys, const ParticleCloud& initial, const SnapshotPlan& plan,
                                      AggregateMode mode, std::size_t workers = 1);

/// Exponents over one given snapshot.
SharpnessSpectrum snapshot_sharpness(const ToySystem& sys, const ParticleCloud& snapshot, AggregateMode mode);

struct BoxCount {
  double scale = 0.0;
  std::size_t occupied = 0;
};

struct BoxDimension {
  double dimension = 0.0;
  double r2 = 0.0;
  std::vector<BoxCount> counts;
  bool degenerate = false;
};

/// Box-counting estimate on dyadic scales range * 2^-j, j = 2..J+1, fitting
/// log N against log(1/delta) over all but the coarsest and finest scales.
/// A cloud whose extent is below 1e-9 (relative) reports dimension 0.
BoxDimension box_counting_dimension(const ParticleCloud& cloud, std::size_t scale_count = 6);

struct BoundReport {
  double dim_m = 0.0;
  double sd = 0.0;
  double slack = 0.1;
  bool holds = false;
  BoxDimension box;
  SdResult sd_detail;
};

/// Checks dim_M(snapshot) <= SD(sharpness) + slack.
BoundReport verify_dimension_bound(const ParticleCloud& snapshot, const SharpnessSpectrum& sharpness,
                                   std::size_t scale_count = 6, double slack = 0.1);

void write_cloud_csv(std::ostream& out, const ParticleCloud& cloud);

}  // namespace sharpdim::rds
