#include "sharpdim/attractor.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "sharpdim/csv.hpp"
#include "sharpdim/parallel.hpp"
#include "sharpdim/rng.hpp"

namespace sharpdim::rds {

NoiseSequence make_noise(std::size_t steps, std::size_t dim, double sigma, std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("noise sequence must have at least one step");
  NoiseSequence n;
  n.dim = dim;
  n.seed = seed;
  n.draws.resize(steps * dim);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& x : n.draws) x = sigma * gauss(rng);
  return n;
}

ParticleCloud uniform_cloud(std::size_t count, double lo, double hi, std::uint64_t seed) {
  ParticleCloud c;
  c.points.resize(count * c.dim);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : c.points) x = u(rng);
  return c;
}

double toy_loss(const ToySystem& s, std::span<const double> x) {
  const double k = s.frequency;
  return 0.5 * (x[0] * x[0] + x[1] * x[1]) - s.amplitude * std::cos(k * x[0]) * std::cos(k * x[1]);
}

std::array<double, 2> toy_grad(const ToySystem& s, std::span<const double> x) {
  const double k = s.frequency, ak = s.amplitude * k;
  const double c0 = std::cos(k * x[0]), c1 = std::cos(k * x[1]);
  const double s0 = std::sin(k * x[0]), s1 = std::sin(k * x[1]);
  return {x[0] + ak * s0 * c1, x[1] + ak * c0 * s1};
}

DenseSymmetric toy_hessian(const ToySystem& s, std::span<const double> x) {
  const double k = s.frequency, ak2 = s.amplitude * k * k;
  const double cc = std::cos(k * x[0]) * std::cos(k * x[1]);
  const double ss = std::sin(k * x[0]) * std::sin(k * x[1]);
  DenseSymmetric h(2);
  h(0, 0) = 1.0 + ak2 * cc;
  h(1, 1) = 1.0 + ak2 * cc;
  h(0, 1) = h(1, 0) = -ak2 * ss;
  return h;
}

DenseSymmetric one_step_jacobian(const ToySystem& s, std::span<const double> x) {
  DenseSymmetric j = toy_hessian(s, x);
  for (auto& v : j.entries) v *= -s.eta;
  j(0, 0) += 1.0;
  j(1, 1) += 1.0;
  return j;
}

std::array<double, 2> log_singular_values(const ToySystem& s, std::span<const double> x) {
  // The Jacobian is symmetric with equal diagonal entries: eigenvalues a +- b.
  const DenseSymmetric j = one_step_jacobian(s, x);
  double s1 = std::abs(j(0, 0) + j(0, 1));
  double s2 = std::abs(j(0, 0) - j(0, 1));
  if (s1 < s2) std::swap(s1, s2);
  constexpr double kTiny = 1e-300;
  return {std::log(std::max(s1, kTiny)), std::log(std::max(s2, kTiny))};
}

namespace {

void evolve_range(const ToySystem& sys, ParticleCloud& c, const NoiseSequence& noise, std::size_t begin,
                  std::size_t end) {
  const std::size_t steps = noise.length();
  for (std::size_t p = begin; p < end; ++p) {
    double x[2] = {c.points[2 * p], c.points[2 * p + 1]};
    for (std::size_t t = 0; t < steps; ++t) {
      const auto g = toy_grad(sys, x);
      x[0] = x[0] - sys.eta * g[0] + noise.draws[2 * t];
      x[1] = x[1] - sys.eta * g[1] + noise.draws[2 * t + 1];
    }
    c.points[2 * p] = x[0];
    c.points[2 * p + 1] = x[1];
  }
}

void check_2d(const ParticleCloud& cloud, const NoiseSequence& noise) {
  if (cloud.dim != 2 || noise.dim != 2) throw std::invalid_argument("toy system is two-dimensional");
}

double rms_spread(const ParticleCloud& c) {
  const std::size_t n = c.size();
  if (n == 0) return 0.0;
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    m0 += c.points[2 * p];
    m1 += c.points[2 * p + 1];
  }
  m0 /= static_cast<double>(n);
  m1 /= static_cast<double>(n);
  double s = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double d0 = c.points[2 * p] - m0, d1 = c.points[2 * p + 1] - m1;
    s += d0 * d0 + d1 * d1;
  }
  return std::sqrt(s / static_cast<double>(n));
}

}  // namespace

ParticleCloud evolve_particles(const ToySystem& sys, const ParticleCloud& cloud, const NoiseSequence& noise,
                               std::size_t workers) {
  check_2d(cloud, noise);
  ParticleCloud out = cloud;
  const std::size_t n = out.size();
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(workers * 4, n));
  const std::size_t per = (n + chunks - 1) / chunks;
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t begin = std::min(n, c * per), end = std::min(n, begin + per);
    evolve_range(sys, out, noise, begin, end);
  });
  return out;
}

std::pair<ParticleCloud, std::vector<double>> evolve_with_spread(const ToySystem& sys, const ParticleCloud& cloud,
                                                                 const NoiseSequence& noise, std::size_t workers) {
  check_2d(cloud, noise);
  ParticleCloud cur = cloud;
  std::vector<double> spread;
  spread.reserve(noise.length());
  for (std::size_t t = 0; t < noise.length(); ++t) {
    NoiseSequence one;
    one.dim = 2;
    one.seed = noise.seed;
    one.draws = {noise.draws[2 * t], noise.draws[2 * t + 1]};
    cur = evolve_particles(sys, cur, one, workers);
    spread.push_back(rms_spread(cur));
  }
  return {std::move(cur), std::move(spread)};
}

SharpnessSpectrum snapshot_sharpness(const ToySystem& sys, const ParticleCloud& snapshot, AggregateMode mode) {
  const std::size_t n = snapshot.size();
  if (n == 0) throw std::invalid_argument("attractor_sharpness: empty snapshot");
  std::array<double, 2> agg = mode == AggregateMode::sup ? std::array<double, 2>{-INFINITY, -INFINITY}
                                                          : std::array<double, 2>{0.0, 0.0};
  for (std::size_t p = 0; p < n; ++p) {
    const auto l = log_singular_values(sys, snapshot.point(p));
    for (int k = 0; k < 2; ++k) agg[k] = mode == AggregateMode::sup ? std::max(agg[k], l[k]) : agg[k] + l[k];
  }
  if (mode == AggregateMode::mean)
    for (auto& x : agg) x /= static_cast<double>(n);
  std::vector<double> values(agg.begin(), agg.end());
  std::sort(values.begin(), values.end(), std::greater<>());
  return SharpnessSpectrum::unit(std::move(values));
}

SharpnessSpectrum attractor_sharpness(const ToySystem& sys, const ParticleCloud& initial, const SnapshotPlan& plan,
                                      AggregateMode mode, std::size_t workers) {
  if (initial.size() == 0) throw std::invalid_argument("attractor_sharpness: empty snapshot");
  if (plan.realizations < 1) throw std::invalid_argument("attractor_sharpness: need at least one realization");
  std::vector<double> sum(2, 0.0);
  for (std::size_t r = 0; r < plan.realizations; ++r) {
    const auto noise = make_noise(plan.steps, 2, sys.noise_sigma, stream_seed(plan.seed, r));
    const auto snap = evolve_particles(sys, initial, noise, workers);
    const auto s = snapshot_sharpness(sys, snap, mode);
    for (int k = 0; k < 2; ++k) sum[k] += s.values[k];
  }
  for (auto& x : sum) x /= static_cast<double>(plan.realizations);
  std::sort(sum.begin(), sum.end(), std::greater<>());
  return SharpnessSpectrum::unit(std::move(sum));
}

BoxDimension box_counting_dimension(const ParticleCloud& cloud, std::size_t scale_count) {
  if (scale_count < 4) throw std::invalid_argument("box_counting_dimension: need at least 4 scales");
  if (scale_count > 20) throw std::invalid_argument("box_counting_dimension: at most 20 scales");
  const std::size_t n = cloud.size(), d = cloud.dim;
  if (d == 0 || d > 3) throw std::invalid_argument("box_counting_dimension: supports 1 to 3 dimensions");
  if (n == 0) throw std::invalid_argument("box_counting_dimension: empty cloud");
  std::vector<double> lo(d, INFINITY), hi(d, -INFINITY);
  double magnitude = 1.0;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t k = 0; k < d; ++k) {
      const double x = cloud.points[p * d + k];
      if (!std::isfinite(x)) throw std::invalid_argument("box_counting_dimension: non-finite coordinate");
      lo[k] = std::min(lo[k], x);
      hi[k] = std::max(hi[k], x);
      magnitude = std::max(magnitude, std::abs(x));
    }
  double range = 0.0;
  for (std::size_t k = 0; k < d; ++k) range = std::max(range, hi[k] - lo[k]);

  BoxDimension out;
  if (range <= 1e-9 * magnitude) {
    out.degenerate = true;
    return out;
  }

  std::vector<std::uint64_t> keys(n);
  for (std::size_t j = 2; j < scale_count + 2; ++j) {
    const double cells = std::ldexp(1.0, static_cast<int>(j));
    const double delta = range / cells;
    const auto max_index = static_cast<std::uint64_t>(cells) - 1;
    for (std::size_t p = 0; p < n; ++p) {
      std::uint64_t key = 0;
      for (std::size_t k = 0; k < d; ++k) {
        auto idx = static_cast<std::uint64_t>(std::floor((cloud.points[p * d + k] - lo[k]) / delta));
        key = (key << 21) | std::min(idx, max_index);
      }
      keys[p] = key;
    }
    std::sort(keys.begin(), keys.end());
    const auto occupied = static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
    out.counts.push_back({delta, occupied});
  }

  // Least squares over the middle scales.
  std::vector<double> xs, ys;
  for (std::size_t i = 1; i + 1 < out.counts.size(); ++i) {
    xs.push_back(std::log(1.0 / out.counts[i].scale));
    ys.push_back(std::log(static_cast<double>(out.counts[i].occupied)));
  }
  const double m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  out.dimension = sxy / sxx;
  out.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return out;
}

BoundReport verify_dimension_bound(const ParticleCloud& snapshot, const SharpnessSpectrum& sharpness,
                                   std::size_t scale_count, double slack) {
  BoundReport r;
  r.box = box_counting_dimension(snapshot, scale_count);
  r.dim_m = r.box.dimension;
  r.sd_detail = sharpness_dimension(sharpness);
  r.sd = r.sd_detail.sd;
  r.slack = slack;
  r.holds = r.dim_m <= r.sd + slack;
  return r;
}

void write_cloud_csv(std::ostream& out, const ParticleCloud& cloud) {
  out << "x1,x2\n";
  for (std::size_t p = 0; p < cloud.size(); ++p)
    out << format_double(cloud.points[p * cloud.dim]) << ',' << format_double(cloud.points[p * cloud.dim + 1]) << '\n';
}

}  // namespace sharpdim::rds
