#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sharpdim/slq.hpp"

namespace sharpdim {

/// Parameters of the one-step GD Jacobian map g(a) = log(|1 - eta a| + eps).
struct PushforwardParams {
  double eta = 0.1;
  double eps = 1e-12;
};

enum class DensityKind { histogram, kde };

std::string to_string(DensityKind kind);

/// Gridded spectral density with total mass N.
///
/// Histogram estimates store bin centers in `grid` and treat the density as
/// piecewise constant on [center - w/2, center + w/2). KDE estimates store
/// point values on a uniform grid and are integrated with the trapezoid rule.
/// `pushforward` is set when the grid is in log-singular-value (z) units.
struct DensityEstimate {
  std::vector<double> grid;
  std::vector<double> density;
  std::size_t total_dim = 0;
  DensityKind kind = DensityKind::kde;
  double width = 0.0;  // bin width or kernel bandwidth
  std::optional<PushforwardParams> pushforward;
};

/// A piece of a density: mass and first moment on [lo, hi].
struct DensityCell {
  double lo = 0.0;
  double hi = 0.0;
  double mass = 0.0;
  double moment = 0.0;
};

constexpr std::size_t kDefaultHistogramBins = 1024;
constexpr std::size_t kDefaultKdeGrid = 2048;
constexpr double kDefaultEps = 1e-12;

/// Equal-width histogram. Without an explicit range the bins span the atom
/// range widened by 0.1% on each side.
DensityEstimate histogram_density(const SpectralMeasure& nu, std::size_t bins = kDefaultHistogramBins,
                                  std::optional<std::pair<double, double>> range = std::nullopt);

/// Gaussian-kernel density on a uniform grid over [min - 4h, max + 4h].
DensityEstimate kde_density(const SpectralMeasure& nu, double bandwidth, std::size_t grid_size = kDefaultKdeGrid);

/// Point evaluation of the Gaussian KDE of `nu`.
double kde_at(const SpectralMeasure& nu, double bandwidth, double alpha);

/// Silverman's rule 0.9 min(sd, IQR/1.34) n^(-1/5) on mass-weighted atoms,
/// floored so that a grid of `grid_size` points samples the kernel at least
/// twice per bandwidth.
double silverman_bandwidth(const SpectralMeasure& nu, std::size_t grid_size = kDefaultKdeGrid);

double pushforward_value(double alpha, const PushforwardParams& p);
std::vector<double> pushforward_values(std::span<const double> values, const PushforwardParams& p);
SpectralMeasure pushforward_measure(const SpectralMeasure& nu, const PushforwardParams& p);

/// Push-forward of a gridded eigenvalue density into z units, as a histogram.
/// Each cell of `d` is split into `subdivisions` equal pieces whose mass is
/// placed at the image of the piece midpoint.
DensityEstimate pushforward_density(const DensityEstimate& d, const PushforwardParams& p,
                                    std::size_t bins = kDefaultHistogramBins, std::size_t subdivisions = 16);

/// Piecewise representation used for integration (bins or trapezoids).
std::vector<DensityCell> density_cells(const DensityEstimate& d);

/// Integral of the density over its support.
double integrate(const DensityEstimate& d);

/// Mass below `alpha`, clamped to the support.
double cumulative_mass(const DensityEstimate& d, double alpha);

/// Smallest alpha with cumulative_mass(alpha) >= target, interpolating the
/// cumulative mass linearly inside each cell. Targets above the integrated
/// mass (but within [0, N]) map to the upper end of the support.
double quantile(const DensityEstimate& d, double target_mass);

/// CSV with header `alpha,density`.
void write_density_csv(std::ostream& out, const DensityEstimate& d);

/// Sidecar metadata {kind, N, bandwidth_or_binwidth[, eta, eps]} as JSON text.
std::string density_sidecar_json(const DensityEstimate& d);

}  // namespace sharpdim
