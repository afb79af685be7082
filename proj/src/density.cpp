#include "sharpdim/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "sharpdim/csv.hpp"

namespace sharpdim {

std::string to_string(DensityKind kind) { return kind == DensityKind::histogram ? "histogram" : "kde"; }

namespace {

std::pair<double, double> value_range(const SpectralMeasure& nu) {
  if (nu.atoms.empty()) throw std::invalid_argument("density: empty spectral measure");
  double lo = nu.atoms.front().value, hi = lo;
  for (const auto& a : nu.atoms) {
    lo = std::min(lo, a.value);
    hi = std::max(hi, a.value);
  }
  return {lo, hi};
}

double gaussian(double x, double h) {
  return std::exp(-0.5 * (x / h) * (x / h)) / (h * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace

DensityEstimate histogram_density(const SpectralMeasure& nu, std::size_t bins,
                                  std::optional<std::pair<double, double>> range) {
  if (bins < 1) throw std::invalid_argument("histogram_density: need at least one bin");
  double lo, hi;
  if (range) {
    std::tie(lo, hi) = *range;
    if (!(hi > lo)) throw std::invalid_argument("histogram_density: empty range");
  } else {
    std::tie(lo, hi) = value_range(nu);
    double margin = 1e-3 * (hi - lo);
    if (margin == 0.0) margin = 1e-3 * std::max(1.0, std::abs(lo));
    lo -= margin;
    hi += margin;
  }
  const double w = (hi - lo) / static_cast<double>(bins);
  DensityEstimate d;
  d.kind = DensityKind::histogram;
  d.total_dim = nu.total_dim;
  d.width = w;
  d.grid.resize(bins);
  d.density.assign(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) d.grid[b] = lo + (static_cast<double>(b) + 0.5) * w;
  for (const auto& a : nu.atoms) {
    if (a.value < lo || a.value > hi) continue;
    auto b = static_cast<std::size_t>(std::floor((a.value - lo) / w));
    b = std::min(b, bins - 1);
    d.density[b] += a.mass;
  }
  for (auto& x : d.density) x /= w;
  return d;
}

double kde_at(const SpectralMeasure& nu, double bandwidth, double alpha) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("kde: bandwidth must be positive");
  double s = 0.0;
  for (const auto& a : nu.atoms) s += a.mass * gaussian(alpha - a.value, bandwidth);
  return s;
}

DensityEstimate kde_density(const SpectralMeasure& nu, double bandwidth, std::size_t grid_size) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("kde: bandwidth must be positive");
  if (grid_size < 16) throw std::invalid_argument("kde: grid size must be >= 16");
  auto [vmin, vmax] = value_range(nu);
  const double lo = vmin - 4.0 * bandwidth;
  const double hi = vmax + 4.0 * bandwidth;
  const double step = (hi - lo) / static_cast<double>(grid_size - 1);

  DensityEstimate d;
  d.kind = DensityKind::kde;
  d.total_dim = nu.total_dim;
  d.width = bandwidth;
  d.grid.resize(grid_size);
  d.density.assign(grid_size, 0.0);
  for (std::size_t i = 0; i < grid_size; ++i) d.grid[i] = lo + static_cast<double>(i) * step;

  // Kernel truncated at 9h, where it is below 1e-17 of its peak.
  const double reach = 9.0 * bandwidth;
  const double norm = 1.0 / (bandwidth * std::sqrt(2.0 * std::numbers::pi));
  const double inv2h2 = 0.5 / (bandwidth * bandwidth);
  for (const auto& a : nu.atoms) {
    if (a.mass == 0.0) continue;
    const auto first = static_cast<std::ptrdiff_t>(std::ceil((a.value - reach - lo) / step));
    const auto last = static_cast<std::ptrdiff_t>(std::floor((a.value + reach - lo) / step));
    const auto i0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(first, 0));
    const auto i1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(grid_size) - 1));
    for (std::size_t i = i0; i <= i1 && i < grid_size; ++i) {
      const double x = d.grid[i] - a.value;
      d.density[i] += a.mass * norm * std::exp(-x * x * inv2h2);
    }
  }
  return d;
}

double silverman_bandwidth(const SpectralMeasure& nu, std::size_t grid_size) {
  auto [vmin, vmax] = value_range(nu);
  std::vector<Atom> sorted = nu.atoms;
  std::sort(sorted.begin(), sorted.end(), [](const Atom& a, const Atom& b) { return a.value < b.value; });
  double total = 0.0, mean = 0.0;
  for (const auto& a : sorted) {
    total += a.mass;
    mean += a.mass * a.value;
  }
  if (!(total > 0.0)) throw std::invalid_argument("silverman_bandwidth: zero total mass");
  mean /= total;
  double var = 0.0;
  for (const auto& a : sorted) var += a.mass * (a.value - mean) * (a.value - mean);
  const double sd = std::sqrt(var / total);

  auto weighted_quantile = [&](double q) {
    double acc = 0.0;
    for (const auto& a : sorted) {
      acc += a.mass;
      if (acc >= q * total) return a.value;
    }
    return sorted.back().value;
  };
  const double iqr = weighted_quantile(0.75) - weighted_quantile(0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  const double n = static_cast<double>(sorted.size());
  double h = 0.9 * spread * std::pow(n, -0.2);

  // Floor: grid spacing over [min - 4h, max + 4h] must stay below h / 2.
  const double range = vmax - vmin;
  const double g = static_cast<double>(grid_size - 1);
  const double floor_h = range > 0.0 ? 2.0 * range / (g - 16.0) : 0.0;
  h = std::max(h, floor_h);
  if (!(h > 0.0)) h = 1e-3 * std::max(1.0, std::abs(mean));
  return h;
}

double pushforward_value(double alpha, const PushforwardParams& p) {
  return std::log(std::abs(1.0 - p.eta * alpha) + p.eps);
}

std::vector<double> pushforward_values(std::span<const double> values, const PushforwardParams& p) {
  if (!(p.eta > 0.0) || !(p.eps > 0.0)) throw std::invalid_argument("pushforward: eta and eps must be positive");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = pushforward_value(values[i], p);
  return out;
}

SpectralMeasure pushforward_measure(const SpectralMeasure& nu, const PushforwardParams& p) {
  if (!(p.eta > 0.0) || !(p.eps > 0.0)) throw std::invalid_argument("pushforward: eta and eps must be positive");
  SpectralMeasure out;
  out.total_dim = nu.total_dim;
  out.atoms.reserve(nu.atoms.size());
  for (const auto& a : nu.atoms) out.atoms.push_back({pushforward_value(a.value, p), a.mass});
  return out;
}

std::vector<DensityCell> density_cells(const DensityEstimate& d) {
  std::vector<DensityCell> cells;
  if (d.kind == DensityKind::histogram) {
    cells.reserve(d.grid.size());
    for (std::size_t b = 0; b < d.grid.size(); ++b) {
      const double mass = d.density[b] * d.width;
      cells.push_back({d.grid[b] - 0.5 * d.width, d.grid[b] + 0.5 * d.width, mass, mass * d.grid[b]});
    }
  } else {
    if (d.grid.size() < 2) return cells;
    cells.reserve(d.grid.size() - 1);
    for (std::size_t i = 0; i + 1 < d.grid.size(); ++i) {
      const double dx = d.grid[i + 1] - d.grid[i];
      const double mass = 0.5 * dx * (d.density[i] + d.density[i + 1]);
      const double moment = 0.5 * dx * (d.grid[i] * d.density[i] + d.grid[i + 1] * d.density[i + 1]);
      cells.push_back({d.grid[i], d.grid[i + 1], mass, moment});
    }
  }
  return cells;
}

DensityEstimate pushforward_density(const DensityEstimate& d, const PushforwardParams& p, std::size_t bins,
                                    std::size_t subdivisions) {
  if (subdivisions < 1) throw std::invalid_argument("pushforward_density: subdivisions must be >= 1");
  SpectralMeasure pieces;
  pieces.total_dim = d.total_dim;
  const auto cells = density_cells(d);
  const double sub = static_cast<double>(subdivisions);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    const double dx = (cell.hi - cell.lo) / sub;
    for (std::size_t k = 0; k < subdivisions; ++k) {
      const double a = cell.lo + static_cast<double>(k) * dx;
      const double mid = a + 0.5 * dx;
      double mass;
      if (d.kind == DensityKind::histogram) {
        mass = cell.mass / sub;
      } else {
        const double t = (mid - cell.lo) / (cell.hi - cell.lo);
        mass = dx * ((1.0 - t) * d.density[c] + t * d.density[c + 1]);
      }
      if (mass > 0.0) pieces.atoms.push_back({pushforward_value(mid, p), mass});
    }
  }
  DensityEstimate out = histogram_density(pieces, bins);
  out.pushforward = p;
  return out;
}

double integrate(const DensityEstimate& d) {
  double s = 0.0;
  for (const auto& c : density_cells(d)) s += c.mass;
  return s;
}

double cumulative_mass(const DensityEstimate& d, double alpha) {
  double s = 0.0;
  const auto cells = density_cells(d);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    if (alpha >= cell.hi) {
      s += cell.mass;
      continue;
    }
    if (alpha > cell.lo) {
      const double t = (alpha - cell.lo) / (cell.hi - cell.lo);
      if (d.kind == DensityKind::histogram) {
        s += t * cell.mass;
      } else {
        const double rho_a = (1.0 - t) * d.density[c] + t * d.density[c + 1];
        s += 0.5 * (alpha - cell.lo) * (d.density[c] + rho_a);
      }
    }
    break;
  }
  return s;
}

double quantile(const DensityEstimate& d, double target_mass) {
  const double n = static_cast<double>(d.total_dim);
  if (target_mass < 0.0 || target_mass > n || std::isnan(target_mass))
    throw std::invalid_argument("quantile: target mass outside [0, N]");
  const auto cells = density_cells(d);
  if (cells.empty()) throw std::invalid_argument("quantile: empty density");
  if (target_mass <= 0.0) return cells.front().lo;
  double acc = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    const double next = acc + cell.mass;
    if (next >= target_mass && cell.mass > 0.0) {
      const double w = cell.hi - cell.lo;
      const double r = target_mass - acc;
      if (d.kind == DensityKind::histogram) return cell.lo + std::clamp(r / cell.mass, 0.0, 1.0) * w;
      // Invert s*rho0 + s^2 (rho1 - rho0) / (2w) = r.
      const double r0 = d.density[c], slope = (d.density[c + 1] - r0) / w;
      double s;
      if (std::abs(slope) * w < 1e-12 * std::max(r0, 1e-300)) {
        s = r / r0;
      } else {
        const double disc = std::max(0.0, r0 * r0 + 2.0 * slope * r);
        s = 2.0 * r / (r0 + std::sqrt(disc));
      }
      return cell.lo + std::clamp(s, 0.0, w);
    }
    acc = next;
  }
  return cells.back().hi;
}

void write_density_csv(std::ostream& out, const DensityEstimate& d) {
  out << "alpha,density\n";
  for (std::size_t i = 0; i < d.grid.size(); ++i)
    out << format_double(d.grid[i]) << ',' << format_double(d.density[i]) << '\n';
}

std::string density_sidecar_json(const DensityEstimate& d) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(d.kind);
  j["N"] = d.total_dim;
  j["bandwidth_or_binwidth"] = d.width;
  if (d.pushforward) {
    j["eta"] = d.pushforward->eta;
    j["eps"] = d.pushforward->eps;
  }
  return j.dump(2);
}

}  // namespace sharpdim
