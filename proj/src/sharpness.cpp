#include "sharpdim/sharpness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <json.hpp>

namespace sharpdim {

namespace {
constexpr double kDegenerateBoundary = 1e-15;
}

SharpnessSpectrum SharpnessSpectrum::unit(std::vector<double> descending_values) {
  SharpnessSpectrum s;
  s.weights.assign(descending_values.size(), 1.0);
  s.values = std::move(descending_values);
  return s;
}

double SharpnessSpectrum::total_weight() const {
  double w = 0.0;
  for (double x : weights) w += x;
  return w;
}

SdResult sharpness_dimension(const SharpnessSpectrum& s) {
  const std::size_t d = s.values.size();
  if (d == 0) throw std::invalid_argument("sharpness_dimension: empty spectrum");
  if (s.weights.size() != d) throw std::invalid_argument("sharpness_dimension: weights/values size mismatch");
  for (std::size_t i = 0; i < d; ++i) {
    if (std::isnan(s.values[i]) || std::isnan(s.weights[i]))
      throw std::invalid_argument("sharpness_dimension: NaN in spectrum");
    if (!(s.weights[i] > 0.0)) throw std::invalid_argument("sharpness_dimension: weights must be positive");
    if (i > 0 && s.values[i] > s.values[i - 1])
      throw std::invalid_argument("sharpness_dimension: values must be sorted descending");
  }
  const double total = s.total_weight();

  SdResult r;
  double partial = 0.0, counted = 0.0;
  std::size_t j = 0;
  while (j < d && partial + s.weights[j] * s.values[j] >= 0.0) {
    partial += s.weights[j] * s.values[j];
    counted += s.weights[j];
    ++j;
  }
  r.j_star = j;
  r.partial_sum = partial;
  if (j == 0) {
    r.sd = 0.0;
    r.boundary_value = s.values[0];
    return r;
  }
  if (j == d) {
    r.sd = total;
    r.boundary_value = s.values[d - 1];
    return r;
  }
  r.boundary_value = s.values[j];
  if (std::abs(r.boundary_value) < kDegenerateBoundary) {
    r.degenerate = true;
    r.sd = counted;
  } else {
    r.sd = counted + partial / std::abs(r.boundary_value);
  }
  r.sd = std::clamp(r.sd, 0.0, total);
  return r;
}

SharpnessSpectrum rds_sharpness_from_spectra(const std::vector<std::vector<double>>& hessian_spectra,
                                             const PushforwardParams& p, AggregateMode mode) {
  if (hessian_spectra.empty()) throw std::invalid_argument("rds_sharpness_from_spectra: no spectra");
  const std::size_t d = hessian_spectra.front().size();
  if (d == 0) throw std::invalid_argument("rds_sharpness_from_spectra: empty spectrum");
  std::vector<double> agg(d, mode == AggregateMode::sup ? -INFINITY : 0.0);
  for (const auto& spec : hessian_spectra) {
    if (spec.size() != d) throw std::invalid_argument("rds_sharpness_from_spectra: inconsistent spectrum lengths");
    auto z = pushforward_values(spec, p);
    std::sort(z.begin(), z.end(), std::greater<>());
    for (std::size_t k = 0; k < d; ++k) {
      if (mode == AggregateMode::sup)
        agg[k] = std::max(agg[k], z[k]);
      else
        agg[k] += z[k];
    }
  }
  if (mode == AggregateMode::mean)
    for (auto& x : agg) x /= static_cast<double>(hessian_spectra.size());
  return SharpnessSpectrum::unit(std::move(agg));
}

SdResult sd_from_density(const DensityEstimate& d) {
  if (!d.pushforward) throw std::invalid_argument("sd_from_density: density is not a push-forward density");
  const auto cells = density_cells(d);
  if (cells.empty()) throw std::invalid_argument("sd_from_density: empty density");
  double total = 0.0;
  for (const auto& c : cells) total += c.mass;
  const double n = static_cast<double>(d.total_dim);
  SdResult r;
  r.variant = d.kind == DensityKind::histogram ? "slq" : "kde";
  if (!(total > 0.0)) throw std::invalid_argument("sd_from_density: zero mass");
  const double scale = n / total;

  double moment = 0.0, mass = 0.0;
  for (std::size_t k = cells.size(); k-- > 0;) {
    const double cm = scale * cells[k].mass;
    const double cz = scale * cells[k].moment;
    if (moment + cz >= 0.0) {
      moment += cz;
      mass += cm;
      ++r.j_star;
      continue;
    }
    const double t = moment / -cz;
    r.partial_sum = moment;
    r.boundary_value = cm > 0.0 ? cz / cm : 0.5 * (cells[k].lo + cells[k].hi);
    r.sd = std::clamp(mass + t * cm, 0.0, n);
    return r;
  }
  r.partial_sum = moment;
  r.boundary_value = cells.front().lo;
  r.sd = n;
  return r;
}

std::size_t default_pseudo_count(std::size_t total_dim) { return std::min<std::size_t>(total_dim, 4096); }

SdResult sd_pseudospectrum(const DensityEstimate& d, std::size_t pseudo_count, const PushforwardParams& p) {
  if (pseudo_count < 1) throw std::invalid_argument("sd_pseudospectrum: pseudo-eigenvalue count must be >= 1");
  const auto cells = density_cells(d);
  double total = 0.0;
  for (const auto& c : cells) total += c.mass;
  if (!(total > 0.0)) throw std::invalid_argument("sd_pseudospectrum: zero mass");

  // One sweep over the cells: targets are increasing.
  std::vector<double> z;
  z.reserve(pseudo_count);
  const double m = static_cast<double>(pseudo_count);
  std::size_t c = 0;
  double acc = 0.0;
  for (std::size_t r = 0; r < pseudo_count; ++r) {
    const double target = (static_cast<double>(r) + 0.5) / m * total;
    while (c + 1 < cells.size() && (acc + cells[c].mass < target || cells[c].mass <= 0.0)) {
      acc += cells[c].mass;
      ++c;
    }
    const auto& cell = cells[c];
    const double t = cell.mass > 0.0 ? std::clamp((target - acc) / cell.mass, 0.0, 1.0) : 1.0;
    z.push_back(pushforward_value(cell.lo + t * (cell.hi - cell.lo), p));
  }
  std::sort(z.begin(), z.end(), std::greater<>());
  SharpnessSpectrum s;
  s.values = std::move(z);
  s.weights.assign(pseudo_count, static_cast<double>(d.total_dim) / m);
  SdResult r = sharpness_dimension(s);
  r.variant = "ps";
  return r;
}

std::string sd_result_json(const SdResult& r) {
  nlohmann::ordered_json j;
  j["sd"] = r.sd;
  j["j_star"] = r.j_star;
  j["partial_sum"] = r.partial_sum;
  j["boundary_value"] = r.boundary_value;
  j["variant"] = r.variant;
  return j.dump(2);
}

}  // namespace sharpdim
