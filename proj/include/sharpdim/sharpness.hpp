#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sharpdim/density.hpp"

namespace sharpdim {

/// Descending log-singular-value exponents with direction weights.
struct SharpnessSpectrum {
  std::vector<double> values;   // lambda_1 >= lambda_2 >= ...
  std::vector<double> weights;  // multiplicity of each value

  static SharpnessSpectrum unit(std::vector<double> descending_values);
  double total_weight() const;
};

struct SdResult {
  double sd = 0.0;
  std::size_t j_star = 0;       // directions (or cells) fully counted
  double partial_sum = 0.0;     // weighted sum of the counted exponents
  double boundary_value = 0.0;  // first exponent not fully counted
  bool degenerate = false;      // boundary exponent was numerically zero
  std::string variant = "exact";
};

/// Kaplan-Yorke style count of expanding directions:
///   j* = largest r with sum_{i<=r} w_i l_i >= 0 (0 if l_1 < 0),
///   sd = sum_{i<=j*} w_i + partial / |l_{j*+1}|, clamped to [0, sum w].
SdResult sharpness_dimension(const SharpnessSpectrum& s);

enum class AggregateMode { mean, sup };

/// Exponents from a set of Hessian spectra of equal length: each spectrum is
/// pushed through g, sorted descending, and the k-th values are averaged
/// (mean) or maximized (sup) across spectra.
SharpnessSpectrum rds_sharpness_from_spectra(const std::vector<std::vector<double>>& hessian_spectra,
                                             const PushforwardParams& p, AggregateMode mode = AggregateMode::mean);

/// Continuous Kaplan-Yorke crossing on a push-forward density: scans z from
/// the top, accumulating mass and first moment, and returns the mass at the
/// point where the accumulated moment first turns negative (linear within a
/// cell). The density is renormalized to total mass N before scanning.
SdResult sd_from_density(const DensityEstimate& d);

/// Equal-mass pseudo-spectrum estimator on a raw eigenvalue density: M
/// quantiles at (r + 1/2)/M of the integrated mass, mapped through g and fed
/// to the weighted formula with weights N/M.
SdResult sd_pseudospectrum(const DensityEstimate& d, std::size_t pseudo_count, const PushforwardParams& p);

/// Default pseudo-eigenvalue count min(N, 4096).
std::size_t default_pseudo_count(std::size_t total_dim);

std::string sd_result_json(const SdResult& r);

}  // namespace sharpdim
