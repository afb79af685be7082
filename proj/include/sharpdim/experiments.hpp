#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharpdim/attractor.hpp"
#include "sharpdim/metrics.hpp"
#include "sharpdim/nnlab.hpp"
#include "sharpdim/slq.hpp"

namespace sharpdim::exp {

/// Configuration problem; `pointer` is a JSON pointer into the config file.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string pointer, const std::string& message)
      : std::runtime_error(pointer + ": " + message), pointer_(std::move(pointer)) {}
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

enum class ExperimentKind { mlp_grid, grokking, attractor, slq_bench };

struct DatasetSpec {
  std::string kind = "blobs";  // blobs | mnist | modular
  // blobs
  std::size_t n_train = 512, n_test = 512, dim = 20, classes = 4;
  double spread = 3.0;
  // mnist
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t limit = 0;  // 0 = all rows
  // modular
  std::size_t modulus = 97;
  double train_frac = 0.4;
  std::uint64_t seed = 0;
};

struct ModelSpec {
  std::vector<std::size_t> hidden = {16, 16};
  std::string activation = "relu";
  bool bias = false;
};

struct OptimizerGrid {
  std::vector<double> eta = {0.1};
  std::vector<std::size_t> batch_size = {32};
  std::vector<double> weight_decay = {0.0};
  std::vector<std::uint64_t> seeds = {0};
  double momentum = 0.0;
  std::size_t epochs = 10;
};

struct SlqSpec {
  std::size_t runs = 500;
  bool two_epoch_runs = false;  // "runs": "two_epochs" sets runs = ceil(2 n / b) per measurement
  std::size_t steps = 100;
  std::optional<std::size_t> batch_size;  // Hessian minibatch; default: training batch size
  std::optional<double> bandwidth;        // z-space KDE bandwidth; default Silverman
  std::optional<double> alpha_bandwidth;  // eigenvalue-space KDE bandwidth for SD-PS
  std::optional<std::size_t> pseudo_count;
  double eps = 1e-12;
  std::size_t bins = 1024;
  std::size_t grid = 2048;
  bool enabled = true;
};

struct ExactSpec {
  bool enabled = true;
  std::size_t minibatches = 10;
  std::size_t max_params = nn::kExactHessianMaxParams;
};

struct AttractorSpec {
  double amplitude = 2.0, frequency = 4.0, eta = 0.15, sigma = 0.1;
  std::size_t steps = 250;
  std::size_t particles = 100000;
  std::size_t realizations = 4;
  double init_range = 3.0;
  std::size_t scales = 6;
  double slack = 0.1;
  std::uint64_t seed = 0;
};

struct BenchSpec {
  std::size_t dim = 200;
  double lo = 1e-3, hi = 10.0;  // log-uniform eigenvalue range
  double negative_fraction = 0.0;
  double eta = 0.1;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  int schema = 1;
  ExperimentKind experiment = ExperimentKind::mlp_grid;
  std::string output_dir = "out";
  DatasetSpec dataset;
  ModelSpec model;
  OptimizerGrid optimizer;
  SlqSpec slq;
  ExactSpec exact;
  std::size_t checkpoints = 1;
  AttractorSpec attractor;
  BenchSpec bench;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

/// Canonical JSON of a config (all defaults filled, keys sorted).
std::string canonical_config_json(const ExperimentConfig& cfg);

struct DataPair {
  nn::Dataset train;
  nn::Dataset test;
};

DataPair load_datasets(const DatasetSpec& spec);

struct MeasureOptions {
  SlqSpec slq;
  ExactSpec exact;
  std::size_t hessian_batch = 32;
  std::size_t workers = 1;
};

/// Complexity measures of a model at its current weights: sd_exact and
/// lambda1_exact (small models), sd_slq, sd_kde, sd_ps, lambda1, trace and
/// sharpness. `seed` keys the measurement RNG.
std::map<std::string, double> compute_measures(const nn::MlpModel& model, const nn::Dataset& train, double eta,
                                               const MeasureOptions& opts, std::uint64_t seed);

struct GridCell {
  double eta;
  std::size_t batch_size;
  double weight_decay;
  std::uint64_t seed;
};

std::vector<GridCell> grid_cells(const OptimizerGrid& grid);
std::string run_id(const ExperimentConfig& cfg, const GridCell& cell);

struct GridOutcome {
  std::vector<RunRecord> records;
  std::uint64_t training_steps = 0;  // SGD steps performed by this invocation
  std::size_t reused = 0;            // cells served from the registry
  std::vector<std::string> failures;
};

/// Trains every grid cell, measures the final model and writes `runs.csv`
/// plus runs/<id>.json and runs/<id>.bin under the output directory. Cells
/// with a completed registry entry are loaded instead of retrained.
GridOutcome run_mlp_grid(const ExperimentConfig& cfg, std::size_t workers = 1);

struct GrokOutcome {
  CsvTable table;
  std::uint64_t training_steps = 0;
};

/// Trains each cell with checkpoints spaced uniformly over the epochs and
/// writes per-checkpoint rows to `grokking.csv`.
GrokOutcome run_grokking(const ExperimentConfig& cfg, std::size_t workers = 1);

struct AttractorOutcome {
  SharpnessSpectrum sharpness_sup;
  SharpnessSpectrum sharpness_mean;
  SdResult sd_sup;
  SdResult sd_mean;
  rds::BoundReport bound;
  std::vector<double> spread;
};

/// Simulates the toy system, writes `attractor_report.json` and `cloud.csv`.
AttractorOutcome run_attractor_study(const ExperimentConfig& cfg, std::size_t workers = 1);

struct BenchOutcome {
  double true_trace = 0.0;
  double trace_estimate = 0.0;
  double top_abs_true = 0.0;
  double top_abs_estimate = 0.0;
  double wasserstein = 0.0;  // W1 between normalized measures
  double spectral_range = 0.0;
  double sd_exact = 0.0, sd_slq = 0.0, sd_kde = 0.0, sd_ps = 0.0;
  double seconds = 0.0;
};

/// Random dense symmetric matrix with a log-uniform spectrum.
DenseSymmetric bench_matrix(const BenchSpec& spec, std::vector<double>* eigenvalues = nullptr);

/// SLQ against a dense matrix with known spectrum; writes `bench.json`,
/// `measure.csv` and density exports.
BenchOutcome run_slq_bench(const ExperimentConfig& cfg, std::size_t workers = 1);

/// Loads runs.csv files and writes the correlation matrix CSV to `out_path`
/// (or returns it when empty).
std::vector<CorrelationCell> run_correlate(const std::vector<std::string>& runs_csv_paths,
                                           const std::vector<std::string>& measures,
                                           const std::vector<std::string>& targets);

/// Raw and push-forward spectra (histogram and KDE) of a checkpoint's
/// minibatch Hessians, written under `out_dir`.
void run_spectrum(const std::string& checkpoint_path, const ExperimentConfig& cfg, double eta,
                  const std::string& out_dir, std::size_t workers = 1);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

}  // namespace sharpdim::exp
