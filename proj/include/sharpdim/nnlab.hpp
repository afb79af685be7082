#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sharpdim/linops.hpp"
#include "sharpdim/rng.hpp"

namespace sharpdim::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { relu, gelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Fully connected network. Parameters are stored flat: for each layer the
/// (out x in) weight matrix in row-major order, followed by its bias when
/// biases are enabled. The last layer is linear.
struct MlpModel {
  std::vector<std::size_t> layer_dims;
  bool use_bias = false;
  Activation activation = Activation::relu;
  std::vector<double> weights;

  static std::size_t param_count_for(std::span<const std::size_t> dims, bool use_bias);

  /// Zero-initialized model of the given shape.
  static MlpModel zeros(std::vector<std::size_t> dims, bool use_bias, Activation act);

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static MlpModel glorot(std::vector<std::size_t> dims, bool use_bias, Activation act, Rng& rng);

  std::size_t param_count() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return layer_dims.size() - 1; }
};

struct Dataset {
  RowMatrix features;  // n x in_dim
  std::vector<int> labels;
  std::size_t classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
};

/// Gathered rows of a dataset; the unit on which losses and HVPs operate.
struct Batch {
  RowMatrix x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch full_batch(const Dataset& data);

struct OptimizerConfig {
  double eta = 0.1;
  std::size_t batch_size = 32;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
};

/// Momentum buffer carried across epochs.
struct OptimizerState {
  std::vector<double> velocity;
  std::vector<std::size_t> scratch;  // index pool for sampling without replacement
  std::uint64_t steps = 0;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

std::vector<double> forward(const MlpModel& model, std::span<const double> x);

/// Mean softmax cross-entropy over the batch and its gradient.
LossGrad loss_and_grad(const MlpModel& model, const Batch& batch);
double loss_only(const MlpModel& model, const Batch& batch);

/// Exact Hessian-vector product of the mean batch loss (forward-over-reverse).
/// ReLU contributes no activation curvature.
std::vector<double> hvp(const MlpModel& model, const Batch& batch, std::span<const double> v);

constexpr std::size_t kExactHessianMaxParams = 20000;

/// Dense Hessian from N HVPs, symmetrized after checking the raw asymmetry
/// is below 1e-6 (relative to the largest entry when that exceeds one).
DenseSymmetric exact_hessian(const MlpModel& model, const Batch& batch);

/// Column-assembled, symmetrized Hessian of any operator (same checks).
DenseSymmetric assemble_hessian(const SymmetricOperator& op);

/// Operator v -> H v for the minibatch loss at the model's current weights.
/// The operator keeps its own copies of the model and batch.
SymmetricOperator minibatch_hessian_operator(const MlpModel& model, Batch batch);

/// Eigenvalues (ascending) of a dense symmetric matrix.
std::vector<double> symmetric_eigenvalues(const DenseSymmetric& m);

/// One epoch of minibatch SGD: ceil(n / b) steps, each on b indices drawn
/// uniformly without replacement, with update m <- mu m + g,
/// w <- w - eta (m + wd w). When `trace` is non-null the drawn index
/// sequence of each step is appended to it.
EpochStats sgd_epoch(MlpModel& model, const Dataset& data, const OptimizerConfig& cfg, Rng& rng,
                     OptimizerState& state, std::vector<std::vector<std::size_t>>* trace = nullptr);

EvalResult evaluate(const MlpModel& model, const Dataset& data);

/// Draws `b` distinct indices in [0, n).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t b, Rng& rng,
                                                    std::vector<std::size_t>& scratch);

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

/// All p^2 pairs (a, b) with one-hot(a) ++ one-hot(b) features and label
/// (a + b) mod p, randomly split with floor(train_frac p^2) training rows.
std::pair<Dataset, Dataset> modular_addition_dataset(std::size_t p, double train_frac, std::uint64_t seed);

/// Gaussian clusters with unit covariance around centers drawn from
/// N(0, spread^2 I). Labels are uniform over classes.
Dataset synthetic_blobs(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed,
                        double spread = 3.0);

/// Train/test pair sharing the same cluster centers.
std::pair<Dataset, Dataset> synthetic_blobs_split(std::size_t n_train, std::size_t n_test, std::size_t dim,
                                                  std::size_t classes, std::uint64_t seed, double spread = 3.0);

/// Flat binary checkpoint: "SDMLP1", u32 L, u32 dims[L+1], u32 flags, f64 params.
void save_checkpoint(const MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace sharpdim::nn
