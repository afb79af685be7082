#include "sharpdim/nnlab.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sharpdim::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::size_t MlpModel::param_count_for(std::span<const std::size_t> dims, bool use_bias) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l] * dims[l + 1] + (use_bias ? dims[l + 1] : 0);
  return n;
}

MlpModel MlpModel::zeros(std::vector<std::size_t> dims, bool use_bias, Activation act) {
  if (dims.size() < 2) throw std::invalid_argument("mlp: need at least input and output dims");
  for (auto d : dims)
    if (d == 0) throw std::invalid_argument("mlp: layer widths must be positive");
  MlpModel m;
  m.weights.assign(param_count_for(dims, use_bias), 0.0);
  m.layer_dims = std::move(dims);
  m.use_bias = use_bias;
  m.activation = act;
  return m;
}

MlpModel MlpModel::glorot(std::vector<std::size_t> dims, bool use_bias, Activation act, Rng& rng) {
  MlpModel m = zeros(std::move(dims), use_bias, act);
  std::size_t off = 0;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const std::size_t in = m.layer_dims[l], out = m.layer_dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t k = 0; k < in * out; ++k) m.weights[off + k] = u(rng);
    off += in * out + (use_bias ? out : 0);
  }
  return m;
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

struct Layer {
  std::size_t in, out;
  std::size_t w_off, b_off;  // b_off valid only with biases
};

std::vector<Layer> layout(const MlpModel& m) {
  std::vector<Layer> layers;
  std::size_t off = 0;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const std::size_t in = m.layer_dims[l], out = m.layer_dims[l + 1];
    layers.push_back({in, out, off, off + in * out});
    off += in * out + (m.use_bias ? out : 0);
  }
  return layers;
}

double act(Activation a, double x) {
  if (a == Activation::relu) return x > 0.0 ? x : 0.0;
  return x * 0.5 * std::erfc(-x * kInvSqrt2);
}

double dact(Activation a, double x) {
  if (a == Activation::relu) return x > 0.0 ? 1.0 : 0.0;
  return 0.5 * std::erfc(-x * kInvSqrt2) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double ddact(Activation a, double x) {
  if (a == Activation::relu) return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * x * x) * (2.0 - x * x);
}

MatrixXd apply_elementwise(const MatrixXd& z, Activation a, double (*f)(Activation, double)) {
  MatrixXd out(z.rows(), z.cols());
  const double* src = z.data();
  double* dst = out.data();
  for (Eigen::Index i = 0; i < z.size(); ++i) dst[i] = f(a, src[i]);
  return out;
}

struct ForwardCache {
  std::vector<MatrixXd> inputs;  // inputs[l]: input to layer l (B x in)
  std::vector<MatrixXd> pre;     // pre[l]: pre-activation output of layer l (B x out)
};

ConstRowMap weight_map(const double* params, const Layer& L) {
  return ConstRowMap(params + L.w_off, static_cast<Eigen::Index>(L.out), static_cast<Eigen::Index>(L.in));
}

Eigen::Map<const VectorXd> bias_map(const double* params, const Layer& L) {
  return Eigen::Map<const VectorXd>(params + L.b_off, static_cast<Eigen::Index>(L.out));
}

ForwardCache run_forward(const MlpModel& m, const std::vector<Layer>& layers, const RowMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != m.input_dim()) throw std::invalid_argument("dim mismatch");
  ForwardCache c;
  c.inputs.reserve(layers.size());
  c.pre.reserve(layers.size());
  c.inputs.emplace_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    MatrixXd z = c.inputs[l] * weight_map(m.weights.data(), L).transpose();
    if (m.use_bias) z.rowwise() += bias_map(m.weights.data(), L).transpose();
    if (l + 1 < layers.size()) c.inputs.push_back(apply_elementwise(z, m.activation, act));
    c.pre.push_back(std::move(z));
  }
  return c;
}

// Row-wise softmax probabilities and the mean cross-entropy.
MatrixXd softmax_rows(const MatrixXd& logits, const std::vector<int>& y, double* mean_loss) {
  MatrixXd p(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    double s = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      p(i, k) = std::exp(logits(i, k) - mx);
      s += p(i, k);
    }
    p.row(i) /= s;
    if (mean_loss) loss += (std::log(s) + mx) - logits(i, y[static_cast<std::size_t>(i)]);
  }
  if (mean_loss) *mean_loss = loss / static_cast<double>(logits.rows());
  return p;
}

void check_batch(const MlpModel& m, const Batch& b) {
  if (b.size() == 0) throw std::invalid_argument("empty batch");
  if (static_cast<std::size_t>(b.x.rows()) != b.size()) throw std::invalid_argument("batch rows/labels mismatch");
  for (int label : b.y)
    if (label < 0 || static_cast<std::size_t>(label) >= m.output_dim())
      throw std::invalid_argument("label out of range for model output");
}

}  // namespace

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch b;
  b.x.resize(static_cast<Eigen::Index>(indices.size()), data.features.cols());
  b.y.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= data.size()) throw std::out_of_range("batch index out of range");
    b.x.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(indices[i]));
    b.y[i] = data.labels[indices[i]];
  }
  return b;
}

Batch full_batch(const Dataset& data) {
  Batch b;
  b.x = data.features;
  b.y = data.labels;
  return b;
}

std::vector<double> forward(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) throw std::invalid_argument("dim mismatch");
  RowMatrix row(1, static_cast<Eigen::Index>(x.size()));
  std::copy(x.begin(), x.end(), row.data());
  const auto cache = run_forward(model, layout(model), row);
  const auto& z = cache.pre.back();
  return std::vector<double>(z.data(), z.data() + z.size());
}

double loss_only(const MlpModel& model, const Batch& batch) {
  check_batch(model, batch);
  const auto cache = run_forward(model, layout(model), batch.x);
  double loss = 0.0;
  softmax_rows(cache.pre.back(), batch.y, &loss);
  return loss;
}

LossGrad loss_and_grad(const MlpModel& model, const Batch& batch) {
  check_batch(model, batch);
  const auto layers = layout(model);
  const auto cache = run_forward(model, layers, batch.x);
  LossGrad out;
  MatrixXd g = softmax_rows(cache.pre.back(), batch.y, &out.loss);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) g(static_cast<Eigen::Index>(i), batch.y[i]) -= 1.0;
  g *= inv_b;

  out.grad.assign(model.param_count(), 0.0);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& L = layers[l];
    RowMap(out.grad.data() + L.w_off, static_cast<Eigen::Index>(L.out), static_cast<Eigen::Index>(L.in)) =
        g.transpose() * cache.inputs[l];
    if (model.use_bias)
      Eigen::Map<VectorXd>(out.grad.data() + L.b_off, static_cast<Eigen::Index>(L.out)) = g.colwise().sum().transpose();
    if (l > 0) {
      MatrixXd e = g * weight_map(model.weights.data(), L);
      g = e.cwiseProduct(apply_elementwise(cache.pre[l - 1], model.activation, dact));
    }
  }
  return out;
}

std::vector<double> hvp(const MlpModel& model, const Batch& batch, std::span<const double> v) {
  check_batch(model, batch);
  if (v.size() != model.param_count()) throw std::invalid_argument("dim mismatch");
  const auto layers = layout(model);
  const auto cache = run_forward(model, layers, batch.x);
  const std::size_t nl = layers.size();
  const double* w = model.weights.data();
  const double* dv = v.data();
  const auto bsz = static_cast<Eigen::Index>(batch.size());

  // Forward directional derivatives: r_in[l] = R(input of layer l), r_pre[l] = R(pre-activation).
  std::vector<MatrixXd> r_in(nl), r_pre(nl);
  std::vector<MatrixXd> d1(nl), d2(nl);  // activation derivatives at pre[l], hidden layers only
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& L = layers[l];
    MatrixXd rz = cache.inputs[l] * weight_map(dv, L).transpose();
    if (l > 0) rz.noalias() += r_in[l] * weight_map(w, L).transpose();
    if (model.use_bias) rz.rowwise() += bias_map(dv, L).transpose();
    if (l + 1 < nl) {
      d1[l] = apply_elementwise(cache.pre[l], model.activation, dact);
      d2[l] = apply_elementwise(cache.pre[l], model.activation, ddact);
      r_in[l + 1] = d1[l].cwiseProduct(rz);
    }
    r_pre[l] = std::move(rz);
  }

  MatrixXd p = softmax_rows(cache.pre.back(), batch.y, nullptr);
  const MatrixXd& rz_out = r_pre.back();
  VectorXd row_dot = p.cwiseProduct(rz_out).rowwise().sum();
  MatrixXd rg = p.cwiseProduct(rz_out.colwise() - row_dot);
  MatrixXd g = p;
  for (Eigen::Index i = 0; i < bsz; ++i) g(i, batch.y[static_cast<std::size_t>(i)]) -= 1.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  g *= inv_b;
  rg *= inv_b;

  std::vector<double> out(model.param_count(), 0.0);
  for (std::size_t l = nl; l-- > 0;) {
    const auto& L = layers[l];
    RowMap hw(out.data() + L.w_off, static_cast<Eigen::Index>(L.out), static_cast<Eigen::Index>(L.in));
    hw = rg.transpose() * cache.inputs[l];
    if (l > 0) hw.noalias() += g.transpose() * r_in[l];
    if (model.use_bias)
      Eigen::Map<VectorXd>(out.data() + L.b_off, static_cast<Eigen::Index>(L.out)) = rg.colwise().sum().transpose();
    if (l > 0) {
      const auto wl = weight_map(w, L);
      MatrixXd e = g * wl;
      MatrixXd re = rg * wl;
      re.noalias() += g * weight_map(dv, L);
      g = e.cwiseProduct(d1[l - 1]);
      rg = re.cwiseProduct(d1[l - 1]) + e.cwiseProduct(d2[l - 1]).cwiseProduct(r_pre[l - 1]);
    }
  }
  return out;
}

DenseSymmetric assemble_hessian(const SymmetricOperator& op) {
  DenseSymmetric h = assemble_dense(op);
  double scale = 1.0;
  for (double x : h.entries) scale = std::max(scale, std::abs(x));
  const double asym = max_asymmetry(h);
  if (asym > 1e-6 * scale) {
    std::ostringstream msg;
    msg << "exact_hessian: asymmetry " << asym << " exceeds tolerance";
    throw std::runtime_error(msg.str());
  }
  for (std::size_t i = 0; i < h.order; ++i)
    for (std::size_t j = i + 1; j < h.order; ++j) {
      const double s = 0.5 * (h(i, j) + h(j, i));
      h(i, j) = s;
      h(j, i) = s;
    }
  return h;
}

DenseSymmetric exact_hessian(const MlpModel& model, const Batch& batch) {
  if (model.param_count() > kExactHessianMaxParams) {
    std::ostringstream msg;
    msg << "exact_hessian: " << model.param_count() << " parameters exceed the guard of " << kExactHessianMaxParams
        << "; use the SLQ path";
    throw std::invalid_argument(msg.str());
  }
  return assemble_hessian(minibatch_hessian_operator(model, batch));
}

SymmetricOperator minibatch_hessian_operator(const MlpModel& model, Batch batch) {
  check_batch(model, batch);
  for (double x : model.weights)
    if (!std::isfinite(x)) throw std::invalid_argument("minibatch_hessian_operator: non-finite parameters");
  return SymmetricOperator(model.param_count(),
                           [model, batch = std::move(batch)](std::span<const double> v, std::span<double> out) {
                             const auto hv = hvp(model, batch, v);
                             std::copy(hv.begin(), hv.end(), out.begin());
                           });
}

std::vector<double> symmetric_eigenvalues(const DenseSymmetric& m) {
  Eigen::Map<const RowMatrix> a(m.entries.data(), static_cast<Eigen::Index>(m.order),
                                static_cast<Eigen::Index>(m.order));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(MatrixXd(a), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed");
  const auto& ev = es.eigenvalues();
  return std::vector<double>(ev.data(), ev.data() + ev.size());
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t b, Rng& rng,
                                                    std::vector<std::size_t>& scratch) {
  if (b > n) throw std::invalid_argument("batch size exceeds dataset size");
  if (scratch.size() != n) {
    scratch.resize(n);
    std::iota(scratch.begin(), scratch.end(), 0);
  }
  for (std::size_t i = 0; i < b; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(scratch[i], scratch[pick(rng)]);
  }
  return std::vector<std::size_t>(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(b));
}

EpochStats sgd_epoch(MlpModel& model, const Dataset& data, const OptimizerConfig& cfg, Rng& rng,
                     OptimizerState& state, std::vector<std::vector<std::size_t>>* trace) {
  const std::size_t n = data.size();
  if (cfg.batch_size == 0 || cfg.batch_size > n) throw std::invalid_argument("batch size must be in [1, n]");
  if (state.velocity.size() != model.param_count()) state.velocity.assign(model.param_count(), 0.0);
  EpochStats stats;
  stats.steps = (n + cfg.batch_size - 1) / cfg.batch_size;
  double loss_sum = 0.0;
  for (std::size_t s = 0; s < stats.steps; ++s) {
    auto idx = sample_without_replacement(n, cfg.batch_size, rng, state.scratch);
    const Batch batch = make_batch(data, idx);
    const LossGrad lg = loss_and_grad(model, batch);
    loss_sum += lg.loss;
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
      state.velocity[i] = cfg.momentum * state.velocity[i] + lg.grad[i];
      model.weights[i] -= cfg.eta * (state.velocity[i] + cfg.weight_decay * model.weights[i]);
    }
    ++state.steps;
    if (trace) trace->push_back(std::move(idx));
  }
  stats.mean_loss = loss_sum / static_cast<double>(stats.steps);
  return stats;
}

EvalResult evaluate(const MlpModel& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const auto layers = layout(model);
  constexpr std::size_t kChunk = 2048;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, data.size() - start);
    RowMatrix x = data.features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
    std::vector<int> y(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                       data.labels.begin() + static_cast<std::ptrdiff_t>(start + count));
    const auto cache = run_forward(model, layers, x);
    const auto& logits = cache.pre.back();
    double chunk_loss = 0.0;
    softmax_rows(logits, y, &chunk_loss);
    loss_sum += chunk_loss * static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      Eigen::Index best;
      logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      if (best == y[i]) ++correct;
    }
  }
  return {loss_sum / static_cast<double>(data.size()),
          static_cast<double>(correct) / static_cast<double>(data.size())};
}

namespace {

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const std::string& path) {
  if (off + 4 > buf.size()) throw std::runtime_error(path + ": truncated IDX header");
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
         std::uint32_t{buf[off + 3]};
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_bytes(images_path);
  const auto lab = read_bytes(labels_path);
  const auto img_magic = read_be32(img, 0, images_path);
  if (img_magic != 0x00000803) {
    std::ostringstream msg;
    msg << images_path << ": bad IDX image magic 0x" << std::hex << img_magic;
    throw std::runtime_error(msg.str());
  }
  const auto lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != 0x00000801) {
    std::ostringstream msg;
    msg << labels_path << ": bad IDX label magic 0x" << std::hex << lab_magic;
    throw std::runtime_error(msg.str());
  }
  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t n_labels = read_be32(lab, 4, labels_path);
  if (n != n_labels) throw std::runtime_error("IDX image/label count mismatch");
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels) throw std::runtime_error(images_path + ": truncated IDX image data");
  if (lab.size() < 8 + n) throw std::runtime_error(labels_path + ": truncated IDX label data");

  Dataset d;
  d.name = "mnist";
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
  d.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < pixels; ++k)
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = img[16 + i * pixels + k] / 255.0;
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  return d;
}

std::pair<Dataset, Dataset> modular_addition_dataset(std::size_t p, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw std::invalid_argument("train_frac must be in (0, 1)");
  if (p < 2) throw std::invalid_argument("modulus must be >= 2");
  const std::size_t total = p * p;
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(total)));

  auto build = [&](std::size_t begin, std::size_t end, const char* name) {
    Dataset d;
    d.name = name;
    d.classes = p;
    d.features = RowMatrix::Zero(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(2 * p));
    d.labels.resize(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
      const std::size_t a = order[r] / p, b = order[r] % p;
      const auto row = static_cast<Eigen::Index>(r - begin);
      d.features(row, static_cast<Eigen::Index>(a)) = 1.0;
      d.features(row, static_cast<Eigen::Index>(p + b)) = 1.0;
      d.labels[r - begin] = static_cast<int>((a + b) % p);
    }
    return d;
  };
  return {build(0, n_train, "modadd-train"), build(n_train, total, "modadd-test")};
}

std::pair<Dataset, Dataset> synthetic_blobs_split(std::size_t n_train, std::size_t n_test, std::size_t dim,
                                                  std::size_t classes, std::uint64_t seed, double spread) {
  if (n_train == 0) throw std::invalid_argument("synthetic_blobs: n must be positive");
  if (dim == 0 || classes == 0) throw std::invalid_argument("synthetic_blobs: dim and classes must be positive");
  Rng rng(seed);
  std::normal_distribution<double> gauss;
  RowMatrix centers(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = spread * gauss(rng);
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);

  auto draw = [&](std::size_t n, const char* name) {
    Dataset d;
    d.name = name;
    d.classes = classes;
    d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = classes == 1 ? 0 : pick(rng);
      d.labels[i] = static_cast<int>(c);
      for (std::size_t k = 0; k < dim; ++k)
        d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            centers(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) + gauss(rng);
    }
    return d;
  };
  Dataset train = draw(n_train, "blobs-train");
  Dataset test = n_test > 0 ? draw(n_test, "blobs-test") : Dataset{};
  return {std::move(train), std::move(test)};
}

Dataset synthetic_blobs(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed, double spread) {
  auto d = synthetic_blobs_split(n, 0, dim, classes, seed, spread).first;
  d.name = "blobs";
  return d;
}

namespace {

constexpr char kCheckpointMagic[6] = {'S', 'D', 'M', 'L', 'P', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint: truncated");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

void put_f64(std::ostream& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  put_u32(out, static_cast<std::uint32_t>(bits));
  put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

double get_f64(std::istream& in) {
  const std::uint64_t lo = get_u32(in);
  const std::uint64_t hi = get_u32(in);
  return std::bit_cast<double>(lo | (hi << 32));
}

}  // namespace

void save_checkpoint(const MlpModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, static_cast<std::uint32_t>(model.num_layers()));
  for (auto d : model.layer_dims) put_u32(out, static_cast<std::uint32_t>(d));
  const std::uint32_t flags = (model.use_bias ? 1u : 0u) | (model.activation == Activation::gelu ? 2u : 0u);
  put_u32(out, flags);
  for (double w : model.weights) put_f64(out, w);
}

MlpModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, kCheckpointMagic, 6) != 0)
    throw std::runtime_error(path + ": not an SDMLP1 checkpoint");
  const std::uint32_t layers = get_u32(in);
  std::vector<std::size_t> dims(layers + 1);
  for (auto& d : dims) d = get_u32(in);
  const std::uint32_t flags = get_u32(in);
  MlpModel m = MlpModel::zeros(dims, (flags & 1u) != 0, (flags & 2u) ? Activation::gelu : Activation::relu);
  for (auto& w : m.weights) w = get_f64(in);
  return m;
}

}  // namespace sharpdim::nn
