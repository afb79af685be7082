#include "sharpdim/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sharpdim/csv.hpp"
#include "sharpdim/density.hpp"
#include "sharpdim/parallel.hpp"
#include "sharpdim/sharpness.hpp"

namespace sharpdim::exp {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

const std::map<std::string, std::string>& key_aliases() {
  static const std::map<std::string, std::string> aliases = {
      {"lr", "eta"},          {"learning_rate", "eta"}, {"bs", "batch_size"},     {"batch", "batch_size"},
      {"wd", "weight_decay"}, {"mu", "momentum"},       {"seed", "seeds"},        {"lanczos_runs", "runs"},
      {"lanczos_steps", "steps"}, {"M", "pseudo_count"}, {"output", "output_dir"}};
  return aliases;
}

// Walks one JSON object, remembering which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string child(const std::string& key) const { return path_ + "/" + key; }

  double number(const std::string& key, double fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(child(key), "expected a number");
    return v->get<double>();
  }

  double positive(const std::string& key, double fallback) {
    const double v = number(key, fallback);
    if (!(v > 0.0)) throw ConfigError(child(key), "must be positive");
    return v;
  }

  std::size_t count(const std::string& key, std::size_t fallback, std::size_t min_value = 0) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
      throw ConfigError(child(key), "expected a non-negative integer");
    const auto r = v->get<std::size_t>();
    if (r < min_value) throw ConfigError(child(key), "must be >= " + std::to_string(min_value));
    return r;
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    return static_cast<std::uint64_t>(count(key, static_cast<std::size_t>(fallback)));
  }

  bool flag(const std::string& key, bool fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(child(key), "expected true or false");
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(child(key), "expected a string");
    return v->get<std::string>();
  }

  template <typename T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_array() || v->empty()) throw ConfigError(child(key), "must be a non-empty list");
    std::vector<T> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      const std::string p = child(key) + "/" + std::to_string(i);
      if constexpr (std::is_floating_point_v<T>) {
        if (!e.is_number()) throw ConfigError(p, "expected a number");
      } else {
        if (!e.is_number_integer() || e.get<long long>() < 0) throw ConfigError(p, "expected a non-negative integer");
      }
      out.push_back(e.get<T>());
    }
    return out;
  }

  // Rejects any key that was never consumed.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (seen_.count(it.key())) continue;
      std::string msg = "unknown key '" + it.key() + "'";
      std::string suggestion;
      if (auto a = key_aliases().find(it.key()); a != key_aliases().end() && seen_.count(a->second))
        suggestion = a->second;
      if (suggestion.empty()) {
        std::size_t best = 3;
        for (const auto& k : seen_) {
          const auto d = edit_distance(it.key(), k);
          if (d < best) {
            best = d;
            suggestion = k;
          }
        }
      }
      if (!suggestion.empty()) msg += " (did you mean '" + suggestion + "'?)";
      throw ConfigError(child(it.key()), msg);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ExperimentKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "mlp_grid") return ExperimentKind::mlp_grid;
  if (s == "grokking") return ExperimentKind::grokking;
  if (s == "attractor") return ExperimentKind::attractor;
  if (s == "slq_bench") return ExperimentKind::slq_bench;
  throw ConfigError(path, "unknown experiment '" + s + "' (expected mlp_grid, grokking, attractor or slq_bench)");
}

std::string kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::mlp_grid: return "mlp_grid";
    case ExperimentKind::grokking: return "grokking";
    case ExperimentKind::attractor: return "attractor";
    case ExperimentKind::slq_bench: return "slq_bench";
  }
  return "mlp_grid";
}

void parse_dataset(ObjectReader r, DatasetSpec& d) {
  d.kind = r.text("kind", d.kind);
  if (d.kind != "blobs" && d.kind != "mnist" && d.kind != "modular")
    throw ConfigError(r.child("kind"), "expected blobs, mnist or modular");
  d.seed = r.u64("seed", d.seed);
  if (d.kind == "blobs") {
    d.n_train = r.count("n_train", d.n_train, 1);
    d.n_test = r.count("n_test", d.n_test, 1);
    d.dim = r.count("dim", d.dim, 1);
    d.classes = r.count("classes", d.classes, 1);
    d.spread = r.positive("spread", d.spread);
  } else if (d.kind == "mnist") {
    d.train_images = r.text("train_images", "");
    d.train_labels = r.text("train_labels", "");
    d.test_images = r.text("test_images", "");
    d.test_labels = r.text("test_labels", "");
    d.limit = r.count("limit", 0);
    for (const char* k : {"train_images", "train_labels", "test_images", "test_labels"})
      if (!r.has(k)) throw ConfigError(r.child(k), "required for mnist datasets");
  } else {
    d.modulus = r.count("modulus", d.modulus, 2);
    d.train_frac = r.number("train_frac", d.train_frac);
    if (!(d.train_frac > 0.0 && d.train_frac < 1.0)) throw ConfigError(r.child("train_frac"), "must be in (0, 1)");
  }
  r.finish();
}

void parse_model(ObjectReader r, ModelSpec& m) {
  if (r.has("hidden")) {
    const json* v = r.get("hidden");
    if (!v || !v->is_array()) throw ConfigError(r.child("hidden"), "expected a list of widths");
    m.hidden.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!e.is_number_integer() || e.get<long long>() <= 0)
        throw ConfigError(r.child("hidden") + "/" + std::to_string(i), "expected a positive integer");
      m.hidden.push_back(e.get<std::size_t>());
    }
  }
  m.activation = r.text("activation", m.activation);
  if (m.activation != "relu" && m.activation != "gelu")
    throw ConfigError(r.child("activation"), "expected relu or gelu");
  m.bias = r.flag("bias", m.bias);
  r.finish();
}

void parse_optimizer(ObjectReader r, OptimizerGrid& o) {
  o.eta = r.list<double>("eta", o.eta);
  for (std::size_t i = 0; i < o.eta.size(); ++i)
    if (!(o.eta[i] > 0.0)) throw ConfigError(r.child("eta") + "/" + std::to_string(i), "must be positive");
  o.batch_size = r.list<std::size_t>("batch_size", o.batch_size);
  for (std::size_t i = 0; i < o.batch_size.size(); ++i)
    if (o.batch_size[i] == 0) throw ConfigError(r.child("batch_size") + "/" + std::to_string(i), "must be positive");
  o.weight_decay = r.list<double>("weight_decay", o.weight_decay);
  for (std::size_t i = 0; i < o.weight_decay.size(); ++i)
    if (o.weight_decay[i] < 0.0)
      throw ConfigError(r.child("weight_decay") + "/" + std::to_string(i), "must be non-negative");
  o.seeds = r.list<std::uint64_t>("seeds", o.seeds);
  o.momentum = r.number("momentum", o.momentum);
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) throw ConfigError(r.child("momentum"), "must be in [0, 1)");
  o.epochs = r.count("epochs", o.epochs, 1);
  r.finish();
}

void parse_slq(ObjectReader r, SlqSpec& s) {
  s.enabled = r.flag("enabled", s.enabled);
  if (r.has("runs") && r.get("runs")->is_string()) {
    if (r.text("runs", "") != "two_epochs") throw ConfigError(r.child("runs"), "expected a count or \"two_epochs\"");
    s.two_epoch_runs = true;
  } else {
    s.runs = r.count("runs", s.runs, 1);
  }
  s.steps = r.count("steps", s.steps, 1);
  if (r.has("batch_size") && r.get("batch_size")) s.batch_size = r.count("batch_size", 0, 1);
  if (r.has("bandwidth") && r.get("bandwidth")) s.bandwidth = r.positive("bandwidth", 1.0);
  if (r.has("alpha_bandwidth") && r.get("alpha_bandwidth")) s.alpha_bandwidth = r.positive("alpha_bandwidth", 1.0);
  if (r.has("pseudo_count") && r.get("pseudo_count")) s.pseudo_count = r.count("pseudo_count", 0, 1);
  s.eps = r.positive("eps", s.eps);
  s.bins = r.count("bins", s.bins, 1);
  s.grid = r.count("grid", s.grid, 16);
  r.finish();
}

void parse_exact(ObjectReader r, ExactSpec& e) {
  e.enabled = r.flag("enabled", e.enabled);
  e.minibatches = r.count("minibatches", e.minibatches, 1);
  e.max_params = r.count("max_params", e.max_params, 1);
  if (e.max_params > nn::kExactHessianMaxParams)
    throw ConfigError(r.child("max_params"), "cannot exceed " + std::to_string(nn::kExactHessianMaxParams));
  r.finish();
}

void parse_attractor(ObjectReader r, AttractorSpec& a) {
  a.amplitude = r.number("amplitude", a.amplitude);
  if (a.amplitude < 0.0) throw ConfigError(r.child("amplitude"), "must be non-negative");
  a.frequency = r.positive("frequency", a.frequency);
  a.eta = r.positive("eta", a.eta);
  a.sigma = r.number("sigma", a.sigma);
  if (a.sigma < 0.0) throw ConfigError(r.child("sigma"), "must be non-negative");
  a.steps = r.count("steps", a.steps, 1);
  a.particles = r.count("particles", a.particles, 1);
  a.realizations = r.count("realizations", a.realizations, 1);
  a.init_range = r.positive("init_range", a.init_range);
  a.scales = r.count("scales", a.scales, 4);
  a.slack = r.number("slack", a.slack);
  a.seed = r.u64("seed", a.seed);
  r.finish();
}

void parse_bench(ObjectReader r, BenchSpec& b) {
  b.dim = r.count("dim", b.dim, 1);
  b.lo = r.positive("lo", b.lo);
  b.hi = r.positive("hi", b.hi);
  if (!(b.hi > b.lo)) throw ConfigError(r.child("hi"), "must exceed lo");
  b.negative_fraction = r.number("negative_fraction", b.negative_fraction);
  if (b.negative_fraction < 0.0 || b.negative_fraction > 1.0)
    throw ConfigError(r.child("negative_fraction"), "must be in [0, 1]");
  b.eta = r.positive("eta", b.eta);
  b.seed = r.u64("seed", b.seed);
  r.finish();
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  ObjectReader r(j, "");
  ExperimentConfig cfg;
  const json* schema = r.get("schema");
  if (!schema) throw ConfigError("/schema", "required (use 1)");
  if (!schema->is_number_integer() || schema->get<int>() != 1) throw ConfigError("/schema", "unsupported schema version");
  const json* kind = r.get("experiment");
  if (!kind || !kind->is_string()) throw ConfigError("/experiment", "required string");
  cfg.experiment = parse_kind(kind->get<std::string>(), "/experiment");
  cfg.output_dir = r.text("output_dir", cfg.output_dir);
  cfg.checkpoints = r.count("checkpoints", cfg.checkpoints, 1);
  if (cfg.experiment == ExperimentKind::grokking) {
    cfg.dataset.kind = "modular";
    cfg.model.hidden = {32};
    cfg.model.activation = "gelu";
  }
  if (const json* v = r.get("dataset")) parse_dataset(ObjectReader(*v, "/dataset"), cfg.dataset);
  if (const json* v = r.get("model")) parse_model(ObjectReader(*v, "/model"), cfg.model);
  if (const json* v = r.get("optimizer")) parse_optimizer(ObjectReader(*v, "/optimizer"), cfg.optimizer);
  if (const json* v = r.get("slq")) parse_slq(ObjectReader(*v, "/slq"), cfg.slq);
  if (const json* v = r.get("exact")) parse_exact(ObjectReader(*v, "/exact"), cfg.exact);
  if (const json* v = r.get("attractor")) parse_attractor(ObjectReader(*v, "/attractor"), cfg.attractor);
  if (const json* v = r.get("bench")) parse_bench(ObjectReader(*v, "/bench"), cfg.bench);
  r.finish();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

json dataset_json(const DatasetSpec& d) {
  json j = {{"kind", d.kind}, {"seed", d.seed}};
  if (d.kind == "blobs") {
    j.update({{"n_train", d.n_train}, {"n_test", d.n_test}, {"dim", d.dim}, {"classes", d.classes}, {"spread", d.spread}});
  } else if (d.kind == "mnist") {
    j.update({{"train_images", d.train_images}, {"train_labels", d.train_labels}, {"test_images", d.test_images},
              {"test_labels", d.test_labels}, {"limit", d.limit}});
  } else {
    j.update({{"modulus", d.modulus}, {"train_frac", d.train_frac}});
  }
  return j;
}

json slq_json(const SlqSpec& s) {
  json j = {{"enabled", s.enabled}, {"runs", s.two_epoch_runs ? json("two_epochs") : json(s.runs)}, {"steps", s.steps}, {"eps", s.eps}, {"bins", s.bins}, {"grid", s.grid}};
  j["batch_size"] = s.batch_size ? json(*s.batch_size) : json(nullptr);
  j["bandwidth"] = s.bandwidth ? json(*s.bandwidth) : json(nullptr);
  j["alpha_bandwidth"] = s.alpha_bandwidth ? json(*s.alpha_bandwidth) : json(nullptr);
  j["pseudo_count"] = s.pseudo_count ? json(*s.pseudo_count) : json(nullptr);
  return j;
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["schema"] = c.schema;
  j["experiment"] = kind_name(c.experiment);
  j["output_dir"] = c.output_dir;
  j["checkpoints"] = c.checkpoints;
  j["dataset"] = dataset_json(c.dataset);
  j["model"] = {{"hidden", c.model.hidden}, {"activation", c.model.activation}, {"bias", c.model.bias}};
  j["optimizer"] = {{"eta", c.optimizer.eta},       {"batch_size", c.optimizer.batch_size},
                    {"weight_decay", c.optimizer.weight_decay}, {"seeds", c.optimizer.seeds},
                    {"momentum", c.optimizer.momentum}, {"epochs", c.optimizer.epochs}};
  j["slq"] = slq_json(c.slq);
  j["exact"] = {{"enabled", c.exact.enabled}, {"minibatches", c.exact.minibatches}, {"max_params", c.exact.max_params}};
  const auto& a = c.attractor;
  j["attractor"] = {{"amplitude", a.amplitude}, {"frequency", a.frequency}, {"eta", a.eta},
                    {"sigma", a.sigma},         {"steps", a.steps},         {"particles", a.particles},
                    {"realizations", a.realizations}, {"init_range", a.init_range}, {"scales", a.scales},
                    {"slack", a.slack},         {"seed", a.seed}};
  const auto& b = c.bench;
  j["bench"] = {{"dim", b.dim}, {"lo", b.lo}, {"hi", b.hi}, {"negative_fraction", b.negative_fraction},
                {"eta", b.eta}, {"seed", b.seed}};
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string table_text(const CsvTable& t) {
  std::ostringstream out;
  write_csv(out, t);
  return out.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

}  // namespace

std::string canonical_config_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(); }

// ---------------------------------------------------------------------------
// Data and measures

DataPair load_datasets(const DatasetSpec& spec) {
  DataPair p;
  if (spec.kind == "blobs") {
    auto [tr, te] = nn::synthetic_blobs_split(spec.n_train, spec.n_test, spec.dim, spec.classes, spec.seed, spec.spread);
    p.train = std::move(tr);
    p.test = std::move(te);
  } else if (spec.kind == "mnist") {
    p.train = nn::load_mnist_idx(spec.train_images, spec.train_labels);
    p.test = nn::load_mnist_idx(spec.test_images, spec.test_labels);
    auto truncate = [&](nn::Dataset& d) {
      if (spec.limit == 0 || spec.limit >= d.size()) return;
      d.features.conservativeResize(static_cast<Eigen::Index>(spec.limit), Eigen::NoChange);
      d.labels.resize(spec.limit);
    };
    truncate(p.train);
    truncate(p.test);
  } else {
    auto [tr, te] = nn::modular_addition_dataset(spec.modulus, spec.train_frac, spec.seed);
    p.train = std::move(tr);
    p.test = std::move(te);
  }
  return p;
}

std::map<std::string, double> compute_measures(const nn::MlpModel& model, const nn::Dataset& train, double eta,
                                               const MeasureOptions& opts, std::uint64_t seed) {
  std::map<std::string, double> out;
  const std::size_t n = train.size();
  const std::size_t hb = std::min(opts.hessian_batch, n);
  const std::size_t params = model.param_count();
  const PushforwardParams pf{eta, opts.slq.eps};

  if (opts.exact.enabled && params <= opts.exact.max_params) {
    Rng rng = make_stream(seed, 0);
    std::vector<std::size_t> scratch;
    std::vector<std::vector<double>> spectra;
    for (std::size_t i = 0; i < opts.exact.minibatches; ++i) {
      const auto idx = nn::sample_without_replacement(n, hb, rng, scratch);
      const auto h = nn::exact_hessian(model, nn::make_batch(train, idx));
      spectra.push_back(nn::symmetric_eigenvalues(h));
    }
    const auto lambda = rds_sharpness_from_spectra(spectra, pf, AggregateMode::mean);
    out["sd_exact"] = sharpness_dimension(lambda).sd;
    out["lambda1_exact"] = lambda.values.front();
  }

  if (opts.slq.enabled) {
    SlqConfig cfg;
    cfg.runs = opts.slq.two_epoch_runs ? (2 * n + hb - 1) / hb : opts.slq.runs;
    cfg.steps = std::min(opts.slq.steps, params);
    cfg.seed = stream_seed(seed, 1);
    OperatorFactory factory = [&](std::size_t, Rng& rng) {
      std::vector<std::size_t> scratch;
      const auto idx = nn::sample_without_replacement(n, hb, rng, scratch);
      return nn::minibatch_hessian_operator(model, nn::make_batch(train, idx));
    };
    const SpectralMeasure nu = empirical_spectral_measure(factory, cfg, opts.workers);
    const SpectralMeasure z = pushforward_measure(nu, pf);

    DensityEstimate hist = histogram_density(z, opts.slq.bins);
    hist.pushforward = pf;
    out["sd_slq"] = sd_from_density(hist).sd;

    const double hz = opts.slq.bandwidth ? *opts.slq.bandwidth : silverman_bandwidth(z, opts.slq.grid);
    DensityEstimate kz = kde_density(z, hz, opts.slq.grid);
    kz.pushforward = pf;
    out["sd_kde"] = sd_from_density(kz).sd;

    const double ha = opts.slq.alpha_bandwidth ? *opts.slq.alpha_bandwidth : silverman_bandwidth(nu, opts.slq.grid);
    const DensityEstimate ka = kde_density(nu, ha, opts.slq.grid);
    const std::size_t m = opts.slq.pseudo_count ? *opts.slq.pseudo_count : default_pseudo_count(params);
    out["sd_ps"] = sd_pseudospectrum(ka, m, pf).sd;

    out["trace"] = estimate_trace(nu);
    out["sharpness"] = estimate_top_abs_eigenvalue(nu);
    double top_z = -INFINITY;
    for (const auto& a : z.atoms) top_z = std::max(top_z, a.value);
    out["lambda1"] = top_z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training grids

std::vector<GridCell> grid_cells(const OptimizerGrid& grid) {
  std::vector<GridCell> cells;
  for (double eta : grid.eta)
    for (std::size_t b : grid.batch_size)
      for (double wd : grid.weight_decay)
        for (std::uint64_t s : grid.seeds) cells.push_back({eta, b, wd, s});
  return cells;
}

std::string run_id(const ExperimentConfig& cfg, const GridCell& cell) {
  json j = config_json(cfg);
  j.erase("output_dir");
  j.erase("attractor");
  j.erase("bench");
  j["optimizer"].erase("eta");
  j["optimizer"].erase("batch_size");
  j["optimizer"].erase("weight_decay");
  j["optimizer"].erase("seeds");
  j["cell"] = {{"eta", cell.eta}, {"batch_size", cell.batch_size}, {"weight_decay", cell.weight_decay}, {"seed", cell.seed}};
  return hex64(fnv1a(j.dump()));
}

namespace {

std::vector<std::size_t> model_dims(const ExperimentConfig& cfg, const DataPair& data) {
  std::vector<std::size_t> dims = {static_cast<std::size_t>(data.train.features.cols())};
  dims.insert(dims.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
  dims.push_back(data.train.classes);
  return dims;
}

std::vector<std::size_t> checkpoint_epochs(std::size_t epochs, std::size_t count) {
  std::vector<std::size_t> out;
  count = std::min(count, epochs);
  for (std::size_t c = 1; c <= count; ++c) {
    const std::size_t e = (c * epochs + count / 2) / count;
    if (out.empty() || e > out.back()) out.push_back(std::max<std::size_t>(e, 1));
  }
  return out;
}

struct CheckpointRow {
  std::size_t epoch = 0;
  nn::EvalResult train, test;
  std::map<std::string, double> measures;
};

struct CellResult {
  RunRecord record;
  std::vector<CheckpointRow> rows;
  std::uint64_t steps = 0;
  nn::MlpModel model;
};

CellResult train_cell(const ExperimentConfig& cfg, const DataPair& data, const GridCell& cell, const std::string& id,
                      std::size_t inner_workers) {
  CellResult res;
  Rng init_rng = make_stream(cell.seed, 0);
  Rng train_rng = make_stream(cell.seed, 1);
  nn::MlpModel model =
      nn::MlpModel::glorot(model_dims(cfg, data), cfg.model.bias, nn::activation_from_string(cfg.model.activation), init_rng);
  nn::OptimizerConfig oc;
  oc.eta = cell.eta;
  oc.batch_size = std::min(cell.batch_size, data.train.size());
  oc.momentum = cfg.optimizer.momentum;
  oc.weight_decay = cell.weight_decay;
  oc.epochs = cfg.optimizer.epochs;
  oc.seed = cell.seed;
  nn::OptimizerState state;

  MeasureOptions mo;
  mo.slq = cfg.slq;
  mo.exact = cfg.exact;
  mo.hessian_batch = cfg.slq.batch_size ? *cfg.slq.batch_size : oc.batch_size;
  mo.workers = inner_workers;
  const std::uint64_t measure_root = fnv1a(id);

  const auto schedule = checkpoint_epochs(oc.epochs, cfg.checkpoints);
  std::size_t next = 0;
  for (std::size_t epoch = 1; epoch <= oc.epochs; ++epoch) {
    nn::sgd_epoch(model, data.train, oc, train_rng, state);
    if (next < schedule.size() && schedule[next] == epoch) {
      CheckpointRow row;
      row.epoch = epoch;
      row.train = nn::evaluate(model, data.train);
      row.test = nn::evaluate(model, data.test);
      for (double w : model.weights)
        if (!std::isfinite(w)) throw std::runtime_error("training diverged (non-finite weights)");
      if (!std::isfinite(row.train.loss)) throw std::runtime_error("training diverged (non-finite loss)");
      row.measures = compute_measures(model, data.train, cell.eta, mo, stream_seed(measure_root, next));
      res.rows.push_back(std::move(row));
      ++next;
    }
  }
  res.steps = state.steps;

  const auto& last = res.rows.back();
  RunRecord& r = res.record;
  r.run_id = id;
  r.hyperparams = {{"eta", cell.eta},
                   {"batch_size", static_cast<double>(cell.batch_size)},
                   {"weight_decay", cell.weight_decay},
                   {"momentum", cfg.optimizer.momentum},
                   {"seed", static_cast<double>(cell.seed)}};
  r.train_loss = last.train.loss;
  r.test_loss = last.test.loss;
  r.train_acc = last.train.accuracy;
  r.test_acc = last.test.accuracy;
  r.measures = last.measures;
  res.model = std::move(model);
  return res;
}

json record_json(const RunRecord& r) {
  json j;
  j["run_id"] = r.run_id;
  j["hyperparams"] = r.hyperparams;
  j["train_loss"] = *r.train_loss;
  j["test_loss"] = *r.test_loss;
  j["train_acc"] = *r.train_acc;
  j["test_acc"] = *r.test_acc;
  j["measures"] = r.measures;
  return j;
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.hyperparams = j.at("hyperparams").get<std::map<std::string, double>>();
  r.train_loss = j.at("train_loss").get<double>();
  r.test_loss = j.at("test_loss").get<double>();
  r.train_acc = j.at("train_acc").get<double>();
  r.test_acc = j.at("test_acc").get<double>();
  r.measures = j.at("measures").get<std::map<std::string, double>>();
  return r;
}

json rows_json(const std::vector<CheckpointRow>& rows) {
  json arr = json::array();
  for (const auto& row : rows)
    arr.push_back({{"epoch", row.epoch},
                   {"train_loss", row.train.loss},
                   {"test_loss", row.test.loss},
                   {"train_acc", row.train.accuracy},
                   {"test_acc", row.test.accuracy},
                   {"measures", row.measures}});
  return arr;
}

}  // namespace

GridOutcome run_mlp_grid(const ExperimentConfig& cfg, std::size_t workers) {
  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir / "runs");
  const DataPair data = load_datasets(cfg.dataset);
  const auto cells = grid_cells(cfg.optimizer);
  const std::size_t inner = cells.size() == 1 ? workers : 1;

  struct Slot {
    std::optional<RunRecord> record;
    std::uint64_t steps = 0;
    bool reused = false;
    std::string failure;
  };
  std::vector<Slot> slots(cells.size());
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    const std::string id = run_id(cfg, cells[i]);
    const fs::path entry = out_dir / "runs" / (id + ".json");
    if (fs::exists(entry)) {
      try {
        const json j = json::parse(read_text(entry));
        if (j.value("status", "") == "ok") {
          slots[i].record = record_from_json(j.at("record"));
          slots[i].reused = true;
          return;
        }
      } catch (const std::exception&) {
        // unreadable registry entry: retrain
      }
    }
    try {
      CellResult res = train_cell(cfg, data, cells[i], id, inner);
      const fs::path ckpt = out_dir / "runs" / (id + ".bin");
      nn::save_checkpoint(res.model, ckpt.string());
      json j;
      j["run_id"] = id;
      j["status"] = "ok";
      j["record"] = record_json(res.record);
      j["checkpoints"] = rows_json(res.rows);
      j["artifacts"] = {{"checkpoint", (fs::path("runs") / (id + ".bin")).string()}};
      write_text(entry, j.dump(2) + "\n");
      slots[i].record = std::move(res.record);
      slots[i].steps = res.steps;
    } catch (const std::exception& e) {
      slots[i].failure = id + ": " + e.what();
      json j = {{"run_id", id}, {"status", "failed"}, {"error", e.what()}};
      write_text(entry, j.dump(2) + "\n");
    }
  });

  GridOutcome outcome;
  for (auto& s : slots) {
    outcome.training_steps += s.steps;
    if (s.reused) ++outcome.reused;
    if (s.record) outcome.records.push_back(std::move(*s.record));
    if (!s.failure.empty()) outcome.failures.push_back(s.failure);
  }
  write_text(out_dir / "runs.csv", table_text(records_to_table(outcome.records)));
  return outcome;
}

GrokOutcome run_grokking(const ExperimentConfig& cfg, std::size_t workers) {
  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  const DataPair data = load_datasets(cfg.dataset);
  const auto cells = grid_cells(cfg.optimizer);
  const std::size_t inner = cells.size() == 1 ? workers : 1;
  std::vector<CellResult> results(cells.size());
  std::vector<std::string> ids(cells.size());
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    ids[i] = run_id(cfg, cells[i]);
    results[i] = train_cell(cfg, data, cells[i], ids[i], inner);
  });

  GrokOutcome out;
  std::set<std::string> measure_names;
  for (const auto& r : results)
    for (const auto& row : r.rows)
      for (const auto& [k, v] : row.measures) measure_names.insert(k);
  out.table.header = {"run_id", "eta",       "batch_size", "weight_decay", "seed",    "epoch",   "train_loss",
                      "test_loss", "train_acc", "test_acc",  "acc_gap",      "loss_gap"};
  out.table.header.insert(out.table.header.end(), measure_names.begin(), measure_names.end());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out.training_steps += results[i].steps;
    for (const auto& row : results[i].rows) {
      std::vector<std::string> cellv = {ids[i],
                                        format_double(cells[i].eta),
                                        std::to_string(cells[i].batch_size),
                                        format_double(cells[i].weight_decay),
                                        std::to_string(cells[i].seed),
                                        std::to_string(row.epoch),
                                        format_double(row.train.loss),
                                        format_double(row.test.loss),
                                        format_double(row.train.accuracy),
                                        format_double(row.test.accuracy),
                                        format_double(std::abs(row.train.accuracy - row.test.accuracy)),
                                        format_double(std::abs(row.train.loss - row.test.loss))};
      for (const auto& name : measure_names) {
        auto it = row.measures.find(name);
        cellv.push_back(it == row.measures.end() ? std::string() : format_double(it->second));
      }
      out.table.rows.push_back(std::move(cellv));
    }
  }
  write_text(out_dir / "grokking.csv", table_text(out.table));
  return out;
}

// ---------------------------------------------------------------------------
// Attractor study

AttractorOutcome run_attractor_study(const ExperimentConfig& cfg, std::size_t workers) {
  const auto& a = cfg.attractor;
  rds::ToySystem sys{a.amplitude, a.frequency, a.eta, a.sigma};
  const auto initial = rds::uniform_cloud(a.particles, -a.init_range, a.init_range, stream_seed(a.seed, 0xC10D));
  rds::SnapshotPlan plan{a.steps, a.realizations, a.seed};

  AttractorOutcome out;
  out.sharpness_sup = rds::attractor_sharpness(sys, initial, plan, AggregateMode::sup, workers);
  out.sharpness_mean = rds::attractor_sharpness(sys, initial, plan, AggregateMode::mean, workers);
  out.sd_sup = sharpness_dimension(out.sharpness_sup);
  out.sd_mean = sharpness_dimension(out.sharpness_mean);

  // Snapshot of realization 0, with its spread history.
  const auto noise = rds::make_noise(a.steps, 2, a.sigma, stream_seed(a.seed, 0));
  auto [snapshot, spread] = rds::evolve_with_spread(sys, initial, noise, workers);
  out.spread = std::move(spread);
  out.bound = rds::verify_dimension_bound(snapshot, out.sharpness_sup, a.scales, a.slack);

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "cloud.csv", std::ios::binary);
    rds::write_cloud_csv(csv, snapshot);
  }
  json j;
  j["lambda_sup"] = out.sharpness_sup.values;
  j["lambda_mean"] = out.sharpness_mean.values;
  j["sd_sup"] = out.sd_sup.sd;
  j["sd_mean"] = out.sd_mean.sd;
  j["dim_m"] = out.bound.dim_m;
  j["fit_r2"] = out.bound.box.r2;
  j["degenerate"] = out.bound.box.degenerate;
  j["sd"] = out.bound.sd;
  j["slack"] = out.bound.slack;
  j["holds"] = out.bound.holds;
  json counts = json::array();
  for (const auto& c : out.bound.box.counts) counts.push_back({{"delta", c.scale}, {"occupied", c.occupied}});
  j["box_counts"] = counts;
  j["spread"] = out.spread;
  write_text(dir / "attractor_report.json", j.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// SLQ benchmark

DenseSymmetric bench_matrix(const BenchSpec& spec, std::vector<double>* eigenvalues) {
  const std::size_t n = spec.dim;
  Rng rng(spec.seed);
  std::vector<double> ev(n);
  const auto negatives = static_cast<std::size_t>(std::round(spec.negative_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    ev[i] = spec.lo * std::pow(spec.hi / spec.lo, t);
  }
  for (std::size_t i = 0; i < negatives; ++i) ev[i] = -ev[i];
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = gauss(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(ev.data(), static_cast<Eigen::Index>(n));
  const Eigen::MatrixXd a = q * d.asDiagonal() * q.transpose();
  DenseSymmetric m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = 0.5 * (a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +
                              a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
      m(i, j) = v;
    }
  std::sort(ev.begin(), ev.end());
  if (eigenvalues) *eigenvalues = std::move(ev);
  return m;
}

BenchOutcome run_slq_bench(const ExperimentConfig& cfg, std::size_t workers) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> ev;
  const DenseSymmetric m = bench_matrix(cfg.bench, &ev);
  const SymmetricOperator op = make_dense_operator(m);
  SlqConfig sc;
  sc.runs = cfg.slq.runs;
  sc.steps = std::min(cfg.slq.steps, op.dim());
  sc.seed = cfg.bench.seed;
  const SpectralMeasure nu = empirical_spectral_measure([&](std::size_t, Rng&) { return op; }, sc, workers);

  SpectralMeasure exact;
  exact.total_dim = ev.size();
  for (double v : ev) exact.atoms.push_back({v, 1.0});

  BenchOutcome out;
  for (double v : ev) out.true_trace += v;
  out.trace_estimate = estimate_trace(nu);
  out.top_abs_true = std::max(std::abs(ev.front()), std::abs(ev.back()));
  out.top_abs_estimate = estimate_top_abs_eigenvalue(nu);
  out.wasserstein = wasserstein1(nu, exact);
  out.spectral_range = ev.back() - ev.front();

  const PushforwardParams pf{cfg.bench.eta, cfg.slq.eps};
  out.sd_exact = sharpness_dimension(rds_sharpness_from_spectra({ev}, pf)).sd;
  const SpectralMeasure z = pushforward_measure(nu, pf);
  DensityEstimate hist = histogram_density(z, cfg.slq.bins);
  hist.pushforward = pf;
  out.sd_slq = sd_from_density(hist).sd;
  const double hz = cfg.slq.bandwidth ? *cfg.slq.bandwidth : silverman_bandwidth(z, cfg.slq.grid);
  DensityEstimate kz = kde_density(z, hz, cfg.slq.grid);
  kz.pushforward = pf;
  out.sd_kde = sd_from_density(kz).sd;
  const double ha = cfg.slq.alpha_bandwidth ? *cfg.slq.alpha_bandwidth : silverman_bandwidth(nu, cfg.slq.grid);
  const DensityEstimate ka = kde_density(nu, ha, cfg.slq.grid);
  out.sd_ps = sd_pseudospectrum(ka, cfg.slq.pseudo_count ? *cfg.slq.pseudo_count : default_pseudo_count(ev.size()), pf).sd;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "measure.csv", std::ios::binary);
    write_measure_csv(f, nu);
  }
  {
    std::ofstream f(dir / "hessian_kde.csv", std::ios::binary);
    write_density_csv(f, ka);
  }
  {
    std::ofstream f(dir / "pushforward_kde.csv", std::ios::binary);
    write_density_csv(f, kz);
  }
  write_text(dir / "pushforward_kde.json", density_sidecar_json(kz) + "\n");
  // Timing is reported on stdout only so bench.json stays reproducible.
  json j = {{"true_trace", out.true_trace},         {"trace_estimate", out.trace_estimate},
            {"top_abs_true", out.top_abs_true},     {"top_abs_estimate", out.top_abs_estimate},
            {"wasserstein1", out.wasserstein},      {"spectral_range", out.spectral_range},
            {"sd_exact", out.sd_exact},             {"sd_slq", out.sd_slq},
            {"sd_kde", out.sd_kde},                 {"sd_ps", out.sd_ps}};
  write_text(dir / "bench.json", j.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// Correlation and spectra

std::vector<CorrelationCell> run_correlate(const std::vector<std::string>& runs_csv_paths,
                                           const std::vector<std::string>& measures,
                                           const std::vector<std::string>& targets) {
  std::vector<RunRecord> records;
  for (const auto& path : runs_csv_paths) {
    const CsvTable t = read_csv_file(path);
    for (const auto& name : measures) t.column(name);
    for (const auto& name : targets)
      if (name != "acc_gap" && name != "loss_gap") t.column(name);
    auto rs = records_from_table(t);
    records.insert(records.end(), rs.begin(), rs.end());
  }
  if (records.size() < 2) throw std::invalid_argument("correlate: need at least two runs");
  return correlation_matrix(records, measures, targets);
}

void run_spectrum(const std::string& checkpoint_path, const ExperimentConfig& cfg, double eta,
                  const std::string& out_dir, std::size_t workers) {
  const nn::MlpModel model = nn::load_checkpoint(checkpoint_path);
  const DataPair data = load_datasets(cfg.dataset);
  const std::size_t n = data.train.size();
  const std::size_t hb = std::min(cfg.slq.batch_size ? *cfg.slq.batch_size : cfg.optimizer.batch_size.front(), n);
  SlqConfig sc;
  sc.runs = cfg.slq.two_epoch_runs ? (2 * n + hb - 1) / hb : cfg.slq.runs;
  sc.steps = std::min(cfg.slq.steps, model.param_count());
  {
    // Seed from the checkpoint bytes so the output does not depend on its path.
    std::ifstream in(checkpoint_path, std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    sc.seed = fnv1a(bytes.str());
  }
  OperatorFactory factory = [&](std::size_t, Rng& rng) {
    std::vector<std::size_t> scratch;
    const auto idx = nn::sample_without_replacement(n, hb, rng, scratch);
    return nn::minibatch_hessian_operator(model, nn::make_batch(data.train, idx));
  };
  const SpectralMeasure nu = empirical_spectral_measure(factory, sc, workers);
  const PushforwardParams pf{eta, cfg.slq.eps};
  const SpectralMeasure z = pushforward_measure(nu, pf);

  const fs::path dir = out_dir;
  fs::create_directories(dir);
  auto dump = [&](const std::string& stem, const DensityEstimate& d) {
    std::ofstream f(dir / (stem + ".csv"), std::ios::binary);
    write_density_csv(f, d);
    write_text(dir / (stem + ".json"), density_sidecar_json(d) + "\n");
  };
  dump("hessian_hist", histogram_density(nu, cfg.slq.bins));
  dump("hessian_kde", kde_density(nu, cfg.slq.alpha_bandwidth ? *cfg.slq.alpha_bandwidth : silverman_bandwidth(nu, cfg.slq.grid),
                                  cfg.slq.grid));
  DensityEstimate zh = histogram_density(z, cfg.slq.bins);
  zh.pushforward = pf;
  dump("pushforward_hist", zh);
  DensityEstimate zk =
      kde_density(z, cfg.slq.bandwidth ? *cfg.slq.bandwidth : silverman_bandwidth(z, cfg.slq.grid), cfg.slq.grid);
  zk.pushforward = pf;
  dump("pushforward_kde", zk);
  std::ofstream f(dir / "measure.csv", std::ios::binary);
  write_measure_csv(f, nu);
}

}  // namespace sharpdim::exp
