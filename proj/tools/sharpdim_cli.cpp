#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sharpdim/csv.hpp"
#include "sharpdim/experiments.hpp"
#include "sharpdim/metrics.hpp"
#include "sharpdim/parallel.hpp"

namespace ex = sharpdim::exp;

namespace {

int run_train_grid(const std::string& path, std::size_t workers) {
  const auto cfg = ex::parse_config(path);
  const auto out = ex::run_mlp_grid(cfg, workers);
  std::cout << "runs: " << out.records.size() << " (reused " << out.reused << ", training steps "
            << out.training_steps << ")\n";
  for (const auto& f : out.failures) std::cerr << "failed: " << f << "\n";
  std::cout << "wrote " << cfg.output_dir << "/runs.csv\n";
  return 0;
}

int run_grok(const std::string& path, std::size_t workers) {
  const auto cfg = ex::parse_config(path);
  const auto out = ex::run_grokking(cfg, workers);
  std::cout << "checkpoints: " << out.table.rows.size() << ", training steps " << out.training_steps << "\n";
  std::cout << "wrote " << cfg.output_dir << "/grokking.csv\n";
  return 0;
}

int run_attractor(const std::string& path, std::size_t workers) {
  const auto cfg = ex::parse_config(path);
  const auto out = ex::run_attractor_study(cfg, workers);
  std::printf("lambda1 %.6g  sd %.6g  dim_M %.6g (R^2 %.4f)  bound %s\n", out.sharpness_sup.values.front(),
              out.bound.sd, out.bound.dim_m, out.bound.box.r2, out.bound.holds ? "holds" : "violated");
  std::cout << "wrote " << cfg.output_dir << "/attractor_report.json\n";
  return 0;
}

int run_bench(const std::string& path, std::size_t workers) {
  const auto cfg = ex::parse_config(path);
  const auto b = ex::run_slq_bench(cfg, workers);
  std::printf("trace %.6g (true %.6g)  top|eig| %.6g (true %.6g)  W1 %.4g of range %.4g\n", b.trace_estimate,
              b.true_trace, b.top_abs_estimate, b.top_abs_true, b.wasserstein, b.spectral_range);
  std::printf("sd exact %.4f  slq %.4f  kde %.4f  ps %.4f  (%.2fs)\n", b.sd_exact, b.sd_slq, b.sd_kde, b.sd_ps,
              b.seconds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sharpness dimension toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train-grid", "Train an MLP hyperparameter grid and measure every run");
  train->add_option("config", config_path, "Experiment config (JSON)")->required();
  auto* grok = app.add_subcommand("grok", "Train on modular addition with periodic checkpoints");
  grok->add_option("config", config_path, "Experiment config (JSON)")->required();
  auto* attractor = app.add_subcommand("attractor", "Simulate the toy random dynamical system");
  attractor->add_option("config", config_path, "Experiment config (JSON)")->required();
  auto* bench = app.add_subcommand("slq-bench", "SLQ against a dense matrix with known spectrum");
  bench->add_option("config", config_path, "Experiment config (JSON)")->required();

  std::vector<std::string> run_files, measures, targets = {"acc_gap", "loss_gap"};
  std::string corr_out;
  auto* correlate = app.add_subcommand("correlate", "Kendall correlation of measures against generalization");
  correlate->add_option("runs", run_files, "runs.csv files")->required();
  correlate->add_option("--measures", measures, "Measure columns")->required();
  correlate->add_option("--targets", targets, "Target columns (default acc_gap loss_gap)");
  correlate->add_option("--out", corr_out, "Output CSV (default stdout)");

  std::string checkpoint, spectrum_out = "spectrum";
  double eta = 0.0;
  auto* spectrum = app.add_subcommand("spectrum", "Raw and push-forward Hessian spectra of a checkpoint");
  spectrum->add_option("checkpoint", checkpoint, "Model checkpoint (.bin)")->required();
  spectrum->add_option("--eta", eta, "Learning rate for the push-forward map")->required();
  spectrum->add_option("--config", config_path, "Config describing the dataset and SLQ settings")->required();
  spectrum->add_option("--out", spectrum_out, "Output directory");

  CLI11_PARSE(app, argc, argv);
  const std::size_t workers = sharpdim::workers_from_env();

  try {
    if (*train) return run_train_grid(config_path, workers);
    if (*grok) return run_grok(config_path, workers);
    if (*attractor) return run_attractor(config_path, workers);
    if (*bench) return run_bench(config_path, workers);
    if (*correlate) {
      const auto cells = ex::run_correlate(run_files, measures, targets);
      if (corr_out.empty()) {
        sharpdim::write_correlation_csv(std::cout, cells);
      } else {
        std::ofstream f(corr_out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + corr_out);
        sharpdim::write_correlation_csv(f, cells);
      }
      return 0;
    }
    if (*spectrum) {
      const auto cfg = ex::parse_config(config_path);
      ex::run_spectrum(checkpoint, cfg, eta, spectrum_out, workers);
      std::cout << "wrote " << spectrum_out << "\n";
      return 0;
    }
  } catch (const ex::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
