#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sgmpc/harness.hpp"

namespace {

using sgmpc::harness::ExperimentConfig;

struct Overrides {
  std::string out_dir, controller;
  std::uint64_t seed = 0;
  int trajectories = 0;
  bool has_seed = false;
};

ExperimentConfig load_with_overrides(const std::string& config_path,
                                     const Overrides& ov) {
  ExperimentConfig cfg = sgmpc::harness::load_config(config_path);
  if (ov.has_seed) cfg.seed = ov.seed;
  if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
  if (ov.trajectories > 0) cfg.n_trajectories = ov.trajectories;
  if (!ov.controller.empty())
    cfg.controller.kind = sgmpc::harness::controller_kind_from_string(ov.controller);
  cfg.validate();
  return cfg;
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
  const ExperimentConfig cfg = load_with_overrides(config_path, ov);
  const auto batch = sgmpc::harness::run_batch(cfg);
  auto report = sgmpc::harness::compute_metrics(
      batch.records, batch.schedule.get(), cfg);
  report.n_failures = int(batch.failures.size());
  report.infeasible_at_t0 = batch.infeasible_at_t0;
  sgmpc::harness::emit_outputs(batch, report, cfg, cfg.out_dir);
  std::cout << sgmpc::harness::metrics_csv(report, cfg);
  for (const auto& f : batch.failures)
    std::cerr << "run " << f.index << " failed: " << f.reason << "\n";
  return batch.infeasible_at_t0 ? 2 : 0;
}

int cmd_metrics(const std::string& records_path, const std::string& config_path,
                const std::string& out_path) {
  const ExperimentConfig cfg = sgmpc::harness::load_config(config_path);
  const auto records = sgmpc::harness::read_records(records_path);
  const auto schedule = sgmpc::harness::schedule_for(cfg);
  auto report = sgmpc::harness::compute_metrics(records, schedule.get(), cfg);
  const std::string csv = sgmpc::harness::metrics_csv(report, cfg);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << csv;
    std::cout << csv;
  }
  return 0;
}

int cmd_plot(const std::string& records_path, const std::string& config_path,
             const std::string& out_path) {
  const ExperimentConfig cfg = sgmpc::harness::load_config(config_path);
  sgmpc::harness::BatchResult batch;
  batch.records = sgmpc::harness::read_records(records_path);
  batch.schedule = sgmpc::harness::schedule_for(cfg);
  const std::string svg = sgmpc::harness::render_plot_svg(batch, cfg);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << svg;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"output-feedback drilling MPC batch runner"};
  app.require_subcommand(1);

  std::string config_path, records_path, out_path;
  Overrides ov;

  auto* run = app.add_subcommand("run", "simulate a batch and write outputs");
  run->add_option("config", config_path, "experiment JSON")->required();
  run->add_option("--seed", ov.seed, "override the master seed")
      ->each([&](const std::string&) { ov.has_seed = true; });
  run->add_option("--out", ov.out_dir, "override the output directory");
  run->add_option("--controller", ov.controller,
                  "override the controller kind");
  run->add_option("--trajectories", ov.trajectories,
                  "override the number of runs");

  auto* metrics = app.add_subcommand("metrics", "recompute metrics from records");
  metrics->add_option("records", records_path, "records.ndjson")->required();
  metrics->add_option("config", config_path, "experiment JSON")->required();
  metrics->add_option("--out", out_path, "also write metrics.csv here");

  auto* plot = app.add_subcommand("plot", "render plot.svg from records");
  plot->add_option("records", records_path, "records.ndjson")->required();
  plot->add_option("config", config_path, "experiment JSON")->required();
  plot->add_option("--out", out_path, "output SVG path")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(config_path, ov);
    if (metrics->parsed()) return cmd_metrics(records_path, config_path, out_path);
    if (plot->parsed()) return cmd_plot(records_path, config_path, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
