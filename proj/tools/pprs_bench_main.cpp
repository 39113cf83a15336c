#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pprs/bench.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) {
    throw pprs::Error(pprs::ErrorKind::InvalidArgument, "--seeds list is empty");
  }
  return seeds;
}

int cmd_run(const std::string& config_path, const std::string& out_override,
            const std::string& seeds_override) {
  pprs::ExperimentConfig config = pprs::parse_config_file(config_path);
  if (!out_override.empty()) config.out_dir = out_override;
  if (!seeds_override.empty()) config.seeds = parse_seed_list(seeds_override);

  const pprs::ExperimentResult result = pprs::run_experiment(config);

  namespace fs = std::filesystem;
  const fs::path out_dir(config.out_dir);
  pprs::write_text_atomic((out_dir / "records.csv").string(),
                          pprs::records_csv(result.runs));
  const std::string summary = pprs::summary_text(result);
  pprs::write_text_atomic((out_dir / "summary.txt").string(), summary);
  const auto plots = pprs::emit_plots(result.runs, pprs::PlotAxis::SimulatedTime,
                                      config.out_dir);

  std::cout << summary;
  std::cout << "\nwrote " << (out_dir / "records.csv").string() << "\n";
  for (const auto& p : plots) std::cout << "wrote " << p << "\n";
  return 0;
}

int cmd_schedule(const std::string& mode, int delta, int k, int m) {
  const pprs::PipelineSchedule schedule = pprs::make_schedule(mode, delta, k, m);
  std::cout << pprs::schedule_csv(schedule);
  return 0;
}

int cmd_plot(const std::string& in_path, const std::string& axis_name,
             std::string out_dir) {
  std::ifstream in(in_path);
  if (!in) {
    throw pprs::Error(pprs::ErrorKind::InvalidArgument,
                      "cannot read '" + in_path + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto runs = pprs::read_records_csv(buffer.str());

  pprs::PlotAxis axis;
  if (axis_name == "time") {
    axis = pprs::PlotAxis::SimulatedTime;
  } else if (axis_name == "iterations") {
    axis = pprs::PlotAxis::Iterations;
  } else {
    throw pprs::Error(pprs::ErrorKind::InvalidArgument,
                      "--axis must be 'time' or 'iterations'");
  }

  if (out_dir.empty()) {
    const auto parent = std::filesystem::path(in_path).parent_path();
    out_dir = parent.empty() ? std::string(".") : parent.string();
  }
  const auto plots = pprs::emit_plots(runs, axis, out_dir);
  for (const auto& p : plots) std::cout << "wrote " << p << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pipeline-parallel smoothing benchmark"};
  app.require_subcommand(1);

  std::string config_path, out_override, seeds_override;
  CLI::App* run = app.add_subcommand("run", "run an experiment from a config");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--out", out_override, "output directory");
  run->add_option("--seeds", seeds_override, "comma-separated seed list");

  std::string mode;
  int delta = 1, k = 1, m = 1;
  CLI::App* sched = app.add_subcommand("schedule", "print a schedule as CSV");
  sched->add_option("--mode", mode, "bubbling, nse, or gpipe")->required();
  sched->add_option("--delta", delta, "pipeline depth")->required();
  sched->add_option("--k", k, "samples per iteration (ignored by nse)");
  sched->add_option("--m", m, "microbatches (gpipe)");

  std::string in_path, axis_name, plot_out;
  CLI::App* plot = app.add_subcommand("plot", "render plots from a records CSV");
  plot->add_option("--in", in_path, "records CSV")->required();
  plot->add_option("--axis", axis_name, "time or iterations")->required();
  plot->add_option("--out", plot_out, "output directory (default: CSV's)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_override, seeds_override);
    if (sched->parsed()) return cmd_schedule(mode, delta, k, m);
    if (plot->parsed()) return cmd_plot(in_path, axis_name, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
