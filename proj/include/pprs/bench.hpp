#pragma once

#include <string>
#include <vector>

#include "pprs/optimizers.hpp"
#include "pprs/pipeline_sim.hpp"

namespace pprs {

/// Parsed experiment description. The on-disk format is flat, line-oriented
/// `section.key = value` text; '#' starts a comment. Lists are
/// comma-separated. Unknown keys are rejected rather than ignored.
struct ExperimentConfig {
  // objective.*
  std::string objective_name;      // linf | quadratic | fig1 | margin_attack
  int objective_d = 16;            // objective.d
  double objective_l = 1.0;        // objective.L
  double objective_r = 0.0;        // objective.R (linf center offset)
  double objective_beta = 1.0;     // objective.beta (quadratic)
  double objective_lambda = 300.0; // objective.lambda (margin_attack)
  int stages = 0;                  // objective.stages: Δ; 0 ⇒ native depth
  std::uint64_t net_seed = 7;      // objective.net_seed (margin_attack draw)

  // run.*
  std::vector<std::string> algorithms; // subset of {gd, agd, pprs}
  int iterations = 0;                  // run.iterations: fixed T
  long long time_budget = 0;           // run.time_budget: slots; overrides T
  std::vector<std::uint64_t> seeds;    // run.seeds, default 1..5
  int threads = 0;                     // run.threads, 0 ⇒ hardware count

  // grid.*
  std::vector<double> lr_grid;    // grid.lr
  std::vector<double> gamma_grid; // grid.gamma (pprs)
  std::vector<int> k_grid;        // grid.k (pprs)

  double agd_mu = 0.99; // agd.mu
  int tau = 0;          // pipeline.tau

  // clarke.* (optional stationarity tracking on pprs runs)
  bool clarke_enabled = false;
  double clarke_radius = 0.1; // clarke.radius
  int clarke_samples = 16;    // clarke.samples
  int clarke_every = 10;      // clarke.every

  std::string out_dir = "."; // out.dir
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// Builds the configured objective, chain-partitioned to `stages` when set.
Objective make_objective(const ExperimentConfig& config);

struct LabeledRun {
  std::string run_id; // deterministic: algo-lr…[-g…-k…]-seed…
  RunRecord record;
};

struct SummaryRow {
  std::string algorithm;
  double eta = 0;
  double gamma = 0; // 0 for gd/agd
  int k = 1;        // 1 for gd/agd
  double mean_best_loss = 0; // over seeds, final best-iterate loss
  int runs = 0;
  int diverged = 0;
};

struct ExperimentResult {
  std::vector<LabeledRun> runs;     // deterministic order: algo, grid, seed
  std::vector<SummaryRow> summary;  // one row per (algorithm, grid point)
  std::vector<SummaryRow> best;     // winner per algorithm; ties go to the
                                    // smaller learning rate, then smaller γ
};

/// Executes every grid point × seed. Runs may execute on several threads;
/// results are assembled in fixed order so output is reproducible.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Shortest decimal form that round-trips the double (plain printf-style
/// shortest repr); used for every numeric CSV cell.
std::string format_double(double value);

/// Per-iteration CSV: header plus one row per iteration per run. Schema:
/// run_id, algorithm, delta, K, gamma, eta, seed, iteration,
/// simulated_time, loss, best_loss, grad_est_norm, clarke_min_norm,
/// diverged. clarke_min_norm is empty when not tracked.
std::string records_csv(const std::vector<LabeledRun>& runs);

/// Cell listing of a schedule: unit, slot, kind, microbatch.
std::string schedule_csv(const PipelineSchedule& schedule);

/// mode ∈ {bubbling, nse, gpipe}; m is the ERM sample count (gpipe only).
PipelineSchedule make_schedule(const std::string& mode, int delta, int k,
                               int m);

/// Human-readable best-grid-point table.
std::string summary_text(const ExperimentResult& result);

/// Writes via a temp file in the target directory, then renames.
void write_text_atomic(const std::string& path, const std::string& text);

enum class PlotAxis { SimulatedTime, Iterations };

/// One SVG per distinct Δ in the records, named loss_vs_time_delta<Δ>.svg
/// (or loss_vs_iterations_delta<Δ>.svg): per-seed curves plus the seed mean
/// for each algorithm's best grid point. Returns the written paths.
std::vector<std::string> emit_plots(const std::vector<LabeledRun>& runs,
                                    PlotAxis axis, const std::string& out_dir);

/// Reads a records CSV back into labeled runs (for the plot subcommand).
std::vector<LabeledRun> read_records_csv(const std::string& text);

}  // namespace pprs
