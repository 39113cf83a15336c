#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pprs/bench.hpp"
#include "pprs/comp_graph.hpp"

using pprs::Error;
using pprs::ErrorKind;
using pprs::ExperimentConfig;
using pprs::LabeledRun;
using pprs::parse_config_text;

namespace {

bool throws_kind(ErrorKind kind, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind() == kind;
  }
  return false;
}

std::string quadratic_config(const std::string& extra = "") {
  return "objective.name = quadratic\n"
         "objective.d = 2\n"
         "objective.beta = 1.0\n"
         "run.algorithms = gd\n"
         "run.iterations = 3\n"
         "run.seeds = 1,2\n"
         "run.threads = 2\n"
         "grid.lr = 0.5\n" +
         extra;
}

std::filesystem::path fresh_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("pprs_bench_test_" + tag);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config text: sections, lists, comments, and defaults") {
  const ExperimentConfig cfg = parse_config_text(
      "# experiment description\n"
      "objective.name = linf   # trailing comment\n"
      "objective.d = 8\n"
      "objective.L = 2.0\n"
      "objective.R = 1.5\n"
      "objective.stages = 20\n"
      "\n"
      "run.algorithms = gd, agd, pprs\n"
      "run.time_budget = 1000\n"
      "grid.lr = 1e-3, 1e-4\n"
      "grid.gamma = 1e-3\n"
      "grid.k = 2, 10, 100\n"
      "agd.mu = 0.9\n"
      "pipeline.tau = 2\n"
      "clarke.enabled = on\n"
      "clarke.radius = 0.05\n"
      "clarke.samples = 8\n"
      "clarke.every = 5\n"
      "out.dir = /tmp/somewhere\n");
  CHECK_EQ(cfg.objective_name, "linf");
  CHECK_EQ(cfg.objective_d, 8);
  CHECK_EQ(cfg.objective_l, 2.0);
  CHECK_EQ(cfg.objective_r, 1.5);
  CHECK_EQ(cfg.stages, 20);
  REQUIRE_EQ(cfg.algorithms.size(), 3);
  CHECK_EQ(cfg.algorithms[2], "pprs");
  CHECK_EQ(cfg.iterations, 0);
  CHECK_EQ(cfg.time_budget, 1000);
  REQUIRE_EQ(cfg.lr_grid.size(), 2);
  CHECK_EQ(cfg.lr_grid[1], 1e-4);
  REQUIRE_EQ(cfg.k_grid.size(), 3);
  CHECK_EQ(cfg.k_grid[2], 100);
  CHECK_EQ(cfg.agd_mu, 0.9);
  CHECK_EQ(cfg.tau, 2);
  CHECK(cfg.clarke_enabled);
  CHECK_EQ(cfg.clarke_radius, 0.05);
  CHECK_EQ(cfg.clarke_samples, 8);
  CHECK_EQ(cfg.clarke_every, 5);
  CHECK_EQ(cfg.out_dir, "/tmp/somewhere");

  // defaults: seeds 1..5, all three algorithms, μ = 0.99, current directory
  const ExperimentConfig defaults = parse_config_text(
      "objective.name = quadratic\n"
      "run.iterations = 1\n"
      "grid.lr = 0.1\n"
      "grid.gamma = 0.01\n"
      "grid.k = 2\n");
  REQUIRE_EQ(defaults.seeds.size(), 5);
  CHECK_EQ(defaults.seeds.front(), 1);
  CHECK_EQ(defaults.seeds.back(), 5);
  REQUIRE_EQ(defaults.algorithms.size(), 3);
  CHECK_EQ(defaults.algorithms[0], "gd");
  CHECK_EQ(defaults.agd_mu, 0.99);
  CHECK_EQ(defaults.out_dir, ".");
  CHECK(!defaults.clarke_enabled);
}

TEST_CASE("config text: rejected inputs") {
  // unknown key
  CHECK(throws_kind(ErrorKind::ConfigParseError, [] {
    (void)parse_config_text(quadratic_config("objective.color = red\n"));
  }));
  // missing '='
  CHECK(throws_kind(ErrorKind::ConfigParseError, [] {
    (void)parse_config_text(quadratic_config("grid.gamma 0.5\n"));
  }));
  // unparseable number
  CHECK(throws_kind(ErrorKind::ConfigParseError, [] {
    (void)parse_config_text(quadratic_config("pipeline.tau = fast\n"));
  }));
  // no objective at all
  CHECK(throws_kind(ErrorKind::ConfigParseError, [] {
    (void)parse_config_text("run.iterations = 1\ngrid.lr = 0.1\n");
  }));
  // unknown algorithm name
  CHECK(throws_kind(ErrorKind::ConfigParseError, [] {
    (void)parse_config_text(
        "objective.name = quadratic\nrun.algorithms = sgd\n"
        "run.iterations = 1\ngrid.lr = 0.1\n");
  }));
  // empty learning-rate grid
  CHECK(throws_kind(ErrorKind::ConfigParseError, [] {
    (void)parse_config_text(
        "objective.name = quadratic\nrun.algorithms = gd\n"
        "run.iterations = 1\n");
  }));
  // pprs listed but no gamma/k grids
  CHECK(throws_kind(ErrorKind::ConfigParseError, [] {
    (void)parse_config_text(
        "objective.name = quadratic\nrun.algorithms = pprs\n"
        "run.iterations = 1\ngrid.lr = 0.1\n");
  }));
  // neither iterations nor a time budget
  CHECK(throws_kind(ErrorKind::ConfigParseError, [] {
    (void)parse_config_text(
        "objective.name = quadratic\nrun.algorithms = gd\ngrid.lr = 0.1\n");
  }));
  // boolean that isn't one
  CHECK(throws_kind(ErrorKind::ConfigParseError, [] {
    (void)parse_config_text(quadratic_config("clarke.enabled = maybe\n"));
  }));
}

TEST_CASE("objective construction from config") {
  ExperimentConfig cfg = parse_config_text(quadratic_config());
  pprs::Objective quad = pprs::make_objective(cfg);
  CHECK_EQ(quad.name, "quadratic");
  CHECK_EQ(quad.param_dim, 2);

  ExperimentConfig linf_cfg = parse_config_text(
      "objective.name = linf\nobjective.d = 4\nobjective.L = 2\n"
      "objective.R = 1\nobjective.stages = 9\n"
      "run.algorithms = gd\nrun.iterations = 1\ngrid.lr = 0.1\n");
  pprs::Objective linf = pprs::make_objective(linf_cfg);
  CHECK_EQ(linf.lipschitz, 2.0);
  CHECK_EQ(pprs::depth(*linf.graph), 9);  // chained to the requested Δ

  cfg.objective_name = "no_such_objective";
  CHECK(throws_kind(ErrorKind::ObjectiveUnknown,
                    [&] { (void)pprs::make_objective(cfg); }));
}

TEST_CASE("experiment runs enumerate algo-major with stable run ids") {
  const ExperimentConfig cfg = parse_config_text(
      "objective.name = quadratic\nobjective.d = 2\n"
      "run.algorithms = gd, pprs\nrun.iterations = 2\nrun.seeds = 1,2\n"
      "grid.lr = 0.5, 0.25\ngrid.gamma = 0.01\ngrid.k = 2\n");
  const auto result = pprs::run_experiment(cfg);
  // 2 gd points × 2 seeds + 2 pprs points (lr × γ × k) × 2 seeds
  REQUIRE_EQ(result.runs.size(), 8);
  CHECK_EQ(result.runs[0].run_id, "gd-lr0.5-seed1");
  CHECK_EQ(result.runs[1].run_id, "gd-lr0.5-seed2");
  CHECK_EQ(result.runs[2].run_id, "gd-lr0.25-seed1");
  CHECK_EQ(result.runs[4].run_id, "pprs-lr0.5-g0.01-k2-seed1");
  CHECK_EQ(result.runs[7].run_id, "pprs-lr0.25-g0.01-k2-seed2");
  for (const auto& run : result.runs) {
    CHECK_EQ(run.record.history.size(), 3);  // iterations honored
  }
  // gd is seed-independent from the common start, so both seeds agree
  CHECK_EQ(result.runs[0].record.final_loss, result.runs[1].record.final_loss);

  // summary: one row per grid point, no divergence here
  REQUIRE_EQ(result.summary.size(), 4);
  for (const auto& row : result.summary) {
    CHECK_EQ(row.runs, 2);
    CHECK_EQ(row.diverged, 0);
  }
  REQUIRE_EQ(result.best.size(), 2);
  CHECK_EQ(result.best[0].algorithm, "gd");
  CHECK_EQ(result.best[1].algorithm, "pprs");
}

TEST_CASE("time budget converts to per-algorithm iteration counts") {
  const ExperimentConfig cfg = parse_config_text(
      "objective.name = quadratic\nobjective.d = 2\nobjective.stages = 2\n"
      "run.algorithms = gd, pprs\nrun.time_budget = 120\nrun.seeds = 1\n"
      "grid.lr = 0.5\ngrid.gamma = 0.001\ngrid.k = 4\n");
  const auto result = pprs::run_experiment(cfg);
  for (const auto& run : result.runs) {
    const auto& rec = run.record;
    if (rec.algorithm == "gd") {
      // 2Δ = 4 slots per iteration → 30 iterations
      CHECK_EQ(rec.history.size(), 31);
      CHECK_EQ(rec.total_time, 120);
    } else {
      // 2(K+Δ−1) = 10 slots per iteration → 12 iterations
      CHECK_EQ(rec.history.size(), 13);
      CHECK_EQ(rec.total_time, 120);
    }
  }
}

TEST_CASE("records CSV: exact header, one row per iteration, byte-stable") {
  const ExperimentConfig cfg = parse_config_text(
      "objective.name = quadratic\nobjective.d = 3\n"
      "run.algorithms = gd, agd, pprs\nrun.iterations = 4\nrun.seeds = 1,2,3\n"
      "run.threads = 3\n"
      "grid.lr = 0.3, 0.1\ngrid.gamma = 0.01, 0.001\ngrid.k = 2\n");
  const auto first = pprs::run_experiment(cfg);
  const auto second = pprs::run_experiment(cfg);
  const std::string csv_a = pprs::records_csv(first.runs);
  const std::string csv_b = pprs::records_csv(second.runs);
  CHECK_EQ(csv_a, csv_b);  // threading must not leak into the bytes

  std::stringstream ss(csv_a);
  std::string header;
  std::getline(ss, header);
  CHECK_EQ(header,
           "run_id,algorithm,delta,K,gamma,eta,seed,iteration,simulated_time,"
           "loss,best_loss,grad_est_norm,clarke_min_norm,diverged");

  std::size_t rows = 0, expected = 0;
  for (std::string line; std::getline(ss, line);) {
    ++rows;
    CHECK_EQ(std::count(line.begin(), line.end(), ','), 13);
    // no clarke tracking configured → the cell before the flag is empty
    CHECK(line.find(",,") != std::string::npos);
    const char flag = line.back();
    CHECK((flag == '0' || flag == '1'));
  }
  for (const auto& run : first.runs) expected += run.record.history.size();
  CHECK_EQ(rows, expected);
}

TEST_CASE("records CSV round-trips through the reader") {
  const ExperimentConfig cfg = parse_config_text(
      "objective.name = quadratic\nobjective.d = 2\n"
      "run.algorithms = gd, pprs\nrun.iterations = 3\nrun.seeds = 1,2\n"
      "grid.lr = 0.3\ngrid.gamma = 0.01\ngrid.k = 2\n");
  const auto result = pprs::run_experiment(cfg);
  const std::string csv = pprs::records_csv(result.runs);
  const auto parsed = pprs::read_records_csv(csv);

  REQUIRE_EQ(parsed.size(), result.runs.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    const auto& a = result.runs[i];
    const auto& b = parsed[i];
    CHECK_EQ(a.run_id, b.run_id);
    CHECK_EQ(a.record.algorithm, b.record.algorithm);
    CHECK_EQ(a.record.delta, b.record.delta);
    CHECK_EQ(a.record.samples, b.record.samples);
    CHECK_EQ(a.record.gamma, b.record.gamma);
    CHECK_EQ(a.record.eta, b.record.eta);
    CHECK_EQ(a.record.seed, b.record.seed);
    CHECK_EQ(a.record.diverged, b.record.diverged);
    REQUIRE_EQ(a.record.history.size(), b.record.history.size());
    for (std::size_t t = 0; t < a.record.history.size(); ++t) {
      CHECK_EQ(a.record.history[t].loss, b.record.history[t].loss);
      CHECK_EQ(a.record.history[t].best_loss, b.record.history[t].best_loss);
      CHECK_EQ(a.record.history[t].simulated_time,
               b.record.history[t].simulated_time);
      CHECK_EQ(a.record.history[t].grad_norm, b.record.history[t].grad_norm);
    }
  }

  // a 13-cell row (clarke column dropped entirely) still parses
  std::string trimmed = csv;
  std::size_t pos = 0;
  while ((pos = trimmed.find(",,", pos)) != std::string::npos) {
    trimmed.erase(pos, 1);
  }
  const auto lenient = pprs::read_records_csv(trimmed);
  CHECK_EQ(lenient.size(), parsed.size());

  CHECK(throws_kind(ErrorKind::ConfigParseError, [&] {
    (void)pprs::read_records_csv("run_id,algorithm\nx,gd\n");
  }));
  CHECK(throws_kind(ErrorKind::EmptyRecords, [&] {
    std::stringstream hs(csv);
    std::string header_only;
    std::getline(hs, header_only);
    (void)pprs::read_records_csv(header_only + "\n");
  }));
}

TEST_CASE("summary marks diverged grid points and breaks ties downward") {
  // Both steps land at the same loss: (1−0.5)² = (1−1.5)², a deterministic
  // tie that must resolve to the smaller learning rate.
  const ExperimentConfig tie = parse_config_text(
      "objective.name = quadratic\nobjective.d = 2\n"
      "run.algorithms = gd\nrun.iterations = 1\nrun.seeds = 1\n"
      "grid.lr = 1.5, 0.5\n");
  const auto tie_result = pprs::run_experiment(tie);
  REQUIRE_EQ(tie_result.summary.size(), 2);
  CHECK_EQ(tie_result.summary[0].mean_best_loss,
           tie_result.summary[1].mean_best_loss);
  REQUIRE_EQ(tie_result.best.size(), 1);
  CHECK_EQ(tie_result.best[0].eta, 0.5);

  // Every grid point diverges → means are infinite, γ breaks the tie.
  const ExperimentConfig blow = parse_config_text(
      "objective.name = quadratic\nobjective.d = 2\n"
      "run.algorithms = pprs\nrun.iterations = 50\nrun.seeds = 1,2\n"
      "grid.lr = 1e8\ngrid.gamma = 0.02, 0.01\ngrid.k = 2\n");
  const auto blow_result = pprs::run_experiment(blow);
  for (const auto& row : blow_result.summary) {
    CHECK_EQ(row.diverged, 2);
    CHECK_EQ(row.mean_best_loss, std::numeric_limits<double>::infinity());
  }
  REQUIRE_EQ(blow_result.best.size(), 1);
  CHECK_EQ(blow_result.best[0].gamma, 0.01);

  const std::string text = pprs::summary_text(blow_result);
  CHECK(text.find("best per algorithm:") != std::string::npos);
  CHECK(text.find("pprs") != std::string::npos);
}

TEST_CASE("schedule factory and cell listing") {
  const auto bubbling = pprs::make_schedule("bubbling", 4, 4, 1);
  CHECK_EQ(bubbling.cells.size(), 32);
  CHECK_EQ(bubbling.makespan, 14);  // 2K + 2(Δ−1)

  const auto nse = pprs::make_schedule("nse", 3, 1, 1);
  CHECK_EQ(nse.cells.size(), 6);
  CHECK_EQ(nse.makespan, 6);

  const auto gpipe = pprs::make_schedule("gpipe", 2, 1, 3);
  CHECK_EQ(gpipe.makespan, 8);  // 2(mK + Δ−1)

  CHECK(throws_kind(ErrorKind::UnknownMode,
                    [] { (void)pprs::make_schedule("1f1b", 2, 2, 1); }));

  const std::string csv = pprs::schedule_csv(nse);
  std::stringstream ss(csv);
  std::string header;
  std::getline(ss, header);
  CHECK_EQ(header, "unit,slot,kind,microbatch");
  std::size_t rows = 0;
  bool saw_forward = false, saw_backward = false;
  for (std::string line; std::getline(ss, line);) {
    ++rows;
    saw_forward = saw_forward || line.find("forward") != std::string::npos;
    saw_backward = saw_backward || line.find("backward") != std::string::npos;
  }
  CHECK_EQ(rows, 6);
  CHECK(saw_forward);
  CHECK(saw_backward);
}

TEST_CASE("plots: one SVG per depth, named by axis") {
  const ExperimentConfig cfg = parse_config_text(
      "objective.name = quadratic\nobjective.d = 2\nobjective.stages = 2\n"
      "run.algorithms = gd, pprs\nrun.iterations = 5\nrun.seeds = 1,2\n"
      "grid.lr = 0.3\ngrid.gamma = 0.01\ngrid.k = 2\n");
  const auto result = pprs::run_experiment(cfg);

  const auto dir = fresh_dir("plots");
  const auto by_time = pprs::emit_plots(result.runs, pprs::PlotAxis::SimulatedTime,
                                        dir.string());
  REQUIRE_EQ(by_time.size(), 1);
  CHECK(by_time[0].find("loss_vs_time_delta2.svg") != std::string::npos);
  const std::string svg = slurp(by_time[0]);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.rfind("</svg>") != std::string::npos);
  CHECK(svg.find("simulated time (slots)") != std::string::npos);

  const auto by_iter = pprs::emit_plots(result.runs, pprs::PlotAxis::Iterations,
                                        dir.string());
  REQUIRE_EQ(by_iter.size(), 1);
  CHECK(by_iter[0].find("loss_vs_iterations_delta2.svg") != std::string::npos);
  CHECK(slurp(by_iter[0]).find("iteration") != std::string::npos);

  CHECK(throws_kind(ErrorKind::EmptyRecords, [&] {
    (void)pprs::emit_plots({}, pprs::PlotAxis::SimulatedTime, dir.string());
  }));
  std::filesystem::remove_all(dir);
}

TEST_CASE("atomic text writes create directories and surface failures") {
  const auto dir = fresh_dir("atomic");
  const auto target = dir / "a" / "b" / "out.txt";
  pprs::write_text_atomic(target.string(), "payload\n");
  CHECK_EQ(slurp(target), "payload\n");
  // no stray temp file left behind
  std::size_t entries = 0;
  for (const auto& _ : std::filesystem::directory_iterator(target.parent_path())) {
    (void)_;
    ++entries;
  }
  CHECK_EQ(entries, 1);
  std::filesystem::remove_all(dir);

  CHECK(throws_kind(ErrorKind::OutputUnwritable, [] {
    pprs::write_text_atomic("/dev/null/nested/file.txt", "x");
  }));
}

TEST_CASE("shortest round-trip rendering of doubles") {
  const double values[] = {0.0,     -0.0,   0.1,       1e-7,      1.0 / 3.0,
                           123456.789, 1e300, -2.5e-17, 42.0,      0.07};
  for (double v : values) {
    const std::string s = pprs::format_double(v);
    CHECK_EQ(std::strtod(s.c_str(), nullptr), v);
  }
  // integral values stay compact
  CHECK_EQ(pprs::format_double(42.0), "42");
  CHECK_EQ(pprs::format_double(0.1), "0.1");
  CHECK_EQ(pprs::format_double(1e-7), "1e-07");
}
