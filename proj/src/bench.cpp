#include "pprs/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "pprs/rng.hpp"

namespace pprs {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string current;
  std::stringstream ss(s);
  while (std::getline(ss, current, ',')) {
    current = trim(current);
    if (!current.empty()) out.push_back(current);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigParseError,
                key + ": '" + s + "' is not a number");
  }
}

long long parse_int(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ConfigParseError,
                key + ": '" + s + "' is not an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw Error(ErrorKind::ConfigParseError, key + ": '" + s + "' is not a flag");
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.algorithms = {"gd", "agd", "pprs"};

  std::stringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::ConfigParseError,
                  "line " + std::to_string(line_no) + " has no '='");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) {
      throw Error(ErrorKind::ConfigParseError, key + " has an empty value");
    }

    if (key == "objective.name") {
      cfg.objective_name = value;
    } else if (key == "objective.d") {
      cfg.objective_d = static_cast<int>(parse_int(key, value));
    } else if (key == "objective.L") {
      cfg.objective_l = parse_double(key, value);
    } else if (key == "objective.R") {
      cfg.objective_r = parse_double(key, value);
    } else if (key == "objective.beta") {
      cfg.objective_beta = parse_double(key, value);
    } else if (key == "objective.lambda") {
      cfg.objective_lambda = parse_double(key, value);
    } else if (key == "objective.stages") {
      cfg.stages = static_cast<int>(parse_int(key, value));
    } else if (key == "objective.net_seed") {
      cfg.net_seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "run.algorithms") {
      cfg.algorithms = split_list(value);
    } else if (key == "run.iterations") {
      cfg.iterations = static_cast<int>(parse_int(key, value));
    } else if (key == "run.time_budget") {
      cfg.time_budget = parse_int(key, value);
    } else if (key == "run.seeds") {
      cfg.seeds.clear();
      for (const auto& s : split_list(value)) {
        cfg.seeds.push_back(static_cast<std::uint64_t>(parse_int(key, s)));
      }
    } else if (key == "run.threads") {
      cfg.threads = static_cast<int>(parse_int(key, value));
    } else if (key == "grid.lr") {
      cfg.lr_grid.clear();
      for (const auto& s : split_list(value)) {
        cfg.lr_grid.push_back(parse_double(key, s));
      }
    } else if (key == "grid.gamma") {
      cfg.gamma_grid.clear();
      for (const auto& s : split_list(value)) {
        cfg.gamma_grid.push_back(parse_double(key, s));
      }
    } else if (key == "grid.k") {
      cfg.k_grid.clear();
      for (const auto& s : split_list(value)) {
        cfg.k_grid.push_back(static_cast<int>(parse_int(key, s)));
      }
    } else if (key == "agd.mu") {
      cfg.agd_mu = parse_double(key, value);
    } else if (key == "pipeline.tau") {
      cfg.tau = static_cast<int>(parse_int(key, value));
    } else if (key == "clarke.enabled") {
      cfg.clarke_enabled = parse_bool(key, value);
    } else if (key == "clarke.radius") {
      cfg.clarke_radius = parse_double(key, value);
    } else if (key == "clarke.samples") {
      cfg.clarke_samples = static_cast<int>(parse_int(key, value));
    } else if (key == "clarke.every") {
      cfg.clarke_every = static_cast<int>(parse_int(key, value));
    } else if (key == "out.dir") {
      cfg.out_dir = value;
    } else {
      throw Error(ErrorKind::ConfigParseError, "unknown key '" + key + "'");
    }
  }

  if (cfg.objective_name.empty()) {
    throw Error(ErrorKind::ConfigParseError, "objective.name is required");
  }
  if (cfg.algorithms.empty()) {
    throw Error(ErrorKind::ConfigParseError, "run.algorithms is empty");
  }
  for (const auto& a : cfg.algorithms) {
    if (a != "gd" && a != "agd" && a != "pprs") {
      throw Error(ErrorKind::ConfigParseError, "unknown algorithm '" + a + "'");
    }
  }
  if (cfg.lr_grid.empty()) {
    throw Error(ErrorKind::ConfigParseError, "grid.lr is empty");
  }
  const bool has_pprs = std::find(cfg.algorithms.begin(), cfg.algorithms.end(),
                                  "pprs") != cfg.algorithms.end();
  if (has_pprs && (cfg.gamma_grid.empty() || cfg.k_grid.empty())) {
    throw Error(ErrorKind::ConfigParseError,
                "pprs needs non-empty grid.gamma and grid.k");
  }
  if (cfg.iterations <= 0 && cfg.time_budget <= 0) {
    throw Error(ErrorKind::ConfigParseError,
                "set run.iterations or run.time_budget");
  }
  if (cfg.seeds.empty()) {
    throw Error(ErrorKind::ConfigParseError, "run.seeds is empty");
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::ConfigParseError, "cannot read '" + path + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

Objective make_objective(const ExperimentConfig& config) {
  Objective obj;
  if (config.objective_name == "linf") {
    obj = linf_objective(config.objective_d, config.objective_l,
                         config.objective_r);
  } else if (config.objective_name == "quadratic") {
    obj = quadratic_objective(config.objective_d, config.objective_beta);
  } else if (config.objective_name == "fig1") {
    obj = fig1_objective();
  } else if (config.objective_name == "margin_attack") {
    const int d = config.objective_d;
    ReluNet net = make_desk_net(d, 96, 6, config.net_seed);
    Rng rng(mix_seed(config.net_seed, 0x62617365ULL));
    const Vec base = rng.normal_vec(d) / std::sqrt(static_cast<double>(d));
    // Center the first layer's kinks on the attacked input and raise the
    // logit scale, so the search region around the attack point is densely
    // piecewise-linear instead of an accident of the weight draw.
    net.biases[0] = -(net.weights[0] * base);
    net.biases[1].setZero();
    net.weights[2] *= 200.0;
    // Aim the attack at the class next to the network's own pick, so the
    // loss starts positive and has somewhere to go.
    Vec h1 = (net.weights[0] * base + net.biases[0]).cwiseMax(0.0);
    Vec h2 = (net.weights[1] * h1 + net.biases[1]).cwiseMax(0.0);
    Vec logits = net.weights[2] * h2 + net.biases[2];
    int top = 0;
    logits.maxCoeff(&top);
    const int target = (top + 1) % net.num_classes();
    obj = margin_attack_objective(net, base, target, config.objective_lambda);
  } else {
    throw Error(ErrorKind::ObjectiveUnknown,
                "no objective named '" + config.objective_name + "'");
  }
  if (config.stages > 0) {
    obj = chain_partition(obj, config.stages);
  }
  return obj;
}

namespace {

struct GridPoint {
  std::string algorithm;
  double eta = 0;
  double gamma = 0;
  int k = 1;
};

std::string point_run_id(const GridPoint& p, std::uint64_t seed) {
  std::string id = p.algorithm + "-lr" + format_double(p.eta);
  if (p.algorithm == "pprs") {
    id += "-g" + format_double(p.gamma) + "-k" + std::to_string(p.k);
  }
  id += "-seed" + std::to_string(seed);
  return id;
}

std::vector<GridPoint> enumerate_grid(const ExperimentConfig& cfg) {
  std::vector<GridPoint> points;
  for (const auto& algo : cfg.algorithms) {
    if (algo == "pprs") {
      for (double lr : cfg.lr_grid) {
        for (double g : cfg.gamma_grid) {
          for (int k : cfg.k_grid) points.push_back({algo, lr, g, k});
        }
      }
    } else {
      for (double lr : cfg.lr_grid) points.push_back({algo, lr, 0.0, 1});
    }
  }
  return points;
}

int iterations_for(const ExperimentConfig& cfg, const GridPoint& p, int delta) {
  long long cost;
  if (p.algorithm == "pprs") {
    cost = 2LL * (p.k + delta - 1) + 2LL * (delta - 1) * cfg.tau;
  } else {
    cost = 2LL * delta;
  }
  if (cfg.time_budget > 0) {
    return static_cast<int>(std::max(1LL, cfg.time_budget / cost));
  }
  return cfg.iterations;
}

// Shared by the summary and the plots: per-(algorithm, grid point) rows and
// the winner per algorithm.
std::pair<std::vector<SummaryRow>, std::vector<SummaryRow>> summarize(
    const std::vector<LabeledRun>& runs) {
  std::vector<SummaryRow> rows;
  auto row_for = [&rows](const RunRecord& r) -> SummaryRow& {
    for (auto& row : rows) {
      if (row.algorithm == r.algorithm && row.eta == r.eta &&
          row.gamma == r.gamma && row.k == r.samples) {
        return row;
      }
    }
    rows.push_back({r.algorithm, r.eta, r.gamma, r.samples, 0.0, 0, 0});
    return rows.back();
  };
  for (const auto& lr : runs) {
    SummaryRow& row = row_for(lr.record);
    row.runs += 1;
    if (lr.record.diverged) {
      row.diverged += 1;
      row.mean_best_loss = std::numeric_limits<double>::infinity();
    } else if (std::isfinite(row.mean_best_loss)) {
      row.mean_best_loss += lr.record.best_loss;
    }
  }
  for (auto& row : rows) {
    if (std::isfinite(row.mean_best_loss) && row.runs > row.diverged) {
      row.mean_best_loss /= (row.runs - row.diverged);
    }
    if (row.diverged == row.runs) {
      row.mean_best_loss = std::numeric_limits<double>::infinity();
    }
  }

  std::vector<SummaryRow> best;
  for (const auto& row : rows) {
    auto it = std::find_if(best.begin(), best.end(), [&](const SummaryRow& b) {
      return b.algorithm == row.algorithm;
    });
    if (it == best.end()) {
      best.push_back(row);
      continue;
    }
    const bool better =
        row.mean_best_loss < it->mean_best_loss ||
        (row.mean_best_loss == it->mean_best_loss &&
         (row.eta < it->eta ||
          (row.eta == it->eta && row.gamma < it->gamma)));
    if (better) *it = row;
  }
  return {rows, best};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const Objective objective = make_objective(config);
  const int delta = depth(*objective.graph);

  const std::vector<GridPoint> points = enumerate_grid(config);
  struct Job {
    GridPoint point;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& p : points) {
    for (std::uint64_t seed : config.seeds) jobs.push_back({p, seed});
  }

  std::vector<LabeledRun> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      try {
        const int T = iterations_for(config, job.point, delta);
        RunRecord rec;
        if (job.point.algorithm == "gd") {
          rec = gd_run(objective, job.point.eta, T, delta, std::nullopt,
                       job.seed);
        } else if (job.point.algorithm == "agd") {
          rec = agd_run(objective, job.point.eta, config.agd_mu, T, delta,
                        std::nullopt, job.seed);
        } else {
          PPRSConfig pc;
          pc.iterations = T;
          pc.samples = job.point.k;
          pc.eta = job.point.eta;
          pc.gamma = job.point.gamma;
          pc.seed = job.seed;
          pc.delta = delta;
          pc.tau = config.tau;
          if (config.clarke_enabled) {
            pc.clarke = ClarkeTracking{config.clarke_radius,
                                       config.clarke_samples,
                                       config.clarke_every, job.seed};
          }
          rec = pprs_run(objective, pc);
        }
        results[i] = {point_run_id(job.point, job.seed), std::move(rec)};
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  unsigned n_threads = config.threads > 0
                           ? static_cast<unsigned>(config.threads)
                           : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads,
                                 static_cast<unsigned>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  ExperimentResult result;
  result.runs = std::move(results);
  std::tie(result.summary, result.best) = summarize(result.runs);
  return result;
}

std::string records_csv(const std::vector<LabeledRun>& runs) {
  std::string out =
      "run_id,algorithm,delta,K,gamma,eta,seed,iteration,simulated_time,"
      "loss,best_loss,grad_est_norm,clarke_min_norm,diverged\n";
  for (const auto& lr : runs) {
    const RunRecord& r = lr.record;
    const std::string prefix = lr.run_id + "," + r.algorithm + "," +
                               std::to_string(r.delta) + "," +
                               std::to_string(r.samples) + "," +
                               format_double(r.gamma) + "," +
                               format_double(r.eta) + "," +
                               std::to_string(r.seed) + ",";
    const std::string diverged = r.diverged ? "1" : "0";
    for (const auto& row : r.history) {
      out += prefix;
      out += std::to_string(row.t);
      out += ',';
      out += std::to_string(row.simulated_time);
      out += ',';
      out += format_double(row.loss);
      out += ',';
      out += format_double(row.best_loss);
      out += ',';
      out += format_double(row.grad_norm);
      out += ',';
      if (row.clarke_min_norm) out += format_double(*row.clarke_min_norm);
      out += ',';
      out += diverged;
      out += '\n';
    }
  }
  return out;
}

std::string schedule_csv(const PipelineSchedule& schedule) {
  std::string out = "unit,slot,kind,microbatch\n";
  for (const ScheduleCell& cell : schedule.cells) {
    out += std::to_string(cell.unit);
    out += ',';
    out += std::to_string(cell.slot);
    out += ',';
    out += to_string(cell.kind);
    out += ',';
    out += std::to_string(cell.microbatch);
    out += '\n';
  }
  return out;
}

PipelineSchedule make_schedule(const std::string& mode, int delta, int k,
                               int m) {
  if (mode == "bubbling") return bubbling_schedule(delta, k);
  if (mode == "nse") return nse_schedule(delta);
  if (mode == "gpipe") return gpipe_erm_schedule(delta, m, k);
  throw Error(ErrorKind::UnknownMode,
              "mode '" + mode + "' is not bubbling, nse, or gpipe");
}

std::string summary_text(const ExperimentResult& result) {
  std::string out;
  out += "algorithm  lr          gamma       K     mean_best_loss   diverged\n";
  for (const auto& row : result.summary) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %-11s %-11s %-5d %-16s %d/%d\n",
                  row.algorithm.c_str(), format_double(row.eta).c_str(),
                  format_double(row.gamma).c_str(), row.k,
                  format_double(row.mean_best_loss).c_str(), row.diverged,
                  row.runs);
    out += line;
  }
  out += "\nbest per algorithm:\n";
  for (const auto& row : result.best) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "  %-6s lr=%s gamma=%s K=%d mean_best_loss=%s\n",
                  row.algorithm.c_str(), format_double(row.eta).c_str(),
                  format_double(row.gamma).c_str(), row.k,
                  format_double(row.mean_best_loss).c_str());
    out += line;
  }
  return out;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorKind::OutputUnwritable, "cannot open '" + tmp.string() + "'");
    }
    out << text;
    if (!out.good()) {
      throw Error(ErrorKind::OutputUnwritable, "short write to '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    throw Error(ErrorKind::OutputUnwritable,
                "cannot move results into '" + path + "': " + ec.message());
  }
}

// ---------------------------------------------------------------------------
// SVG plotting

namespace {

struct Series {
  std::string label;
  std::string color;
  double width = 1.0;
  double opacity = 1.0;
  std::vector<std::pair<double, double>> points;  // (x, y), y > 0 expected
};

std::string color_for(const std::string& algorithm) {
  if (algorithm == "gd") return "#1f77b4";
  if (algorithm == "agd") return "#ff7f0e";
  return "#2ca02c";
}

std::string svg_plot(const std::vector<Series>& series,
                     const std::string& x_label, const std::string& title) {
  constexpr double W = 760, H = 480;
  constexpr double ml = 80, mr = 160, mt = 40, mb = 56;
  const double pw = W - ml - mr, ph = H - mt - mb;

  double xmin = 0, xmax = 1, ymin = 1e300, ymax = -1e300;
  bool log_y = true;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      if (y <= 0) log_y = false;
    }
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
    log_y = false;
  }
  if (log_y) {
    ymin = std::log10(ymin);
    ymax = std::log10(ymax);
  }
  if (ymax - ymin < 1e-12) {
    ymax += 0.5;
    ymin -= 0.5;
  }

  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) {
    const double v = log_y ? std::log10(y) : y;
    return mt + ph - (v - ymin) / (ymax - ymin) * ph;
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         format_double(W) + "\" height=\"" + format_double(H) +
         "\" viewBox=\"0 0 " + format_double(W) + " " + format_double(H) +
         "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + format_double(ml) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" +
         title + "</text>\n";

  // axes
  svg += "<line x1=\"" + format_double(ml) + "\" y1=\"" + format_double(mt + ph) +
         "\" x2=\"" + format_double(ml + pw) + "\" y2=\"" +
         format_double(mt + ph) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + format_double(ml) + "\" y1=\"" + format_double(mt) +
         "\" x2=\"" + format_double(ml) + "\" y2=\"" + format_double(mt + ph) +
         "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 5.0;
    const double px = sx(fx);
    svg += "<line x1=\"" + format_double(px) + "\" y1=\"" +
           format_double(mt + ph) + "\" x2=\"" + format_double(px) +
           "\" y2=\"" + format_double(mt + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + format_double(px) + "\" y=\"" +
           format_double(mt + ph + 20) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
           format_double(std::round(fx)) + "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double fv = ymin + (ymax - ymin) * i / 5.0;
    const double py = mt + ph - ph * i / 5.0;
    const double value = log_y ? std::pow(10.0, fv) : fv;
    char label[48];
    std::snprintf(label, sizeof(label), "%.3g", value);
    svg += "<line x1=\"" + format_double(ml - 5) + "\" y1=\"" +
           format_double(py) + "\" x2=\"" + format_double(ml) + "\" y2=\"" +
           format_double(py) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + format_double(ml - 8) + "\" y=\"" +
           format_double(py + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
           std::string(label) + "</text>\n";
  }
  svg += "<text x=\"" + format_double(ml + pw / 2) + "\" y=\"" +
         format_double(H - 12) +
         "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" +
         x_label + "</text>\n";
  svg += "<text x=\"20\" y=\"" + format_double(mt + ph / 2) +
         "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 20 " +
         format_double(mt + ph / 2) + ")\">loss" +
         std::string(log_y ? " (log scale)" : "") + "</text>\n";

  for (const auto& s : series) {
    std::string path;
    bool pen_down = false;
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y) || (log_y && y <= 0)) {
        pen_down = false;
        continue;
      }
      path += pen_down ? "L" : "M";
      path += format_double(sx(x)) + " " + format_double(sy(y)) + " ";
      pen_down = true;
    }
    if (path.empty()) continue;
    svg += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + s.color +
           "\" stroke-width=\"" + format_double(s.width) +
           "\" stroke-opacity=\"" + format_double(s.opacity) + "\"/>\n";
  }

  double ly = mt + 10;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    svg += "<line x1=\"" + format_double(ml + pw + 12) + "\" y1=\"" +
           format_double(ly) + "\" x2=\"" + format_double(ml + pw + 36) +
           "\" y2=\"" + format_double(ly) + "\" stroke=\"" + s.color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + format_double(ml + pw + 42) + "\" y=\"" +
           format_double(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label +
           "</text>\n";
    ly += 18;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace

std::vector<std::string> emit_plots(const std::vector<LabeledRun>& runs,
                                    PlotAxis axis,
                                    const std::string& out_dir) {
  if (runs.empty()) {
    throw Error(ErrorKind::EmptyRecords, "no runs to plot");
  }
  std::set<int> deltas;
  for (const auto& lr : runs) deltas.insert(lr.record.delta);

  std::vector<std::string> written;
  for (int delta : deltas) {
    std::vector<LabeledRun> subset;
    for (const auto& lr : runs) {
      if (lr.record.delta == delta) subset.push_back(lr);
    }
    auto [rows, best] = summarize(subset);
    (void)rows;

    std::vector<Series> series;
    for (const auto& b : best) {
      std::vector<const RunRecord*> members;
      for (const auto& lr : subset) {
        const RunRecord& r = lr.record;
        if (r.algorithm == b.algorithm && r.eta == b.eta &&
            r.gamma == b.gamma && r.samples == b.k) {
          members.push_back(&r);
        }
      }
      std::size_t longest = 0;
      for (const RunRecord* r : members) {
        longest = std::max(longest, r->history.size());
        Series s;
        s.color = color_for(b.algorithm);
        s.width = 1.0;
        s.opacity = 0.3;
        for (const auto& row : r->history) {
          const double x = axis == PlotAxis::SimulatedTime
                               ? static_cast<double>(row.simulated_time)
                               : static_cast<double>(row.t);
          s.points.emplace_back(x, row.loss);
        }
        series.push_back(std::move(s));
      }
      // seed mean on top
      Series mean;
      mean.color = color_for(b.algorithm);
      mean.width = 2.5;
      std::string label = b.algorithm + " lr=" + format_double(b.eta);
      if (b.algorithm == "pprs") {
        label += " g=" + format_double(b.gamma) + " K=" + std::to_string(b.k);
      }
      mean.label = label;
      for (std::size_t i = 0; i < longest; ++i) {
        double sum = 0, x = 0;
        int count = 0;
        for (const RunRecord* r : members) {
          if (i >= r->history.size()) continue;
          const auto& row = r->history[i];
          if (!std::isfinite(row.loss)) continue;
          sum += row.loss;
          x = axis == PlotAxis::SimulatedTime
                  ? static_cast<double>(row.simulated_time)
                  : static_cast<double>(row.t);
          ++count;
        }
        if (count > 0) mean.points.emplace_back(x, sum / count);
      }
      series.push_back(std::move(mean));
    }

    const std::string stem = axis == PlotAxis::SimulatedTime
                                 ? "loss_vs_time_delta"
                                 : "loss_vs_iterations_delta";
    const std::string x_label = axis == PlotAxis::SimulatedTime
                                    ? "simulated time (slots)"
                                    : "iteration";
    const std::string path =
        (std::filesystem::path(out_dir) / (stem + std::to_string(delta) + ".svg"))
            .string();
    write_text_atomic(
        path, svg_plot(series, x_label,
                       "loss vs " + x_label + ", depth " + std::to_string(delta)));
    written.push_back(path);
  }
  return written;
}

std::vector<LabeledRun> read_records_csv(const std::string& text) {
  std::stringstream lines(text);
  std::string line;
  if (!std::getline(lines, line)) {
    throw Error(ErrorKind::EmptyRecords, "empty records file");
  }
  const std::string expected =
      "run_id,algorithm,delta,K,gamma,eta,seed,iteration,simulated_time,"
      "loss,best_loss,grad_est_norm,clarke_min_norm,diverged";
  if (trim(line) != expected) {
    throw Error(ErrorKind::ConfigParseError, "unexpected CSV header");
  }

  std::vector<LabeledRun> runs;
  int line_no = 1;
  while (std::getline(lines, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    // a trailing empty clarke cell drops at the split; tolerate both widths
    if (cells.size() == 13) cells.insert(cells.end() - 1, "");
    if (cells.size() != 14) {
      throw Error(ErrorKind::ConfigParseError,
                  "line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " fields");
    }
    const std::string& run_id = cells[0];
    if (runs.empty() || runs.back().run_id != run_id) {
      LabeledRun lr;
      lr.run_id = run_id;
      lr.record.algorithm = cells[1];
      lr.record.delta = static_cast<int>(parse_int("delta", cells[2]));
      lr.record.samples = static_cast<int>(parse_int("K", cells[3]));
      lr.record.gamma = parse_double("gamma", cells[4]);
      lr.record.eta = parse_double("eta", cells[5]);
      lr.record.seed = static_cast<std::uint64_t>(parse_int("seed", cells[6]));
      runs.push_back(std::move(lr));
    }
    RunRecord& rec = runs.back().record;
    IterationRecord row_rec;
    row_rec.t = static_cast<int>(parse_int("iteration", cells[7]));
    row_rec.simulated_time = parse_int("simulated_time", cells[8]);
    row_rec.loss = parse_double("loss", cells[9]);
    row_rec.best_loss = parse_double("best_loss", cells[10]);
    row_rec.grad_norm = parse_double("grad_est_norm", cells[11]);
    if (!cells[12].empty()) {
      row_rec.clarke_min_norm = parse_double("clarke_min_norm", cells[12]);
    }
    rec.history.push_back(row_rec);
    rec.diverged = cells[13] == "1";
    rec.final_loss = row_rec.loss;
    rec.best_loss = row_rec.best_loss;
    rec.total_time = row_rec.simulated_time;
  }
  if (runs.empty()) {
    throw Error(ErrorKind::EmptyRecords, "records file has no data rows");
  }
  return runs;
}

}  // namespace pprs
