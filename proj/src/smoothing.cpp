#include "pprs/smoothing.hpp"

#include <algorithm>
#include <cmath>

#include "pprs/pipeline_sim.hpp"
#include "pprs/rng.hpp"

namespace pprs {

namespace {

constexpr int kBlock = 64;          // fixed reduction block size
constexpr double kZ99 = 2.5758293035489004;  // 99% two-sided normal quantile

void check_smoothing_args(double gamma, int samples) {
  if (!(gamma > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "smoothing γ must be > 0");
  }
  if (samples < 1) {
    throw Error(ErrorKind::InvalidArgument, "sample count must be ≥ 1");
  }
}

Vec noise_draw(const SmoothingConfig& config, int k, int dim) {
  Rng rng(mix_seed(config.seed, 0x70707273ULL,
                   static_cast<std::uint64_t>(config.iteration),
                   static_cast<std::uint64_t>(k)));
  return rng.normal_vec(dim);
}

}  // namespace

GradientEstimate smoothed_gradient(Evaluator& eval, const Vec& theta,
                                   const SmoothingConfig& config,
                                   std::optional<int> pipeline_depth, int tau) {
  check_smoothing_args(config.gamma, config.samples);
  const Objective& objective = eval.objective();
  if (!theta.allFinite()) {
    throw Error(ErrorKind::NonFiniteGradient, "query point is not finite");
  }
  const int d = objective.param_dim;
  const int k = config.samples;

  std::vector<Vec> inputs;
  inputs.reserve(k);
  for (int j = 0; j < k; ++j) {
    inputs.push_back(theta + config.gamma * noise_draw(config, j, d));
  }

  GradientEstimate est;
  std::vector<Vec>* grads = nullptr;
  std::vector<double>* values = nullptr;
  IterationResult pipelined;
  std::vector<Vec> serial_grads;
  std::vector<double> serial_values;
  if (pipeline_depth) {
    const int actual = depth(*objective.graph);
    if (*pipeline_depth != actual) {
      throw Error(ErrorKind::InvalidArgument,
                  "pipeline depth " + std::to_string(*pipeline_depth) +
                      " does not match the graph depth " +
                      std::to_string(actual) + "; chain-partition first");
    }
    pipelined = simulate_iteration(eval, inputs, tau);
    grads = &pipelined.gradients;
    values = &pipelined.values;
    est.elapsed = pipelined.elapsed;
  } else {
    serial_grads.resize(k);
    serial_values.resize(k);
    for (int j = 0; j < k; ++j) {
      serial_grads[j].resize(d);
      serial_values[j] = eval.value_and_gradient(inputs[j], serial_grads[j]);
    }
    grads = &serial_grads;
    values = &serial_values;
    est.elapsed = 2 * k;
  }

  // Fixed-size blocks summed in order: the result does not depend on
  // whether blocks were produced serially or in parallel.
  Vec total = Vec::Zero(d);
  double value_total = 0.0;
  for (int start = 0; start < k; start += kBlock) {
    const int end = std::min(k, start + kBlock);
    Vec block = Vec::Zero(d);
    double block_value = 0.0;
    for (int j = start; j < end; ++j) {
      if (!(*grads)[j].allFinite() || !std::isfinite((*values)[j])) {
        throw Error(ErrorKind::NonFiniteGradient,
                    "objective returned a non-finite value or gradient");
      }
      block += (*grads)[j];
      block_value += (*values)[j];
    }
    total += block;
    value_total += block_value;
  }
  est.g = total / k;
  est.value = value_total / k;
  return est;
}

GradientEstimate smoothed_gradient(const Objective& objective, const Vec& theta,
                                   const SmoothingConfig& config,
                                   std::optional<int> pipeline_depth, int tau) {
  Evaluator eval(objective);
  return smoothed_gradient(eval, theta, config, pipeline_depth, tau);
}

ValueEstimate smoothed_value(const Objective& objective, const Vec& theta,
                             double gamma, int n_mc, std::uint64_t seed) {
  if (!(gamma > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "smoothing γ must be > 0");
  }
  if (n_mc < 2) {
    throw Error(ErrorKind::InvalidArgument, "need at least two samples");
  }
  Evaluator eval(objective);
  const int d = objective.param_dim;
  double sum = 0.0;
  double sum_sq = 0.0;
  Rng rng(mix_seed(seed, 0x736d7476ULL));
  for (int j = 0; j < n_mc; ++j) {
    const double v = eval.value(theta + gamma * rng.normal_vec(d));
    sum += v;
    sum_sq += v * v;
  }
  ValueEstimate est;
  est.samples = n_mc;
  est.mean = sum / n_mc;
  const double var =
      std::max(0.0, (sum_sq - n_mc * est.mean * est.mean) / (n_mc - 1));
  est.half_width = kZ99 * std::sqrt(var / n_mc);
  return est;
}

SmoothingBounds smoothing_bounds(double L, double gamma, int d) {
  if (!(L > 0.0) || !(gamma > 0.0) || d < 1) {
    throw Error(ErrorKind::InvalidArgument, "need L > 0, γ > 0, d ≥ 1");
  }
  SmoothingBounds b;
  b.uniform_gap = gamma * L * std::sqrt(static_cast<double>(d));
  b.smoothness = L / gamma;
  return b;
}

std::pair<Vec, std::vector<double>> min_norm_in_hull(
    std::span<const Vec> points) {
  const int n = static_cast<int>(points.size());
  if (n == 0) {
    throw Error(ErrorKind::InvalidArgument, "empty point set");
  }
  const int d = static_cast<int>(points[0].size());
  for (const Vec& p : points) {
    if (p.size() != d) {
      throw Error(ErrorKind::DimensionMismatch, "mixed point dimensions");
    }
  }

  // Pairwise Frank-Wolfe over the simplex for ½‖Σ w_j p_j‖², with exact
  // line search. Starts at the shortest vertex, stops at duality gap 1e−10.
  int start = 0;
  double best_norm = points[0].squaredNorm();
  for (int j = 1; j < n; ++j) {
    const double norm_j = points[j].squaredNorm();
    if (norm_j < best_norm) {
      best_norm = norm_j;
      start = j;
    }
  }
  std::vector<double> w(n, 0.0);
  w[start] = 1.0;
  Vec x = points[start];

  constexpr double kGap = 1e-10;
  constexpr int kMaxIters = 20000;
  for (int iter = 0; iter < kMaxIters; ++iter) {
    // scores s_j = p_j·x; Σ w_j s_j = ‖x‖².
    int fw = 0;
    double fw_score = points[0].dot(x);
    int away = -1;
    double away_score = 0.0;
    for (int j = 0; j < n; ++j) {
      const double s = j == 0 ? fw_score : points[j].dot(x);
      if (s < fw_score) {
        fw_score = s;
        fw = j;
      }
      if (w[j] > 0.0 && (away < 0 || s > away_score)) {
        away_score = s;
        away = j;
      }
    }
    const double gap = x.squaredNorm() - fw_score;
    if (gap <= kGap || gap <= 1e-15 * std::max(1.0, x.squaredNorm())) break;

    const Vec dir = points[fw] - points[away];
    const double dir_sq = dir.squaredNorm();
    if (dir_sq <= 0.0) break;
    double step = -x.dot(dir) / dir_sq;
    step = std::clamp(step, 0.0, w[away]);
    if (step <= 0.0) break;
    w[fw] += step;
    w[away] -= step;
    if (w[away] < 1e-16) w[away] = 0.0;
    x += step * dir;
  }

  // Clean the weights and rebuild the point from them so the returned pair
  // reconstructs with zero residual.
  double mass = 0.0;
  for (double& v : w) {
    if (v < 0.0) v = 0.0;
    mass += v;
  }
  for (double& v : w) v /= mass;
  Vec element = Vec::Zero(d);
  for (int j = 0; j < n; ++j) {
    if (w[j] != 0.0) element += w[j] * points[j];
  }
  // The element of a hull with minimal norm can never beat the shortest
  // vertex by less than rounding noise; keep the vertex in that case so the
  // ≤-min-vertex guarantee holds exactly.
  if (element.squaredNorm() > best_norm) {
    std::fill(w.begin(), w.end(), 0.0);
    w[start] = 1.0;
    element = points[start];
  }
  return {element, w};
}

ClarkeEstimate clarke_min_norm(const Objective& objective, const Vec& theta,
                               double r, int n_samples, std::uint64_t seed) {
  if (!(r > 0.0) || n_samples < 1) {
    throw Error(ErrorKind::InvalidArgument, "need r > 0 and n_samples ≥ 1");
  }
  Evaluator eval(objective);
  const int d = objective.param_dim;
  Rng rng(mix_seed(seed, 0x636c6bULL));

  ClarkeEstimate est;
  est.point = theta;
  est.radius = r;
  est.gradients.reserve(n_samples);
  for (int j = 0; j < n_samples; ++j) {
    const Vec y = theta + rng.ball_vec(d, r);
    Vec g = eval.gradient(y);
    if (!g.allFinite()) {
      throw Error(ErrorKind::NonFiniteGradient,
                  "gradient sample is not finite");
    }
    est.gradients.push_back(std::move(g));
  }
  auto [element, weights] = min_norm_in_hull(est.gradients);
  est.min_norm_element = std::move(element);
  est.weights = std::move(weights);
  est.min_norm = est.min_norm_element.norm();
  return est;
}

std::optional<long long> time_to_reach(std::span<const ClarkeSample> history,
                                       double epsilon) {
  for (const ClarkeSample& sample : history) {
    if (sample.min_norm <= epsilon) return sample.time;
  }
  return std::nullopt;
}

}  // namespace pprs
