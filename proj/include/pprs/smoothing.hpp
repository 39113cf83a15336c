#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pprs/objectives.hpp"

namespace pprs {

/// Parameters of the Gaussian smoothing estimator. Per-sample noise streams
/// are derived from (seed, iteration, k), so samples are order-independent
/// and reproducible.
struct SmoothingConfig {
  double gamma = 0.0;       // smoothing radius γ > 0
  int samples = 1;          // K
  std::uint64_t seed = 0;   // master seed
  int iteration = 0;        // stream selector, set per optimizer step
};

struct GradientEstimate {
  Vec g;            // (1/K) Σ_k ∇f(θ + γX_k)
  double value = 0; // (1/K) Σ_k f(θ + γX_k), a plug-in smoothed-value reading
  int elapsed = 0;  // 2(K+Δ−1) with a pipeline depth, else 2K
};

/// Monte-Carlo gradient of the smoothed function f^γ(θ) = E[f(θ+γX)].
/// Samples are averaged in fixed 64-sample blocks so the result is bitwise
/// identical whether blocks run serially or in parallel.
GradientEstimate smoothed_gradient(const Objective& objective, const Vec& theta,
                                   const SmoothingConfig& config,
                                   std::optional<int> pipeline_depth = std::nullopt,
                                   int tau = 0);

/// Same, reusing a caller-owned evaluator (buffer reuse for tight loops).
GradientEstimate smoothed_gradient(Evaluator& eval, const Vec& theta,
                                   const SmoothingConfig& config,
                                   std::optional<int> pipeline_depth = std::nullopt,
                                   int tau = 0);

struct ValueEstimate {
  double mean = 0;
  double half_width = 0; // 99% normal CI half-width from the sample variance
  int samples = 0;
};

/// Monte-Carlo estimate of f^γ(θ) with a confidence half-width.
ValueEstimate smoothed_value(const Objective& objective, const Vec& theta,
                             double gamma, int n_mc, std::uint64_t seed);

struct SmoothingBounds {
  double uniform_gap = 0; // γL√d ≥ ‖f^γ − f‖∞
  double smoothness = 0;  // L/γ, smoothness of f^γ
};

SmoothingBounds smoothing_bounds(double L, double gamma, int d);

/// Sampled inner approximation of the Clarke r-subdifferential: gradients at
/// points drawn uniformly in the r-ball, plus the minimum-norm element of
/// their convex hull.
struct ClarkeEstimate {
  Vec point;
  double radius = 0;
  std::vector<Vec> gradients;
  Vec min_norm_element;         // Σ_j weights[j]·gradients[j]
  std::vector<double> weights;  // ≥ 0, sum 1
  double min_norm = 0;
};

ClarkeEstimate clarke_min_norm(const Objective& objective, const Vec& theta,
                               double r, int n_samples, std::uint64_t seed);

/// Minimum-norm point of conv(points), solved by pairwise Frank-Wolfe over
/// the simplex to duality gap ≤ 1e−10. Returns the point and its weights.
std::pair<Vec, std::vector<double>> min_norm_in_hull(std::span<const Vec> points);

/// One tracked stationarity reading along an optimization run.
struct ClarkeSample {
  long long time = 0;   // simulated slots at which the estimate was taken
  double min_norm = 0;
};

/// First time the tracked min-norm drops to ε: min{t : min_norm(t) ≤ ε}.
/// Empty when the history never crosses (or is empty).
std::optional<long long> time_to_reach(std::span<const ClarkeSample> history,
                                       double epsilon);

}  // namespace pprs
