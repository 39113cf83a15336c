#include "pprs/optimizers.hpp"

#include <cmath>
#include <limits>

#include "pprs/pipeline_sim.hpp"
#include "pprs/rng.hpp"

namespace pprs {

namespace {

long long ceil_count(double v) {
  // Guard against 25.000000000000004-style noise before taking the ceiling.
  return static_cast<long long>(std::ceil(v - 1e-9));
}

std::vector<double> resolve_momentum(const std::vector<double>& mu, int T) {
  if (mu.empty()) return std::vector<double>(T, 0.0);
  if (mu.size() == 1) return std::vector<double>(T, mu[0]);
  if (static_cast<int>(mu.size()) < T) {
    throw Error(ErrorKind::InvalidArgument,
                "momentum schedule shorter than the iteration count");
  }
  return {mu.begin(), mu.begin() + T};
}

// Shared accelerated loop: per-iteration gradient hook returning (G, cost).
// Divergence flags the record and stops instead of raising, so sweeps keep
// the run with its history.
template <typename GradFn>
RunRecord accelerated_loop(const Objective& objective, Evaluator& eval,
                           RunRecord record, int T, double eta,
                           const std::vector<double>& mu,
                           const std::optional<Vec>& theta0,
                           const std::optional<ClarkeTracking>& clarke,
                           GradFn&& grad_fn) {
  const int d = objective.param_dim;
  Vec x = theta0 ? *theta0 : Vec::Zero(d);
  if (x.size() != d) {
    throw Error(ErrorKind::DimensionMismatch, "theta0 dim mismatch");
  }
  Vec y = x;

  record.history.reserve(T + 1);
  double loss = eval.value(y);
  double best = loss;
  record.history.push_back({0, 0, loss, best, 0.0, std::nullopt});
  if (!std::isfinite(loss)) {
    record.diverged = true;
  }

  long long time = 0;
  Vec g(d), y_next(d);
  for (int t = 0; t < T && !record.diverged; ++t) {
    int cost = 0;
    bool finite = true;
    try {
      cost = grad_fn(t, x, g);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteGradient) throw;
      finite = false;
      g.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
    if (!finite || !g.allFinite()) {
      // The gradient itself blew up; stop before charging a partial step.
      record.diverged = true;
      break;
    }
    y_next = x - eta * g;
    x = (1.0 + mu[t]) * y_next - mu[t] * y;
    y = y_next;
    time += cost;

    loss = eval.value(y);
    if (!std::isfinite(loss)) {
      record.diverged = true;
      record.history.push_back({t + 1, time,
                                std::numeric_limits<double>::infinity(), best,
                                g.norm(), std::nullopt});
      break;
    }
    best = std::min(best, loss);
    std::optional<double> min_norm;
    if (clarke && (t + 1) % clarke->every == 0) {
      min_norm = clarke_min_norm(objective, y, clarke->radius, clarke->samples,
                                 mix_seed(clarke->seed, 0x636c74ULL, t))
                     .min_norm;
    }
    record.history.push_back({t + 1, time, loss, best, g.norm(), min_norm});
  }

  record.final_point = y;
  record.final_loss = record.history.back().loss;
  record.best_loss = best;
  record.total_time = time;
  return record;
}

}  // namespace

LambdaSchedule lambda_sequence(int T) {
  if (T < 1) {
    throw Error(ErrorKind::InvalidArgument, "need T ≥ 1");
  }
  std::vector<double> lam(T + 2);
  lam[0] = 0.0;
  for (int t = 1; t <= T + 1; ++t) {
    lam[t] = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * lam[t - 1] * lam[t - 1]));
  }
  LambdaSchedule s;
  s.mu.resize(T);
  for (int t = 0; t < T; ++t) {
    s.mu[t] = (lam[t + 1] - 1.0) / lam[t + 2];
  }
  lam.resize(T + 1);
  s.lambda = std::move(lam);
  return s;
}

RunRecord pprs_run(const Objective& objective, const PPRSConfig& config) {
  if (config.iterations < 1) {
    throw Error(ErrorKind::InvalidArgument, "need at least one iteration");
  }
  if (config.samples < 1 || !(config.eta > 0.0) || !(config.gamma > 0.0) ||
      config.delta < 1) {
    throw Error(ErrorKind::InvalidArgument,
                "need K ≥ 1, η > 0, γ > 0, Δ ≥ 1");
  }
  const int actual_depth = depth(*objective.graph);
  if (actual_depth != config.delta) {
    throw Error(ErrorKind::InvalidArgument,
                "objective depth " + std::to_string(actual_depth) +
                    " does not match Δ = " + std::to_string(config.delta) +
                    "; chain-partition the objective first");
  }
  const std::vector<double> mu = resolve_momentum(config.mu, config.iterations);

  RunRecord record;
  record.algorithm = "pprs";
  record.delta = config.delta;
  record.samples = config.samples;
  record.gamma = config.gamma;
  record.eta = config.eta;
  record.seed = config.seed;

  Evaluator eval(objective);
  SmoothingConfig sc;
  sc.gamma = config.gamma;
  sc.samples = config.samples;
  sc.seed = config.seed;
  return accelerated_loop(
      objective, eval, std::move(record), config.iterations, config.eta, mu,
      config.theta0, config.clarke, [&](int t, const Vec& x, Vec& g) {
        sc.iteration = t;
        GradientEstimate est =
            smoothed_gradient(eval, x, sc, config.delta, config.tau);
        g = est.g;
        return est.elapsed;
      });
}

Theorem3Params theorem3_params(double L, double R, int d, int T) {
  if (!(L > 0.0) || !(R > 0.0) || d < 1 || T < 1) {
    throw Error(ErrorKind::InvalidArgument, "need L, R > 0 and d, T ≥ 1");
  }
  Theorem3Params p;
  p.samples = static_cast<int>(
      ceil_count((T + 1) / std::sqrt(static_cast<double>(d))));
  const double d_quarter = std::pow(static_cast<double>(d), -0.25);
  p.eta = R * d_quarter / (L * (T + 1));
  p.gamma = R * d_quarter / (T + 1);
  p.mu = lambda_sequence(T).mu;
  return p;
}

double theorem3_error_bound(double L, double R, int d, int T, int K) {
  const double d_quarter = std::pow(static_cast<double>(d), 0.25);
  return 3.0 * L * R * d_quarter / (T + 1) + L * R / d_quarter / (2.0 * K);
}

Theorem4Params theorem4_params(double L, double D, int d, double r,
                               double epsilon) {
  if (!(L > 0.0) || !(D > 0.0) || d < 1 || !(r > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "need L, D, r > 0 and d ≥ 1");
  }
  if (!(epsilon > 0.0) || !(epsilon < 3.0 * L)) {
    throw Error(ErrorKind::InvalidEpsilon,
                "need 0 < ε < 3L so the log stays positive");
  }
  Theorem4Params p;
  const double log2e = std::log(2.0 * std::exp(1.0));
  p.gamma = r / std::sqrt(4.0 * std::log(3.0 * L / epsilon) + 2.0 * log2e * d);
  p.eta = p.gamma / L;
  p.mu = 0.0;
  p.samples = ceil_count(18.0 * L * L / (epsilon * epsilon));
  p.iterations = ceil_count(
      36.0 * L *
      (D + 2.0 * p.gamma * L * std::sqrt(static_cast<double>(d))) /
      (p.gamma * epsilon * epsilon));
  return p;
}

RunRecord gd_run(const Objective& objective, double eta, int T, int delta,
                 std::optional<Vec> theta0, std::uint64_t seed) {
  if (!(eta > 0.0) || T < 1 || delta < 1) {
    throw Error(ErrorKind::InvalidArgument, "need η > 0, T ≥ 1, Δ ≥ 1");
  }
  RunRecord record;
  record.algorithm = "gd";
  record.delta = delta;
  record.eta = eta;
  record.seed = seed;

  Evaluator eval(objective);
  std::vector<double> no_momentum(T, 0.0);
  return accelerated_loop(objective, eval, std::move(record), T, eta,
                          no_momentum, theta0, std::nullopt,
                          [&](int, const Vec& x, Vec& g) {
                            eval.value_and_gradient(x, g);
                            return 2 * delta;
                          });
}

RunRecord agd_run(const Objective& objective, double eta, double mu, int T,
                  int delta, std::optional<Vec> theta0, std::uint64_t seed) {
  if (!(mu >= 0.0) || !(mu < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "need μ ∈ [0, 1)");
  }
  return agd_run(objective, eta, std::vector<double>{mu}, T, delta,
                 std::move(theta0), seed);
}

RunRecord agd_run(const Objective& objective, double eta,
                  std::vector<double> mu_schedule, int T, int delta,
                  std::optional<Vec> theta0, std::uint64_t seed) {
  if (!(eta > 0.0) || T < 1 || delta < 1) {
    throw Error(ErrorKind::InvalidArgument, "need η > 0, T ≥ 1, Δ ≥ 1");
  }
  const std::vector<double> mu = resolve_momentum(mu_schedule, T);
  RunRecord record;
  record.algorithm = "agd";
  record.delta = delta;
  record.eta = eta;
  record.seed = seed;

  Evaluator eval(objective);
  return accelerated_loop(objective, eval, std::move(record), T, eta, mu,
                          theta0, std::nullopt,
                          [&](int, const Vec& x, Vec& g) {
                            eval.value_and_gradient(x, g);
                            return 2 * delta;
                          });
}

}  // namespace pprs
