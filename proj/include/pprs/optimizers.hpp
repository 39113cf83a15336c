#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pprs/objectives.hpp"
#include "pprs/smoothing.hpp"

namespace pprs {

/// λ recurrence λ_0 = 0, λ_t = (1+√(1+4λ_{t−1}²))/2 and the applied
/// momentum values. The literal μ_t = (λ_t−1)/λ_{t+1} starts at −1, which
/// corrupts the first step, so the applied schedule is shifted by one:
/// mu[t] = (λ_{t+1}−1)/λ_{t+2}, making the first applied momentum 0 while
/// later values still follow (λ_t−1)/λ_{t+1}.
struct LambdaSchedule {
  std::vector<double> lambda; // λ_0 … λ_T
  std::vector<double> mu;     // applied momentum for t = 0 … T−1, mu[0] = 0
};

LambdaSchedule lambda_sequence(int T);

/// Optional stationarity tracking attached to a run: a Clarke min-norm
/// estimate every `every` iterations, stamped with the simulated time.
struct ClarkeTracking {
  double radius = 0.1;
  int samples = 16;
  int every = 1;
  std::uint64_t seed = 0;
};

struct PPRSConfig {
  int iterations = 1;      // T
  int samples = 1;         // K
  double eta = 0;          // gradient step η
  std::vector<double> mu;  // momentum per iteration; empty ⇒ all zero,
                           // size 1 ⇒ constant, else size ≥ iterations
  double gamma = 0;        // smoothing γ
  std::uint64_t seed = 0;
  int delta = 1;           // pipeline depth Δ; must equal the graph depth
  int tau = 0;             // inter-stage latency for the time accounting
  std::optional<Vec> theta0;            // default 0
  std::optional<ClarkeTracking> clarke; // off by default
};

struct IterationRecord {
  int t = 0;                    // 0 is the initial point
  long long simulated_time = 0; // t · cost-per-iteration
  double loss = 0;              // f(y_t), exact forward value
  double best_loss = 0;         // min loss seen up to t
  double grad_norm = 0;         // ‖G_{t−1}‖ (0 at t = 0)
  std::optional<double> clarke_min_norm;
};

struct RunRecord {
  std::string algorithm; // "pprs" | "gd" | "agd"
  int delta = 1;
  int samples = 1;       // K (1 for gd/agd)
  double gamma = 0;      // 0 for gd/agd
  double eta = 0;
  std::uint64_t seed = 0;
  std::vector<IterationRecord> history;
  Vec final_point;       // y_T (θ_T for gd)
  double final_loss = 0;
  double best_loss = 0;
  bool diverged = false;     // non-finite loss or gradient hit; run aborted
  long long total_time = 0;  // simulated slots actually consumed
};

/// Accelerated descent on the smoothed objective: K pipelined gradient
/// samples per iteration, y_{t+1} = x_t − ηG_t, then the momentum
/// extrapolation x_{t+1} = (1+μ_t)y_{t+1} − μ_t·y_t. Each iteration costs
/// 2(K+Δ−1) simulated slots. The objective must be chain-partitioned so
/// that its depth equals config.delta. Divergence (non-finite loss or
/// gradient) aborts the loop and flags the record instead of raising.
RunRecord pprs_run(const Objective& objective, const PPRSConfig& config);

/// Parameter choices achieving the convex rate: K = ⌈(T+1)/√d⌉,
/// η = R·d^{−1/4}/(L(T+1)), momentum from lambda_sequence. γ is not pinned
/// by the rate statement; γ = R·d^{−1/4}/(T+1) makes the smoothing gap γL√d
/// match the order of the leading error term.
struct Theorem3Params {
  int samples = 1;         // K
  double eta = 0;
  std::vector<double> mu;  // size T
  double gamma = 0;
};

Theorem3Params theorem3_params(double L, double R, int d, int T);

/// The convex-rate error expression 3LRd^{1/4}/(T+1) + LRd^{−1/4}/(2K),
/// used as an acceptance threshold.
double theorem3_error_bound(double L, double R, int d, int T, int K);

/// Parameter choices for the non-convex guarantee:
/// γ = r/√(4·log(3L/ε) + 2·log(2e)·d), η = γ/L, μ = 0, K = ⌈18L²/ε²⌉,
/// T = ⌈36L(D + 2γL√d)/(γε²)⌉. Requires ε < 3L.
struct Theorem4Params {
  double gamma = 0;
  double eta = 0;
  double mu = 0;           // always 0
  long long samples = 1;   // K
  long long iterations = 1;// T
};

Theorem4Params theorem4_params(double L, double D, int d, double r,
                               double epsilon);

/// Plain subgradient descent θ_{t+1} = θ_t − η∇f(θ_t); every gradient costs
/// a sequential sweep of the pipeline, 2Δ slots.
RunRecord gd_run(const Objective& objective, double eta, int T, int delta,
                 std::optional<Vec> theta0 = std::nullopt,
                 std::uint64_t seed = 0);

/// Nesterov iteration with constant momentum μ (same update shape as the
/// smoothed run with K = 1 and exact gradients); 2Δ slots per iteration.
RunRecord agd_run(const Objective& objective, double eta, double mu, int T,
                  int delta, std::optional<Vec> theta0 = std::nullopt,
                  std::uint64_t seed = 0);

/// Same iteration with a per-step momentum schedule (e.g. lambda_sequence).
RunRecord agd_run(const Objective& objective, double eta,
                  std::vector<double> mu_schedule, int T, int delta,
                  std::optional<Vec> theta0 = std::nullopt,
                  std::uint64_t seed = 0);

}  // namespace pprs
