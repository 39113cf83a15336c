#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pprs/objectives.hpp"

namespace pprs {

enum class PassKind { Forward, Backward };

const char* to_string(PassKind kind);

/// One unit-time computation: stage `unit` runs the `kind` pass of
/// microbatch `microbatch` during logical slot `slot` (both 1-based).
struct ScheduleCell {
  int unit = 1;
  int slot = 1;
  PassKind kind = PassKind::Forward;
  int microbatch = 1;
};

enum class ScheduleMode { Bubbling, Nse, GpipeErm };

const char* to_string(ScheduleMode mode);

/// A complete timed assignment of passes to pipeline stages. Constructed
/// schedules satisfy the causality and exclusivity rules checked by
/// `validate`; makespan is the largest occupied slot.
struct PipelineSchedule {
  ScheduleMode mode = ScheduleMode::Bubbling;
  int stages = 1;       // Δ
  int microbatches = 1; // injections per sample (K)
  int samples = 1;      // ERM sample count m (1 outside ERM mode)
  int comm_delay = 0;   // τ, integer inter-stage latency
  std::vector<ScheduleCell> cells;
  int makespan = 0;
};

/// Staggered injection of K inputs: forward wavefront, then the backward
/// wavefront once the last forward pass has drained. Makespan 2(K+Δ−1)+…τ
/// terms; exactly 2(K+Δ−1) at τ=0.
PipelineSchedule bubbling_schedule(int delta, int k, int tau = 0);

/// One gradient computed sequentially through the pipeline: 2Δ slots, one
/// busy unit at a time.
PipelineSchedule nse_schedule(int delta);

/// ERM microbatching: m·K injections pipelined back to back; makespan
/// 2(mK+Δ−1) at τ=0.
PipelineSchedule gpipe_erm_schedule(int delta, int m, int k);

/// First rule violation found, with the offending cell's coordinates.
struct ScheduleViolation {
  std::string rule;
  int unit = 0;
  int slot = 0;
  std::string detail;
};

/// Checks forward causality, backward causality (including backward-after-
/// own-forward), and one-cell-per-unit-per-slot. Empty result means valid.
std::optional<ScheduleViolation> validate(const PipelineSchedule& schedule);

/// Busy fraction per unit: busy slots / makespan, index 0 ↔ unit 1.
std::vector<double> utilization(const PipelineSchedule& schedule);

struct IterationResult {
  std::vector<Vec> gradients; // one per input, in input order
  std::vector<double> values; // f at each input
  int elapsed = 0;            // bubbling makespan for (Δ, K, τ)
};

/// Runs K forward/backward pairs of a chain-partitioned objective and
/// charges the bubbling cost for its depth. Gradients are bitwise equal to
/// K independent serial evaluations; the schedule changes time, not values.
IterationResult simulate_iteration(const Objective& chained,
                                   std::span<const Vec> inputs, int tau = 0);

/// Same, reusing a caller-owned evaluator (buffer reuse for tight loops).
IterationResult simulate_iteration(Evaluator& eval, std::span<const Vec> inputs,
                                   int tau = 0);

}  // namespace pprs
