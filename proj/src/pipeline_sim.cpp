#include "pprs/pipeline_sim.hpp"

#include <map>
#include <tuple>

namespace pprs {

const char* to_string(PassKind kind) {
  return kind == PassKind::Forward ? "forward" : "backward";
}

const char* to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::Bubbling: return "bubbling";
    case ScheduleMode::Nse: return "nse";
    case ScheduleMode::GpipeErm: return "gpipe";
  }
  return "schedule";
}

namespace {

// Shared wavefront layout: microbatch k enters stage 1 at slot k; the
// backward sweep starts after the last forward pass has drained.
PipelineSchedule wavefront_schedule(int delta, int injections, int tau) {
  if (delta < 1 || injections < 1 || tau < 0) {
    throw Error(ErrorKind::InvalidArgument,
                "schedule needs Δ ≥ 1, K ≥ 1, τ ≥ 0");
  }
  PipelineSchedule s;
  s.stages = delta;
  s.microbatches = injections;
  s.comm_delay = tau;
  const int hop = 1 + tau;
  const int forward_end = injections + (delta - 1) * hop;
  s.cells.resize(static_cast<std::size_t>(2) * delta * injections);
  std::size_t c = 0;
  for (int i = 1; i <= delta; ++i) {
    for (int k = 1; k <= injections; ++k) {
      s.cells[c++] = {i, k + (i - 1) * hop, PassKind::Forward, k};
    }
  }
  for (int i = delta; i >= 1; --i) {
    for (int k = 1; k <= injections; ++k) {
      s.cells[c++] = {i, forward_end + k + (delta - i) * hop,
                      PassKind::Backward, k};
    }
  }
  s.makespan = forward_end + injections + (delta - 1) * hop;
  return s;
}

}  // namespace

PipelineSchedule bubbling_schedule(int delta, int k, int tau) {
  PipelineSchedule s = wavefront_schedule(delta, k, tau);
  s.mode = ScheduleMode::Bubbling;
  return s;
}

PipelineSchedule nse_schedule(int delta) {
  PipelineSchedule s = wavefront_schedule(delta, 1, 0);
  s.mode = ScheduleMode::Nse;
  return s;
}

PipelineSchedule gpipe_erm_schedule(int delta, int m, int k) {
  if (m < 1) {
    throw Error(ErrorKind::InvalidArgument, "sample count m must be ≥ 1");
  }
  PipelineSchedule s = wavefront_schedule(delta, m * k, 0);
  s.mode = ScheduleMode::GpipeErm;
  s.microbatches = k;
  s.samples = m;
  return s;
}

std::optional<ScheduleViolation> validate(const PipelineSchedule& schedule) {
  const int hop = 1 + schedule.comm_delay;
  // (unit, kind, microbatch) → slot, plus per-(unit, slot) occupancy.
  std::map<std::tuple<int, int, int>, int> pass_slot;
  std::map<std::pair<int, int>, int> occupied;
  for (const ScheduleCell& cell : schedule.cells) {
    if (cell.slot < 1 || cell.unit < 1 || cell.unit > schedule.stages) {
      return ScheduleViolation{"cell-range", cell.unit, cell.slot,
                               "unit or slot outside the schedule"};
    }
    auto [it, fresh] = occupied.try_emplace({cell.unit, cell.slot}, 1);
    if (!fresh) {
      return ScheduleViolation{"unit-exclusivity", cell.unit, cell.slot,
                               "two cells on one unit in one slot"};
    }
    pass_slot[{cell.unit, cell.kind == PassKind::Forward ? 0 : 1,
               cell.microbatch}] = cell.slot;
  }
  for (const ScheduleCell& cell : schedule.cells) {
    if (cell.kind == PassKind::Forward) {
      if (cell.unit > 1) {
        auto it = pass_slot.find({cell.unit - 1, 0, cell.microbatch});
        if (it == pass_slot.end() || it->second > cell.slot - hop) {
          return ScheduleViolation{
              "forward-causality", cell.unit, cell.slot,
              "missing or late upstream forward pass of microbatch " +
                  std::to_string(cell.microbatch)};
        }
      }
    } else {
      if (cell.unit < schedule.stages) {
        auto it = pass_slot.find({cell.unit + 1, 1, cell.microbatch});
        if (it == pass_slot.end() || it->second > cell.slot - hop) {
          return ScheduleViolation{
              "backward-causality", cell.unit, cell.slot,
              "missing or late downstream backward pass of microbatch " +
                  std::to_string(cell.microbatch)};
        }
      }
      auto own = pass_slot.find({cell.unit, 0, cell.microbatch});
      if (own == pass_slot.end() || own->second >= cell.slot) {
        return ScheduleViolation{
            "backward-causality", cell.unit, cell.slot,
            "backward pass before this unit's own forward pass of microbatch " +
                std::to_string(cell.microbatch)};
      }
    }
  }
  return std::nullopt;
}

std::vector<double> utilization(const PipelineSchedule& schedule) {
  std::vector<double> busy(schedule.stages, 0.0);
  for (const ScheduleCell& cell : schedule.cells) {
    busy[cell.unit - 1] += 1.0;
  }
  for (double& b : busy) b /= schedule.makespan;
  return busy;
}

IterationResult simulate_iteration(Evaluator& eval, std::span<const Vec> inputs,
                                   int tau) {
  if (inputs.empty()) {
    throw Error(ErrorKind::InvalidArgument, "no inputs to schedule");
  }
  const Objective& chained = eval.objective();
  const int delta = depth(*chained.graph);
  const int k = static_cast<int>(inputs.size());

  IterationResult result;
  result.gradients.resize(k);
  result.values.resize(k);
  for (int j = 0; j < k; ++j) {
    result.gradients[j].resize(chained.param_dim);
    result.values[j] = eval.value_and_gradient(inputs[j], result.gradients[j]);
  }
  // Same arithmetic as a serial sweep; only the charged time reflects the
  // overlapped schedule: 2K + 2(Δ−1)(1+τ), i.e. 2(K+Δ−1) at τ=0.
  result.elapsed = 2 * k + 2 * (delta - 1) * (1 + tau);
  return result;
}

IterationResult simulate_iteration(const Objective& chained,
                                   std::span<const Vec> inputs, int tau) {
  Evaluator eval(chained);
  return simulate_iteration(eval, inputs, tau);
}

}  // namespace pprs
