#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "pprs/bench.hpp"
#include "pprs/comp_graph.hpp"
#include "pprs/error.hpp"
#include "pprs/objectives.hpp"
#include "pprs/optimizers.hpp"
#include "pprs/pipeline_sim.hpp"
#include "pprs/smoothing.hpp"

namespace py = pybind11;
using namespace pprs;

namespace {

// One-shot helpers so Python callers do not manage Evaluator buffers.
double objective_value(const Objective& obj, const Vec& theta) {
  Evaluator eval(obj);
  return eval.value(theta);
}

Vec objective_gradient(const Objective& obj, const Vec& theta) {
  Evaluator eval(obj);
  return eval.gradient(theta);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Pipelined smoothed-gradient optimization lab (C++ core)";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  // ------------------------------------------------------------- objectives
  py::class_<Objective>(m, "Objective")
      .def_readonly("name", &Objective::name)
      .def_readonly("param_dim", &Objective::param_dim)
      .def_readonly("lipschitz", &Objective::lipschitz)
      .def_readonly("smoothness", &Objective::smoothness)
      .def_readonly("optimum_value", &Objective::optimum_value)
      .def_readonly("optimum_point", &Objective::optimum_point)
      .def_readonly("radius", &Objective::radius)
      .def_property_readonly(
          "depth", [](const Objective& o) { return depth(*o.graph); })
      .def("value", &objective_value, py::arg("theta"))
      .def("gradient", &objective_gradient, py::arg("theta"))
      .def("__repr__", [](const Objective& o) {
        return "<Objective '" + o.name + "' dim " +
               std::to_string(o.param_dim) + " depth " +
               std::to_string(depth(*o.graph)) + ">";
      });

  py::class_<ReluNet>(m, "ReluNet")
      .def_readonly("weights", &ReluNet::weights)
      .def_readonly("biases", &ReluNet::biases)
      .def_property_readonly("input_dim", &ReluNet::input_dim)
      .def_property_readonly("num_classes", &ReluNet::num_classes);

  m.def("fig1_objective", &fig1_objective);
  m.def("linf_objective", &linf_objective, py::arg("d"), py::arg("l"),
        py::arg("r") = 0.0);
  m.def("quadratic_objective",
        py::overload_cast<int, double>(&quadratic_objective), py::arg("d"),
        py::arg("beta"));
  m.def("make_desk_net", &make_desk_net, py::arg("input_dim"),
        py::arg("hidden_dim"), py::arg("num_classes"), py::arg("seed"));
  m.def("margin_attack_objective", &margin_attack_objective, py::arg("net"),
        py::arg("x"), py::arg("y"), py::arg("lambda_"));
  m.def("chain_partition", &chain_partition, py::arg("objective"),
        py::arg("stages"));
  m.def("estimate_lipschitz", &estimate_lipschitz, py::arg("objective"),
        py::arg("n_pairs"), py::arg("radius"), py::arg("seed"));

  // -------------------------------------------------------------- smoothing
  py::class_<GradientEstimate>(m, "GradientEstimate")
      .def_readonly("g", &GradientEstimate::g)
      .def_readonly("value", &GradientEstimate::value)
      .def_readonly("elapsed", &GradientEstimate::elapsed);

  m.def(
      "smoothed_gradient",
      [](const Objective& obj, const Vec& theta, double gamma, int samples,
         std::uint64_t seed, int iteration, std::optional<int> pipeline_depth,
         int tau) {
        SmoothingConfig cfg;
        cfg.gamma = gamma;
        cfg.samples = samples;
        cfg.seed = seed;
        cfg.iteration = iteration;
        return smoothed_gradient(obj, theta, cfg, pipeline_depth, tau);
      },
      py::arg("objective"), py::arg("theta"), py::arg("gamma"),
      py::arg("samples"), py::arg("seed") = 0, py::arg("iteration") = 0,
      py::arg("pipeline_depth") = std::nullopt, py::arg("tau") = 0);

  py::class_<ValueEstimate>(m, "ValueEstimate")
      .def_readonly("mean", &ValueEstimate::mean)
      .def_readonly("half_width", &ValueEstimate::half_width)
      .def_readonly("samples", &ValueEstimate::samples);

  m.def("smoothed_value", &smoothed_value, py::arg("objective"),
        py::arg("theta"), py::arg("gamma"), py::arg("n_mc"),
        py::arg("seed") = 0);

  py::class_<SmoothingBounds>(m, "SmoothingBounds")
      .def_readonly("uniform_gap", &SmoothingBounds::uniform_gap)
      .def_readonly("smoothness", &SmoothingBounds::smoothness);

  m.def("smoothing_bounds", &smoothing_bounds, py::arg("l"), py::arg("gamma"),
        py::arg("d"));

  py::class_<ClarkeEstimate>(m, "ClarkeEstimate")
      .def_readonly("point", &ClarkeEstimate::point)
      .def_readonly("radius", &ClarkeEstimate::radius)
      .def_readonly("gradients", &ClarkeEstimate::gradients)
      .def_readonly("min_norm_element", &ClarkeEstimate::min_norm_element)
      .def_readonly("weights", &ClarkeEstimate::weights)
      .def_readonly("min_norm", &ClarkeEstimate::min_norm);

  m.def("clarke_min_norm", &clarke_min_norm, py::arg("objective"),
        py::arg("theta"), py::arg("r"), py::arg("n_samples"),
        py::arg("seed") = 0);

  m.def(
      "min_norm_in_hull",
      [](const std::vector<Vec>& points) { return min_norm_in_hull(points); },
      py::arg("points"));

  m.def(
      "time_to_reach",
      [](const std::vector<std::pair<long long, double>>& history,
         double epsilon) -> std::optional<long long> {
        std::vector<ClarkeSample> samples;
        samples.reserve(history.size());
        for (const auto& [time, min_norm] : history) {
          samples.push_back({time, min_norm});
        }
        return time_to_reach(samples, epsilon);
      },
      py::arg("history"), py::arg("epsilon"),
      "history: list of (simulated_time, min_norm) pairs");

  // ------------------------------------------------------------- optimizers
  py::class_<LambdaSchedule>(m, "LambdaSchedule")
      .def_readonly("lambda_", &LambdaSchedule::lambda)
      .def_readonly("mu", &LambdaSchedule::mu);

  m.def("lambda_sequence", &lambda_sequence, py::arg("t"));

  py::class_<Theorem3Params>(m, "Theorem3Params")
      .def_readonly("samples", &Theorem3Params::samples)
      .def_readonly("eta", &Theorem3Params::eta)
      .def_readonly("mu", &Theorem3Params::mu)
      .def_readonly("gamma", &Theorem3Params::gamma);

  m.def("theorem3_params", &theorem3_params, py::arg("l"), py::arg("r"),
        py::arg("d"), py::arg("t"));
  m.def("theorem3_error_bound", &theorem3_error_bound, py::arg("l"),
        py::arg("r"), py::arg("d"), py::arg("t"), py::arg("k"));

  py::class_<Theorem4Params>(m, "Theorem4Params")
      .def_readonly("gamma", &Theorem4Params::gamma)
      .def_readonly("eta", &Theorem4Params::eta)
      .def_readonly("mu", &Theorem4Params::mu)
      .def_readonly("samples", &Theorem4Params::samples)
      .def_readonly("iterations", &Theorem4Params::iterations);

  m.def("theorem4_params", &theorem4_params, py::arg("l"), py::arg("d_gap"),
        py::arg("d"), py::arg("r"), py::arg("epsilon"));

  py::class_<IterationRecord>(m, "IterationRecord")
      .def_readonly("t", &IterationRecord::t)
      .def_readonly("simulated_time", &IterationRecord::simulated_time)
      .def_readonly("loss", &IterationRecord::loss)
      .def_readonly("best_loss", &IterationRecord::best_loss)
      .def_readonly("grad_norm", &IterationRecord::grad_norm)
      .def_readonly("clarke_min_norm", &IterationRecord::clarke_min_norm);

  py::class_<RunRecord>(m, "RunRecord")
      .def_readonly("algorithm", &RunRecord::algorithm)
      .def_readonly("delta", &RunRecord::delta)
      .def_readonly("samples", &RunRecord::samples)
      .def_readonly("gamma", &RunRecord::gamma)
      .def_readonly("eta", &RunRecord::eta)
      .def_readonly("seed", &RunRecord::seed)
      .def_readonly("history", &RunRecord::history)
      .def_readonly("final_point", &RunRecord::final_point)
      .def_readonly("final_loss", &RunRecord::final_loss)
      .def_readonly("best_loss", &RunRecord::best_loss)
      .def_readonly("diverged", &RunRecord::diverged)
      .def_readonly("total_time", &RunRecord::total_time)
      .def("__repr__", [](const RunRecord& r) {
        return "<RunRecord " + r.algorithm + " best " +
               format_double(r.best_loss) + " time " +
               std::to_string(r.total_time) + ">";
      });

  m.def(
      "pprs_run",
      [](const Objective& obj, int iterations, int samples, double eta,
         double gamma, const std::vector<double>& mu, std::uint64_t seed,
         int delta, int tau, std::optional<Vec> theta0,
         std::optional<ClarkeTracking> clarke) {
        PPRSConfig cfg;
        cfg.iterations = iterations;
        cfg.samples = samples;
        cfg.eta = eta;
        cfg.gamma = gamma;
        cfg.mu = mu;
        cfg.seed = seed;
        cfg.delta = delta;
        cfg.tau = tau;
        cfg.theta0 = std::move(theta0);
        cfg.clarke = clarke;
        return pprs_run(obj, cfg);
      },
      py::arg("objective"), py::arg("iterations"), py::arg("samples"),
      py::arg("eta"), py::arg("gamma"), py::arg("mu") = std::vector<double>{},
      py::arg("seed") = 0, py::arg("delta") = 1, py::arg("tau") = 0,
      py::arg("theta0") = std::nullopt, py::arg("clarke") = std::nullopt);

  py::class_<ClarkeTracking>(m, "ClarkeTracking")
      .def(py::init([](double radius, int samples, int every,
                       std::uint64_t seed) {
             return ClarkeTracking{radius, samples, every, seed};
           }),
           py::arg("radius") = 0.1, py::arg("samples") = 16,
           py::arg("every") = 1, py::arg("seed") = 0)
      .def_readwrite("radius", &ClarkeTracking::radius)
      .def_readwrite("samples", &ClarkeTracking::samples)
      .def_readwrite("every", &ClarkeTracking::every)
      .def_readwrite("seed", &ClarkeTracking::seed);

  m.def(
      "gd_run",
      [](const Objective& obj, double eta, int iterations, int delta,
         std::optional<Vec> theta0, std::uint64_t seed) {
        return gd_run(obj, eta, iterations, delta, std::move(theta0), seed);
      },
      py::arg("objective"), py::arg("eta"), py::arg("iterations"),
      py::arg("delta") = 1, py::arg("theta0") = std::nullopt,
      py::arg("seed") = 0);

  m.def(
      "agd_run",
      [](const Objective& obj, double eta, double mu, int iterations,
         int delta, std::optional<Vec> theta0, std::uint64_t seed) {
        return agd_run(obj, eta, mu, iterations, delta, std::move(theta0),
                       seed);
      },
      py::arg("objective"), py::arg("eta"), py::arg("mu"),
      py::arg("iterations"), py::arg("delta") = 1,
      py::arg("theta0") = std::nullopt, py::arg("seed") = 0);

  m.def(
      "agd_run_scheduled",
      [](const Objective& obj, double eta, const std::vector<double>& mu,
         int iterations, int delta, std::optional<Vec> theta0,
         std::uint64_t seed) {
        return agd_run(obj, eta, mu, iterations, delta, std::move(theta0),
                       seed);
      },
      py::arg("objective"), py::arg("eta"), py::arg("mu"),
      py::arg("iterations"), py::arg("delta") = 1,
      py::arg("theta0") = std::nullopt, py::arg("seed") = 0);

  // --------------------------------------------------------------- pipeline
  py::class_<ScheduleCell>(m, "ScheduleCell")
      .def_readonly("unit", &ScheduleCell::unit)
      .def_readonly("slot", &ScheduleCell::slot)
      .def_property_readonly(
          "kind", [](const ScheduleCell& c) { return to_string(c.kind); })
      .def_readonly("microbatch", &ScheduleCell::microbatch);

  py::class_<PipelineSchedule>(m, "PipelineSchedule")
      .def_property_readonly(
          "mode", [](const PipelineSchedule& s) { return to_string(s.mode); })
      .def_readonly("stages", &PipelineSchedule::stages)
      .def_readonly("microbatches", &PipelineSchedule::microbatches)
      .def_readonly("samples", &PipelineSchedule::samples)
      .def_readonly("comm_delay", &PipelineSchedule::comm_delay)
      .def_readonly("cells", &PipelineSchedule::cells)
      .def_readonly("makespan", &PipelineSchedule::makespan);

  m.def("make_schedule", &make_schedule, py::arg("mode"), py::arg("delta"),
        py::arg("k") = 1, py::arg("m") = 1);
  m.def(
      "validate_schedule",
      [](const PipelineSchedule& s) -> std::optional<std::string> {
        const auto violation = validate(s);
        if (!violation) return std::nullopt;
        return violation->rule + " at unit " + std::to_string(violation->unit) +
               " slot " + std::to_string(violation->slot) + ": " +
               violation->detail;
      },
      py::arg("schedule"),
      "None when the schedule is valid, else a description of the first "
      "violation");
  m.def("utilization", &utilization, py::arg("schedule"));

  // ------------------------------------------------------------------ bench
  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_readonly("objective_name", &ExperimentConfig::objective_name)
      .def_readonly("stages", &ExperimentConfig::stages)
      .def_readonly("algorithms", &ExperimentConfig::algorithms)
      .def_readonly("iterations", &ExperimentConfig::iterations)
      .def_readonly("time_budget", &ExperimentConfig::time_budget)
      .def_readonly("seeds", &ExperimentConfig::seeds)
      .def_readonly("lr_grid", &ExperimentConfig::lr_grid)
      .def_readonly("gamma_grid", &ExperimentConfig::gamma_grid)
      .def_readonly("k_grid", &ExperimentConfig::k_grid)
      .def_readonly("out_dir", &ExperimentConfig::out_dir);

  py::class_<LabeledRun>(m, "LabeledRun")
      .def_readonly("run_id", &LabeledRun::run_id)
      .def_readonly("record", &LabeledRun::record);

  py::class_<SummaryRow>(m, "SummaryRow")
      .def_readonly("algorithm", &SummaryRow::algorithm)
      .def_readonly("eta", &SummaryRow::eta)
      .def_readonly("gamma", &SummaryRow::gamma)
      .def_readonly("k", &SummaryRow::k)
      .def_readonly("mean_best_loss", &SummaryRow::mean_best_loss)
      .def_readonly("runs", &SummaryRow::runs)
      .def_readonly("diverged", &SummaryRow::diverged);

  py::class_<ExperimentResult>(m, "ExperimentResult")
      .def_readonly("runs", &ExperimentResult::runs)
      .def_readonly("summary", &ExperimentResult::summary)
      .def_readonly("best", &ExperimentResult::best);

  m.def("parse_config_text", &parse_config_text, py::arg("text"));
  m.def("parse_config_file", &parse_config_file, py::arg("path"));
  m.def("run_experiment", &run_experiment, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "records_csv",
      [](const ExperimentResult& result) { return records_csv(result.runs); },
      py::arg("result"));
  m.def("summary_text", &summary_text, py::arg("result"));
  m.def("schedule_csv", &schedule_csv, py::arg("schedule"));
  m.def("format_double", &format_double, py::arg("value"));
}
