#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pprs/comp_graph.hpp"

namespace pprs {

/// A benchmark objective: a computation graph plus the bookkeeping the
/// optimizers need. The optimization variable θ is the concatenation of the
/// designated parameter roots; the remaining roots hold constants that are
/// bound once at construction time.
struct Objective {
  std::string name;
  std::shared_ptr<const Graph> graph;
  std::vector<int> param_roots;                 // ordered; concat = θ
  std::vector<std::pair<int, Vec>> fixed_roots; // constants, bound at build
  int param_dim = 0;

  std::optional<double> lipschitz;      // L
  std::optional<double> smoothness;     // β
  std::optional<double> optimum_value;  // f*
  std::optional<Vec> optimum_point;     // θ*
  std::optional<double> radius;         // R = ‖θ0 − θ*‖ with θ0 = 0
};

/// Forward/backward driver for one objective with reusable buffers. Cheap to
/// construct; use one instance per thread for concurrent evaluation.
class Evaluator {
 public:
  explicit Evaluator(const Objective& objective);

  double value(const Vec& theta);

  /// Gradient w.r.t. θ; the reference stays valid until the next call.
  const Vec& gradient(const Vec& theta);

  double value_and_gradient(const Vec& theta, Vec& grad_out);

  /// Rebinds one root in place (used to swap dataset records).
  void set_root(int root_id, const Vec& value);

  const Objective& objective() const { return *objective_; }

 private:
  void scatter(const Vec& theta);
  const Objective* objective_;
  GraphExec exec_;
  std::vector<Vec> inputs_;   // one slot per root, in root order
  std::vector<int> offsets_;  // θ offset per param root
  Vec grad_;
};

/// Average of one per-sample objective over a dataset. Each record supplies
/// values for the designated data roots; parameters are shared.
struct FiniteSumObjective {
  Objective per_sample;
  std::vector<int> data_roots;                  // roots fed from each record
  std::vector<std::vector<Vec>> dataset;        // record i → values per data root
  int sample_count() const { return static_cast<int>(dataset.size()); }
};

class FiniteSumEvaluator {
 public:
  explicit FiniteSumEvaluator(const FiniteSumObjective& fs);
  double value(const Vec& theta);
  const Vec& gradient(const Vec& theta);               // average, fixed order
  const Vec& sample_gradient(const Vec& theta, int i); // one record
  double sample_value(const Vec& theta, int i);

 private:
  void bind_record(int i);
  const FiniteSumObjective* fs_;
  Objective bound_;      // per_sample with data roots rebound per record
  std::unique_ptr<Evaluator> eval_;
  Vec grad_;
};

/// Node builders used by the library objectives; exposed so tests can
/// assemble small graphs from the same registry.
namespace nodes {
NodeFunction input_passthrough(int dim);       // identity, any dim
NodeFunction scale(double s, int dim);         // s·u
NodeFunction add(int dim);                     // u + v
NodeFunction subtract(int dim);                // u − v
NodeFunction dot(Vec a);                       // aᵀu
NodeFunction affine(Eigen::MatrixXd w, Vec b); // W·u + b
NodeFunction relu(int dim);                    // max(u, 0), subgradient 0 at 0
NodeFunction abs_scalar();                     // |u|, subgradient 0 at 0
NodeFunction sin_scalar();
NodeFunction log1p_exp();                      // ln(1 + e^u)
NodeFunction mul_sub();                        // (a,b,c) → a − b·c
NodeFunction max_abs(int dim);                 // ‖u‖∞, lowest-index argmax at ties
NodeFunction squared_distance(int dim);        // (u,c) → ½‖u−c‖²
NodeFunction margin_loss(int classes, int target); // Σ_{i≠y} max(0, 1−z_y+z_i)
NodeFunction add_scalars(int arity);           // Σ scalar parents
}  // namespace nodes

/// The two-root reference graph f(x,ω) = ln(1+e^{x/2}) + |x/2 − ω·sin(x)|,
/// built node-for-node; θ = (x, ω).
Objective fig1_objective();

/// f(θ) = L·max_i |θ_i − c_i| with c = (R/√d)·1, so θ* = c, f* = 0 and
/// ‖θ0 − θ*‖ = R from θ0 = 0. R = 0 gives the plain L·‖θ‖∞.
Objective linf_objective(int d, double L, double R = 0.0);

/// f(θ) = (β/2)‖θ − c‖². Default center has unit norm, so R = 1.
Objective quadratic_objective(int d, double beta);
Objective quadratic_objective(int d, double beta, Vec center);

/// Small fixed-weight piecewise-linear classifier used by the attack
/// objective: affine → relu → affine → relu → affine logits.
struct ReluNet {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Vec> biases;
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int num_classes() const { return static_cast<int>(weights.back().rows()); }
};

/// Deterministic desk-scale network: weights drawn once from the given seed.
ReluNet make_desk_net(int input_dim, int hidden_dim, int num_classes,
                      std::uint64_t seed);

/// f(x̃) = Σ_{i≠y} max(0, 1 − z(x̃)_y + z(x̃)_i) + λ‖x̃ − x‖∞ where z is the
/// network's logit map; the variable is the input x̃, starting from θ0 = 0.
Objective margin_attack_objective(const ReluNet& net, const Vec& x, int y,
                                  double lambda);

/// Re-expresses the same function as a chain of `stages` nodes so that
/// depth(result) = stages: contiguous topological groups when the native
/// graph is at least that deep, singleton groups plus scalar identity
/// padding after the output otherwise. Values and gradients are unchanged.
Objective chain_partition(const Objective& objective, int stages);

FiniteSumObjective finite_sum(Objective per_sample, std::vector<int> data_roots,
                              std::vector<std::vector<Vec>> dataset);

/// Max secant slope |f(a)−f(b)|/‖a−b‖ over n_pairs sampled pairs in the
/// radius ball around θ0 = 0; a lower estimate of the Lipschitz constant.
double estimate_lipschitz(const Objective& objective, int n_pairs,
                          double radius, std::uint64_t seed);

}  // namespace pprs
