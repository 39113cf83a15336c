#include "pprs/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pprs/rng.hpp"

namespace pprs {

namespace nodes {

NodeFunction input_passthrough(int dim) {
  NodeFunction f;
  f.name = "identity";
  f.arity = 1;
  f.output_dim = dim;
  f.eval = [](ParentVals u, Vec& out) { out = *u[0]; };
  f.vjp = [](ParentVals, const Vec& adj, std::span<Vec* const> t) {
    *t[0] += adj;
  };
  return f;
}

NodeFunction scale(double s, int dim) {
  NodeFunction f;
  f.name = "scale";
  f.arity = 1;
  f.output_dim = dim;
  f.eval = [s](ParentVals u, Vec& out) { out = s * (*u[0]); };
  f.vjp = [s](ParentVals, const Vec& adj, std::span<Vec* const> t) {
    *t[0] += s * adj;
  };
  return f;
}

NodeFunction add(int dim) {
  NodeFunction f;
  f.name = "add";
  f.arity = 2;
  f.output_dim = dim;
  f.eval = [](ParentVals u, Vec& out) { out = *u[0] + *u[1]; };
  f.vjp = [](ParentVals, const Vec& adj, std::span<Vec* const> t) {
    *t[0] += adj;
    *t[1] += adj;
  };
  return f;
}

NodeFunction subtract(int dim) {
  NodeFunction f;
  f.name = "subtract";
  f.arity = 2;
  f.output_dim = dim;
  f.eval = [](ParentVals u, Vec& out) { out = *u[0] - *u[1]; };
  f.vjp = [](ParentVals, const Vec& adj, std::span<Vec* const> t) {
    *t[0] += adj;
    *t[1] -= adj;
  };
  return f;
}

NodeFunction dot(Vec a) {
  NodeFunction f;
  f.name = "dot";
  f.arity = 1;
  f.output_dim = 1;
  f.eval = [a](ParentVals u, Vec& out) { out(0) = a.dot(*u[0]); };
  f.vjp = [a](ParentVals, const Vec& adj, std::span<Vec* const> t) {
    *t[0] += adj(0) * a;
  };
  return f;
}

NodeFunction affine(Eigen::MatrixXd w, Vec b) {
  NodeFunction f;
  f.name = "affine";
  f.arity = 1;
  f.output_dim = static_cast<int>(w.rows());
  f.eval = [w, b](ParentVals u, Vec& out) { out = w * (*u[0]) + b; };
  f.vjp = [w](ParentVals, const Vec& adj, std::span<Vec* const> t) {
    *t[0] += w.transpose() * adj;
  };
  return f;
}

NodeFunction relu(int dim) {
  NodeFunction f;
  f.name = "relu";
  f.arity = 1;
  f.output_dim = dim;
  f.eval = [](ParentVals u, Vec& out) { out = u[0]->cwiseMax(0.0); };
  // Slope 0 at the kink, matching the sign(0)=0 convention.
  f.vjp = [](ParentVals u, const Vec& adj, std::span<Vec* const> t) {
    const Vec& in = *u[0];
    Vec& target = *t[0];
    for (int i = 0; i < in.size(); ++i) {
      if (in(i) > 0.0) target(i) += adj(i);
    }
  };
  return f;
}

NodeFunction abs_scalar() {
  NodeFunction f;
  f.name = "abs";
  f.arity = 1;
  f.output_dim = 1;
  f.eval = [](ParentVals u, Vec& out) { out(0) = std::abs((*u[0])(0)); };
  f.vjp = [](ParentVals u, const Vec& adj, std::span<Vec* const> t) {
    const double x = (*u[0])(0);
    const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    (*t[0])(0) += s * adj(0);
  };
  return f;
}

NodeFunction sin_scalar() {
  NodeFunction f;
  f.name = "sin";
  f.arity = 1;
  f.output_dim = 1;
  f.eval = [](ParentVals u, Vec& out) { out(0) = std::sin((*u[0])(0)); };
  f.vjp = [](ParentVals u, const Vec& adj, std::span<Vec* const> t) {
    (*t[0])(0) += std::cos((*u[0])(0)) * adj(0);
  };
  return f;
}

NodeFunction log1p_exp() {
  NodeFunction f;
  f.name = "log1p_exp";
  f.arity = 1;
  f.output_dim = 1;
  // ln(1+e^x) = max(x,0) + log1p(e^{-|x|}), stable for large |x|.
  f.eval = [](ParentVals u, Vec& out) {
    const double x = (*u[0])(0);
    out(0) = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  };
  f.vjp = [](ParentVals u, const Vec& adj, std::span<Vec* const> t) {
    const double x = (*u[0])(0);
    (*t[0])(0) += adj(0) / (1.0 + std::exp(-x));
  };
  return f;
}

NodeFunction mul_sub() {
  NodeFunction f;
  f.name = "mul_sub";
  f.arity = 3;
  f.output_dim = 1;
  f.eval = [](ParentVals u, Vec& out) {
    out(0) = (*u[0])(0) - (*u[1])(0) * (*u[2])(0);
  };
  f.vjp = [](ParentVals u, const Vec& adj, std::span<Vec* const> t) {
    (*t[0])(0) += adj(0);
    (*t[1])(0) -= (*u[2])(0) * adj(0);
    (*t[2])(0) -= (*u[1])(0) * adj(0);
  };
  return f;
}

NodeFunction max_abs(int dim) {
  (void)dim;  // arity-1 node; the input's own size drives the loop
  NodeFunction f;
  f.name = "max_abs";
  f.arity = 1;
  f.output_dim = 1;
  f.eval = [](ParentVals u, Vec& out) {
    out(0) = u[0]->size() == 0 ? 0.0 : u[0]->cwiseAbs().maxCoeff();
  };
  // Subgradient: lowest index attaining the max wins; sign(0) = 0.
  f.vjp = [](ParentVals u, const Vec& adj, std::span<Vec* const> t) {
    const Vec& x = *u[0];
    if (x.size() == 0) return;
    int arg = 0;
    double best = std::abs(x(0));
    for (int i = 1; i < x.size(); ++i) {
      if (std::abs(x(i)) > best) {
        best = std::abs(x(i));
        arg = i;
      }
    }
    const double s = x(arg) > 0.0 ? 1.0 : (x(arg) < 0.0 ? -1.0 : 0.0);
    (*t[0])(arg) += s * adj(0);
  };
  return f;
}

NodeFunction squared_distance(int dim) {
  (void)dim;
  NodeFunction f;
  f.name = "squared_distance";
  f.arity = 2;
  f.output_dim = 1;
  f.eval = [](ParentVals u, Vec& out) {
    out(0) = 0.5 * (*u[0] - *u[1]).squaredNorm();
  };
  f.vjp = [](ParentVals u, const Vec& adj, std::span<Vec* const> t) {
    const Vec diff = *u[0] - *u[1];
    *t[0] += adj(0) * diff;
    *t[1] -= adj(0) * diff;
  };
  return f;
}

NodeFunction margin_loss(int classes, int target) {
  NodeFunction f;
  f.name = "margin_loss";
  f.arity = 1;
  f.output_dim = 1;
  f.eval = [classes, target](ParentVals u, Vec& out) {
    const Vec& z = *u[0];
    double loss = 0.0;
    for (int i = 0; i < classes; ++i) {
      if (i == target) continue;
      loss += std::max(0.0, 1.0 - z(target) + z(i));
    }
    out(0) = loss;
  };
  // Hinges exactly at zero contribute nothing (the max picks its first,
  // constant argument on ties).
  f.vjp = [classes, target](ParentVals u, const Vec& adj,
                            std::span<Vec* const> t) {
    const Vec& z = *u[0];
    Vec& g = *t[0];
    for (int i = 0; i < classes; ++i) {
      if (i == target) continue;
      if (1.0 - z(target) + z(i) > 0.0) {
        g(i) += adj(0);
        g(target) -= adj(0);
      }
    }
  };
  return f;
}

NodeFunction add_scalars(int arity) {
  NodeFunction f;
  f.name = "add_scalars";
  f.arity = arity;
  f.output_dim = 1;
  f.eval = [](ParentVals u, Vec& out) {
    double s = 0.0;
    for (const Vec* p : u) s += (*p)(0);
    out(0) = s;
  };
  f.vjp = [](ParentVals, const Vec& adj, std::span<Vec* const> t) {
    for (Vec* p : t) (*p)(0) += adj(0);
  };
  return f;
}

}  // namespace nodes

// ---------------------------------------------------------------------------
// Evaluator

Evaluator::Evaluator(const Objective& objective)
    : objective_(&objective),
      exec_(objective.graph) {
  const Graph& g = *objective.graph;
  const auto& roots = g.roots();
  inputs_.resize(roots.size());
  for (std::size_t r = 0; r < roots.size(); ++r) {
    inputs_[r].resize(g.dim(roots[r]));
    inputs_[r].setZero();
  }
  for (const auto& [id, value] : objective.fixed_roots) {
    set_root(id, value);
  }
  offsets_.resize(objective.param_roots.size());
  int off = 0;
  for (std::size_t j = 0; j < objective.param_roots.size(); ++j) {
    offsets_[j] = off;
    off += g.dim(objective.param_roots[j]);
  }
  if (off != objective.param_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "param_dim " + std::to_string(objective.param_dim) +
                    " does not match parameter roots of total dim " +
                    std::to_string(off));
  }
  grad_.resize(objective.param_dim);
}

void Evaluator::set_root(int root_id, const Vec& value) {
  const auto& roots = objective_->graph->roots();
  auto it = std::find(roots.begin(), roots.end(), root_id);
  if (it == roots.end()) {
    throw Error(ErrorKind::InvalidArgument,
                "node " + std::to_string(root_id) + " is not a root");
  }
  if (value.size() != objective_->graph->dim(root_id)) {
    throw Error(ErrorKind::DimensionMismatch,
                "root " + std::to_string(root_id) + " expects dim " +
                    std::to_string(objective_->graph->dim(root_id)));
  }
  inputs_[it - roots.begin()] = value;
}

void Evaluator::scatter(const Vec& theta) {
  if (theta.size() != objective_->param_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "theta has dim " + std::to_string(theta.size()) +
                    ", objective expects " +
                    std::to_string(objective_->param_dim));
  }
  const Graph& g = *objective_->graph;
  const auto& roots = g.roots();
  for (std::size_t j = 0; j < objective_->param_roots.size(); ++j) {
    const int id = objective_->param_roots[j];
    const auto slot = std::find(roots.begin(), roots.end(), id) - roots.begin();
    inputs_[slot] = theta.segment(offsets_[j], g.dim(id));
  }
}

double Evaluator::value(const Vec& theta) {
  scatter(theta);
  return exec_.forward(inputs_).output;
}

const Vec& Evaluator::gradient(const Vec& theta) {
  value_and_gradient(theta, grad_);
  return grad_;
}

double Evaluator::value_and_gradient(const Vec& theta, Vec& grad_out) {
  scatter(theta);
  const double out = exec_.forward(inputs_).output;
  auto root_grads = exec_.backward();
  const Graph& g = *objective_->graph;
  const auto& roots = g.roots();
  grad_out.resize(objective_->param_dim);
  for (std::size_t j = 0; j < objective_->param_roots.size(); ++j) {
    const int id = objective_->param_roots[j];
    const auto slot = std::find(roots.begin(), roots.end(), id) - roots.begin();
    grad_out.segment(offsets_[j], g.dim(id)) = root_grads[slot];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Library objectives

Objective fig1_objective() {
  std::vector<NodeSpec> specs(8);
  std::vector<std::vector<int>> edges(8);
  specs[0] = {true, 1, {}};  // x
  specs[1] = {true, 1, {}};  // ω
  specs[2] = {false, 1, nodes::scale(0.5, 1)};  // g1 = x/2
  edges[2] = {0};
  specs[3] = {false, 1, nodes::sin_scalar()};   // g3 = sin x
  edges[3] = {0};
  specs[4] = {false, 1, nodes::mul_sub()};      // g4 = g1 − ω·g3
  edges[4] = {2, 1, 3};
  specs[5] = {false, 1, nodes::log1p_exp()};    // g5 = ln(1+e^{g1})
  edges[5] = {2};
  specs[6] = {false, 1, nodes::abs_scalar()};   // g6 = |g4|
  edges[6] = {4};
  specs[7] = {false, 1, nodes::add_scalars(2)}; // g7 = g5 + g6
  edges[7] = {5, 6};

  Objective obj;
  obj.name = "fig1";
  obj.graph = std::make_shared<Graph>(build_graph(std::move(specs), edges));
  obj.param_roots = {0, 1};
  obj.param_dim = 2;
  return obj;
}

Objective linf_objective(int d, double L, double R) {
  if (d < 1 || L <= 0.0 || R < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "linf_objective needs d≥1, L>0, R≥0");
  }
  Vec center = Vec::Constant(d, R / std::sqrt(static_cast<double>(d)));

  std::vector<NodeSpec> specs(5);
  std::vector<std::vector<int>> edges(5);
  specs[0] = {true, d, {}};                       // θ
  specs[1] = {true, d, {}};                       // center
  specs[2] = {false, 1, nodes::subtract(d)};
  edges[2] = {0, 1};
  specs[3] = {false, 1, nodes::max_abs(d)};
  edges[3] = {2};
  specs[4] = {false, 1, nodes::scale(L, 1)};
  edges[4] = {3};

  Objective obj;
  obj.name = "linf";
  obj.graph = std::make_shared<Graph>(build_graph(std::move(specs), edges));
  obj.param_roots = {0};
  obj.fixed_roots = {{1, center}};
  obj.param_dim = d;
  obj.lipschitz = L;
  obj.optimum_value = 0.0;
  obj.optimum_point = center;
  obj.radius = R;
  return obj;
}

Objective quadratic_objective(int d, double beta) {
  return quadratic_objective(
      d, beta, Vec::Constant(d, 1.0 / std::sqrt(static_cast<double>(d))));
}

Objective quadratic_objective(int d, double beta, Vec center) {
  if (d < 1 || beta <= 0.0) {
    throw Error(ErrorKind::InvalidArgument, "quadratic_objective needs d≥1, β>0");
  }
  if (center.size() != d) {
    throw Error(ErrorKind::DimensionMismatch, "center dim does not match d");
  }
  std::vector<NodeSpec> specs(4);
  std::vector<std::vector<int>> edges(4);
  specs[0] = {true, d, {}};
  specs[1] = {true, d, {}};
  specs[2] = {false, 1, nodes::squared_distance(d)};  // ½‖θ−c‖²
  edges[2] = {0, 1};
  specs[3] = {false, 1, nodes::scale(beta, 1)};
  edges[3] = {2};

  Objective obj;
  obj.name = "quadratic";
  obj.graph = std::make_shared<Graph>(build_graph(std::move(specs), edges));
  obj.param_roots = {0};
  obj.fixed_roots = {{1, center}};
  obj.param_dim = d;
  obj.smoothness = beta;
  obj.optimum_value = 0.0;
  obj.radius = center.norm();
  obj.optimum_point = std::move(center);
  return obj;
}

ReluNet make_desk_net(int input_dim, int hidden_dim, int num_classes,
                      std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || num_classes < 2) {
    throw Error(ErrorKind::InvalidArgument, "degenerate network shape");
  }
  ReluNet net;
  const int dims[4] = {input_dim, hidden_dim, hidden_dim, num_classes};
  for (int layer = 0; layer < 3; ++layer) {
    Rng rng(mix_seed(seed, 0x6e6574, layer));
    const int rows = dims[layer + 1];
    const int cols = dims[layer];
    const double sigma = std::sqrt(2.0 / cols);
    Eigen::MatrixXd w(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) w(i, j) = sigma * rng.normal();
    }
    Vec b(rows);
    for (int i = 0; i < rows; ++i) b(i) = 0.1 * rng.normal();
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

Objective margin_attack_objective(const ReluNet& net, const Vec& x, int y,
                                  double lambda) {
  if (net.weights.size() != 3 || net.biases.size() != 3) {
    throw Error(ErrorKind::InvalidArgument, "expected a 3-layer network");
  }
  const int n = net.input_dim();
  const int classes = net.num_classes();
  if (x.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "base input dim mismatch");
  }
  if (y < 0 || y >= classes) {
    throw Error(ErrorKind::LabelOutOfRange,
                "label " + std::to_string(y) + " outside [0, " +
                    std::to_string(classes) + ")");
  }
  if (lambda < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "lambda must be ≥ 0");
  }

  const int h1 = static_cast<int>(net.weights[0].rows());
  const int h2 = static_cast<int>(net.weights[1].rows());

  std::vector<NodeSpec> specs(12);
  std::vector<std::vector<int>> edges(12);
  specs[0] = {true, n, {}};  // x̃ (variable)
  specs[1] = {true, n, {}};  // x (base point)
  specs[2] = {false, 1, nodes::affine(net.weights[0], net.biases[0])};
  edges[2] = {0};
  specs[3] = {false, 1, nodes::relu(h1)};
  edges[3] = {2};
  specs[4] = {false, 1, nodes::affine(net.weights[1], net.biases[1])};
  edges[4] = {3};
  specs[5] = {false, 1, nodes::relu(h2)};
  edges[5] = {4};
  specs[6] = {false, 1, nodes::affine(net.weights[2], net.biases[2])};  // logits
  edges[6] = {5};
  specs[7] = {false, 1, nodes::margin_loss(classes, y)};
  edges[7] = {6};
  specs[8] = {false, 1, nodes::subtract(n)};  // x̃ − x
  edges[8] = {0, 1};
  specs[9] = {false, 1, nodes::max_abs(n)};
  edges[9] = {8};
  specs[10] = {false, 1, nodes::scale(lambda, 1)};
  edges[10] = {9};
  specs[11] = {false, 1, nodes::add_scalars(2)};
  edges[11] = {7, 10};

  Objective obj;
  obj.name = "margin_attack";
  obj.graph = std::make_shared<Graph>(build_graph(std::move(specs), edges));
  obj.param_roots = {0};
  obj.fixed_roots = {{1, x}};
  obj.param_dim = n;
  return obj;
}

// ---------------------------------------------------------------------------
// Chain partition

namespace {

// Flat-state bookkeeping for one chain stage: where each referenced native
// slot lives inside [carried prefix ++ this stage's outputs].
struct StageNodePlan {
  int native_id = 0;
  int out_offset = 0;  // into the virtual state
  int out_dim = 0;
  std::vector<std::pair<int, int>> parents;  // (offset, dim) per parent slot
};

struct StagePlan {
  std::vector<StageNodePlan> nodes;
  int in_dim = 0;     // carried state entering the stage
  int total_dim = 0;  // in_dim + this stage's outputs
  bool has_leaf = false;
  int leaf_offset = 0;
  std::vector<std::pair<int, int>> root_slots;  // stage 1: (offset, dim)
};

NodeFunction make_stage_fn(std::shared_ptr<const Graph> native, StagePlan plan) {
  const bool first = !plan.root_slots.empty();
  NodeFunction f;
  f.name = "stage";
  f.arity = first ? static_cast<int>(plan.root_slots.size()) : 1;
  f.output_dim = plan.has_leaf ? 1 : plan.total_dim;

  auto fill_state = [plan](ParentVals u, Vec& state) {
    if (!plan.root_slots.empty()) {
      for (std::size_t r = 0; r < plan.root_slots.size(); ++r) {
        state.segment(plan.root_slots[r].first, plan.root_slots[r].second) =
            *u[r];
      }
    } else {
      state.head(plan.in_dim) = *u[0];
    }
  };
  auto run_group = [native, plan](Vec& state) {
    std::vector<Vec> parent_copies;
    Vec node_out;
    for (const StageNodePlan& np : plan.nodes) {
      parent_copies.clear();
      for (const auto& [off, dim] : np.parents) {
        parent_copies.emplace_back(state.segment(off, dim));
      }
      std::vector<const Vec*> ptrs;
      ptrs.reserve(parent_copies.size());
      for (const Vec& v : parent_copies) ptrs.push_back(&v);
      node_out.resize(np.out_dim);
      native->fn(np.native_id)
          .eval(ParentVals(ptrs.data(), ptrs.size()), node_out);
      state.segment(np.out_offset, np.out_dim) = node_out;
    }
  };

  f.eval = [plan, fill_state, run_group](ParentVals u, Vec& out) {
    if (plan.has_leaf) {
      Vec state(plan.total_dim);
      fill_state(u, state);
      run_group(state);
      out(0) = state(plan.leaf_offset);
    } else {
      fill_state(u, out);
      run_group(out);
    }
  };

  f.vjp = [native, plan, fill_state, run_group](
              ParentVals u, const Vec& adj, std::span<Vec* const> t) {
    Vec state(plan.total_dim);
    fill_state(u, state);
    run_group(state);

    Vec state_adj;
    if (plan.has_leaf) {
      state_adj = Vec::Zero(plan.total_dim);
      state_adj(plan.leaf_offset) = adj(0);
    } else {
      state_adj = adj;
    }

    std::vector<Vec> parent_copies;
    std::vector<Vec> parent_adjs;
    for (auto it = plan.nodes.rbegin(); it != plan.nodes.rend(); ++it) {
      const StageNodePlan& np = *it;
      const Vec node_adj = state_adj.segment(np.out_offset, np.out_dim);
      if (node_adj.isZero(0.0)) continue;
      parent_copies.clear();
      parent_adjs.clear();
      for (const auto& [off, dim] : np.parents) {
        parent_copies.emplace_back(state.segment(off, dim));
        parent_adjs.emplace_back(Vec::Zero(dim));
      }
      std::vector<const Vec*> ptrs;
      std::vector<Vec*> adj_ptrs;
      for (std::size_t j = 0; j < parent_copies.size(); ++j) {
        ptrs.push_back(&parent_copies[j]);
        adj_ptrs.push_back(&parent_adjs[j]);
      }
      native->fn(np.native_id)
          .vjp(ParentVals(ptrs.data(), ptrs.size()), node_adj,
               std::span<Vec* const>(adj_ptrs.data(), adj_ptrs.size()));
      for (std::size_t j = 0; j < np.parents.size(); ++j) {
        state_adj.segment(np.parents[j].first, np.parents[j].second) +=
            parent_adjs[j];
      }
    }

    if (!plan.root_slots.empty()) {
      for (std::size_t r = 0; r < plan.root_slots.size(); ++r) {
        *t[r] += state_adj.segment(plan.root_slots[r].first,
                                   plan.root_slots[r].second);
      }
    } else {
      *t[0] += state_adj.head(plan.in_dim);
    }
  };
  return f;
}

}  // namespace

Objective chain_partition(const Objective& objective, int stages) {
  if (stages < 1) {
    throw Error(ErrorKind::InvalidArgument, "stage count must be ≥ 1");
  }
  const std::shared_ptr<const Graph> native = objective.graph;
  const auto& topo = native->topo_order();
  const int p = static_cast<int>(topo.size());
  const auto& roots = native->roots();

  // Global slot layout: roots (in root order), then non-root nodes in
  // topological order. Carried state is always a prefix of this layout.
  std::vector<int> slot_of(native->size(), -1);
  std::vector<int> offset_of(native->size(), 0);
  int off = 0;
  int slot = 0;
  for (int r : roots) {
    slot_of[r] = slot++;
    offset_of[r] = off;
    off += native->dim(r);
  }
  for (int id : topo) {
    slot_of[id] = slot++;
    offset_of[id] = off;
    off += native->dim(id);
  }

  // Group the native nodes into real stages; pad with scalar identities
  // after the output when more stages than nodes are requested.
  const int real_stages = std::min(stages, p);
  std::vector<std::vector<int>> groups(real_stages);
  {
    const int base = p / real_stages;
    const int rem = p % real_stages;
    int next = 0;
    for (int s = 0; s < real_stages; ++s) {
      const int take = base + (s < rem ? 1 : 0);
      for (int j = 0; j < take; ++j) groups[s].push_back(topo[next++]);
    }
  }

  const int n_new = static_cast<int>(roots.size()) + stages;
  std::vector<NodeSpec> specs(n_new);
  std::vector<std::vector<int>> edges(n_new);
  for (std::size_t r = 0; r < roots.size(); ++r) {
    specs[r] = {true, native->dim(roots[r]), {}};
  }

  int root_dim_total = 0;
  for (int r : roots) root_dim_total += native->dim(r);

  // The carried prefix always includes the root block, so stage-local
  // offsets coincide with the global layout from the first stage on.
  int carried = root_dim_total;
  for (int s = 0; s < real_stages; ++s) {
    StagePlan plan;
    plan.in_dim = carried;
    int local = carried;
    for (int id : groups[s]) {
      StageNodePlan np;
      np.native_id = id;
      np.out_dim = native->dim(id);
      np.out_offset = local;
      // offsets assigned in topo order match the global layout
      for (int parent : native->parents(id)) {
        np.parents.emplace_back(offset_of[parent], native->dim(parent));
      }
      local += np.out_dim;
      plan.nodes.push_back(std::move(np));
    }
    plan.total_dim = local;
    if (s == real_stages - 1) {
      plan.has_leaf = true;
      plan.leaf_offset = offset_of[native->leaf()];
    }
    if (s == 0) {
      for (int r : roots) {
        plan.root_slots.emplace_back(offset_of[r], native->dim(r));
      }
    }
    const int new_id = static_cast<int>(roots.size()) + s;
    specs[new_id] = {false, 1, make_stage_fn(native, std::move(plan))};
    if (s == 0) {
      for (std::size_t r = 0; r < roots.size(); ++r) {
        edges[new_id].push_back(static_cast<int>(r));
      }
    } else {
      edges[new_id] = {new_id - 1};
    }
    carried = local;
  }
  for (int s = real_stages; s < stages; ++s) {
    const int new_id = static_cast<int>(roots.size()) + s;
    specs[new_id] = {false, 1, nodes::input_passthrough(1)};
    specs[new_id].fn.name = "pad";
    edges[new_id] = {new_id - 1};
  }

  Objective out;
  out.name = objective.name;
  out.graph = std::make_shared<Graph>(build_graph(std::move(specs), edges));
  for (int id : objective.param_roots) {
    out.param_roots.push_back(static_cast<int>(slot_of[id]));
  }
  for (const auto& [id, value] : objective.fixed_roots) {
    out.fixed_roots.emplace_back(static_cast<int>(slot_of[id]), value);
  }
  out.param_dim = objective.param_dim;
  out.lipschitz = objective.lipschitz;
  out.smoothness = objective.smoothness;
  out.optimum_value = objective.optimum_value;
  out.optimum_point = objective.optimum_point;
  out.radius = objective.radius;
  return out;
}

// ---------------------------------------------------------------------------
// Finite sums

FiniteSumObjective finite_sum(Objective per_sample, std::vector<int> data_roots,
                              std::vector<std::vector<Vec>> dataset) {
  if (dataset.empty()) {
    throw Error(ErrorKind::EmptyDataset, "finite sum over zero records");
  }
  const Graph& g = *per_sample.graph;
  for (int id : data_roots) {
    if (std::find(g.roots().begin(), g.roots().end(), id) == g.roots().end()) {
      throw Error(ErrorKind::InvalidArgument,
                  "data root " + std::to_string(id) + " is not a root");
    }
    if (std::find(per_sample.param_roots.begin(), per_sample.param_roots.end(),
                  id) != per_sample.param_roots.end()) {
      throw Error(ErrorKind::InvalidArgument,
                  "data root " + std::to_string(id) + " is a parameter root");
    }
  }
  for (const auto& record : dataset) {
    if (record.size() != data_roots.size()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "record does not cover every data root");
    }
    for (std::size_t j = 0; j < data_roots.size(); ++j) {
      if (record[j].size() != g.dim(data_roots[j])) {
        throw Error(ErrorKind::DimensionMismatch,
                    "record entry dim mismatch for root " +
                        std::to_string(data_roots[j]));
      }
    }
  }
  FiniteSumObjective fs;
  fs.per_sample = std::move(per_sample);
  fs.data_roots = std::move(data_roots);
  fs.dataset = std::move(dataset);
  return fs;
}

FiniteSumEvaluator::FiniteSumEvaluator(const FiniteSumObjective& fs)
    : fs_(&fs), bound_(fs.per_sample) {
  eval_ = std::make_unique<Evaluator>(bound_);
  grad_.resize(bound_.param_dim);
}

void FiniteSumEvaluator::bind_record(int i) {
  if (i < 0 || i >= fs_->sample_count()) {
    throw Error(ErrorKind::InvalidArgument,
                "record index " + std::to_string(i) + " out of range");
  }
  for (std::size_t j = 0; j < fs_->data_roots.size(); ++j) {
    eval_->set_root(fs_->data_roots[j], fs_->dataset[i][j]);
  }
}

double FiniteSumEvaluator::sample_value(const Vec& theta, int i) {
  bind_record(i);
  return eval_->value(theta);
}

const Vec& FiniteSumEvaluator::sample_gradient(const Vec& theta, int i) {
  bind_record(i);
  grad_ = eval_->gradient(theta);
  return grad_;
}

double FiniteSumEvaluator::value(const Vec& theta) {
  double sum = 0.0;
  for (int i = 0; i < fs_->sample_count(); ++i) {
    sum += sample_value(theta, i);
  }
  return sum / fs_->sample_count();
}

const Vec& FiniteSumEvaluator::gradient(const Vec& theta) {
  Vec sum = Vec::Zero(bound_.param_dim);
  for (int i = 0; i < fs_->sample_count(); ++i) {
    bind_record(i);
    sum += eval_->gradient(theta);
  }
  grad_ = sum / fs_->sample_count();
  return grad_;
}

// ---------------------------------------------------------------------------

double estimate_lipschitz(const Objective& objective, int n_pairs,
                          double radius, std::uint64_t seed) {
  if (n_pairs < 1 || radius <= 0.0) {
    throw Error(ErrorKind::InvalidArgument, "need n_pairs ≥ 1 and radius > 0");
  }
  Evaluator eval(objective);
  Rng rng(mix_seed(seed, 0x73656361));
  double best = 0.0;
  for (int j = 0; j < n_pairs; ++j) {
    const Vec a = rng.ball_vec(objective.param_dim, radius);
    const Vec b = rng.ball_vec(objective.param_dim, radius);
    const double dist = (a - b).norm();
    if (dist == 0.0) continue;
    best = std::max(best, std::abs(eval.value(a) - eval.value(b)) / dist);
  }
  return best;
}

}  // namespace pprs
