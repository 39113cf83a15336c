#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pprs/error.hpp"

namespace pprs {

using Vec = Eigen::VectorXd;

/// Parent values passed to a node function, one pointer per parent slot.
using ParentVals = std::span<const Vec* const>;

/// A local node function: forward evaluation plus the Jacobian-vector product
/// used by the reverse sweep. `eval` writes into a preallocated output vector
/// of size `output_dim`. `vjp` receives the parent values, the adjoint of the
/// node output, and one accumulation target per parent (sized to that
/// parent's dimension); it must add its contribution into each target.
struct NodeFunction {
  std::string name;
  int arity = 1;
  int output_dim = 1;
  std::function<void(ParentVals, Vec&)> eval;
  std::function<void(ParentVals, const Vec&, std::span<Vec* const>)> vjp;
};

struct NodeSpec {
  bool is_root = false;
  int dim = 1;       // root input dimension; ignored for function nodes
  NodeFunction fn;   // empty for roots
};

/// Immutable computation graph: roots carry inputs, every other node applies
/// its local function to its parents, and the unique leaf holds the scalar
/// objective value. Construction validates the structure; evaluation is pure.
class Graph {
 public:
  int size() const { return static_cast<int>(nodes_.size()); }
  bool is_root(int id) const { return nodes_[id].is_root; }
  int dim(int id) const { return dims_[id]; }
  const NodeFunction& fn(int id) const { return nodes_[id].fn; }
  const std::vector<int>& parents(int id) const { return parents_[id]; }
  const std::vector<int>& children(int id) const { return children_[id]; }
  const std::vector<int>& roots() const { return roots_; }
  int leaf() const { return leaf_; }
  const std::vector<int>& topo_order() const { return topo_; }
  std::uint64_t uid() const { return uid_; }

 private:
  friend Graph build_graph(std::vector<NodeSpec> specs,
                           const std::vector<std::vector<int>>& edges);
  std::vector<NodeSpec> nodes_;
  std::vector<int> dims_;
  std::vector<std::vector<int>> parents_;
  std::vector<std::vector<int>> children_;
  std::vector<int> roots_;
  std::vector<int> topo_;  // non-root nodes only, leaf last
  int leaf_ = -1;
  std::uint64_t uid_ = 0;
};

/// Validates and freezes a graph. `edges[i]` lists the parents of node i in
/// slot order (empty for roots). Rejects arity mismatches, cycles, graphs
/// without a unique leaf, and non-scalar leaves.
Graph build_graph(std::vector<NodeSpec> specs,
                  const std::vector<std::vector<int>>& edges);

/// Per-node values of one forward pass. Root slots hold the inputs.
struct ForwardTrace {
  std::uint64_t graph_uid = 0;
  std::vector<Vec> values;
  double output = 0.0;
};

/// Depth: the maximum number of non-root nodes on any directed path.
int depth(const Graph& graph);

ForwardTrace forward(const Graph& graph, std::span<const Vec> inputs);

/// Reverse sweep seeded with adjoint 1 at the leaf. Returns one gradient per
/// root, in root order. The trace must come from `forward` on the same graph.
std::vector<Vec> backward(const Graph& graph, const ForwardTrace& trace);

/// Reusable forward/backward engine for repeated evaluation of one graph.
/// Buffers are allocated once; not safe for concurrent use from two threads.
class GraphExec {
 public:
  explicit GraphExec(std::shared_ptr<const Graph> graph);

  /// Runs a forward pass; the returned reference stays valid until the next
  /// call on this object.
  const ForwardTrace& forward(std::span<const Vec> inputs);

  /// Runs the reverse sweep for the last forward pass; one gradient per root.
  std::span<const Vec> backward();

  const Graph& graph() const { return *graph_; }

 private:
  std::shared_ptr<const Graph> graph_;
  ForwardTrace trace_;
  std::vector<Vec> adjoints_;
  std::vector<Vec> root_grads_;
  bool has_trace_ = false;
};

namespace detail {
void run_forward(const Graph& graph, std::span<const Vec> inputs,
                 std::vector<Vec>& values, double& output);
void run_backward(const Graph& graph, const std::vector<Vec>& values,
                  std::vector<Vec>& adjoints, std::vector<Vec>& root_grads);
}  // namespace detail

}  // namespace pprs
