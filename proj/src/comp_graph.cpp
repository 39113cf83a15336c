#include "pprs/comp_graph.hpp"

#include <atomic>
#include <utility>

namespace pprs {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::CycleDetected: return "CycleDetected";
    case ErrorKind::MultipleLeaves: return "MultipleLeaves";
    case ErrorKind::ArityMismatch: return "ArityMismatch";
    case ErrorKind::NonScalarLeaf: return "NonScalarLeaf";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::StaleTrace: return "StaleTrace";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::InvalidEpsilon: return "InvalidEpsilon";
    case ErrorKind::ConfigParseError: return "ConfigParseError";
    case ErrorKind::ObjectiveUnknown: return "ObjectiveUnknown";
    case ErrorKind::OutputUnwritable: return "OutputUnwritable";
    case ErrorKind::UnknownMode: return "UnknownMode";
    case ErrorKind::EmptyRecords: return "EmptyRecords";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

namespace {
std::atomic<std::uint64_t> next_graph_uid{1};
}

Graph build_graph(std::vector<NodeSpec> specs,
                  const std::vector<std::vector<int>>& edges) {
  const int n = static_cast<int>(specs.size());
  if (n == 0) {
    throw Error(ErrorKind::InvalidArgument, "graph has no nodes");
  }
  if (static_cast<int>(edges.size()) != n) {
    throw Error(ErrorKind::InvalidArgument,
                "edge list size does not match node count");
  }

  for (int i = 0; i < n; ++i) {
    for (int p : edges[i]) {
      if (p < 0 || p >= n) {
        throw Error(ErrorKind::InvalidArgument,
                    "node " + std::to_string(i) + " references parent " +
                        std::to_string(p));
      }
    }
    if (specs[i].is_root) {
      if (!edges[i].empty()) {
        throw Error(ErrorKind::ArityMismatch,
                    "root node " + std::to_string(i) + " has parents");
      }
      if (specs[i].dim < 1) {
        throw Error(ErrorKind::InvalidArgument,
                    "root node " + std::to_string(i) + " has dim < 1");
      }
    } else {
      if (edges[i].empty()) {
        throw Error(ErrorKind::ArityMismatch,
                    "non-root node " + std::to_string(i) + " has no parents");
      }
      if (static_cast<int>(edges[i].size()) != specs[i].fn.arity) {
        throw Error(ErrorKind::ArityMismatch,
                    "node " + std::to_string(i) + " expects " +
                        std::to_string(specs[i].fn.arity) + " parents, got " +
                        std::to_string(edges[i].size()));
      }
      if (specs[i].fn.output_dim < 1) {
        throw Error(ErrorKind::InvalidArgument,
                    "node " + std::to_string(i) + " has output_dim < 1");
      }
      if (!specs[i].fn.eval || !specs[i].fn.vjp) {
        throw Error(ErrorKind::InvalidArgument,
                    "node " + std::to_string(i) + " is missing eval or vjp");
      }
    }
  }

  std::vector<std::vector<int>> children(n);
  std::vector<int> indegree(n, 0);
  for (int i = 0; i < n; ++i) {
    indegree[i] = static_cast<int>(edges[i].size());
    for (int p : edges[i]) children[p].push_back(i);
  }

  // Kahn's algorithm; processes the whole graph iff it is acyclic. The
  // resulting order is deterministic (lowest id first).
  std::vector<int> order;
  order.reserve(n);
  std::vector<int> ready;
  for (int i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  std::vector<int> remaining = indegree;
  for (std::size_t head = 0; head < ready.size(); ++head) {
    int id = ready[head];
    order.push_back(id);
    for (int c : children[id]) {
      if (--remaining[c] == 0) ready.push_back(c);
    }
  }
  if (static_cast<int>(order.size()) != n) {
    throw Error(ErrorKind::CycleDetected, "graph contains a directed cycle");
  }

  int leaf = -1;
  for (int i = 0; i < n; ++i) {
    if (!specs[i].is_root && children[i].empty()) {
      if (leaf >= 0) {
        throw Error(ErrorKind::MultipleLeaves,
                    "nodes " + std::to_string(leaf) + " and " +
                        std::to_string(i) + " both have no outgoing edges");
      }
      leaf = i;
    }
  }
  if (leaf < 0) {
    throw Error(ErrorKind::InvalidArgument, "graph has no non-root node");
  }
  if (specs[leaf].fn.output_dim != 1) {
    throw Error(ErrorKind::NonScalarLeaf,
                "leaf node " + std::to_string(leaf) + " has output_dim " +
                    std::to_string(specs[leaf].fn.output_dim));
  }

  Graph g;
  g.nodes_ = std::move(specs);
  g.parents_ = edges;
  g.children_ = std::move(children);
  g.dims_.resize(n);
  for (int i = 0; i < n; ++i) {
    g.dims_[i] = g.nodes_[i].is_root ? g.nodes_[i].dim : g.nodes_[i].fn.output_dim;
    if (g.nodes_[i].is_root) g.roots_.push_back(i);
  }
  g.topo_.reserve(n - static_cast<int>(g.roots_.size()));
  for (int id : order) {
    if (!g.nodes_[id].is_root) g.topo_.push_back(id);
  }
  g.leaf_ = leaf;
  g.uid_ = next_graph_uid.fetch_add(1, std::memory_order_relaxed);
  return g;
}

int depth(const Graph& graph) {
  // Longest path in non-root nodes, by dynamic programming in topo order.
  std::vector<int> longest(graph.size(), 0);
  int best = 0;
  for (int id : graph.topo_order()) {
    int from_parents = 0;
    for (int p : graph.parents(id)) {
      from_parents = std::max(from_parents, longest[p]);
    }
    longest[id] = from_parents + 1;
    best = std::max(best, longest[id]);
  }
  return best;
}

namespace detail {

void run_forward(const Graph& graph, std::span<const Vec> inputs,
                 std::vector<Vec>& values, double& output) {
  const auto& roots = graph.roots();
  if (inputs.size() != roots.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "expected " + std::to_string(roots.size()) + " root inputs, got " +
                    std::to_string(inputs.size()));
  }
  values.resize(graph.size());
  for (std::size_t r = 0; r < roots.size(); ++r) {
    if (inputs[r].size() != graph.dim(roots[r])) {
      throw Error(ErrorKind::DimensionMismatch,
                  "root " + std::to_string(roots[r]) + " expects dim " +
                      std::to_string(graph.dim(roots[r])) + ", got " +
                      std::to_string(inputs[r].size()));
    }
    values[roots[r]] = inputs[r];
  }
  std::vector<const Vec*> parent_vals;
  for (int id : graph.topo_order()) {
    const auto& parents = graph.parents(id);
    parent_vals.clear();
    for (int p : parents) parent_vals.push_back(&values[p]);
    Vec& out = values[id];
    out.resize(graph.dim(id));
    graph.fn(id).eval(ParentVals(parent_vals.data(), parent_vals.size()), out);
  }
  output = values[graph.leaf()](0);
}

void run_backward(const Graph& graph, const std::vector<Vec>& values,
                  std::vector<Vec>& adjoints, std::vector<Vec>& root_grads) {
  const int n = graph.size();
  adjoints.resize(n);
  for (int i = 0; i < n; ++i) {
    adjoints[i].resize(graph.dim(i));
    adjoints[i].setZero();
  }
  adjoints[graph.leaf()](0) = 1.0;

  std::vector<const Vec*> parent_vals;
  std::vector<Vec*> targets;
  const auto& topo = graph.topo_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const int id = *it;
    const auto& parents = graph.parents(id);
    parent_vals.clear();
    targets.clear();
    for (int p : parents) {
      parent_vals.push_back(&values[p]);
      targets.push_back(&adjoints[p]);
    }
    graph.fn(id).vjp(ParentVals(parent_vals.data(), parent_vals.size()),
                     adjoints[id],
                     std::span<Vec* const>(targets.data(), targets.size()));
  }

  const auto& roots = graph.roots();
  root_grads.resize(roots.size());
  for (std::size_t r = 0; r < roots.size(); ++r) {
    root_grads[r] = adjoints[roots[r]];
  }
}

}  // namespace detail

ForwardTrace forward(const Graph& graph, std::span<const Vec> inputs) {
  ForwardTrace trace;
  trace.graph_uid = graph.uid();
  detail::run_forward(graph, inputs, trace.values, trace.output);
  return trace;
}

std::vector<Vec> backward(const Graph& graph, const ForwardTrace& trace) {
  if (trace.graph_uid != graph.uid()) {
    throw Error(ErrorKind::StaleTrace,
                "trace was produced by a different graph");
  }
  std::vector<Vec> adjoints;
  std::vector<Vec> root_grads;
  detail::run_backward(graph, trace.values, adjoints, root_grads);
  return root_grads;
}

GraphExec::GraphExec(std::shared_ptr<const Graph> graph)
    : graph_(std::move(graph)) {
  trace_.graph_uid = graph_->uid();
  trace_.values.resize(graph_->size());
  adjoints_.resize(graph_->size());
  for (int i = 0; i < graph_->size(); ++i) {
    trace_.values[i].resize(graph_->dim(i));
    trace_.values[i].setZero();
    adjoints_[i].resize(graph_->dim(i));
  }
  root_grads_.resize(graph_->roots().size());
}

const ForwardTrace& GraphExec::forward(std::span<const Vec> inputs) {
  detail::run_forward(*graph_, inputs, trace_.values, trace_.output);
  has_trace_ = true;
  return trace_;
}

std::span<const Vec> GraphExec::backward() {
  if (!has_trace_) {
    throw Error(ErrorKind::StaleTrace, "backward called before forward");
  }
  detail::run_backward(*graph_, trace_.values, adjoints_, root_grads_);
  return std::span<const Vec>(root_grads_.data(), root_grads_.size());
}

}  // namespace pprs
