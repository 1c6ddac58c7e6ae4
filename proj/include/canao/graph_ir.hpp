#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace canao {

using NodeId = std::int32_t;
using Shape = std::vector<std::int64_t>;
using Attrs = std::map<std::string, std::vector<std::int64_t>>;

// Element width used for every footprint computation.
inline constexpr std::int64_t kElementBytes = 4;

std::int64_t numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

enum class OpKind {
  MatMul,
  Add,
  Sub,
  Mul,
  Reciprocal,
  Power,
  Concat,
  Gather,
  Slice,
  Transpose,
  Reshape,
  ReduceSum,
  ReduceMax,
  Exp,
  Sqrt,
  Erf,
  Broadcast,
  Constant,
  Input,
};

enum class Intensity { ComputeIntensive, MemoryIntensive };

std::string_view to_string(OpKind kind);
std::optional<OpKind> op_kind_from_string(std::string_view name);

// Compute-intensive kinds reuse each input element more than once (MatMul);
// everything else touches each input element once.
constexpr Intensity intensity(OpKind kind) {
  return kind == OpKind::MatMul ? Intensity::ComputeIntensive
                                : Intensity::MemoryIntensive;
}

// Input and Constant are value sources, not layers.
constexpr bool is_leaf(OpKind kind) {
  return kind == OpKind::Input || kind == OpKind::Constant;
}

constexpr bool is_elementwise_binary(OpKind kind) {
  return kind == OpKind::Add || kind == OpKind::Sub || kind == OpKind::Mul;
}

constexpr bool is_elementwise_unary(OpKind kind) {
  return kind == OpKind::Reciprocal || kind == OpKind::Power ||
         kind == OpKind::Exp || kind == OpKind::Sqrt || kind == OpKind::Erf;
}

constexpr bool is_elementwise(OpKind kind) {
  return is_elementwise_binary(kind) || is_elementwise_unary(kind);
}

constexpr bool is_reduction(OpKind kind) {
  return kind == OpKind::ReduceSum || kind == OpKind::ReduceMax;
}

constexpr bool is_data_movement(OpKind kind) {
  return kind == OpKind::Concat || kind == OpKind::Gather ||
         kind == OpKind::Slice || kind == OpKind::Transpose ||
         kind == OpKind::Reshape || kind == OpKind::Broadcast;
}

// Trailing-dimension (numpy style) broadcast of two shapes.
std::optional<Shape> broadcast_shapes(const Shape& a, const Shape& b);

// Deterministic shape inference shared by graph nodes and fused expressions.
// Throws ShapeError describing the mismatch.
Shape infer_shape(OpKind kind, std::span<const Shape> inputs,
                  const Attrs& attrs);

// Arithmetic performed by one operator given its input and output shapes.
std::int64_t op_flops(OpKind kind, std::span<const Shape> inputs,
                      const Shape& output);

struct Node {
  NodeId id = 0;
  OpKind kind = OpKind::Input;
  std::string name;
  std::vector<NodeId> inputs;
  Attrs attrs;
  Shape shape;
  // Explicit payload for Constant nodes; empty means seeded random weights.
  std::vector<double> literal;

  bool operator==(const Node&) const = default;
};

struct NamedValue {
  std::string name;
  NodeId node = 0;

  bool operator==(const NamedValue&) const = default;
};

// Topologically ordered computational graph. Immutable once constructed;
// construction does not validate, see validate().
class Graph {
 public:
  Graph() = default;
  Graph(std::vector<Node> nodes, std::vector<NamedValue> inputs,
        std::vector<NamedValue> weights, std::vector<NamedValue> outputs);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<NamedValue>& inputs() const { return inputs_; }
  const std::vector<NamedValue>& weights() const { return weights_; }
  const std::vector<NamedValue>& outputs() const { return outputs_; }

  const Node* find(NodeId id) const;
  const Node& node(NodeId id) const;
  // Position of the node in topological order.
  std::size_t position(NodeId id) const;
  bool is_output(NodeId id) const;

  // Distinct consumer node ids of every value, in topological order.
  const std::vector<NodeId>& consumers(NodeId id) const;

  bool operator==(const Graph& other) const;

 private:
  std::vector<Node> nodes_;
  std::vector<NamedValue> inputs_;
  std::vector<NamedValue> weights_;
  std::vector<NamedValue> outputs_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::unordered_map<NodeId, std::vector<NodeId>> consumers_;
};

// Incremental graph construction with shape inference at every step.
class GraphBuilder {
 public:
  NodeId input(const std::string& name, Shape shape);
  NodeId weight(const std::string& name, Shape shape);
  NodeId literal(const std::string& name, Shape shape,
                 std::vector<double> values);
  NodeId scalar(double value);
  NodeId op(OpKind kind, std::vector<NodeId> inputs, Attrs attrs = {},
            std::string name = {});
  void output(const std::string& name, NodeId id);

  // Elementwise binary op that materializes an explicit Broadcast node on
  // whichever operand is smaller than the broadcast result.
  NodeId binary(OpKind kind, NodeId lhs, NodeId rhs);

  const Shape& shape(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  Graph build() const;

 private:
  NodeId push(Node node);
  NodeId broadcast_to(NodeId id, const Shape& target);

  std::vector<Node> nodes_;
  std::vector<NamedValue> inputs_;
  std::vector<NamedValue> weights_;
  std::vector<NamedValue> outputs_;
};

struct LayerCensus {
  std::int64_t compute_intensive = 0;
  std::int64_t memory_intensive = 0;
  std::int64_t total = 0;

  bool operator==(const LayerCensus&) const = default;
};

struct CostReport {
  std::int64_t flops = 0;
  std::int64_t intermediate_bytes = 0;
  std::int64_t op_count = 0;
  std::int64_t layer_count = 0;

  bool operator==(const CostReport&) const = default;
};

LayerCensus census(const Graph& graph);

// Per-node arithmetic, keyed by node id; leaves and data movement are zero.
std::map<NodeId, std::int64_t> flops_breakdown(const Graph& graph);
std::int64_t flops(const Graph& graph);

// Bytes of every non-leaf, non-output tensor.
std::int64_t intermediate_bytes(const Graph& graph);

// Static cost of the unfused graph: one layer and one operator per node.
CostReport static_cost(const Graph& graph);

struct Violation {
  NodeId node = -1;
  std::string message;
};

// Empty result means the graph is well formed.
std::vector<Violation> validate(const Graph& graph);

}  // namespace canao
