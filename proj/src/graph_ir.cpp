#include "canao/graph_ir.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "canao/error.hpp"

namespace canao {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 19> kKindNames{{
    {OpKind::MatMul, "MatMul"},
    {OpKind::Add, "Add"},
    {OpKind::Sub, "Sub"},
    {OpKind::Mul, "Mul"},
    {OpKind::Reciprocal, "Reciprocal"},
    {OpKind::Power, "Power"},
    {OpKind::Concat, "Concat"},
    {OpKind::Gather, "Gather"},
    {OpKind::Slice, "Slice"},
    {OpKind::Transpose, "Transpose"},
    {OpKind::Reshape, "Reshape"},
    {OpKind::ReduceSum, "ReduceSum"},
    {OpKind::ReduceMax, "ReduceMax"},
    {OpKind::Exp, "Exp"},
    {OpKind::Sqrt, "Sqrt"},
    {OpKind::Erf, "Erf"},
    {OpKind::Broadcast, "Broadcast"},
    {OpKind::Constant, "Constant"},
    {OpKind::Input, "Input"},
}};

std::int64_t single_attr(const Attrs& attrs, const std::string& key,
                         OpKind kind) {
  auto it = attrs.find(key);
  if (it == attrs.end() || it->second.size() != 1) {
    throw ShapeError(std::string(to_string(kind)) + " requires scalar attr '" +
                     key + "'");
  }
  return it->second.front();
}

const std::vector<std::int64_t>& vector_attr(const Attrs& attrs,
                                             const std::string& key,
                                             OpKind kind) {
  auto it = attrs.find(key);
  if (it == attrs.end()) {
    throw ShapeError(std::string(to_string(kind)) + " requires attr '" + key +
                     "'");
  }
  return it->second;
}

std::int64_t normalize_axis(std::int64_t axis, std::size_t rank, OpKind kind) {
  auto r = static_cast<std::int64_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError(std::string(to_string(kind)) + ": axis out of range for rank " +
                     std::to_string(rank));
  }
  return axis;
}

void expect_arity(OpKind kind, std::span<const Shape> inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw ShapeError(std::string(to_string(kind)) + " expects " +
                     std::to_string(n) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string_view to_string(OpKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<OpKind> op_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::optional<Shape> broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) return std::nullopt;
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

Shape infer_shape(OpKind kind, std::span<const Shape> inputs,
                  const Attrs& attrs) {
  const std::string name(to_string(kind));
  switch (kind) {
    case OpKind::Input:
    case OpKind::Constant:
      throw ShapeError(name + " shapes are declared, not inferred");
    case OpKind::MatMul: {
      expect_arity(kind, inputs, 2);
      const Shape& a = inputs[0];
      const Shape& b = inputs[1];
      if (a.size() < 2 || b.size() < 2) {
        throw ShapeError("MatMul operands must have rank >= 2");
      }
      const std::int64_t m = a[a.size() - 2], k = a.back();
      const std::int64_t k2 = b[b.size() - 2], n = b.back();
      if (k != k2) {
        throw ShapeError("MatMul contraction mismatch " + shape_to_string(a) +
                         " x " + shape_to_string(b));
      }
      Shape batch_a(a.begin(), a.end() - 2), batch_b(b.begin(), b.end() - 2);
      auto batch = broadcast_shapes(batch_a, batch_b);
      if (!batch) throw ShapeError("MatMul batch dimensions not broadcastable");
      batch->push_back(m);
      batch->push_back(n);
      return *batch;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      expect_arity(kind, inputs, 2);
      auto out = broadcast_shapes(inputs[0], inputs[1]);
      if (!out) {
        throw ShapeError(name + " operands not broadcastable: " +
                         shape_to_string(inputs[0]) + " vs " +
                         shape_to_string(inputs[1]));
      }
      return *out;
    }
    case OpKind::Power:
      single_attr(attrs, "exponent", kind);
      [[fallthrough]];
    case OpKind::Reciprocal:
    case OpKind::Exp:
    case OpKind::Sqrt:
    case OpKind::Erf:
      expect_arity(kind, inputs, 1);
      return inputs[0];
    case OpKind::ReduceSum:
    case OpKind::ReduceMax: {
      expect_arity(kind, inputs, 1);
      Shape out = inputs[0];
      auto axis = normalize_axis(single_attr(attrs, "axis", kind), out.size(), kind);
      out[static_cast<std::size_t>(axis)] = 1;
      return out;
    }
    case OpKind::Concat: {
      if (inputs.empty()) throw ShapeError("Concat needs at least one input");
      Shape out = inputs[0];
      auto axis = static_cast<std::size_t>(
          normalize_axis(single_attr(attrs, "axis", kind), out.size(), kind));
      for (std::size_t i = 1; i < inputs.size(); ++i) {
        const Shape& s = inputs[i];
        if (s.size() != out.size()) throw ShapeError("Concat rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
          if (d != axis && s[d] != out[d]) {
            throw ShapeError("Concat non-axis dimension mismatch");
          }
        }
        out[axis] += s[axis];
      }
      return out;
    }
    case OpKind::Gather: {
      expect_arity(kind, inputs, 2);
      const Shape& data = inputs[0];
      if (data.empty()) throw ShapeError("Gather data must have rank >= 1");
      Shape out = inputs[1];
      out.insert(out.end(), data.begin() + 1, data.end());
      return out;
    }
    case OpKind::Slice: {
      expect_arity(kind, inputs, 1);
      Shape out = inputs[0];
      auto axis = static_cast<std::size_t>(
          normalize_axis(single_attr(attrs, "axis", kind), out.size(), kind));
      const auto begin = single_attr(attrs, "begin", kind);
      const auto end = single_attr(attrs, "end", kind);
      if (begin < 0 || end > out[axis] || begin >= end) {
        throw ShapeError("Slice bounds [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for extent " +
                         std::to_string(out[axis]));
      }
      out[axis] = end - begin;
      return out;
    }
    case OpKind::Transpose: {
      expect_arity(kind, inputs, 1);
      const auto& perm = vector_attr(attrs, "perm", kind);
      const Shape& in = inputs[0];
      if (perm.size() != in.size()) throw ShapeError("Transpose perm rank mismatch");
      std::vector<bool> seen(in.size(), false);
      Shape out(in.size());
      for (std::size_t i = 0; i < perm.size(); ++i) {
        const auto p = perm[i];
        if (p < 0 || p >= static_cast<std::int64_t>(in.size()) ||
            seen[static_cast<std::size_t>(p)]) {
          throw ShapeError("Transpose perm is not a permutation");
        }
        seen[static_cast<std::size_t>(p)] = true;
        out[i] = in[static_cast<std::size_t>(p)];
      }
      return out;
    }
    case OpKind::Reshape: {
      expect_arity(kind, inputs, 1);
      const Shape& target = vector_attr(attrs, "shape", kind);
      if (numel(target) != numel(inputs[0])) {
        throw ShapeError("Reshape element count mismatch " +
                         shape_to_string(inputs[0]) + " -> " +
                         shape_to_string(target));
      }
      return target;
    }
    case OpKind::Broadcast: {
      expect_arity(kind, inputs, 1);
      const Shape& target = vector_attr(attrs, "shape", kind);
      auto out = broadcast_shapes(inputs[0], target);
      if (!out || *out != target) {
        throw ShapeError("cannot broadcast " + shape_to_string(inputs[0]) +
                         " to " + shape_to_string(target));
      }
      return target;
    }
  }
  throw ShapeError("unknown op kind");
}

std::int64_t op_flops(OpKind kind, std::span<const Shape> inputs,
                      const Shape& output) {
  if (kind == OpKind::MatMul) {
    const Shape& a = inputs[0];
    const std::int64_t k = a.back();
    return 2 * numel(output) * k;
  }
  if (is_elementwise(kind)) return numel(output);
  if (is_reduction(kind)) return numel(inputs[0]);
  return 0;
}

// ---------------------------------------------------------------------------

Graph::Graph(std::vector<Node> nodes, std::vector<NamedValue> inputs,
             std::vector<NamedValue> weights, std::vector<NamedValue> outputs)
    : nodes_(std::move(nodes)),
      inputs_(std::move(inputs)),
      weights_(std::move(weights)),
      outputs_(std::move(outputs)) {
  index_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    index_.emplace(nodes_[i].id, i);
  }
  for (const Node& n : nodes_) {
    for (NodeId in : n.inputs) {
      auto& list = consumers_[in];
      if (list.empty() || list.back() != n.id) list.push_back(n.id);
    }
  }
}

const Node* Graph::find(NodeId id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const Node& Graph::node(NodeId id) const {
  const Node* n = find(id);
  if (!n) throw Error("unknown node id " + std::to_string(id));
  return *n;
}

std::size_t Graph::position(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error("unknown node id " + std::to_string(id));
  return it->second;
}

bool Graph::is_output(NodeId id) const {
  return std::any_of(outputs_.begin(), outputs_.end(),
                     [id](const NamedValue& v) { return v.node == id; });
}

const std::vector<NodeId>& Graph::consumers(NodeId id) const {
  static const std::vector<NodeId> kNone;
  auto it = consumers_.find(id);
  return it == consumers_.end() ? kNone : it->second;
}

bool Graph::operator==(const Graph& other) const {
  return nodes_ == other.nodes_ && inputs_ == other.inputs_ &&
         weights_ == other.weights_ && outputs_ == other.outputs_;
}

// ---------------------------------------------------------------------------

NodeId GraphBuilder::push(Node node) {
  node.id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

NodeId GraphBuilder::input(const std::string& name, Shape shape) {
  NodeId id = push(Node{.kind = OpKind::Input, .name = name, .shape = std::move(shape)});
  inputs_.push_back({name, id});
  return id;
}

NodeId GraphBuilder::weight(const std::string& name, Shape shape) {
  NodeId id = push(Node{.kind = OpKind::Constant, .name = name, .shape = std::move(shape)});
  weights_.push_back({name, id});
  return id;
}

NodeId GraphBuilder::literal(const std::string& name, Shape shape,
                             std::vector<double> values) {
  if (static_cast<std::int64_t>(values.size()) != numel(shape)) {
    throw ShapeError("literal '" + name + "' payload size mismatch");
  }
  NodeId id = push(Node{.kind = OpKind::Constant,
                        .name = name,
                        .shape = std::move(shape),
                        .literal = std::move(values)});
  weights_.push_back({name, id});
  return id;
}

NodeId GraphBuilder::scalar(double value) {
  std::ostringstream os;
  os << "const_" << nodes_.size();
  return literal(os.str(), {1}, {value});
}

NodeId GraphBuilder::op(OpKind kind, std::vector<NodeId> inputs, Attrs attrs,
                        std::string name) {
  std::vector<Shape> shapes;
  shapes.reserve(inputs.size());
  for (NodeId in : inputs) shapes.push_back(shape(in));
  Shape out = infer_shape(kind, shapes, attrs);
  if (name.empty()) {
    name = std::string(to_string(kind)) + "_" + std::to_string(nodes_.size());
  }
  return push(Node{.kind = kind,
                   .name = std::move(name),
                   .inputs = std::move(inputs),
                   .attrs = std::move(attrs),
                   .shape = std::move(out)});
}

NodeId GraphBuilder::broadcast_to(NodeId id, const Shape& target) {
  return op(OpKind::Broadcast, {id}, {{"shape", target}});
}

NodeId GraphBuilder::binary(OpKind kind, NodeId lhs, NodeId rhs) {
  auto out = broadcast_shapes(shape(lhs), shape(rhs));
  if (!out) {
    throw ShapeError(std::string(to_string(kind)) + " operands not broadcastable");
  }
  if (shape(lhs) != *out) lhs = broadcast_to(lhs, *out);
  if (shape(rhs) != *out) rhs = broadcast_to(rhs, *out);
  return op(kind, {lhs, rhs});
}

void GraphBuilder::output(const std::string& name, NodeId id) {
  outputs_.push_back({name, id});
}

const Shape& GraphBuilder::shape(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw Error("builder: unknown node id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)].shape;
}

Graph GraphBuilder::build() const {
  return Graph(nodes_, inputs_, weights_, outputs_);
}

// ---------------------------------------------------------------------------

LayerCensus census(const Graph& graph) {
  LayerCensus c;
  for (const Node& n : graph.nodes()) {
    if (is_leaf(n.kind)) continue;
    if (intensity(n.kind) == Intensity::ComputeIntensive) {
      ++c.compute_intensive;
    } else {
      ++c.memory_intensive;
    }
  }
  c.total = c.compute_intensive + c.memory_intensive;
  return c;
}

std::map<NodeId, std::int64_t> flops_breakdown(const Graph& graph) {
  std::map<NodeId, std::int64_t> out;
  std::vector<Shape> shapes;
  for (const Node& n : graph.nodes()) {
    if (is_leaf(n.kind)) continue;
    shapes.clear();
    for (NodeId in : n.inputs) {
      const Node* src = graph.find(in);
      if (!src) {
        throw ShapeError("node " + n.name + " references unknown input " +
                         std::to_string(in));
      }
      shapes.push_back(src->shape);
    }
    try {
      if (infer_shape(n.kind, shapes, n.attrs) != n.shape) {
        throw ShapeError("declared shape disagrees with inference");
      }
    } catch (const ShapeError& e) {
      throw ShapeError("node " + n.name + ": " + e.what());
    }
    out[n.id] = op_flops(n.kind, shapes, n.shape);
  }
  return out;
}

std::int64_t flops(const Graph& graph) {
  std::int64_t total = 0;
  for (const auto& [id, f] : flops_breakdown(graph)) total += f;
  return total;
}

std::int64_t intermediate_bytes(const Graph& graph) {
  std::int64_t total = 0;
  for (const Node& n : graph.nodes()) {
    if (is_leaf(n.kind) || graph.is_output(n.id)) continue;
    total += numel(n.shape) * kElementBytes;
  }
  return total;
}

CostReport static_cost(const Graph& graph) {
  const LayerCensus c = census(graph);
  return CostReport{.flops = flops(graph),
                    .intermediate_bytes = intermediate_bytes(graph),
                    .op_count = c.total,
                    .layer_count = c.total};
}

std::vector<Violation> validate(const Graph& graph) {
  std::vector<Violation> out;
  std::unordered_set<NodeId> defined;
  std::vector<Shape> shapes;
  for (const Node& n : graph.nodes()) {
    if (defined.count(n.id)) {
      out.push_back({n.id, "duplicate node id " + std::to_string(n.id)});
      continue;
    }
    bool inputs_ok = true;
    shapes.clear();
    for (NodeId in : n.inputs) {
      if (!defined.count(in)) {
        inputs_ok = false;
        if (graph.find(in)) {
          out.push_back({n.id, n.name + " uses node " + std::to_string(in) +
                                   " before it is defined (cycle or order)"});
        } else {
          out.push_back({n.id, n.name + " references missing node " +
                                   std::to_string(in)});
        }
      } else {
        shapes.push_back(graph.node(in).shape);
      }
    }
    if (is_leaf(n.kind)) {
      if (!n.inputs.empty()) out.push_back({n.id, n.name + ": leaf with inputs"});
      if (!n.literal.empty() &&
          static_cast<std::int64_t>(n.literal.size()) != numel(n.shape)) {
        out.push_back({n.id, n.name + ": literal size mismatch"});
      }
    } else if (inputs_ok) {
      try {
        Shape inferred = infer_shape(n.kind, shapes, n.attrs);
        if (inferred != n.shape) {
          out.push_back({n.id, n.name + ": declared shape " +
                                   shape_to_string(n.shape) + " but inferred " +
                                   shape_to_string(inferred)});
        }
      } catch (const ShapeError& e) {
        out.push_back({n.id, n.name + ": " + e.what()});
      }
    }
    defined.insert(n.id);
  }
  auto check_named = [&](const std::vector<NamedValue>& list, const char* what,
                         bool leaf_kind, OpKind expected) {
    for (const NamedValue& v : list) {
      const Node* n = graph.find(v.node);
      if (!n) {
        out.push_back({v.node, std::string(what) + " '" + v.name +
                                   "' references missing node"});
      } else if (leaf_kind && n->kind != expected) {
        out.push_back({v.node, std::string(what) + " '" + v.name +
                                   "' is not a " + std::string(to_string(expected))});
      }
    }
  };
  check_named(graph.inputs(), "input", true, OpKind::Input);
  check_named(graph.weights(), "weight", true, OpKind::Constant);
  check_named(graph.outputs(), "output", false, OpKind::Input);
  std::unordered_set<NodeId> named;
  for (const NamedValue& v : graph.inputs()) named.insert(v.node);
  for (const NamedValue& v : graph.weights()) named.insert(v.node);
  for (const Node& n : graph.nodes()) {
    if (is_leaf(n.kind) && !named.count(n.id)) {
      out.push_back({n.id, n.name + ": leaf is neither a declared input nor a weight"});
    }
  }
  return out;
}

}  // namespace canao
