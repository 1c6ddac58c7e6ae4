#include "canao/executor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "canao/error.hpp"
#include "canao/rng.hpp"

namespace canao {

namespace {

using Values = std::unordered_map<NodeId, TensorValue>;

void bind_leaves(const Graph& g, const TensorMap& inputs, const RunOptions& opt, Values& values) {
  for (const NamedValue& in : g.inputs()) {
    auto it = inputs.find(in.name);
    if (it == inputs.end()) throw ShapeError("missing input tensor '" + in.name + "'");
    const Shape& want = g.node(in.node).shape;
    if (it->second.shape != want) {
      throw ShapeError("input tensor '" + in.name + "' has shape " +
                       shape_to_string(it->second.shape) + ", expected " + shape_to_string(want));
    }
    if (static_cast<std::int64_t>(it->second.data.size()) != numel(want)) {
      throw ShapeError("input tensor '" + in.name + "' data length mismatch");
    }
    if (!all_finite(it->second)) {
      throw NumericError("input tensor '" + in.name + "' contains non-finite values");
    }
    values[in.node] = it->second;
  }
  for (const Node& n : g.nodes()) {
    if (n.kind == OpKind::Constant) values[n.id] = weight_value(n, opt.weight_seed);
  }
}

TensorMap collect(const Graph& g, const Values& values) {
  TensorMap out;
  for (const NamedValue& o : g.outputs()) out[o.name] = values.at(o.node);
  return out;
}

class ExprEval {
 public:
  ExprEval(const Values& values, Precision precision, CostReport& cost)
      : values_(values), precision_(precision), cost_(cost) {}

  TensorValue eval(const Expr& e) {
    if (e.is_leaf()) return values_.at(e.leaf);
    std::vector<TensorValue> args;
    args.reserve(e.args.size());
    for (const Expr& a : e.args) args.push_back(eval(a));
    std::vector<const TensorValue*> ptrs;
    std::vector<Shape> shapes;
    for (const TensorValue& a : args) {
      ptrs.push_back(&a);
      shapes.push_back(a.shape);
    }
    TensorValue out = evaluate_op(e.kind, ptrs, e.attrs, e.shape);
    round_to(out, precision_);
    cost_.flops += op_flops(e.kind, shapes, e.shape);
    cost_.op_count += 1;
    return out;
  }

 private:
  const Values& values_;
  Precision precision_;
  CostReport& cost_;
};

}  // namespace

TensorValue weight_value(const Node& node, std::uint64_t seed) {
  if (!node.literal.empty()) {
    TensorValue t;
    t.shape = node.shape;
    t.data = node.literal;
    return t;
  }
  std::mt19937_64 rng(splitmix(seed ^ splitmix(static_cast<std::uint64_t>(node.id) + 1)));
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  const double scale =
      node.shape.size() >= 2 ? 1.0 / std::sqrt(static_cast<double>(node.shape.front())) : 1.0;
  TensorValue t = TensorValue::zeros(node.shape);
  for (double& v : t.data) v = dist(rng) * scale;
  return t;
}

Graph materialize_weights(const Graph& graph, std::uint64_t seed) {
  std::vector<Node> nodes = graph.nodes();
  for (Node& n : nodes) {
    if (n.kind == OpKind::Constant && n.literal.empty()) n.literal = weight_value(n, seed).data;
  }
  return Graph(std::move(nodes), graph.inputs(), graph.weights(), graph.outputs());
}

TensorMap random_inputs(const Graph& graph, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix(seed));
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  TensorMap out;
  for (const NamedValue& in : graph.inputs()) {
    TensorValue t = TensorValue::zeros(graph.node(in.node).shape);
    for (double& v : t.data) v = dist(rng);
    out[in.name] = std::move(t);
  }
  return out;
}

RunResult run(const Graph& graph, const TensorMap& inputs, const RunOptions& options) {
  Values values;
  bind_leaves(graph, inputs, options, values);
  RunResult result;
  for (const Node& n : graph.nodes()) {
    if (is_leaf(n.kind)) continue;
    std::vector<const TensorValue*> ptrs;
    std::vector<Shape> shapes;
    for (NodeId in : n.inputs) {
      auto it = values.find(in);
      if (it == values.end()) {
        throw Error("node '" + n.name + "' reads undefined value " + std::to_string(in));
      }
      ptrs.push_back(&it->second);
      shapes.push_back(it->second.shape);
    }
    Shape out_shape;
    try {
      out_shape = infer_shape(n.kind, shapes, n.attrs);
    } catch (const ShapeError& e) {
      throw ShapeError("node '" + n.name + "': " + e.what());
    }
    TensorValue out = evaluate_op(n.kind, ptrs, n.attrs, out_shape);
    round_to(out, options.precision);
    if (!all_finite(out)) {
      throw NumericError("non-finite value produced by node '" + n.name + "' (id " +
                         std::to_string(n.id) + ")");
    }
    result.cost.flops += op_flops(n.kind, shapes, out_shape);
    result.cost.op_count += 1;
    result.cost.layer_count += 1;
    if (!graph.is_output(n.id)) result.cost.intermediate_bytes += numel(out_shape) * kElementBytes;
    values[n.id] = std::move(out);
  }
  result.outputs = collect(graph, values);
  return result;
}

RunResult run(const FusedGraph& fused, const TensorMap& inputs, const RunOptions& options) {
  const Graph& g = fused.source();
  Values values;
  bind_leaves(g, inputs, options, values);
  RunResult result;
  ExprEval eval(values, options.precision, result.cost);
  for (const FusedBlock& b : fused.blocks()) {
    TensorValue out = eval.eval(b.expr);
    if (!all_finite(out)) {
      throw NumericError("non-finite value produced by block " + std::to_string(b.id) +
                         " (node '" + g.node(b.output).name + "')");
    }
    result.cost.layer_count += 1;
    if (!g.is_output(b.output)) result.cost.intermediate_bytes += numel(out.shape) * kElementBytes;
    values[b.output] = std::move(out);
  }
  result.outputs = collect(g, values);
  return result;
}

CostReport measure(const Graph& graph, const TensorMap& inputs, const RunOptions& options) {
  return run(graph, inputs, options).cost;
}

CostReport measure(const FusedGraph& fused, const TensorMap& inputs, const RunOptions& options) {
  return run(fused, inputs, options).cost;
}

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

namespace {

struct Signature {
  std::map<std::string, Shape> inputs;
  std::map<std::string, Shape> outputs;
  bool operator==(const Signature&) const = default;
};

Signature signature(const Graph& g) {
  Signature s;
  for (const NamedValue& v : g.inputs()) s.inputs[v.name] = g.node(v.node).shape;
  for (const NamedValue& v : g.outputs()) s.outputs[v.name] = g.node(v.node).shape;
  return s;
}

const Graph& graph_of(const Graph& g) { return g; }
const Graph& graph_of(const FusedGraph& f) { return f.source(); }

template <typename A, typename B>
EquivalenceReport compare(const A& a, const B& b, int trials, double tolerance,
                          std::uint64_t seed) {
  if (signature(graph_of(a)) != signature(graph_of(b))) {
    throw SignatureError("graphs have different input/output signatures");
  }
  EquivalenceReport rep;
  rep.trials = trials;
  rep.tolerance = tolerance;
  RunOptions opt;
  opt.weight_seed = seed;
  for (int t = 0; t < trials; ++t) {
    TensorMap in = random_inputs(graph_of(a), splitmix(seed + static_cast<std::uint64_t>(t)));
    TensorMap out_a = run(a, in, opt).outputs;
    TensorMap out_b = run(b, in, opt).outputs;
    for (const auto& [name, va] : out_a) {
      const TensorValue& vb = out_b.at(name);
      if (va.shape != vb.shape) throw SignatureError("output '" + name + "' changed shape");
      for (std::size_t i = 0; i < va.data.size(); ++i) {
        rep.max_abs_err = std::max(rep.max_abs_err, std::abs(va.data[i] - vb.data[i]));
        rep.max_rel_err = std::max(rep.max_rel_err, relative_error(va.data[i], vb.data[i]));
      }
    }
  }
  rep.pass = rep.max_rel_err <= tolerance;
  return rep;
}

}  // namespace

EquivalenceReport equivalence_check(const Graph& g1, const Graph& g2, int trials,
                                    double tolerance, std::uint64_t seed) {
  return compare(g1, g2, trials, tolerance, seed);
}

EquivalenceReport equivalence_check(const Graph& g1, const FusedGraph& g2, int trials,
                                    double tolerance, std::uint64_t seed) {
  return compare(g1, g2, trials, tolerance, seed);
}

EquivalenceReport equivalence_check(const FusedGraph& g1, const FusedGraph& g2, int trials,
                                    double tolerance, std::uint64_t seed) {
  return compare(g1, g2, trials, tolerance, seed);
}

}  // namespace canao
