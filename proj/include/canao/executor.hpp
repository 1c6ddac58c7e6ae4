#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "canao/fusion.hpp"
#include "canao/graph_ir.hpp"
#include "canao/tensor.hpp"

namespace canao {

using TensorMap = std::map<std::string, TensorValue>;

struct RunOptions {
  std::uint64_t weight_seed = 0;  // for weights without a literal payload
  Precision precision = Precision::F64;
};

struct RunResult {
  TensorMap outputs;
  CostReport cost;  // what the run actually materialized
};

RunResult run(const Graph& graph, const TensorMap& inputs, const RunOptions& options = {});
RunResult run(const FusedGraph& fused, const TensorMap& inputs, const RunOptions& options = {});

CostReport measure(const Graph& graph, const TensorMap& inputs, const RunOptions& options = {});
CostReport measure(const FusedGraph& fused, const TensorMap& inputs,
                   const RunOptions& options = {});

// Value of a weight node: its literal, or U(0.5, 1.5) scaled by 1/sqrt(rows)
// for matrices, drawn from a stream keyed by (seed, node id).
TensorValue weight_value(const Node& node, std::uint64_t seed);

// Copy of the graph with every weight carrying an explicit literal.
Graph materialize_weights(const Graph& graph, std::uint64_t seed);

// Inputs drawn from U(0.5, 1.5).
TensorMap random_inputs(const Graph& graph, std::uint64_t seed);

struct EquivalenceReport {
  int trials = 0;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

// Relative error |a-b| / max(|a|, |b|), zero when both are zero.
double relative_error(double a, double b);

EquivalenceReport equivalence_check(const Graph& g1, const Graph& g2, int trials,
                                    double tolerance, std::uint64_t seed);
EquivalenceReport equivalence_check(const Graph& g1, const FusedGraph& g2, int trials,
                                    double tolerance, std::uint64_t seed);
EquivalenceReport equivalence_check(const FusedGraph& g1, const FusedGraph& g2, int trials,
                                    double tolerance, std::uint64_t seed);

}  // namespace canao
