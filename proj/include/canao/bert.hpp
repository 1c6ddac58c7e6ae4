#pragma once

#include <cstdint>
#include <string>

#include "canao/graph_ir.hpp"

namespace canao {

// Searchable transformer hyperparameters. Per-head width is fixed at 64.
struct ArchitectureConfig {
  std::int64_t num_blocks = 12;
  std::int64_t hidden_size = 768;
  std::int64_t num_heads = 12;
  std::int64_t intermediate_size = 3072;
  std::int64_t seq_len = 128;
  std::int64_t vocab_size = 30522;

  bool operator==(const ArchitectureConfig&) const = default;

  // "L-12_H-768_A-12" style label.
  std::string label() const;
};

inline constexpr std::int64_t kHeadWidth = 64;
inline constexpr std::int64_t kMinHiddenSize = 256;
inline constexpr std::int64_t kNumLabels = 2;

// Node counts of the decomposition produced by build_bert_graph.
inline constexpr std::int64_t kBlockLayers = 94;
inline constexpr std::int64_t kBlockComputeLayers = 9;
inline constexpr std::int64_t kHeadTailLayers = 44;
inline constexpr std::int64_t kHeadTailComputeLayers = 1;

// Throws ConfigError naming the first violated constraint.
void check_architecture(const ArchitectureConfig& arch);

// Convenience constructor: heads derived from hidden size.
ArchitectureConfig make_architecture(std::int64_t blocks, std::int64_t hidden,
                                     std::int64_t intermediate = 0,
                                     std::int64_t seq_len = 128);

// Builds the forward inference graph of a BERT-style encoder plus a
// single-label classification head.
//
// Every elementwise binary op whose operands differ in shape receives an
// explicit Broadcast node on the smaller operand. LayerNorm, Softmax and
// GELU are decomposed into primitives:
//
//   LayerNorm(x) = ((x - mean) * rsqrt(var + eps)) * gamma + beta
//     ReduceSum, Mul(1/H), Sub, Power(2), ReduceSum, Mul(1/H), Add(eps),
//     Sqrt, Reciprocal, Mul, Mul(gamma), Add(beta) + 7 Broadcasts = 19
//   Softmax(x) = exp(x - max) * 1/sum
//     ReduceMax, Sub, Exp, ReduceSum, Reciprocal, Mul + 2 Broadcasts = 8
//   GELU(x) = 0.5 * x * (1 + erf(x / sqrt(2)))
//     Mul, Erf, Add, Mul, Mul + 3 Broadcasts = 8
//
// Transformer block (94 nodes, 9 MatMul):
//   Q/K/V: MatMul, Broadcast(bias), Add, Reshape [S,A,64], Transpose  x3
//   scores: MatMul(Q, K^T), Broadcast, Mul(1/8)
//   additive mask: Reshape [1,S], Broadcast(1), Sub, Broadcast, Mul(-1e4),
//     MatMul(ones[S,1], mask) -> [S,S], Broadcast -> [A,S,S], Add
//   Softmax (8), MatMul(P, V), Transpose, Reshape [S,H]
//   output: MatMul, Broadcast, Add, Add(residual), LayerNorm (19)
//   feedforward: MatMul, Broadcast, Add, GELU (8), MatMul, Broadcast, Add,
//     Add(residual), LayerNorm (19)
//
// Embedding head + task tail (44 nodes, 1 MatMul):
//   Gather(word), Gather(position), Gather(type), Add, Add, LayerNorm (19),
//   Slice([CLS]), GELU (8), MatMul(classifier), Broadcast, Add, Softmax (8)
Graph build_bert_graph(const ArchitectureConfig& arch);

}  // namespace canao
