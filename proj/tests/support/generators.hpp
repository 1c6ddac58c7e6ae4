#pragma once

// Hand-rolled random generators shared by the property tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "canao/graph_ir.hpp"

namespace canao::gen {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform_int(0, static_cast<int>(v.size()) - 1))];
  }
  std::vector<double> values(std::int64_t n, double lo, double hi) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (double& v : out) v = uniform(lo, hi);
    return out;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Chains random instances of the seven fusion templates. All values stay
// strictly positive: subtracted operands are small literals.
inline Graph random_template_graph(std::uint64_t seed) {
  Gen gen(seed);
  GraphBuilder b;
  std::int64_t rows = gen.uniform_int(2, 6), cols = gen.uniform_int(1, 6);
  int counter = 0;
  auto weight = [&](Shape s) { return b.weight("w" + std::to_string(counter++), std::move(s)); };
  auto small = [&](Shape s) {
    const auto n = numel(s);
    return b.literal("s" + std::to_string(counter++), s, gen.values(n, 0.01, 0.1));
  };
  NodeId x = b.input("x", {rows, cols});
  std::vector<NodeId> extra_outputs;
  const int steps = gen.uniform_int(2, 6);
  for (int step = 0; step < steps; ++step) {
    const Shape s{rows, cols};
    switch (gen.uniform_int(0, 6)) {
      case 0: {
        x = b.op(OpKind::MatMul, {x, weight({cols, cols})});
        x = b.op(OpKind::Reciprocal, {x});
        if (gen.coin()) x = b.op(OpKind::Add, {x, weight(s)});
        break;
      }
      case 1: {
        x = b.op(OpKind::Add, {x, weight(s)});
        x = b.op(OpKind::Sub, {x, small(s)});
        break;
      }
      case 2: {
        NodeId t = b.op(OpKind::Add, {x, weight(s)});
        NodeId g = b.op(OpKind::Mul, {t, weight(s)});
        NodeId h = b.op(OpKind::Mul, {t, weight(s)});
        x = b.op(OpKind::Add, {g, h});
        break;
      }
      case 3: {
        NodeId t = b.op(OpKind::Add, {x, weight(s)});
        NodeId r1 = b.op(OpKind::Reciprocal, {t});
        NodeId r2 = b.op(OpKind::Reciprocal, {b.op(OpKind::Mul, {t, weight(s)})});
        x = b.op(OpKind::Mul, {r1, r2});
        break;
      }
      case 4: {
        NodeId l = b.op(OpKind::Reciprocal, {b.op(OpKind::Add, {x, weight(s)})});
        NodeId r = b.op(OpKind::Reciprocal, {b.op(OpKind::Mul, {x, weight(s)})});
        x = b.op(OpKind::Concat, {l, r}, {{"axis", {0}}});
        std::vector<double> idx;
        for (std::int64_t i = 0; i < rows; ++i) idx.push_back(static_cast<double>(2 * i + gen.uniform_int(0, 1)));
        x = b.op(OpKind::Gather, {x, b.literal("idx" + std::to_string(counter++), {rows}, idx)});
        break;
      }
      case 5: {
        x = b.op(OpKind::Mul, {x, weight(s)});
        if (gen.coin()) {
          x = b.op(OpKind::Transpose, {x}, {{"perm", {1, 0}}});
          std::swap(rows, cols);
        } else {
          x = b.op(OpKind::Reshape, {x}, {{"shape", {cols, rows}}});
          std::swap(rows, cols);
        }
        x = b.op(OpKind::Add, {x, weight({rows, cols})});
        break;
      }
      case 6: {
        const std::int64_t keep = gen.uniform_int(1, static_cast<int>(rows));
        x = b.op(OpKind::Slice, {x}, {{"axis", {0}}, {"begin", {0}}, {"end", {keep}}});
        rows = keep;
        x = b.op(OpKind::Mul, {x, weight({rows, cols})});
        x = b.op(OpKind::Sub, {x, small({rows, cols})});
        break;
      }
    }
    // Occasionally expose an intermediate so some templates must not match.
    if (gen.coin(0.15)) extra_outputs.push_back(x);
  }
  b.output("y", x);
  for (std::size_t i = 0; i < extra_outputs.size(); ++i) {
    if (extra_outputs[i] != x) b.output("aux" + std::to_string(i), extra_outputs[i]);
  }
  return b.build();
}

// Arbitrary well-formed DAG over square tensors, covering every op kind.
inline Graph random_graph(std::uint64_t seed) {
  Gen gen(seed);
  GraphBuilder b;
  const std::int64_t n = gen.uniform_int(1, 5);
  std::vector<NodeId> pool;
  pool.push_back(b.input("in0", {n, n}));
  if (gen.coin()) pool.push_back(b.input("in1", {n, n}));
  const int weights = gen.uniform_int(0, 3);
  for (int i = 0; i < weights; ++i) {
    if (gen.coin()) {
      pool.push_back(b.weight("w" + std::to_string(i), {n, n}));
    } else {
      pool.push_back(b.literal("l" + std::to_string(i), {n, n}, gen.values(n * n, -2.0, 2.0)));
    }
  }
  const int ops = gen.uniform_int(0, 12);
  for (int i = 0; i < ops; ++i) {
    const NodeId a = gen.pick(pool);
    const NodeId c = gen.pick(pool);
    NodeId r = -1;
    switch (gen.uniform_int(0, 12)) {
      case 0: r = b.op(OpKind::MatMul, {a, c}); break;
      case 1: r = b.op(OpKind::Add, {a, c}); break;
      case 2: r = b.op(OpKind::Sub, {a, c}); break;
      case 3: r = b.op(OpKind::Mul, {a, c}); break;
      case 4: r = b.op(OpKind::Reciprocal, {a}); break;
      case 5: r = b.op(OpKind::Power, {a}, {{"exponent", {gen.uniform_int(-2, 3)}}}); break;
      case 6: r = b.op(OpKind::Exp, {a}); break;
      case 7: r = b.op(OpKind::Erf, {b.op(OpKind::Sqrt, {a})}); break;
      case 8: r = b.op(OpKind::Transpose, {a}, {{"perm", {1, 0}}}); break;
      case 9: {
        NodeId red = b.op(gen.coin() ? OpKind::ReduceSum : OpKind::ReduceMax, {a},
                          {{"axis", {gen.coin() ? -1 : 0}}});
        r = b.op(OpKind::Broadcast, {red}, {{"shape", {n, n}}});
        break;
      }
      case 10: {
        NodeId cat = b.op(OpKind::Concat, {a, c}, {{"axis", {1}}});
        r = b.op(OpKind::Slice, {cat}, {{"axis", {1}}, {"begin", {n / 2}}, {"end", {n / 2 + n}}});
        break;
      }
      case 11: {
        NodeId flat = b.op(OpKind::Reshape, {a}, {{"shape", {n * n}}});
        r = b.op(OpKind::Reshape, {flat}, {{"shape", {n, n}}});
        break;
      }
      default: {
        std::vector<double> idx;
        for (std::int64_t k = 0; k < n; ++k) idx.push_back(static_cast<double>(gen.uniform_int(0, static_cast<int>(n) - 1)));
        r = b.op(OpKind::Gather, {a, b.literal("g" + std::to_string(i), {n}, idx)});
        break;
      }
    }
    pool.push_back(r);
  }
  b.output("out", pool.back());
  if (gen.coin() && pool.size() > 1) b.output("side", pool[pool.size() / 2]);
  return b.build();
}

}  // namespace canao::gen
