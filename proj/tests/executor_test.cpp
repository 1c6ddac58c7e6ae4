#include <gtest/gtest.h>

#include <cmath>

#include "canao/bert.hpp"
#include "canao/error.hpp"
#include "canao/executor.hpp"
#include "canao/fusion.hpp"
#include "support/generators.hpp"

using namespace canao;

namespace {

TensorValue tensor(Shape shape, std::vector<double> data) { return {std::move(shape), std::move(data)}; }

}  // namespace

TEST(Run, AddZeroIsIdentity) {
  GraphBuilder b;
  NodeId x = b.input("x", {2, 3});
  b.output("y", b.op(OpKind::Add, {x, b.literal("zero", {2, 3}, std::vector<double>(6, 0.0))}));
  const TensorValue in = tensor({2, 3}, {1, -2, 3, 4.5, 5, 6});
  EXPECT_EQ(run(b.build(), {{"x", in}}).outputs.at("y"), in);
}

TEST(Run, IdentityMatMul) {
  GraphBuilder b;
  NodeId x = b.input("x", {2, 3});
  b.output("y", b.op(OpKind::MatMul, {b.literal("I", {2, 2}, {1, 0, 0, 1}), x}));
  const TensorValue in = tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(run(b.build(), {{"x", in}}).outputs.at("y"), in);
}

TEST(Run, SoftmaxOfZerosIsUniform) {
  GraphBuilder b;
  NodeId x = b.input("x", {1, 4});
  NodeId mx = b.op(OpKind::ReduceMax, {x}, {{"axis", {-1}}});
  NodeId e = b.op(OpKind::Exp, {b.binary(OpKind::Sub, x, mx)});
  NodeId inv = b.op(OpKind::Reciprocal, {b.op(OpKind::ReduceSum, {e}, {{"axis", {-1}}})});
  b.output("p", b.binary(OpKind::Mul, e, inv));
  const auto out = run(b.build(), {{"x", tensor({1, 4}, {0, 0, 0, 0})}}).outputs.at("p");
  for (double v : out.data) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Run, KernelSpotChecks) {
  GraphBuilder b;
  NodeId x = b.input("x", {2, 3});
  b.output("t", b.op(OpKind::Transpose, {x}, {{"perm", {1, 0}}}));
  b.output("s", b.op(OpKind::Slice, {x}, {{"axis", {1}}, {"begin", {1}}, {"end", {3}}}));
  b.output("c", b.op(OpKind::Concat, {x, x}, {{"axis", {0}}}));
  b.output("g", b.op(OpKind::Gather, {x, b.literal("i", {3}, {1.7, 0, 9})}));
  b.output("r", b.op(OpKind::ReduceSum, {x}, {{"axis", {0}}}));
  b.output("p", b.op(OpKind::Power, {x}, {{"exponent", {-2}}}));
  const auto out = run(b.build(), {{"x", tensor({2, 3}, {1, 2, 3, 4, 5, 6})}}).outputs;
  EXPECT_EQ(out.at("t"), tensor({3, 2}, {1, 4, 2, 5, 3, 6}));
  EXPECT_EQ(out.at("s"), tensor({2, 2}, {2, 3, 5, 6}));
  EXPECT_EQ(out.at("c").shape, (Shape{4, 3}));
  EXPECT_EQ(out.at("g"), tensor({3, 3}, {4, 5, 6, 1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(out.at("r"), tensor({1, 3}, {5, 7, 9}));
  EXPECT_DOUBLE_EQ(out.at("p").data[1], 0.25);
}

TEST(Run, BatchedBroadcastMatMul) {
  GraphBuilder b;
  NodeId x = b.input("x", {2, 2, 2});
  b.output("y", b.op(OpKind::MatMul, {x, b.literal("w", {2, 2}, {0, 1, 1, 0})}));
  const auto out = run(b.build(), {{"x", tensor({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8})}}).outputs;
  EXPECT_EQ(out.at("y"), tensor({2, 2, 2}, {2, 1, 4, 3, 6, 5, 8, 7}));
}

TEST(Run, ShapeMismatchNamesTensor) {
  GraphBuilder b;
  b.output("y", b.op(OpKind::Exp, {b.input("tokens", {4})}));
  try {
    run(b.build(), {{"tokens", tensor({3}, {1, 2, 3})}});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("tokens"), std::string::npos);
  }
  EXPECT_THROW(run(b.build(), {}), ShapeError);
}

TEST(Run, NonFiniteNamesNode) {
  GraphBuilder b;
  NodeId x = b.input("x", {2});
  b.output("y", b.op(OpKind::Reciprocal, {x}, {}, "inverse"));
  try {
    run(b.build(), {{"x", tensor({2}, {1, 0})}});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("inverse"), std::string::npos);
  }
}

TEST(Run, SeedDeterminism) {
  const Graph g = gen::random_template_graph(4);
  const TensorMap in = random_inputs(g, 9);
  RunOptions opt;
  opt.weight_seed = 123;
  EXPECT_EQ(run(g, in, opt).outputs, run(g, in, opt).outputs);
  opt.weight_seed = 124;
  EXPECT_NE(run(g, in, opt).outputs, run(g, in, RunOptions{.weight_seed = 123}).outputs);
}

TEST(Run, F32RoundsResults) {
  GraphBuilder b;
  b.output("y", b.op(OpKind::Mul, {b.input("x", {1}), b.literal("third", {1}, {1.0 / 3.0})}));
  const TensorMap in = {{"x", tensor({1}, {1.0})}};
  const double f64 = run(b.build(), in).outputs.at("y").data[0];
  const double f32 = run(b.build(), in, {.precision = Precision::F32}).outputs.at("y").data[0];
  EXPECT_EQ(f32, static_cast<double>(static_cast<float>(f64)));
  EXPECT_NE(f32, f64);
}

TEST(Measure, SingleMatMulFlops) {
  GraphBuilder b;
  b.output("y", b.op(OpKind::MatMul, {b.input("x", {2, 2}), b.weight("w", {2, 2})}));
  const Graph g = b.build();
  EXPECT_EQ(measure(g, random_inputs(g, 0)).flops, 16);
}

TEST(Measure, StaticDynamicAgreement) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Graph g = gen::random_template_graph(seed);
    const CostReport m = measure(g, random_inputs(g, seed));
    EXPECT_EQ(m.flops, flops(g));
    EXPECT_EQ(m.intermediate_bytes, intermediate_bytes(g));
    EXPECT_EQ(m, static_cost(g));
  }
  ArchitectureConfig tiny = make_architecture(2, 256, 64, 4);
  tiny.vocab_size = 8;
  const Graph bert = build_bert_graph(tiny);
  EXPECT_EQ(measure(bert, random_inputs(bert, 0)).flops, flops(bert));
}

TEST(Measure, FusedCase3ExecutesThreeOperators) {
  const Graph g = build_seven_case_fixture();
  const FusionResult r = fuse(g);
  for (const FusedBlock& b : r.graph.blocks()) {
    if (b.law == FusionLaw::Distributive) EXPECT_EQ(op_count(b.expr), 3);
  }
  GraphBuilder b;
  NodeId s = b.input("s", {4, 4});
  NodeId t = b.op(OpKind::Add, {s, b.weight("F", {4, 4})});
  NodeId m1 = b.op(OpKind::Mul, {t, b.weight("G", {4, 4})});
  NodeId m2 = b.op(OpKind::Mul, {t, b.weight("H", {4, 4})});
  b.output("y", b.op(OpKind::Add, {m1, m2}));
  const Graph case3 = b.build();
  const CostReport fused = measure(fuse(case3).graph, random_inputs(case3, 0));
  EXPECT_EQ(fused.op_count, 3);
  EXPECT_EQ(fused.layer_count, 1);
}

TEST(Measure, FusedCase1StoresLess) {
  GraphBuilder b;
  NodeId a = b.input("A", {4, 4});
  NodeId x = b.op(OpKind::Reciprocal, {b.op(OpKind::MatMul, {a, b.weight("B", {4, 4})})});
  b.output("y", b.op(OpKind::Add, {x, b.weight("C", {4, 4})}));
  const Graph g = b.build();
  const TensorMap in = random_inputs(g, 0);
  EXPECT_LT(measure(fuse(g).graph, in).intermediate_bytes, measure(g, in).intermediate_bytes);
}

TEST(Equivalence, SelfIsExact) {
  const Graph g = build_seven_case_fixture();
  const auto rep = equivalence_check(g, g, 5, 0.0, 1);
  EXPECT_EQ(rep.max_rel_err, 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(Equivalence, FusedFixturePasses) {
  const Graph g = build_seven_case_fixture();
  const auto rep = equivalence_check(g, fuse(g).graph, 100, 1e-5, 3);
  EXPECT_TRUE(rep.pass) << rep.max_rel_err;
  EXPECT_EQ(rep.trials, 100);
}

TEST(Equivalence, PerturbedWeightFails) {
  const Graph g = materialize_weights(build_seven_case_fixture(), 5);
  std::vector<Node> nodes = g.nodes();
  for (Node& n : nodes) {
    if (n.name == "C") {
      n.literal[0] += 1.0;
      break;
    }
  }
  const Graph h(nodes, g.inputs(), g.weights(), g.outputs());
  const auto rep = equivalence_check(g, h, 5, 1e-5, 1);
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.max_rel_err, 1e-5);
}

TEST(Equivalence, PassIffWithinTolerance) {
  const Graph g = gen::random_template_graph(1);
  const auto rep = equivalence_check(g, fuse(g).graph, 4, 1e-5, 2);
  EXPECT_EQ(rep.pass, rep.max_rel_err <= rep.tolerance);
}

TEST(Equivalence, SignatureMismatch) {
  GraphBuilder a, b;
  a.output("y", a.op(OpKind::Exp, {a.input("x", {2})}));
  b.output("y", b.op(OpKind::Exp, {b.input("x", {3})}));
  EXPECT_THROW(equivalence_check(a.build(), b.build(), 1, 1e-5, 0), SignatureError);
}

TEST(Equivalence, MaterializedWeightsMatchSeededRun) {
  const Graph g = build_seven_case_fixture();
  const TensorMap in = random_inputs(g, 3);
  EXPECT_EQ(run(materialize_weights(g, 8), in).outputs,
            run(g, in, RunOptions{.weight_seed = 8}).outputs);
}

TEST(RelativeError, Definition) {
  EXPECT_EQ(relative_error(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1, 2), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(-1, 1), 2.0);
}

TEST(Fusion, NeverChangesOutputShapes) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Graph g = gen::random_template_graph(seed);
    const TensorMap in = random_inputs(g, seed);
    const auto a = run(g, in).outputs, b = run(fuse(g).graph, in).outputs;
    for (const auto& [name, v] : a) EXPECT_EQ(v.shape, b.at(name).shape);
  }
}
