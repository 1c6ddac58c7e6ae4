#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "canao/bert.hpp"
#include "canao/error.hpp"
#include "canao/perf_model.hpp"
#include "support/exhaustive.hpp"
#include "support/generators.hpp"
#include "support/reference_data.hpp"
#include "support/spaces.hpp"

using namespace canao;

using gen::cached_profile;
using gen::eight_per_block;
using gen::row_blocks;
using gen::simple_profile;

namespace {

DeviceProfile bundled(const std::string& name) {
  return load_profile(std::string(CANAO_PROFILE_DIR) + "/" + name + ".json");
}

}  // namespace

// ---------------------------------------------------------------------------
// Lowering and versions

TEST(Lowering, CodegenExampleVersions) {
  const FusedGraph fg = codegen_example(4, 8);
  const LatencyModel model(fg);
  ASSERT_EQ(model.blocks().size(), 1u);
  const auto& blk = model.blocks()[0];
  EXPECT_EQ(blk.nest.marker_count(), 1);
  ASSERT_EQ(blk.versions.size(), 2u);

  const ScheduleVersion& a = blk.versions[0];
  EXPECT_EQ(a.order, (std::vector<int>{0, 1}));
  EXPECT_EQ(a.useful_flops + a.redundant_flops, 96);
  EXPECT_EQ(a.redundant_flops, 24);
  EXPECT_EQ(a.contiguous_bytes, 448);
  EXPECT_EQ(a.noncontiguous_bytes, 0);

  const ScheduleVersion& b = blk.versions[1];
  EXPECT_EQ(b.order, (std::vector<int>{1, 0}));
  EXPECT_EQ(b.useful_flops + b.redundant_flops, 72);
  EXPECT_EQ(b.contiguous_bytes, 192);
  EXPECT_EQ(b.noncontiguous_bytes, 256);
}

TEST(Lowering, CodegenExampleMatchesClosedForm) {
  for (std::int64_t m : {2, 3, 16}) {
    for (std::int64_t n : {5, 32}) {
      const LatencyModel model(codegen_example(m, n));
      const auto& v = model.blocks()[0].versions;
      const std::int64_t mn = m * n;
      // Row-major: the row product is recomputed for every row.
      EXPECT_EQ(v[0].useful_flops + v[0].redundant_flops, 3 * mn) << m << "x" << n;
      EXPECT_EQ(v[0].contiguous_bytes + v[0].noncontiguous_bytes, 4 * (3 * mn + 2 * n));
      // Column-major: computed once per column, matrices read across rows.
      EXPECT_EQ(v[1].useful_flops + v[1].redundant_flops, 2 * mn + n);
      EXPECT_EQ(v[1].noncontiguous_bytes, 4 * 2 * mn);
      EXPECT_EQ(v[1].contiguous_bytes, 4 * (mn + 2 * n));
    }
  }
}

TEST(Lowering, SingleRowVersionsCostTheSame) {
  const LatencyModel model(codegen_example(1, 8));
  const auto& v = model.blocks()[0].versions;
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].useful_flops, v[1].useful_flops);
  EXPECT_EQ(v[0].redundant_flops, v[1].redundant_flops);
  EXPECT_EQ(v[0].contiguous_bytes, v[1].contiguous_bytes);
  EXPECT_EQ(v[0].noncontiguous_bytes, v[1].noncontiguous_bytes);
}

TEST(Lowering, PlainElementwiseBlockHasNoMarkers) {
  GraphBuilder b;
  NodeId x = b.input("x", {6, 5});
  NodeId y = b.input("y", {6, 5});
  b.output("z", b.op(OpKind::Mul, {b.op(OpKind::Add, {x, y}), y}));
  const FusionResult r = fuse(b.build());
  const LatencyModel model(r.graph);
  for (const auto& blk : model.blocks()) {
    EXPECT_EQ(blk.nest.marker_count(), 0);
    for (const auto& v : blk.versions) EXPECT_EQ(v.redundant_flops, 0);
  }
}

TEST(Lowering, MatMulIsOpaqueWithOneVersion) {
  GraphBuilder b;
  NodeId x = b.input("x", {4, 8});
  b.output("y", b.op(OpKind::MatMul, {x, b.weight("w", {8, 3})}));
  const LatencyModel model{FusedGraph(b.build())};
  const auto& blk = model.blocks()[0];
  EXPECT_FALSE(blk.nest.permutable);
  ASSERT_EQ(blk.versions.size(), 1u);
  EXPECT_EQ(blk.versions[0].useful_flops, 2 * 4 * 8 * 3);
  EXPECT_EQ(blk.versions[0].noncontiguous_bytes, 0);
}

TEST(Lowering, IntermediateBytesCountProducedValues) {
  GraphBuilder b;
  NodeId x = b.input("x", {4, 4});
  NodeId h = b.op(OpKind::MatMul, {x, b.weight("w", {4, 4})});
  b.output("y", b.op(OpKind::Exp, {h}));
  const LatencyModel model{FusedGraph(b.build())};
  ASSERT_EQ(model.blocks().size(), 2u);
  EXPECT_EQ(model.blocks()[0].nest.intermediate_bytes, 64);  // write of h
  EXPECT_EQ(model.blocks()[1].nest.intermediate_bytes, 64);  // read of h
  EXPECT_EQ(model.blocks()[1].versions[0].contiguous_bytes, 64);
}

TEST(Lowering, RankAboveFourIsRejectedWithOperatorName) {
  GraphBuilder b;
  NodeId x = b.input("x", {2, 2, 2, 2, 2});
  b.output("y", b.op(OpKind::Exp, {x}));
  try {
    const LatencyModel model{FusedGraph(b.build())};
    FAIL() << "expected LoweringError";
  } catch (const LoweringError& e) {
    EXPECT_NE(std::string(e.what()).find("Exp"), std::string::npos) << e.what();
  }
}

TEST(Lowering, VersionsEnumeratePermutations) {
  GraphBuilder b;
  NodeId x = b.input("x", {2, 3, 4});
  b.output("y", b.op(OpKind::Exp, {x}));
  const LatencyModel model{FusedGraph(b.build())};
  const auto& v = model.blocks()[0].versions;
  ASSERT_EQ(v.size(), 6u);
  EXPECT_EQ(v[0].order, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(v[5].order, (std::vector<int>{2, 1, 0}));
  // Only orders ending in the last loop read x contiguously.
  for (const auto& s : v) {
    const bool inner_last = s.order.back() == 2;
    EXPECT_EQ(s.noncontiguous_bytes, inner_last ? 0 : 96) << s.id;
  }
}

// ---------------------------------------------------------------------------
// Cost model

TEST(CostModel, DualityAcrossProfiles) {
  const LatencyModel model(codegen_example(64, 64));
  auto best_version = [&](const DeviceProfile& d) {
    TuningConfig t = model.default_tuning();
    double best = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int v = 0; v < 2; ++v) {
      t.blocks[0].version = v;
      const double s = model.estimate(d, t).total_s;
      if (s < best) best = s, arg = v;
    }
    return arg;
  };
  EXPECT_EQ(best_version(bundled("compute_rich")), 0);
  EXPECT_EQ(best_version(bundled("bandwidth_rich")), 1);
}

TEST(CostModel, RooflineIdentity) {
  GraphBuilder b;
  NodeId x = b.input("x", {1000});
  NodeId y = b.input("y", {1000});
  b.output("z", b.op(OpKind::Add, {x, y}));
  // 1000 flops at 500/s; 12000 bytes at 4000 B/s.
  const DeviceProfile d = simple_profile(500.0, 4000.0, 0.5);
  const LatencyEstimate e = estimate_unfused(b.build(), d);
  ASSERT_EQ(e.blocks.size(), 1u);
  EXPECT_DOUBLE_EQ(e.blocks[0].compute_s, 2.0);
  EXPECT_DOUBLE_EQ(e.blocks[0].memory_s, 3.0);
  EXPECT_DOUBLE_EQ(e.total_s, 3.5);
}

TEST(CostModel, TotalIsSumOfBlockRooflines) {
  const DeviceProfile d = [] {
    DeviceProfile p = simple_profile(3e9, 7e8, 1e-6);
    p.noncontiguous_penalty = 1.9;
    p.intermediate_penalty = 1.3;
    return p;
  }();
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const FusedGraph fg = fuse(gen::random_template_graph(seed)).graph;
    const LatencyModel model(fg);
    const TuningConfig t = model.default_tuning();
    double expected = 0.0;
    for (const auto& blk : model.blocks()) {
      const ScheduleVersion& v = blk.versions[0];
      const double compute = static_cast<double>(v.useful_flops + v.redundant_flops) / 3e9;
      const double memory = (static_cast<double>(v.contiguous_bytes) +
                             1.9 * static_cast<double>(v.noncontiguous_bytes) +
                             1.3 * static_cast<double>(blk.nest.intermediate_bytes)) /
                            7e8;
      expected += std::max(compute, memory) + 1e-6;
    }
    EXPECT_NEAR(model.estimate(d, t).total_s, expected, 1e-12 * expected) << seed;
  }
}

TEST(CostModel, FusedBertFasterThanUnfused) {
  const Graph g = build_bert_graph(make_architecture(2, 256));
  const FusedGraph fused = fuse(g).graph;
  for (const char* name : {"cpu", "gpu"}) {
    const DeviceProfile d = bundled(name);
    EXPECT_LT(LatencyModel(fused).estimate(d).total_s, estimate_unfused(g, d).total_s) << name;
  }
}

TEST(CostModel, CacheBonusOnlyWhenTileFits) {
  const LatencyModel model(codegen_example(16, 16));
  DeviceProfile d = simple_profile(1e12, 1e9);
  const auto& blk = model.blocks()[0];
  const double plain = model.block_latency(blk, {0, {16, 16}, 1}, d).memory_s;
  d.cache_bytes = 2048;
  d.cache_discount = 0.5;
  // Full tile: 3 * 256 + 2 * 16 elements, far above 2 KiB.
  EXPECT_DOUBLE_EQ(model.block_latency(blk, {0, {16, 16}, 1}, d).memory_s, plain);
  // 2-row tile: 3 * 32 + 2 * 16 = 128 elements = 512 bytes.
  const double ws = 512.0;
  EXPECT_DOUBLE_EQ(model.block_latency(blk, {0, {2, 16}, 1}, d).memory_s,
                   plain * (1.0 - 0.5 * ws / 2048.0));
}

TEST(CostModel, TuningChecks) {
  const LatencyModel model(codegen_example(8, 8));
  const DeviceProfile d = simple_profile(1e9, 1e9);
  TuningConfig t = model.default_tuning();
  EXPECT_NO_THROW(model.estimate(d, t));
  auto expect_throw = [&](TuningConfig bad) { EXPECT_THROW(model.estimate(d, bad), TuningError); };
  expect_throw(TuningConfig{});
  TuningConfig v = t;
  v.blocks[0].version = 2;
  expect_throw(v);
  TuningConfig tile = t;
  tile.blocks[0].tiles = {3, 8};
  expect_throw(tile);
  TuningConfig unroll = t;
  unroll.blocks[0].unroll = 3;
  expect_throw(unroll);
  TuningConfig extra = t;
  extra.blocks[7] = t.blocks[0];
  expect_throw(extra);
}

TEST(Profiles, BundledProfilesLoad) {
  for (const char* name : {"cpu", "gpu", "compute_rich", "bandwidth_rich"}) {
    EXPECT_NO_THROW(check_profile(bundled(name))) << name;
  }
}

TEST(Profiles, JsonRoundTripAndRefusals) {
  const DeviceProfile p = bundled("gpu");
  EXPECT_EQ(profile_from_json(profile_to_json(p)), p);

  Json future = profile_to_json(p);
  future["version"] = 2;
  EXPECT_THROW(profile_from_json(future), ParseError);

  Json missing = profile_to_json(p);
  missing.erase("peak_flops_per_s");
  try {
    profile_from_json(missing);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("peak_flops_per_s"), std::string::npos) << e.what();
  }

  Json negative = profile_to_json(p);
  negative["mem_bandwidth_bytes_per_s"] = -1.0;
  EXPECT_THROW(profile_from_json(negative), ConfigError);
}

TEST(Profiles, TuningJsonRoundTrip) {
  const LatencyModel model(codegen_example(4, 8));
  TuningConfig t = model.default_tuning();
  t.blocks[0] = {1, {2, 8}, 4};
  EXPECT_EQ(tuning_from_json(tuning_to_json(t)), t);
}

// ---------------------------------------------------------------------------
// Genetic tuner

TEST(GaTune, FindsOptimumOfEightPointSpace) {
  const LatencyModel model(row_blocks({{16, 16}}));
  const DeviceProfile d = cached_profile();
  const TuningSpace space = eight_per_block(model);
  ASSERT_EQ(space.size(), 8.0);
  const double oracle = gen::exhaustive_best(model, d, space);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GaConfig cfg;
    cfg.population = 8;
    cfg.generations = 5;
    cfg.seed = seed;
    const GaResult r = ga_tune(model, d, space, cfg);
    EXPECT_DOUBLE_EQ(r.best_latency_s, oracle) << "seed " << seed;
    EXPECT_DOUBLE_EQ(model.estimate(d, r.best).total_s, r.best_latency_s);
  }
}

TEST(GaTune, SizeOneSpaceReturnsItsPoint) {
  const LatencyModel model(codegen_example(8, 8));
  const DeviceProfile d = cached_profile();
  TuningSpace space;
  space.blocks.push_back({0, {1}, {{2}, {8}}, {4}});
  const GaResult r = ga_tune(model, d, space, GaConfig{});
  EXPECT_EQ(r.best.blocks.at(0), (BlockTuning{1, {2, 8}, 4}));
}

TEST(GaTune, ReachesOptimumOnSmallSpacesForEverySeed) {
  const LatencyModel model(row_blocks({{16, 16}, {8, 32}}));
  const DeviceProfile d = cached_profile();
  const TuningSpace space = eight_per_block(model);
  ASSERT_EQ(space.size(), 64.0);
  const double oracle = gen::exhaustive_best(model, d, space);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GaConfig cfg;
    cfg.seed = seed;
    EXPECT_NEAR(ga_tune(model, d, space, cfg).best_latency_s, oracle, 1e-12 * oracle) << seed;
  }
}

TEST(GaTune, SeedsAgreeWithinFivePercent) {
  const LatencyModel model(row_blocks({{16, 16}, {8, 32}}));
  const DeviceProfile d = cached_profile();
  const TuningSpace space = eight_per_block(model);
  GaConfig a, b;
  a.seed = 1;
  b.seed = 2;
  const double la = ga_tune(model, d, space, a).best_latency_s;
  const double lb = ga_tune(model, d, space, b).best_latency_s;
  EXPECT_LE(std::abs(la - lb), 0.05 * std::min(la, lb));
}

TEST(GaTune, NearOptimumOnLargerSpaceForMostSeeds) {
  const LatencyModel model(row_blocks({{16, 16}, {8, 32}, {32, 8}}));
  const DeviceProfile d = cached_profile();
  const TuningSpace space = eight_per_block(model);
  ASSERT_EQ(space.size(), 512.0);
  const double oracle = gen::exhaustive_best(model, d, space);
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GaConfig cfg;
    cfg.seed = seed;
    if (ga_tune(model, d, space, cfg).best_latency_s <= 1.05 * oracle) ++hits;
  }
  EXPECT_GE(hits, 9);
}

TEST(GaTune, ZeroGenerationsReturnsDefault) {
  const FusedGraph fg = fuse(gen::random_template_graph(3)).graph;
  const LatencyModel model(fg);
  const DeviceProfile d = bundled("cpu");
  GaConfig cfg;
  cfg.generations = 0;
  const GaResult r = ga_tune(model, d, full_space(model), cfg);
  EXPECT_EQ(r.best, model.default_tuning());
  EXPECT_DOUBLE_EQ(r.best_latency_s, model.estimate(d).total_s);
}

TEST(GaTune, DeterministicAcrossThreadCounts) {
  const FusedGraph fg = fuse(gen::random_template_graph(5)).graph;
  const DeviceProfile d = cached_profile();
  GaConfig one, four;
  one.seed = four.seed = 42;
  one.threads = 1;
  four.threads = 4;
  const GaResult a = ga_tune(fg, d, one);
  const GaResult b = ga_tune(fg, d, four);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.history, b.history);
}

TEST(GaTune, HistoryMonotoneAndNeverWorseThanDefault) {
  const DeviceProfile d = cached_profile();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FusedGraph fg = fuse(gen::random_template_graph(seed)).graph;
    const LatencyModel model(fg);
    GaConfig cfg;
    cfg.seed = seed;
    cfg.generations = 8;
    const GaResult r = ga_tune(model, d, full_space(model), cfg);
    ASSERT_EQ(r.history.size(), 8u);
    for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i], r.history[i - 1]);
    EXPECT_LE(r.best_latency_s, model.estimate(d).total_s) << seed;
    EXPECT_NEAR(model.estimate(d, r.best).total_s, r.best_latency_s, 1e-12 * r.best_latency_s);
  }
}

TEST(GaTune, RejectsEmptySpaceAndTinyPopulation) {
  const LatencyModel model(codegen_example(4, 4));
  const DeviceProfile d = cached_profile();
  EXPECT_THROW(ga_tune(model, d, TuningSpace{}, GaConfig{}), TuningError);
  TuningSpace hollow;
  hollow.blocks.push_back({0, {}, {{4}, {4}}, {1}});
  EXPECT_THROW(ga_tune(model, d, hollow, GaConfig{}), TuningError);
  GaConfig lonely;
  lonely.population = 1;
  EXPECT_THROW(ga_tune(model, d, full_space(model), lonely), TuningError);
}

// ---------------------------------------------------------------------------
// Calibration

TEST(Calibration, RecoversSyntheticProfile) {
  DeviceProfile truth = simple_profile(4.2e10, 9.5e9, 3e-5);
  truth.intermediate_penalty = 1.4;
  gen::Gen rng(7);
  std::vector<Observation> obs;
  for (int i = 0; i < 12; ++i) {
    Observation o;
    o.cost.flops = static_cast<std::int64_t>(rng.uniform(1e8, 5e10));
    o.cost.intermediate_bytes = static_cast<std::int64_t>(rng.uniform(1e6, 5e8));
    o.cost.layer_count = rng.uniform_int(50, 3000);
    o.measured_s = aggregate_latency(truth, o.cost);
    obs.push_back(o);
  }
  DeviceProfile tmpl = truth;
  tmpl.peak_flops_per_s = tmpl.mem_bandwidth_bytes_per_s = 1.0;
  tmpl.per_block_overhead_s = 0.0;
  const CalibrationResult r = calibrate(tmpl, obs);
  EXPECT_NEAR(r.profile.peak_flops_per_s / truth.peak_flops_per_s, 1.0, 0.01);
  EXPECT_NEAR(r.profile.mem_bandwidth_bytes_per_s / truth.mem_bandwidth_bytes_per_s, 1.0, 0.01);
  EXPECT_NEAR(r.profile.per_block_overhead_s / truth.per_block_overhead_s, 1.0, 0.01);
  EXPECT_LT(r.max_relative_error, 0.01);
}

TEST(Calibration, FitsPublishedCpuRowsWithinFifteenPercent) {
  const auto costs = gen::all_row_costs();
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    obs.push_back({costs[i].fused, gen::kLatencyRows[i].cpu_fused_ms / 1000.0});
  }
  const CalibrationResult r = calibrate(bundled("cpu"), obs);
  EXPECT_LE(r.max_relative_error, 0.15);
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const double predicted = aggregate_latency(r.profile, costs[i].fused) * 1000.0;
    const double measured = gen::kLatencyRows[i].cpu_fused_ms;
    EXPECT_NEAR(predicted / measured, 1.0, 0.15) << gen::kLatencyRows[i].label;
  }
}

TEST(Calibration, DuplicatesDoNotChangeTheFit) {
  std::vector<Observation> obs;
  const DeviceProfile truth = simple_profile(1e10, 2e9, 1e-5);
  for (int i = 1; i <= 5; ++i) {
    Observation o;
    o.cost.flops = i * 1'000'000'000LL;
    o.cost.intermediate_bytes = (7 - i) * 20'000'000LL;
    o.cost.layer_count = 100 * i * i;
    o.measured_s = aggregate_latency(truth, o.cost) * (1.0 + 0.03 * (i % 2 ? 1 : -1));
    obs.push_back(o);
  }
  std::vector<Observation> doubled = obs;
  doubled.insert(doubled.end(), obs.begin(), obs.begin() + 2);
  const DeviceProfile tmpl = simple_profile(1, 1);
  EXPECT_EQ(calibrate(tmpl, obs).profile, calibrate(tmpl, doubled).profile);
}

TEST(Calibration, RequiresThreeDistinctObservations) {
  Observation a{{1'000'000, 1000, 0, 10}, 0.01};
  Observation b{{2'000'000, 3000, 0, 12}, 0.02};
  const DeviceProfile tmpl = simple_profile(1, 1);
  const std::vector<Observation> two{a, b};
  EXPECT_THROW(calibrate(tmpl, two), CalibrationError);
  const std::vector<Observation> repeated{a, b, a, b};
  EXPECT_THROW(calibrate(tmpl, repeated), CalibrationError);
}

TEST(Calibration, RejectsObservationsWithoutArithmetic) {
  std::vector<Observation> obs;
  for (int i = 1; i <= 4; ++i) obs.push_back({{0, 1000 * i, 0, i}, 0.001 * i});
  EXPECT_THROW(calibrate(simple_profile(1, 1), obs), CalibrationError);
}

TEST(Calibration, CsvRoundTrip) {
  std::vector<Observation> obs{{{21'800'000'000, 329'776'168, 747, 747}, 0.196},
                               {{4'600'000'000, 205'073'448, 1707, 1707}, 0.049}};
  const auto back = parse_observations_csv(observations_to_csv(obs));
  ASSERT_EQ(back.size(), obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    EXPECT_EQ(back[i].cost, obs[i].cost);
    EXPECT_DOUBLE_EQ(back[i].measured_s, obs[i].measured_s);
  }
}

TEST(Calibration, CsvErrorsNameTheLine) {
  try {
    parse_observations_csv("flops,bytes\n1,2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), "line 1");
  }
  try {
    parse_observations_csv("flops,intermediate_bytes,block_count,measured_ms\n1,2,3,4\n5,x,7,8\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), "line 3");
  }
}
