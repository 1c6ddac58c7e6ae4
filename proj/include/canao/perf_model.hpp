#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "canao/fusion.hpp"
#include "canao/graph_ir.hpp"
#include "canao/json_io.hpp"

namespace canao {

struct DeviceProfile {
  std::string name;
  double peak_flops_per_s = 1e10;
  double mem_bandwidth_bytes_per_s = 1e10;
  double noncontiguous_penalty = 1.0;
  double intermediate_penalty = 1.0;
  double per_block_overhead_s = 0.0;
  // Tiles whose working set fits in cache_bytes get their memory time cut by
  // up to cache_discount (0 disables the bonus).
  std::int64_t cache_bytes = 0;
  double cache_discount = 0.0;

  bool operator==(const DeviceProfile&) const = default;
};

// Throws ConfigError naming the offending field.
void check_profile(const DeviceProfile& profile);
Json profile_to_json(const DeviceProfile& profile);
DeviceProfile profile_from_json(const Json& doc);
DeviceProfile load_profile(const std::string& path);

// ---------------------------------------------------------------------------
// Loop-nest lowering

// One tensor touched by a nest. dim_loops[d] is the loop indexing tensor
// dimension d, or -1 when that dimension is broadcast (extent 1).
struct Access {
  NodeId value = -1;
  Shape shape;
  std::vector<int> dim_loops;
  std::int64_t bytes = 0;
  bool intermediate = false;  // produced or consumed by another block
  bool opaque = false;        // read by a non-elementwise statement

  bool operator==(const Access&) const = default;
};

struct Statement {
  std::string text;
  bool opaque = false;        // native-order computation (MatMul, reductions, movement)
  bool redundant = false;     // invariant in at least one loop of the nest
  std::int64_t ops = 0;       // elementwise operators per iteration point
  std::int64_t flops = 0;     // useful arithmetic
  std::vector<int> loops;     // loops the statement depends on
  std::vector<int> reads;     // indices into LoopNest::accesses

  bool operator==(const Statement&) const = default;
};

struct LoopNest {
  int block_id = 0;
  std::vector<std::int64_t> extents;  // loop i iterates output dimension i
  std::vector<Access> accesses;       // distinct inputs
  Access write;
  std::vector<Statement> statements;  // root statement first
  bool permutable = false;            // root is elementwise
  std::int64_t useful_flops = 0;
  std::int64_t intermediate_bytes = 0;

  int marker_count() const;
};

struct ScheduleVersion {
  int id = 0;
  std::vector<int> order;       // loops outermost first
  std::vector<bool> recompute;  // per redundant statement, in statement order
  std::int64_t useful_flops = 0;
  std::int64_t redundant_flops = 0;
  std::int64_t contiguous_bytes = 0;     // excludes intermediate traffic
  std::int64_t noncontiguous_bytes = 0;

  bool operator==(const ScheduleVersion&) const = default;
};

// Throws LoweringError naming the operator for rank > 4.
LoopNest lower(const FusedBlock& block, const Graph& source);

// One version per loop permutation; redundant statements are hoisted out of
// their invariant loops whenever those loops are innermost. Version 0 keeps
// the original order.
std::vector<ScheduleVersion> enumerate_versions(const LoopNest& nest);

struct CostBreakdown {
  double compute_s = 0.0;
  double memory_s = 0.0;
};

CostBreakdown version_cost(const ScheduleVersion& version, const DeviceProfile& device,
                           std::int64_t intermediate_bytes);

// The fused Mul/Mul/Add block on an MxN matrix and a 1xN row.
FusedGraph codegen_example(std::int64_t m, std::int64_t n);

// ---------------------------------------------------------------------------
// Tuning and estimation

struct BlockTuning {
  int version = 0;
  std::vector<std::int64_t> tiles;  // per loop
  int unroll = 1;

  bool operator==(const BlockTuning&) const = default;
};

struct TuningConfig {
  std::map<int, BlockTuning> blocks;  // keyed by block id

  bool operator==(const TuningConfig&) const = default;
};

Json tuning_to_json(const TuningConfig& tuning);
TuningConfig tuning_from_json(const Json& doc);

struct BlockLatency {
  int block_id = 0;
  double compute_s = 0.0;
  double memory_s = 0.0;
  double overhead_s = 0.0;
};

struct LatencyEstimate {
  double total_s = 0.0;
  std::vector<BlockLatency> blocks;
};

Json latency_to_json(const LatencyEstimate& estimate);

inline constexpr int kUnrollFactors[] = {1, 2, 4, 8};

// Lowered view of a fused graph, reused across many cost evaluations.
class LatencyModel {
 public:
  struct Block {
    LoopNest nest;
    std::vector<ScheduleVersion> versions;
  };

  explicit LatencyModel(const FusedGraph& fused);

  const std::vector<Block>& blocks() const { return blocks_; }
  TuningConfig default_tuning() const;
  // Throws TuningError for missing blocks or out-of-range choices.
  void check(const TuningConfig& tuning) const;
  BlockLatency block_latency(const Block& block, const BlockTuning& choice,
                             const DeviceProfile& device) const;
  LatencyEstimate estimate(const DeviceProfile& device, const TuningConfig& tuning) const;
  LatencyEstimate estimate(const DeviceProfile& device) const;

 private:
  std::vector<Block> blocks_;
};

LatencyEstimate estimate_latency(const FusedGraph& fused, const DeviceProfile& device,
                                 const TuningConfig& tuning);

// Every node its own block: the unfused interpretation of a graph.
LatencyEstimate estimate_unfused(const Graph& graph, const DeviceProfile& device);

// Per-block choice lists the tuner may pick from.
struct BlockSpace {
  int block_id = 0;
  std::vector<int> versions;
  std::vector<std::vector<std::int64_t>> tiles;  // per loop
  std::vector<int> unrolls;

  double size() const;
};

struct TuningSpace {
  std::vector<BlockSpace> blocks;

  double size() const;
};

// Versions x (powers of two below the extent, plus the extent) x unrolls.
TuningSpace full_space(const LatencyModel& model);

struct GaConfig {
  int population = 16;
  int generations = 20;
  double mutation_rate = 0.1;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency

  bool operator==(const GaConfig&) const = default;
};

struct GaResult {
  TuningConfig best;
  double best_latency_s = 0.0;
  std::vector<double> history;  // best-so-far latency after each generation
};

// Throws TuningError on an empty search space or population < 2.
GaResult ga_tune(const LatencyModel& model, const DeviceProfile& device,
                 const TuningSpace& space, const GaConfig& config);
GaResult ga_tune(const FusedGraph& fused, const DeviceProfile& device, const GaConfig& config);

// ---------------------------------------------------------------------------
// Calibration

struct Observation {
  CostReport cost;  // flops, intermediate_bytes and layer_count (blocks) are used
  double measured_s = 0.0;

  bool operator==(const Observation&) const = default;
};

// Aggregate form fitted by calibrate():
//   flops / peak + intermediate_penalty * intermediate_bytes / bandwidth
//   + blocks * overhead
double aggregate_latency(const DeviceProfile& device, const CostReport& cost);

struct CalibrationResult {
  DeviceProfile profile;
  std::vector<double> relative_residuals;  // (predicted - measured) / measured
  double max_relative_error = 0.0;
};

// Penalties and cache parameters are copied from the template. Duplicate
// observations are collapsed before fitting. Throws CalibrationError.
CalibrationResult calibrate(const DeviceProfile& profile_template,
                            std::span<const Observation> observations);

// CSV with header flops,intermediate_bytes,block_count,measured_ms.
std::vector<Observation> parse_observations_csv(std::string_view text);
std::string observations_to_csv(std::span<const Observation> observations);

}  // namespace canao
