#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "canao/expr.hpp"
#include "canao/graph_ir.hpp"

namespace canao {

enum class FusionLaw {
  BasicFusion,
  Commutative,
  Distributive,
  Associative,
  DataAggregation,
  DataTransportation,
  DataSplitting,
};

inline constexpr FusionLaw kAllFusionLaws[] = {
    FusionLaw::BasicFusion,     FusionLaw::Commutative,
    FusionLaw::Distributive,    FusionLaw::Associative,
    FusionLaw::DataAggregation, FusionLaw::DataTransportation,
    FusionLaw::DataSplitting,
};

std::string_view to_string(FusionLaw law);
std::optional<FusionLaw> fusion_law_from_string(std::string_view name);

struct LayerOpCount {
  std::int64_t layers = 0;
  std::int64_t ops = 0;

  bool operator==(const LayerOpCount&) const = default;
};

struct CostMetrics {
  // Post-fusion arithmetic of the block relative to the average per-layer
  // arithmetic before fusion.
  double compute_enlargement = 1.0;
  // Intermediate bytes that no longer materialize.
  std::int64_t memory_reduction = 0;

  bool operator==(const CostMetrics&) const = default;
};

struct FusionCandidate {
  std::vector<NodeId> node_ids;  // topological order
  FusionLaw law = FusionLaw::BasicFusion;
  NodeId root = -1;
  Expr original_expr;
  Expr rewritten_expr;
  LayerOpCount before;
  LayerOpCount after;
  CostMetrics metrics;
};

// One executable unit. Untouched nodes become single-operator blocks with no
// law; the block's value keeps the id of the node it replaces.
struct FusedBlock {
  int id = 0;
  Expr expr;
  std::vector<NodeId> inputs;  // distinct leaf value ids of expr
  NodeId output = -1;
  Shape shape;
  std::optional<FusionLaw> law;
  std::vector<NodeId> members;

  bool operator==(const FusedBlock&) const = default;
};

class FusedGraph {
 public:
  FusedGraph() = default;
  // Every non-leaf node becomes its own unit.
  explicit FusedGraph(Graph source);
  // Reassembles a fused graph; checks partition and ordering. Throws
  // ConflictError on overlap or a missing producer.
  FusedGraph(Graph source, std::vector<FusedBlock> blocks);

  const Graph& source() const { return source_; }
  const std::vector<FusedBlock>& blocks() const { return blocks_; }
  const std::map<NodeId, int>& provenance() const { return provenance_; }
  const FusedBlock& block(int id) const;
  const FusedBlock& block_of(NodeId node) const;
  bool is_fused(NodeId node) const;

  LayerOpCount counts() const;
  std::int64_t intermediate_bytes() const;
  std::int64_t fused_block_count() const;

  bool operator==(const FusedGraph&) const = default;

 private:
  friend FusedGraph apply_candidates(const FusedGraph&, std::span<const FusionCandidate* const>);
  void reindex();

  Graph source_;
  std::vector<FusedBlock> blocks_;
  std::map<NodeId, int> provenance_;
};

// Candidates matching the seven closed-world templates, possibly overlapping,
// sorted by smallest member id.
std::vector<FusionCandidate> enumerate_candidates(const Graph& graph);

// Throws RewriteError when the expression does not match the law's template.
Expr algebraic_rewrite(const Expr& expr, FusionLaw law);

// Throws ConflictError if a member already belongs to a fused block or the
// replacement would introduce a cycle.
FusedGraph apply_candidate(const FusedGraph& fused, const FusionCandidate& candidate);
// Applies pairwise disjoint candidates in one pass.
FusedGraph apply_candidates(const FusedGraph& fused,
                            std::span<const FusionCandidate* const> candidates);
FusedGraph apply_candidate(const Graph& graph, const FusionCandidate& candidate);

struct FusionPolicy {
  std::set<FusionLaw> enabled{std::begin(kAllFusionLaws), std::end(kAllFusionLaws)};
};

struct FusionReportRow {
  FusionLaw law = FusionLaw::BasicFusion;
  std::vector<NodeId> node_ids;
  LayerOpCount before;
  LayerOpCount after;
  CostMetrics metrics;
  std::string pattern_before;
  std::string pattern_after;

  bool operator==(const FusionReportRow&) const = default;
};

struct FusionReport {
  std::int64_t candidates = 0;
  std::vector<FusionReportRow> rows;  // sorted by smallest member id
  LayerOpCount original;
  LayerOpCount fused;
  std::int64_t intermediate_bytes_before = 0;
  std::int64_t intermediate_bytes_after = 0;

  bool operator==(const FusionReport&) const = default;
};

struct FusionResult {
  FusedGraph graph;
  FusionReport report;
};

FusionResult fuse(const Graph& graph, const FusionPolicy& policy = {});

std::string format_report_table(const FusionReport& report);

// Single graph holding one instance of each template, in table order.
Graph build_seven_case_fixture();

}  // namespace canao
