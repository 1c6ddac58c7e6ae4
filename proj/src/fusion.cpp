#include "canao/fusion.hpp"

#include <algorithm>
#include <array>
#include <iomanip>
#include <queue>
#include <span>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "canao/error.hpp"

namespace canao {

namespace {

constexpr std::array<std::pair<FusionLaw, std::string_view>, 7> kLawNames{{
    {FusionLaw::BasicFusion, "BasicFusion"},
    {FusionLaw::Commutative, "Commutative"},
    {FusionLaw::Distributive, "Distributive"},
    {FusionLaw::Associative, "Associative"},
    {FusionLaw::DataAggregation, "DataAggregation"},
    {FusionLaw::DataTransportation, "DataTransportation"},
    {FusionLaw::DataSplitting, "DataSplitting"},
}};

}  // namespace

std::string_view to_string(FusionLaw law) {
  for (const auto& [l, name] : kLawNames) {
    if (l == law) return name;
  }
  return "?";
}

std::optional<FusionLaw> fusion_law_from_string(std::string_view name) {
  for (const auto& [l, n] : kLawNames) {
    if (n == name) return l;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// FusedGraph

namespace {

Expr node_expr(const Graph& g, const Node& n) {
  Expr e;
  e.kind = n.kind;
  e.attrs = n.attrs;
  e.shape = n.shape;
  for (NodeId in : n.inputs) e.args.push_back(Expr::ref(in, g.node(in).shape));
  return e;
}

FusedBlock make_block(int id, Expr expr, NodeId output, std::vector<NodeId> members,
                      std::optional<FusionLaw> law) {
  FusedBlock b;
  b.id = id;
  b.inputs = leaves(expr);
  b.shape = expr.shape;
  b.expr = std::move(expr);
  b.output = output;
  b.law = law;
  b.members = std::move(members);
  return b;
}

// Kahn's algorithm, preferring the current list order among ready blocks.
std::vector<FusedBlock> topo_sort(const Graph& g, std::vector<FusedBlock> blocks) {
  std::unordered_map<NodeId, std::size_t> producer;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!producer.emplace(blocks[i].output, i).second) {
      throw ConflictError("value " + std::to_string(blocks[i].output) +
                          " produced by two blocks");
    }
  }
  std::vector<int> pending(blocks.size(), 0);
  std::vector<std::vector<std::size_t>> users(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (NodeId in : blocks[i].inputs) {
      auto it = producer.find(in);
      if (it != producer.end()) {
        ++pending[i];
        users[it->second].push_back(i);
        continue;
      }
      const Node* n = g.find(in);
      if (!n || !is_leaf(n->kind)) {
        throw ConflictError("block " + std::to_string(blocks[i].id) +
                            " reads undefined value " + std::to_string(in));
      }
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (pending[i] == 0) ready.push(i);
  }
  std::vector<FusedBlock> out;
  out.reserve(blocks.size());
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    for (std::size_t u : users[i]) {
      if (--pending[u] == 0) ready.push(u);
    }
    out.push_back(std::move(blocks[i]));
  }
  if (out.size() != blocks.size()) throw ConflictError("fused graph would contain a cycle");
  return out;
}

}  // namespace

FusedGraph::FusedGraph(Graph source) : source_(std::move(source)) {
  int next = 0;
  for (const Node& n : source_.nodes()) {
    if (is_leaf(n.kind)) continue;
    blocks_.push_back(make_block(next++, node_expr(source_, n), n.id, {n.id}, std::nullopt));
  }
  reindex();
}

FusedGraph::FusedGraph(Graph source, std::vector<FusedBlock> blocks)
    : source_(std::move(source)), blocks_(std::move(blocks)) {
  std::set<int> ids;
  for (const FusedBlock& b : blocks_) {
    if (!ids.insert(b.id).second) {
      throw ConflictError("duplicate block id " + std::to_string(b.id));
    }
  }
  reindex();
  for (const Node& n : source_.nodes()) {
    if (!is_leaf(n.kind) && !provenance_.count(n.id)) {
      throw ConflictError("node " + std::to_string(n.id) + " is not covered by any block");
    }
  }
  if (topo_sort(source_, blocks_) != blocks_) {
    throw ConflictError("blocks are not in topological order");
  }
}

void FusedGraph::reindex() {
  provenance_.clear();
  for (const FusedBlock& b : blocks_) {
    for (NodeId m : b.members) {
      const Node* n = source_.find(m);
      if (!n || is_leaf(n->kind)) {
        throw ConflictError("block " + std::to_string(b.id) + " claims invalid member " +
                            std::to_string(m));
      }
      if (!provenance_.emplace(m, b.id).second) {
        throw ConflictError("node " + std::to_string(m) + " belongs to two blocks");
      }
    }
  }
}

const FusedBlock& FusedGraph::block(int id) const {
  for (const FusedBlock& b : blocks_) {
    if (b.id == id) return b;
  }
  throw Error("unknown block id " + std::to_string(id));
}

const FusedBlock& FusedGraph::block_of(NodeId node) const {
  auto it = provenance_.find(node);
  if (it == provenance_.end()) throw Error("node " + std::to_string(node) + " has no block");
  return block(it->second);
}

bool FusedGraph::is_fused(NodeId node) const {
  auto it = provenance_.find(node);
  return it != provenance_.end() && block(it->second).law.has_value();
}

LayerOpCount FusedGraph::counts() const {
  LayerOpCount c;
  c.layers = static_cast<std::int64_t>(blocks_.size());
  for (const FusedBlock& b : blocks_) c.ops += op_count(b.expr);
  return c;
}

std::int64_t FusedGraph::intermediate_bytes() const {
  std::int64_t total = 0;
  for (const FusedBlock& b : blocks_) {
    if (!source_.is_output(b.output)) total += numel(b.shape) * kElementBytes;
  }
  return total;
}

std::int64_t FusedGraph::fused_block_count() const {
  return std::count_if(blocks_.begin(), blocks_.end(),
                       [](const FusedBlock& b) { return b.law.has_value(); });
}

// ---------------------------------------------------------------------------
// Rewrites

namespace {

bool is_kind(const Expr& e, OpKind kind) { return !e.is_leaf() && e.kind == kind; }

[[noreturn]] void not_applicable(FusionLaw law, const Expr& e) {
  throw RewriteError(std::string(to_string(law)) + " rewrite not applicable to " +
                     to_string(e));
}

bool contains_kind(const Expr& e, bool (*pred)(OpKind)) {
  if (e.is_leaf()) return false;
  if (pred(e.kind)) return true;
  return std::any_of(e.args.begin(), e.args.end(),
                     [pred](const Expr& a) { return contains_kind(a, pred); });
}

// Splits Mul(a, b) pairs sharing a factor: returns (shared, other1, other2).
std::optional<std::array<Expr, 3>> common_factor(const Expr& m1, const Expr& m2) {
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (m1.args[i] == m2.args[j]) {
        return std::array<Expr, 3>{m1.args[i], m1.args[1 - i], m2.args[1 - j]};
      }
    }
  }
  return std::nullopt;
}

}  // namespace

Expr algebraic_rewrite(const Expr& e, FusionLaw law) {
  switch (law) {
    case FusionLaw::BasicFusion:
      if (!contains_kind(e, [](OpKind k) { return k == OpKind::MatMul; })) {
        not_applicable(law, e);
      }
      return e;
    case FusionLaw::DataAggregation:
      if (!is_kind(e, OpKind::Concat)) not_applicable(law, e);
      return e;
    case FusionLaw::DataTransportation:
      if (!contains_kind(e, [](OpKind k) {
            return is_data_movement(k) && k != OpKind::Slice && k != OpKind::Concat;
          })) {
        not_applicable(law, e);
      }
      return e;
    case FusionLaw::DataSplitting:
      if (!contains_kind(e, [](OpKind k) { return k == OpKind::Slice; })) {
        not_applicable(law, e);
      }
      return e;
    case FusionLaw::Commutative: {
      // (x + d) - e  ->  (x - e) + d
      if (!is_kind(e, OpKind::Sub) || !is_kind(e.args[0], OpKind::Add)) not_applicable(law, e);
      const Expr& add = e.args[0];
      return Expr::op(OpKind::Add, {Expr::op(OpKind::Sub, {add.args[0], e.args[1]}), add.args[1]});
    }
    case FusionLaw::Distributive: {
      // t*g + t*h  ->  t * (g + h)
      if (!is_kind(e, OpKind::Add) || !is_kind(e.args[0], OpKind::Mul) ||
          !is_kind(e.args[1], OpKind::Mul)) {
        not_applicable(law, e);
      }
      auto parts = common_factor(e.args[0], e.args[1]);
      if (!parts) not_applicable(law, e);
      auto& [t, g, h] = *parts;
      return Expr::op(OpKind::Mul, {t, Expr::op(OpKind::Add, {g, h})});
    }
    case FusionLaw::Associative: {
      // t^-1 * (t*j)^-1  ->  t^-2 * j^-1
      if (!is_kind(e, OpKind::Mul)) not_applicable(law, e);
      for (int i = 0; i < 2; ++i) {
        const Expr& r1 = e.args[i];
        const Expr& r2 = e.args[1 - i];
        if (!is_kind(r1, OpKind::Reciprocal) || !is_kind(r2, OpKind::Reciprocal) ||
            !is_kind(r2.args[0], OpKind::Mul)) {
          continue;
        }
        const Expr& t = r1.args[0];
        const Expr& m = r2.args[0];
        for (int j = 0; j < 2; ++j) {
          if (m.args[j] == t) {
            return Expr::op(OpKind::Mul,
                            {Expr::op(OpKind::Power, {t}, {{"exponent", {-2}}}),
                             Expr::op(OpKind::Reciprocal, {m.args[1 - j]})});
          }
        }
      }
      not_applicable(law, e);
    }
  }
  not_applicable(law, e);
}

// ---------------------------------------------------------------------------
// Enumeration

namespace {

class Matcher {
 public:
  explicit Matcher(const Graph& g) : g_(g), node_flops_(flops_breakdown(g)) {}

  std::vector<FusionCandidate> run() {
    for (const Node& n : g_.nodes()) {
      switch (n.kind) {
        case OpKind::MatMul:
          basic(n);
          break;
        case OpKind::Add:
          commutative(n);
          distributive(n);
          break;
        case OpKind::Mul:
          associative(n);
          break;
        case OpKind::Concat:
          aggregation(n);
          break;
        case OpKind::Slice:
          splitting(n);
          break;
        case OpKind::Gather:
        case OpKind::Transpose:
        case OpKind::Reshape:
        case OpKind::Broadcast:
          transportation(n);
          break;
        default:
          break;
      }
    }
    std::stable_sort(out_.begin(), out_.end(), [](const auto& a, const auto& b) {
      return a.node_ids.front() < b.node_ids.front();
    });
    return std::move(out_);
  }

 private:
  bool elementwise(NodeId id) const {
    const Node* n = g_.find(id);
    return n && is_elementwise(n->kind);
  }

  // The single consumer of an internal value, if it has exactly one and is
  // not itself a graph output.
  std::optional<NodeId> sole_consumer(NodeId id) const {
    if (g_.is_output(id)) return std::nullopt;
    const auto& c = g_.consumers(id);
    if (c.size() != 1) return std::nullopt;
    return c.front();
  }

  bool consumed_only_by(NodeId id, std::initializer_list<NodeId> users) const {
    if (g_.is_output(id)) return false;
    std::vector<NodeId> c = g_.consumers(id);
    std::vector<NodeId> u(users);
    std::sort(c.begin(), c.end());
    std::sort(u.begin(), u.end());
    return c == u;
  }

  const Node& node(NodeId id) const { return g_.node(id); }

  bool convex(const std::set<NodeId>& members, NodeId root) const {
    for (NodeId m : members) {
      if (m == root) continue;
      if (g_.is_output(m) || g_.consumers(m).empty()) return false;
      for (NodeId c : g_.consumers(m)) {
        if (!members.count(c)) return false;
      }
    }
    // No path may leave the set and re-enter it.
    std::size_t limit = 0;
    for (NodeId m : members) limit = std::max(limit, g_.position(m));
    std::vector<NodeId> stack;
    std::unordered_set<NodeId> seen;
    for (NodeId m : members) {
      for (NodeId c : g_.consumers(m)) {
        if (!members.count(c)) stack.push_back(c);
      }
    }
    while (!stack.empty()) {
      NodeId v = stack.back();
      stack.pop_back();
      if (!seen.insert(v).second || g_.position(v) > limit) continue;
      for (NodeId c : g_.consumers(v)) {
        if (members.count(c)) return false;
        stack.push_back(c);
      }
    }
    return true;
  }

  Expr build(NodeId id, const std::set<NodeId>& members) const {
    const Node& n = node(id);
    if (!members.count(id)) return Expr::ref(id, n.shape);
    std::vector<Expr> args;
    for (NodeId in : n.inputs) args.push_back(build(in, members));
    return Expr::op(n.kind, std::move(args), n.attrs);
  }

  void emit(FusionLaw law, std::set<NodeId> members, NodeId root) {
    if (members.size() < 2 || !convex(members, root)) return;
    FusionCandidate c;
    c.law = law;
    c.root = root;
    c.node_ids.assign(members.begin(), members.end());
    std::sort(c.node_ids.begin(), c.node_ids.end(),
              [&](NodeId a, NodeId b) { return g_.position(a) < g_.position(b); });
    try {
      c.original_expr = build(root, members);
      c.rewritten_expr = algebraic_rewrite(c.original_expr, law);
    } catch (const ShapeError&) {
      return;
    } catch (const RewriteError&) {
      return;
    }
    if (c.rewritten_expr.shape != node(root).shape) return;

    const auto n = static_cast<std::int64_t>(members.size());
    c.before = {n, op_count(c.original_expr)};
    c.after = {law == FusionLaw::Commutative ? 2 : 1, op_count(c.rewritten_expr)};

    std::int64_t before_flops = 0;
    for (NodeId m : members) before_flops += node_flops_.at(m);
    const double after_flops = static_cast<double>(expr_flops(c.rewritten_expr));
    c.metrics.compute_enlargement =
        before_flops == 0 ? 1.0
                          : after_flops / (static_cast<double>(before_flops) / static_cast<double>(n));
    for (NodeId m : members) {
      if (m == root) continue;
      // The commutative rewrite keeps its first unit materialized.
      if (law == FusionLaw::Commutative) continue;
      c.metrics.memory_reduction += numel(node(m).shape) * kElementBytes;
    }
    out_.push_back(std::move(c));
  }

  void basic(const Node& mm) {
    std::set<NodeId> members{mm.id};
    NodeId cur = mm.id;
    for (int i = 0; i < 2; ++i) {
      auto next = sole_consumer(cur);
      if (!next || !elementwise(*next)) break;
      members.insert(*next);
      cur = *next;
    }
    emit(FusionLaw::BasicFusion, std::move(members), cur);
  }

  void commutative(const Node& add) {
    auto s = sole_consumer(add.id);
    if (!s) return;
    const Node& sub = node(*s);
    if (sub.kind != OpKind::Sub || sub.inputs[0] != add.id || sub.inputs[1] == add.id) return;
    emit(FusionLaw::Commutative, {add.id, sub.id}, sub.id);
  }

  // Includes the shared operand when it is elementwise and used only by the
  // pattern.
  void maybe_include(std::set<NodeId>& members, NodeId t,
                     std::initializer_list<NodeId> users) const {
    if (elementwise(t) && consumed_only_by(t, users)) members.insert(t);
  }

  void distributive(const Node& add) {
    const NodeId a = add.inputs[0], b = add.inputs[1];
    if (a == b || node(a).kind != OpKind::Mul || node(b).kind != OpKind::Mul) return;
    if (sole_consumer(a) != add.id || sole_consumer(b) != add.id) return;
    const Node& m1 = node(a);
    const Node& m2 = node(b);
    std::optional<NodeId> t;
    for (NodeId x : m1.inputs) {
      if (std::find(m2.inputs.begin(), m2.inputs.end(), x) != m2.inputs.end()) t = x;
    }
    if (!t || m1.inputs[0] == m1.inputs[1] || m2.inputs[0] == m2.inputs[1]) return;
    std::set<NodeId> members{add.id, a, b};
    maybe_include(members, *t, {a, b});
    emit(FusionLaw::Distributive, std::move(members), add.id);
  }

  void associative(const Node& mul) {
    for (int i = 0; i < 2; ++i) {
      const NodeId r1 = mul.inputs[static_cast<std::size_t>(i)];
      const NodeId r2 = mul.inputs[static_cast<std::size_t>(1 - i)];
      if (r1 == r2 || node(r1).kind != OpKind::Reciprocal || node(r2).kind != OpKind::Reciprocal) {
        continue;
      }
      const NodeId m = node(r2).inputs[0];
      if (node(m).kind != OpKind::Mul) continue;
      const NodeId t = node(r1).inputs[0];
      const auto& mi = node(m).inputs;
      if (mi[0] == mi[1] || (mi[0] != t && mi[1] != t)) continue;
      if (sole_consumer(r1) != mul.id || sole_consumer(r2) != mul.id || sole_consumer(m) != r2) {
        continue;
      }
      std::set<NodeId> members{mul.id, r1, r2, m};
      maybe_include(members, t, {r1, m});
      emit(FusionLaw::Associative, std::move(members), mul.id);
      return;
    }
  }

  void aggregation(const Node& concat) {
    if (concat.inputs.size() < 2) return;
    std::set<NodeId> members{concat.id};
    std::set<NodeId> distinct(concat.inputs.begin(), concat.inputs.end());
    if (distinct.size() != concat.inputs.size()) return;
    for (NodeId in : concat.inputs) {
      NodeId next = concat.id;
      NodeId cur = in;
      while (elementwise(cur) && sole_consumer(cur) == next) {
        members.insert(cur);
        next = cur;
        cur = node(cur).inputs[0];
      }
    }
    emit(FusionLaw::DataAggregation, std::move(members), concat.id);
  }

  void transportation(const Node& mv) {
    auto c = sole_consumer(mv.id);
    if (!c || !elementwise(*c)) return;
    std::set<NodeId> members{mv.id, *c};
    const NodeId p = mv.inputs[0];
    if (elementwise(p) && sole_consumer(p) == mv.id) members.insert(p);
    emit(FusionLaw::DataTransportation, std::move(members), *c);
  }

  void splitting(const Node& slice) {
    std::set<NodeId> members{slice.id};
    NodeId cur = slice.id;
    for (int i = 0; i < 2; ++i) {
      auto next = sole_consumer(cur);
      if (!next || !elementwise(*next)) break;
      members.insert(*next);
      cur = *next;
    }
    emit(FusionLaw::DataSplitting, std::move(members), cur);
  }

  const Graph& g_;
  std::map<NodeId, std::int64_t> node_flops_;
  std::vector<FusionCandidate> out_;
};

}  // namespace

std::vector<FusionCandidate> enumerate_candidates(const Graph& graph) {
  return Matcher(graph).run();
}

// ---------------------------------------------------------------------------
// Application

FusedGraph apply_candidates(const FusedGraph& fused,
                            std::span<const FusionCandidate* const> candidates) {
  std::map<int, std::size_t> owner;  // removed block id -> candidate index
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const FusionCandidate& c = *candidates[k];
    if (c.node_ids.empty()) throw ConflictError("empty candidate");
    for (NodeId m : c.node_ids) {
      auto it = fused.provenance_.find(m);
      if (it == fused.provenance_.end()) {
        throw ConflictError("node " + std::to_string(m) + " is not part of the graph");
      }
      const FusedBlock& b = fused.block(it->second);
      if (b.law) {
        throw ConflictError("node " + std::to_string(m) + " already fused into block " +
                            std::to_string(b.id));
      }
      auto [pos, fresh] = owner.emplace(b.id, k);
      if (!fresh && pos->second != k) {
        throw ConflictError("node " + std::to_string(m) + " claimed by two candidates");
      }
    }
  }

  int next_id = 0;
  for (const FusedBlock& b : fused.blocks_) next_id = std::max(next_id, b.id + 1);
  std::vector<std::vector<FusedBlock>> replacement(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const FusionCandidate& c = *candidates[k];
    if (c.law == FusionLaw::Commutative) {
      const NodeId first = c.node_ids.front();
      const Expr& top = c.rewritten_expr;
      replacement[k].push_back(make_block(next_id++, top.args[0], first, {first}, c.law));
      Expr second = top;
      second.args[0] = Expr::ref(first, top.args[0].shape);
      replacement[k].push_back(make_block(next_id++, std::move(second), c.root,
                                          {c.node_ids.begin() + 1, c.node_ids.end()}, c.law));
    } else {
      replacement[k].push_back(make_block(next_id++, c.rewritten_expr, c.root, c.node_ids, c.law));
    }
  }

  // Each replacement takes the place of the first block it absorbs.
  std::vector<FusedBlock> blocks;
  blocks.reserve(fused.blocks_.size());
  std::vector<bool> inserted(candidates.size(), false);
  for (const FusedBlock& b : fused.blocks_) {
    auto it = owner.find(b.id);
    if (it == owner.end()) {
      blocks.push_back(b);
      continue;
    }
    if (!inserted[it->second]) {
      for (FusedBlock& r : replacement[it->second]) blocks.push_back(std::move(r));
      inserted[it->second] = true;
    }
  }

  FusedGraph out;
  out.source_ = fused.source_;
  out.blocks_ = topo_sort(out.source_, std::move(blocks));
  out.reindex();
  return out;
}

FusedGraph apply_candidate(const FusedGraph& fused, const FusionCandidate& c) {
  const FusionCandidate* one[] = {&c};
  return apply_candidates(fused, one);
}

FusedGraph apply_candidate(const Graph& graph, const FusionCandidate& c) {
  return apply_candidate(FusedGraph(graph), c);
}

// ---------------------------------------------------------------------------
// Greedy selection

FusionResult fuse(const Graph& graph, const FusionPolicy& policy) {
  std::vector<FusionCandidate> all = enumerate_candidates(graph);
  std::vector<FusionCandidate> order;
  for (auto& c : all) {
    if (policy.enabled.count(c.law)) order.push_back(std::move(c));
  }
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.metrics.memory_reduction != b.metrics.memory_reduction) {
      return a.metrics.memory_reduction > b.metrics.memory_reduction;
    }
    if (a.metrics.compute_enlargement != b.metrics.compute_enlargement) {
      return a.metrics.compute_enlargement > b.metrics.compute_enlargement;
    }
    return *std::min_element(a.node_ids.begin(), a.node_ids.end()) <
           *std::min_element(b.node_ids.begin(), b.node_ids.end());
  });

  FusionResult result{FusedGraph(graph), {}};
  FusionReport& report = result.report;
  report.candidates = static_cast<std::int64_t>(order.size());
  std::vector<const FusionCandidate*> accepted;
  std::unordered_set<NodeId> taken;
  for (const FusionCandidate& c : order) {
    if (std::any_of(c.node_ids.begin(), c.node_ids.end(),
                    [&](NodeId id) { return taken.count(id) > 0; })) {
      continue;
    }
    taken.insert(c.node_ids.begin(), c.node_ids.end());
    accepted.push_back(&c);
  }
  try {
    result.graph = apply_candidates(result.graph, accepted);
  } catch (const ConflictError&) {
    // Individually convex candidates can still form a cycle together; retry
    // one at a time and skip the offenders.
    accepted.clear();
    taken.clear();
    for (const FusionCandidate& c : order) {
      if (std::any_of(c.node_ids.begin(), c.node_ids.end(),
                      [&](NodeId id) { return taken.count(id) > 0; })) {
        continue;
      }
      try {
        result.graph = apply_candidate(result.graph, c);
      } catch (const ConflictError&) {
        continue;
      }
      taken.insert(c.node_ids.begin(), c.node_ids.end());
      accepted.push_back(&c);
    }
  }
  for (const FusionCandidate* c : accepted) {
    report.rows.push_back({c->law, c->node_ids, c->before, c->after, c->metrics,
                           to_string(c->original_expr), to_string(c->rewritten_expr)});
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) {
    return *std::min_element(a.node_ids.begin(), a.node_ids.end()) <
           *std::min_element(b.node_ids.begin(), b.node_ids.end());
  });

  // Operator counts take each accepted pattern in expression form, the same
  // convention as the per-row counts.
  const LayerCensus lc = census(graph);
  report.original.layers = lc.total;
  report.original.ops = lc.total;
  for (const FusionReportRow& r : report.rows) {
    report.original.ops += r.before.ops - r.before.layers;
  }
  report.fused = result.graph.counts();
  report.intermediate_bytes_before = intermediate_bytes(graph);
  report.intermediate_bytes_after = result.graph.intermediate_bytes();
  return result;
}

std::string format_report_table(const FusionReport& report) {
  std::ostringstream os;
  os << report.candidates << " candidates, " << report.rows.size() << " accepted\n";
  if (report.rows.empty()) return os.str();
  os << std::left << std::setw(4) << "#" << std::setw(20) << "law" << std::setw(12)
     << "before" << std::setw(12) << "after" << std::setw(14) << "mem_saved"
     << "compute_x\n";
  int i = 1;
  for (const FusionReportRow& r : report.rows) {
    std::ostringstream before, after, ratio;
    before << r.before.layers << '/' << r.before.ops;
    after << r.after.layers << '/' << r.after.ops;
    ratio << std::fixed << std::setprecision(3) << r.metrics.compute_enlargement;
    os << std::left << std::setw(4) << i++ << std::setw(20) << to_string(r.law)
       << std::setw(12) << before.str() << std::setw(12) << after.str() << std::setw(14)
       << r.metrics.memory_reduction << ratio.str() << '\n';
  }
  os << "total LC/OC " << report.original.layers << '/' << report.original.ops << " -> "
     << report.fused.layers << '/' << report.fused.ops << ", intermediate bytes "
     << report.intermediate_bytes_before << " -> " << report.intermediate_bytes_after << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Fixture

Graph build_seven_case_fixture() {
  GraphBuilder b;
  const Shape sq{4, 4};
  auto w = [&](const char* name, Shape s = {4, 4}) { return b.weight(name, std::move(s)); };

  NodeId a = b.input("A", sq);
  NodeId x = b.op(OpKind::MatMul, {a, w("B")});
  x = b.op(OpKind::Reciprocal, {x});
  x = b.op(OpKind::Add, {x, w("C")});

  x = b.op(OpKind::Add, {x, w("D")});
  x = b.op(OpKind::Sub, {x, w("E")});

  NodeId t = b.op(OpKind::Add, {x, w("F")});
  NodeId g = b.op(OpKind::Mul, {t, w("G")});
  NodeId h = b.op(OpKind::Mul, {t, w("H")});
  x = b.op(OpKind::Add, {g, h});

  t = b.op(OpKind::Add, {x, w("I")});
  NodeId r1 = b.op(OpKind::Reciprocal, {t});
  NodeId r2 = b.op(OpKind::Reciprocal, {b.op(OpKind::Mul, {t, w("J")})});
  b.output("out1", b.op(OpKind::Mul, {r1, r2}));

  NodeId k = b.input("K", sq);
  NodeId left = b.op(OpKind::Reciprocal, {b.op(OpKind::Add, {k, w("L")})});
  NodeId right = b.op(OpKind::Reciprocal, {b.op(OpKind::Mul, {k, w("M")})});
  x = b.op(OpKind::Concat, {left, right}, {{"axis", {0}}});

  x = b.op(OpKind::Mul, {x, w("N", {8, 4})});
  x = b.op(OpKind::Gather, {x, b.literal("idx", {4}, {0, 2, 4, 6})});
  x = b.op(OpKind::Add, {x, w("O")});

  x = b.op(OpKind::Slice, {x}, {{"axis", {0}}, {"begin", {0}}, {"end", {2}}});
  x = b.op(OpKind::Mul, {x, w("P", {2, 4})});
  b.output("out2", b.op(OpKind::Sub, {x, w("Q", {2, 4})}));
  return b.build();
}

}  // namespace canao
