#include <algorithm>
#include <numeric>

#include "canao/error.hpp"
#include "canao/perf_model.hpp"

namespace canao {

namespace {

constexpr std::size_t kMaxRank = 4;

using Mask = unsigned;

bool in_region(const Expr& e) {
  return !e.is_leaf() && (is_elementwise(e.kind) || e.kind == OpKind::Broadcast);
}

class Lowerer {
 public:
  Lowerer(const FusedBlock& block, const Graph& source) : block_(block), source_(source) {}

  LoopNest run() {
    const Shape& out = block_.shape;
    rank_ = out.size();
    check_rank(block_.expr);
    nest_.block_id = block_.id;
    nest_.extents = out;
    nest_.useful_flops = expr_flops(block_.expr);
    nest_.write = make_access(block_.output, out);
    nest_.write.intermediate = !source_.is_output(block_.output);
    nest_.permutable = is_elementwise(block_.expr.kind);
    all_ = rank_ == 0 ? 0u : (1u << rank_) - 1u;

    Statement root;
    root.text = to_string(block_.expr);
    root.loops = loops_of(all_);
    if (!nest_.permutable) {
      root.opaque = true;
      root.flops = nest_.useful_flops;
      read_opaque(block_.expr, root);
      nest_.statements.push_back(std::move(root));
    } else {
      nest_.statements.push_back(Statement{});
      deps(block_.expr);
      root.flops = nest_.useful_flops;
      walk(block_.expr, root, true);
      nest_.statements.front() = std::move(root);
    }

    for (const Access& a : nest_.accesses) {
      if (a.intermediate) nest_.intermediate_bytes += a.bytes;
    }
    if (nest_.write.intermediate) nest_.intermediate_bytes += nest_.write.bytes;
    return std::move(nest_);
  }

 private:
  void check_rank(const Expr& e) const {
    if (e.shape.size() > kMaxRank) {
      throw LoweringError(std::string(to_string(e.kind)) + " in block " + std::to_string(block_.id) +
                          ": rank " + std::to_string(e.shape.size()) + " exceeds " +
                          std::to_string(kMaxRank));
    }
    for (const Expr& a : e.args) check_rank(a);
  }

  // Trailing alignment onto the nest; unit dimensions are not indexed.
  Access make_access(NodeId value, const Shape& shape) const {
    Access a;
    a.value = value;
    a.shape = shape;
    a.bytes = numel(shape) * kElementBytes;
    const std::size_t offset = rank_ - std::min(rank_, shape.size());
    for (std::size_t d = 0; d < shape.size(); ++d) {
      const bool indexed = shape[d] > 1 && shape.size() <= rank_;
      a.dim_loops.push_back(indexed ? static_cast<int>(offset + d) : -1);
    }
    return a;
  }

  Mask mask_of(const Shape& shape) const {
    Mask m = 0;
    const std::size_t offset = rank_ - std::min(rank_, shape.size());
    for (std::size_t d = 0; d < shape.size() && d + offset < rank_; ++d) {
      if (shape[d] > 1) m |= 1u << (offset + d);
    }
    return m;
  }

  static std::vector<int> loops_of(Mask m) {
    std::vector<int> out;
    for (int i = 0; i < 32; ++i) {
      if (m & (1u << i)) out.push_back(i);
    }
    return out;
  }

  int access_index(NodeId value, const Shape& shape, bool opaque) {
    for (std::size_t i = 0; i < nest_.accesses.size(); ++i) {
      Access& a = nest_.accesses[i];
      if (a.value != value) continue;
      if (!opaque && a.opaque) {
        const Access fresh = make_access(value, shape);
        a.dim_loops = fresh.dim_loops;
        a.opaque = false;
      }
      return static_cast<int>(i);
    }
    Access a = make_access(value, shape);
    a.opaque = opaque;
    const Node& n = source_.node(value);
    a.intermediate = !is_leaf(n.kind);
    nest_.accesses.push_back(std::move(a));
    return static_cast<int>(nest_.accesses.size() - 1);
  }

  void read_opaque(const Expr& e, Statement& stmt) {
    if (e.is_leaf()) {
      const int idx = access_index(e.leaf, e.shape, true);
      if (std::find(stmt.reads.begin(), stmt.reads.end(), idx) == stmt.reads.end()) {
        stmt.reads.push_back(idx);
      }
      return;
    }
    for (const Expr& a : e.args) read_opaque(a, stmt);
  }

  Mask deps(const Expr& e) {
    Mask m = 0;
    if (in_region(e)) {
      for (const Expr& a : e.args) m |= deps(a);
    } else {
      m = mask_of(e.shape);
    }
    deps_[&e] = m;
    return m;
  }

  // Elementwise operators of the region rooted at e.
  static std::int64_t region_ops(const Expr& e) {
    if (!in_region(e)) return 0;
    std::int64_t n = e.kind == OpKind::Broadcast ? 0 : 1;
    for (const Expr& a : e.args) n += region_ops(a);
    return n;
  }

  void walk(const Expr& e, Statement& stmt, bool is_root) {
    if (e.is_leaf()) {
      const int idx = access_index(e.leaf, e.shape, false);
      if (std::find(stmt.reads.begin(), stmt.reads.end(), idx) == stmt.reads.end()) {
        stmt.reads.push_back(idx);
      }
      return;
    }
    if (!in_region(e)) {
      Statement op;
      op.text = to_string(e);
      op.opaque = true;
      op.flops = expr_flops(e);
      op.loops = loops_of(mask_of(e.shape));
      read_opaque(e, op);
      nest_.statements.push_back(std::move(op));
      return;
    }
    if (e.kind != OpKind::Broadcast) {
      const Mask m = deps_.at(&e);
      if (!is_root && !in_marked_ && m != all_) {
        Statement marked;
        marked.text = to_string(e);
        marked.redundant = true;
        marked.loops = loops_of(m);
        marked.flops = expr_flops(e);
        marked.ops = region_ops(e);
        Statement inner;
        in_marked_ = true;
        for (const Expr& a : e.args) walk(a, inner, false);
        in_marked_ = false;
        marked.reads = std::move(inner.reads);
        nest_.statements.push_back(std::move(marked));
        return;
      }
      ++stmt.ops;
    }
    for (const Expr& a : e.args) walk(a, stmt, false);
  }

  const FusedBlock& block_;
  const Graph& source_;
  std::size_t rank_ = 0;
  Mask all_ = 0;
  bool in_marked_ = false;
  LoopNest nest_;
  std::map<const Expr*, Mask> deps_;
};

// Arithmetic repeated by a redundant statement evaluated at every point.
std::int64_t recompute_cost(const LoopNest& nest, const Statement& s) {
  std::int64_t needed = 1;
  for (int l : s.loops) needed *= nest.extents[static_cast<std::size_t>(l)];
  std::int64_t full = 1;
  for (auto e : nest.extents) full *= e;
  return (full - needed) * s.ops;
}

bool contiguous(const Access& a, const std::vector<int>& position) {
  if (a.opaque) return true;
  int innermost_dim = -1, best = -1;
  int last_dim = -1;
  for (std::size_t d = 0; d < a.dim_loops.size(); ++d) {
    if (a.shape[d] > 1) last_dim = static_cast<int>(d);
    const int loop = a.dim_loops[d];
    if (loop < 0) continue;
    if (position[static_cast<std::size_t>(loop)] > best) {
      best = position[static_cast<std::size_t>(loop)];
      innermost_dim = static_cast<int>(d);
    }
  }
  return innermost_dim < 0 || innermost_dim == last_dim;
}

}  // namespace

int LoopNest::marker_count() const {
  return static_cast<int>(std::count_if(statements.begin(), statements.end(),
                                        [](const Statement& s) { return s.redundant; }));
}

LoopNest lower(const FusedBlock& block, const Graph& source) {
  return Lowerer(block, source).run();
}

std::vector<ScheduleVersion> enumerate_versions(const LoopNest& nest) {
  const std::size_t rank = nest.extents.size();
  std::vector<int> order(rank);
  std::iota(order.begin(), order.end(), 0);
  std::vector<ScheduleVersion> out;
  do {
    ScheduleVersion v;
    v.id = static_cast<int>(out.size());
    v.order = order;
    v.useful_flops = nest.useful_flops;
    std::vector<int> position(rank);
    for (std::size_t p = 0; p < rank; ++p) position[static_cast<std::size_t>(order[p])] = static_cast<int>(p);

    for (const Statement& s : nest.statements) {
      if (!s.redundant) continue;
      int deepest_dep = -1, shallowest_free = static_cast<int>(rank);
      std::vector<bool> dep(rank, false);
      for (int l : s.loops) {
        dep[static_cast<std::size_t>(l)] = true;
        deepest_dep = std::max(deepest_dep, position[static_cast<std::size_t>(l)]);
      }
      for (std::size_t l = 0; l < rank; ++l) {
        if (!dep[l]) shallowest_free = std::min(shallowest_free, position[l]);
      }
      const bool hoist = deepest_dep < shallowest_free;
      v.recompute.push_back(!hoist);
      if (!hoist) v.redundant_flops += recompute_cost(nest, s);
    }
    for (const Access& a : nest.accesses) {
      if (!contiguous(a, position)) {
        v.noncontiguous_bytes += a.bytes;
      } else if (!a.intermediate) {
        v.contiguous_bytes += a.bytes;
      }
    }
    if (!nest.write.intermediate) v.contiguous_bytes += nest.write.bytes;
    out.push_back(std::move(v));
  } while (nest.permutable && std::next_permutation(order.begin(), order.end()));
  return out;
}

CostBreakdown version_cost(const ScheduleVersion& v, const DeviceProfile& d,
                           std::int64_t intermediate_bytes) {
  CostBreakdown c;
  c.compute_s = static_cast<double>(v.useful_flops + v.redundant_flops) / d.peak_flops_per_s;
  c.memory_s = (static_cast<double>(v.contiguous_bytes) +
                d.noncontiguous_penalty * static_cast<double>(v.noncontiguous_bytes) +
                d.intermediate_penalty * static_cast<double>(intermediate_bytes)) /
               d.mem_bandwidth_bytes_per_s;
  return c;
}

FusedGraph codegen_example(std::int64_t m, std::int64_t n) {
  GraphBuilder b;
  NodeId in0 = b.input("A", {m, n});
  NodeId in1 = b.weight("X", {m, n});
  NodeId in2 = b.input("B", {1, n});
  NodeId in3 = b.weight("Y", {1, n});
  NodeId mul1 = b.op(OpKind::Mul, {in0, in1}, {}, "Mul-1");
  NodeId mul2 = b.op(OpKind::Mul, {in2, in3}, {}, "Mul-2");
  NodeId row = b.op(OpKind::Broadcast, {mul2}, {{"shape", {m, n}}});
  NodeId add = b.op(OpKind::Add, {mul1, row}, {}, "Add");
  b.output("out", add);
  Graph g = b.build();

  const Expr e = Expr::op(
      OpKind::Add,
      {Expr::op(OpKind::Mul, {Expr::ref(in0, {m, n}), Expr::ref(in1, {m, n})}),
       Expr::op(OpKind::Broadcast,
                {Expr::op(OpKind::Mul, {Expr::ref(in2, {1, n}), Expr::ref(in3, {1, n})})},
                {{"shape", {m, n}}})});
  FusedBlock block;
  block.id = 0;
  block.expr = e;
  block.inputs = leaves(e);
  block.output = add;
  block.shape = e.shape;
  block.law = FusionLaw::DataTransportation;
  block.members = {mul1, mul2, row, add};
  return FusedGraph(std::move(g), {std::move(block)});
}

}  // namespace canao
