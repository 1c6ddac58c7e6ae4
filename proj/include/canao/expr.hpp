#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "canao/graph_ir.hpp"

namespace canao {

// Expression tree over block inputs. A node with kind Input is a leaf that
// refers to a value produced outside the tree (graph input, weight, or the
// output of another block).
struct Expr {
  OpKind kind = OpKind::Input;
  NodeId leaf = -1;
  Attrs attrs;
  Shape shape;
  std::vector<Expr> args;

  static Expr ref(NodeId value, Shape shape);
  // Infers the result shape; throws ShapeError.
  static Expr op(OpKind kind, std::vector<Expr> args, Attrs attrs = {});

  bool is_leaf() const { return kind == OpKind::Input; }
  bool operator==(const Expr&) const = default;
};

// Algebra operators in tree form; shared subexpressions count once per use.
std::int64_t op_count(const Expr& e);
std::int64_t expr_flops(const Expr& e);
// Distinct leaf references in first-use order.
std::vector<NodeId> leaves(const Expr& e);
std::string to_string(const Expr& e);

}  // namespace canao
