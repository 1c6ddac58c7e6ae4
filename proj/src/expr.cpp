#include "canao/expr.hpp"

#include <algorithm>
#include <sstream>

namespace canao {

Expr Expr::ref(NodeId value, Shape shape) {
  Expr e;
  e.kind = OpKind::Input;
  e.leaf = value;
  e.shape = std::move(shape);
  return e;
}

Expr Expr::op(OpKind kind, std::vector<Expr> args, Attrs attrs) {
  std::vector<Shape> shapes;
  shapes.reserve(args.size());
  for (const Expr& a : args) shapes.push_back(a.shape);
  Expr e;
  e.kind = kind;
  e.shape = infer_shape(kind, shapes, attrs);
  e.attrs = std::move(attrs);
  e.args = std::move(args);
  return e;
}

std::int64_t op_count(const Expr& e) {
  if (e.is_leaf()) return 0;
  std::int64_t n = 1;
  for (const Expr& a : e.args) n += op_count(a);
  return n;
}

std::int64_t expr_flops(const Expr& e) {
  if (e.is_leaf()) return 0;
  std::vector<Shape> shapes;
  std::int64_t total = 0;
  for (const Expr& a : e.args) {
    shapes.push_back(a.shape);
    total += expr_flops(a);
  }
  return total + op_flops(e.kind, shapes, e.shape);
}

namespace {

void collect_leaves(const Expr& e, std::vector<NodeId>& out) {
  if (e.is_leaf()) {
    if (std::find(out.begin(), out.end(), e.leaf) == out.end()) out.push_back(e.leaf);
    return;
  }
  for (const Expr& a : e.args) collect_leaves(a, out);
}

void print(const Expr& e, std::ostream& os) {
  if (e.is_leaf()) {
    os << '%' << e.leaf;
    return;
  }
  os << to_string(e.kind);
  if (e.kind == OpKind::Power) os << '[' << e.attrs.at("exponent").front() << ']';
  os << '(';
  for (std::size_t i = 0; i < e.args.size(); ++i) {
    if (i) os << ", ";
    print(e.args[i], os);
  }
  os << ')';
}

}  // namespace

std::vector<NodeId> leaves(const Expr& e) {
  std::vector<NodeId> out;
  collect_leaves(e, out);
  return out;
}

std::string to_string(const Expr& e) {
  std::ostringstream os;
  print(e, os);
  return os.str();
}

}  // namespace canao
