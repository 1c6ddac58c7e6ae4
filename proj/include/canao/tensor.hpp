#pragma once

#include <span>
#include <vector>

#include "canao/graph_ir.hpp"

namespace canao {

enum class Precision { F32, F64 };

// Row-major dense tensor. F32 precision is emulated by rounding every
// produced element to float.
struct TensorValue {
  Shape shape;
  std::vector<double> data;

  static TensorValue zeros(Shape shape);
  static TensorValue filled(Shape shape, double value);
  bool operator==(const TensorValue&) const = default;
};

// Naive reference kernels. `out_shape` must be the inferred shape.
TensorValue evaluate_op(OpKind kind, std::span<const TensorValue* const> inputs,
                        const Attrs& attrs, const Shape& out_shape);

void round_to(TensorValue& t, Precision precision);
bool all_finite(const TensorValue& t);

}  // namespace canao
