#include "canao/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "canao/error.hpp"

namespace canao {

TensorValue TensorValue::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

TensorValue TensorValue::filled(Shape shape, double value) {
  TensorValue t;
  t.data.assign(static_cast<std::size_t>(numel(shape)), value);
  t.shape = std::move(shape);
  return t;
}

namespace {

using Strides = std::vector<std::int64_t>;

Strides row_major_strides(const Shape& shape) {
  Strides s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// Strides of `in` expressed over the dimensions of `out`; broadcast
// dimensions get stride zero.
Strides broadcast_strides(const Shape& in, const Shape& out) {
  Strides natural = row_major_strides(in);
  Strides s(out.size(), 0);
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    s[offset + i] = in[i] == 1 ? 0 : natural[i];
  }
  return s;
}

// Calls fn(flat_out, offsets...) across `shape` in row-major order.
template <std::size_t N, typename Fn>
void for_each_index(const Shape& shape, const std::array<Strides, N>& strides, Fn fn) {
  const std::int64_t total = numel(shape);
  if (total == 0) return;
  std::vector<std::int64_t> idx(shape.size(), 0);
  std::array<std::int64_t, N> off{};
  for (std::int64_t flat = 0; flat < total; ++flat) {
    fn(flat, off);
    for (std::size_t d = shape.size(); d-- > 0;) {
      ++idx[d];
      for (std::size_t k = 0; k < N; ++k) off[k] += strides[k][d];
      if (idx[d] < shape[d]) break;
      for (std::size_t k = 0; k < N; ++k) off[k] -= strides[k][d] * shape[d];
      idx[d] = 0;
    }
  }
}

template <typename Fn>
TensorValue binary_op(const TensorValue& a, const TensorValue& b,
                      const Shape& out_shape, Fn fn) {
  TensorValue out = TensorValue::zeros(out_shape);
  std::array<Strides, 2> strides{broadcast_strides(a.shape, out_shape),
                                 broadcast_strides(b.shape, out_shape)};
  for_each_index<2>(out_shape, strides, [&](std::int64_t flat, const auto& off) {
    out.data[static_cast<std::size_t>(flat)] =
        fn(a.data[static_cast<std::size_t>(off[0])], b.data[static_cast<std::size_t>(off[1])]);
  });
  return out;
}

template <typename Fn>
TensorValue unary_op(const TensorValue& a, Fn fn) {
  TensorValue out = a;
  for (double& v : out.data) v = fn(v);
  return out;
}

std::int64_t axis_attr(const Attrs& attrs, std::size_t rank) {
  auto axis = attrs.at("axis").front();
  if (axis < 0) axis += static_cast<std::int64_t>(rank);
  return axis;
}

TensorValue reduce(const TensorValue& in, std::size_t axis, bool is_max,
                   const Shape& out_shape) {
  std::int64_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= in.shape[d];
  for (std::size_t d = axis + 1; d < in.shape.size(); ++d) inner *= in.shape[d];
  const std::int64_t extent = in.shape[axis];
  TensorValue out = TensorValue::zeros(out_shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      double acc = is_max ? -INFINITY : 0.0;
      for (std::int64_t k = 0; k < extent; ++k) {
        const double v = in.data[static_cast<std::size_t>((o * extent + k) * inner + i)];
        acc = is_max ? std::max(acc, v) : acc + v;
      }
      out.data[static_cast<std::size_t>(o * inner + i)] = acc;
    }
  }
  return out;
}

TensorValue matmul(const TensorValue& a, const TensorValue& b, const Shape& out_shape) {
  const std::size_t r = out_shape.size();
  const std::int64_t m = out_shape[r - 2], n = out_shape[r - 1], k = a.shape.back();
  Shape batch(out_shape.begin(), out_shape.end() - 2);
  Shape a_batch(a.shape.begin(), a.shape.end() - 2);
  Shape b_batch(b.shape.begin(), b.shape.end() - 2);
  std::array<Strides, 2> strides{broadcast_strides(a_batch, batch),
                                 broadcast_strides(b_batch, batch)};
  TensorValue out = TensorValue::zeros(out_shape);
  for_each_index<2>(batch, strides, [&](std::int64_t flat, const auto& off) {
    const double* pa = a.data.data() + off[0] * m * k;
    const double* pb = b.data.data() + off[1] * k * n;
    double* po = out.data.data() + flat * m * n;
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t p = 0; p < k; ++p) {
        const double av = pa[i * k + p];
        for (std::int64_t j = 0; j < n; ++j) po[i * n + j] += av * pb[p * n + j];
      }
    }
  });
  return out;
}

}  // namespace

TensorValue evaluate_op(OpKind kind, std::span<const TensorValue* const> in,
                        const Attrs& attrs, const Shape& out_shape) {
  switch (kind) {
    case OpKind::MatMul:
      return matmul(*in[0], *in[1], out_shape);
    case OpKind::Add:
      return binary_op(*in[0], *in[1], out_shape, [](double x, double y) { return x + y; });
    case OpKind::Sub:
      return binary_op(*in[0], *in[1], out_shape, [](double x, double y) { return x - y; });
    case OpKind::Mul:
      return binary_op(*in[0], *in[1], out_shape, [](double x, double y) { return x * y; });
    case OpKind::Reciprocal:
      return unary_op(*in[0], [](double x) { return 1.0 / x; });
    case OpKind::Power: {
      const double e = static_cast<double>(attrs.at("exponent").front());
      return unary_op(*in[0], [e](double x) { return std::pow(x, e); });
    }
    case OpKind::Exp:
      return unary_op(*in[0], [](double x) { return std::exp(x); });
    case OpKind::Sqrt:
      return unary_op(*in[0], [](double x) { return std::sqrt(x); });
    case OpKind::Erf:
      return unary_op(*in[0], [](double x) { return std::erf(x); });
    case OpKind::ReduceSum:
    case OpKind::ReduceMax: {
      const auto axis = static_cast<std::size_t>(axis_attr(attrs, in[0]->shape.size()));
      return reduce(*in[0], axis, kind == OpKind::ReduceMax, out_shape);
    }
    case OpKind::Broadcast: {
      TensorValue out = TensorValue::zeros(out_shape);
      std::array<Strides, 1> strides{broadcast_strides(in[0]->shape, out_shape)};
      for_each_index<1>(out_shape, strides, [&](std::int64_t flat, const auto& off) {
        out.data[static_cast<std::size_t>(flat)] = in[0]->data[static_cast<std::size_t>(off[0])];
      });
      return out;
    }
    case OpKind::Reshape: {
      TensorValue out = *in[0];
      out.shape = out_shape;
      return out;
    }
    case OpKind::Transpose: {
      const auto& perm = attrs.at("perm");
      const Strides src = row_major_strides(in[0]->shape);
      Strides permuted(perm.size());
      for (std::size_t i = 0; i < perm.size(); ++i) {
        permuted[i] = src[static_cast<std::size_t>(perm[i])];
      }
      TensorValue out = TensorValue::zeros(out_shape);
      std::array<Strides, 1> strides{permuted};
      for_each_index<1>(out_shape, strides, [&](std::int64_t flat, const auto& off) {
        out.data[static_cast<std::size_t>(flat)] = in[0]->data[static_cast<std::size_t>(off[0])];
      });
      return out;
    }
    case OpKind::Slice: {
      const TensorValue& x = *in[0];
      const auto axis = static_cast<std::size_t>(axis_attr(attrs, x.shape.size()));
      const std::int64_t begin = attrs.at("begin").front();
      std::int64_t outer = 1, inner = 1;
      for (std::size_t d = 0; d < axis; ++d) outer *= x.shape[d];
      for (std::size_t d = axis + 1; d < x.shape.size(); ++d) inner *= x.shape[d];
      const std::int64_t len = out_shape[axis], extent = x.shape[axis];
      TensorValue out = TensorValue::zeros(out_shape);
      for (std::int64_t o = 0; o < outer; ++o) {
        const auto src = x.data.begin() + (o * extent + begin) * inner;
        std::copy(src, src + len * inner, out.data.begin() + o * len * inner);
      }
      return out;
    }
    case OpKind::Concat: {
      const auto axis = static_cast<std::size_t>(axis_attr(attrs, out_shape.size()));
      std::int64_t outer = 1, inner = 1;
      for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
      for (std::size_t d = axis + 1; d < out_shape.size(); ++d) inner *= out_shape[d];
      TensorValue out = TensorValue::zeros(out_shape);
      std::int64_t pos = 0;
      for (const TensorValue* part : in) {
        const std::int64_t len = part->shape[axis];
        for (std::int64_t o = 0; o < outer; ++o) {
          const auto src = part->data.begin() + o * len * inner;
          std::copy(src, src + len * inner,
                    out.data.begin() + (o * out_shape[axis] + pos) * inner);
        }
        pos += len;
      }
      return out;
    }
    case OpKind::Gather: {
      const TensorValue& data = *in[0];
      const TensorValue& idx = *in[1];
      const std::int64_t rows = data.shape[0];
      const std::int64_t row = numel(data.shape) / rows;
      TensorValue out = TensorValue::zeros(out_shape);
      for (std::size_t i = 0; i < idx.data.size(); ++i) {
        auto r = static_cast<std::int64_t>(std::floor(idx.data[i]));
        r = std::clamp<std::int64_t>(r, 0, rows - 1);
        std::copy(data.data.begin() + r * row, data.data.begin() + (r + 1) * row,
                  out.data.begin() + static_cast<std::int64_t>(i) * row);
      }
      return out;
    }
    case OpKind::Constant:
    case OpKind::Input:
      break;
  }
  throw Error("evaluate_op: " + std::string(to_string(kind)) + " is not executable");
}

void round_to(TensorValue& t, Precision precision) {
  if (precision == Precision::F64) return;
  for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

bool all_finite(const TensorValue& t) {
  return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace canao
