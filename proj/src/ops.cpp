#include "poselift/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <utility>

namespace poselift::ops {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

NodePtr fresh_node(Shape shape, const char* op) {
  auto n = std::make_shared<TensorNode>();
  n->values.resize(shape_numel(shape));
  n->shape = std::move(shape);
  n->op = op;
  n->seq = detail::next_seq();
  return n;
}

void attach(const NodePtr& out, std::vector<NodePtr> parents,
            std::function<void()> fn) {
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void check_axis(const Tensor& t, std::size_t axis, const char* op) {
  if (axis >= t.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(t.shape()));
  }
}

// Flattens a shape around `axis` into [outer, extent, inner].
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Trailing-aligned broadcast layout: per-operand strides over the output
// index space, zero on expanded axes.
struct BcastPlan {
  Shape out_shape;
  std::vector<std::size_t> a_strides, b_strides;
  std::size_t numel = 1;
};

std::vector<std::size_t> aligned_strides(const Shape& shape, const Shape& out,
                                         const char* op, const char* side) {
  std::size_t pad = out.size() - shape.size();
  Shape padded(out.size(), 1);
  std::copy(shape.begin(), shape.end(), padded.begin() + pad);
  auto strides = row_major_strides(padded);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (padded[i] == out[i]) continue;
    if (padded[i] == 1) {
      strides[i] = 0;
    } else {
      throw ShapeError(std::string(op) + ": " + side + " axis " +
                       std::to_string(i) + " of " + shape_str(shape) +
                       " does not broadcast against " + shape_str(out));
    }
  }
  return strides;
}

BcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  BcastPlan plan;
  std::size_t rank = std::max(a.size(), b.size());
  plan.out_shape.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                       shape_str(b) + " conflict on axis " + std::to_string(i));
    }
    plan.out_shape[i] = std::max(da, db);
  }
  plan.a_strides = aligned_strides(a, plan.out_shape, op, "lhs");
  plan.b_strides = aligned_strides(b, plan.out_shape, op, "rhs");
  plan.numel = shape_numel(plan.out_shape);
  return plan;
}

// Walks the broadcast output space calling fn(out_flat, a_flat, b_flat).
template <typename Fn>
void for_each_bcast(const BcastPlan& plan, Fn&& fn) {
  const std::size_t rank = plan.out_shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t a_off = 0, b_off = 0;
  for (std::size_t flat = 0; flat < plan.numel; ++flat) {
    fn(flat, a_off, b_off);
    for (std::size_t axis = rank; axis-- > 0;) {
      ++idx[axis];
      a_off += plan.a_strides[axis];
      b_off += plan.b_strides[axis];
      if (idx[axis] < plan.out_shape[axis]) break;
      idx[axis] = 0;
      a_off -= plan.a_strides[axis] * plan.out_shape[axis];
      b_off -= plan.b_strides[axis] * plan.out_shape[axis];
    }
  }
}

// Shared implementation for add/sub/mul.
enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  auto plan = broadcast_plan(a.shape(), b.shape(), op);
  auto out = fresh_node(plan.out_shape, op);

  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out->values;
  if (a.shape() == b.shape()) {  // fast path
    switch (kind) {
      case BinKind::Add:
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
        break;
      case BinKind::Sub:
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
        break;
      case BinKind::Mul:
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
        break;
    }
  } else {
    for_each_bcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      switch (kind) {
        case BinKind::Add: ov[o] = av[ia] + bv[ib]; break;
        case BinKind::Sub: ov[o] = av[ia] - bv[ib]; break;
        case BinKind::Mul: ov[o] = av[ia] * bv[ib]; break;
      }
    });
  }

  if (a.requires_grad() || b.requires_grad()) {
    NodePtr an = a.node(), bn = b.node();
    TensorNode* op_node = out.get();
    attach(out, {an, bn}, [an, bn, op_node, plan, kind]() {
      const auto& g = op_node->grad;
      const bool ga = an->requires_grad, gb = bn->requires_grad;
      if (ga) an->ensure_grad();
      if (gb) bn->ensure_grad();
      for_each_bcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        switch (kind) {
          case BinKind::Add:
            if (ga) an->grad[ia] += g[o];
            if (gb) bn->grad[ib] += g[o];
            break;
          case BinKind::Sub:
            if (ga) an->grad[ia] += g[o];
            if (gb) bn->grad[ib] -= g[o];
            break;
          case BinKind::Mul:
            if (ga) an->grad[ia] += g[o] * bn->values[ib];
            if (gb) bn->grad[ib] += g[o] * an->values[ia];
            break;
        }
      });
    });
  }
  return Tensor::wrap(out);
}

// Elementwise unary op; dydx receives (input value, output value).
template <typename FwdFn, typename GradFn>
Tensor unary_op(const Tensor& x, const char* op, FwdFn fwd, GradFn dydx) {
  require_defined(x, op);
  auto out = fresh_node(x.shape(), op);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->values[i] = fwd(xv[i]);
  if (x.requires_grad()) {
    NodePtr xn = x.node();
    TensorNode* op_node = out.get();
    attach(out, {xn}, [xn, op_node, dydx]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < xn->values.size(); ++i) {
        xn->grad[i] += op_node->grad[i] * dydx(xn->values[i], op_node->values[i]);
      }
    });
  }
  return Tensor::wrap(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }

Tensor scalar_mul(const Tensor& a, double factor) {
  return unary_op(
      a, "scalar_mul", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands must have rank >= 2, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2], k = as[as.size() - 1];
  const std::size_t kb = bs[bs.size() - 2], n = bs[bs.size() - 1];
  if (k != kb) {
    throw ShapeError("matmul: inner axes differ, lhs " + shape_str(as) +
                     " vs rhs " + shape_str(bs));
  }
  Shape lead_a(as.begin(), as.end() - 2), lead_b(bs.begin(), bs.end() - 2);
  Shape lead;
  if (lead_a == lead_b) {
    lead = lead_a;
  } else if (lead_a.empty()) {
    lead = lead_b;
  } else if (lead_b.empty()) {
    lead = lead_a;
  } else {
    throw ShapeError("matmul: leading batch axes differ, lhs " + shape_str(as) +
                     " vs rhs " + shape_str(bs));
  }
  const std::size_t batches = shape_numel(lead);
  const std::size_t a_step = lead_a.empty() && !lead.empty() ? 0 : m * k;
  const std::size_t b_step = lead_b.empty() && !lead.empty() ? 0 : k * n;

  Shape out_shape = lead;
  out_shape.push_back(m);
  out_shape.push_back(n);
  auto out = fresh_node(out_shape, "matmul");
  for (std::size_t i = 0; i < batches; ++i) {
    ConstMatMap A(a.values().data() + i * a_step, m, k);
    ConstMatMap B(b.values().data() + i * b_step, k, n);
    MatMap C(out->values.data() + i * m * n, m, n);
    C.noalias() = A * B;
  }

  if (a.requires_grad() || b.requires_grad()) {
    NodePtr an = a.node(), bn = b.node();
    TensorNode* op_node = out.get();
    attach(out, {an, bn}, [an, bn, op_node, batches, a_step, b_step, m, k, n]() {
      const bool ga = an->requires_grad, gb = bn->requires_grad;
      if (ga) an->ensure_grad();
      if (gb) bn->ensure_grad();
      for (std::size_t i = 0; i < batches; ++i) {
        ConstMatMap G(op_node->grad.data() + i * m * n, m, n);
        if (ga) {
          ConstMatMap B(bn->values.data() + i * b_step, k, n);
          MatMap dA(an->grad.data() + i * a_step, m, k);
          dA.noalias() += G * B.transpose();
        }
        if (gb) {
          ConstMatMap A(an->values.data() + i * a_step, m, k);
          MatMap dB(bn->grad.data() + i * b_step, k, n);
          dB.noalias() += A.transpose() * G;
        }
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor transpose(const Tensor& x) {
  require_defined(x, "transpose");
  if (x.rank() < 2) {
    throw ShapeError("transpose: rank >= 2 required, got " + shape_str(x.shape()));
  }
  const Shape& xs = x.shape();
  const std::size_t m = xs[xs.size() - 2], n = xs[xs.size() - 1];
  Shape out_shape = xs;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  const std::size_t batches = x.numel() / (m * n);

  auto out = fresh_node(out_shape, "transpose");
  for (std::size_t i = 0; i < batches; ++i) {
    const double* src = x.values().data() + i * m * n;
    double* dst = out->values.data() + i * m * n;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) dst[c * m + r] = src[r * n + c];
  }
  if (x.requires_grad()) {
    NodePtr xn = x.node();
    TensorNode* op_node = out.get();
    attach(out, {xn}, [xn, op_node, batches, m, n]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < batches; ++i) {
        const double* g = op_node->grad.data() + i * m * n;
        double* dx = xn->grad.data() + i * m * n;
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += g[c * m + r];
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  auto out = fresh_node(std::move(shape), "reshape");
  out->values = x.values();
  if (x.requires_grad()) {
    NodePtr xn = x.node();
    TensorNode* op_node = out.get();
    attach(out, {xn}, [xn, op_node]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += op_node->grad[i];
    });
  }
  return Tensor::wrap(out);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  for (const Tensor& p : parts) require_defined(p, "concat");
  const Tensor& first = parts.front();
  check_axis(first, axis, "concat");
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.rank()) {
      throw ShapeError("concat: rank mismatch between " + shape_str(first.shape()) +
                       " and " + shape_str(p.shape()));
    }
    for (std::size_t i = 0; i < first.rank(); ++i) {
      if (i != axis && p.shape()[i] != first.shape()[i]) {
        throw ShapeError("concat: axis " + std::to_string(i) + " differs between " +
                         shape_str(first.shape()) + " and " + shape_str(p.shape()));
      }
    }
    total += p.shape()[axis];
  }
  Shape out_shape = first.shape();
  out_shape[axis] = total;
  auto out = fresh_node(out_shape, "concat");

  const auto os = split_at_axis(out_shape, axis);
  std::size_t offset = 0;  // running start along the concat axis
  std::vector<std::size_t> starts(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    starts[p] = offset;
    const auto ps = split_at_axis(parts[p].shape(), axis);
    const auto& pv = parts[p].values();
    for (std::size_t o = 0; o < os.outer; ++o) {
      double* dst = out->values.data() + (o * os.extent + offset) * os.inner;
      const double* src = pv.data() + o * ps.extent * ps.inner;
      std::copy(src, src + ps.extent * ps.inner, dst);
    }
    offset += ps.extent;
  }

  bool needs_grad = false;
  for (const Tensor& p : parts) needs_grad |= p.requires_grad();
  if (needs_grad) {
    std::vector<NodePtr> nodes;
    nodes.reserve(parts.size());
    for (const Tensor& p : parts) nodes.push_back(p.node());
    TensorNode* op_node = out.get();
    attach(out, nodes, [nodes, starts, op_node, os, axis]() {
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        if (!nodes[p]->requires_grad) continue;
        nodes[p]->ensure_grad();
        const auto ps = split_at_axis(nodes[p]->shape, axis);
        for (std::size_t o = 0; o < os.outer; ++o) {
          const double* g = op_node->grad.data() + (o * os.extent + starts[p]) * os.inner;
          double* dst = nodes[p]->grad.data() + o * ps.extent * ps.inner;
          for (std::size_t i = 0; i < ps.extent * ps.inner; ++i) dst[i] += g[i];
        }
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_defined(x, "slice");
  check_axis(x, axis, "slice");
  if (start + length > x.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + length) + ") exceeds axis " +
                     std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  auto out = fresh_node(out_shape, "slice");
  const auto xs = split_at_axis(x.shape(), axis);
  for (std::size_t o = 0; o < xs.outer; ++o) {
    const double* src = x.values().data() + (o * xs.extent + start) * xs.inner;
    double* dst = out->values.data() + o * length * xs.inner;
    std::copy(src, src + length * xs.inner, dst);
  }
  if (x.requires_grad()) {
    NodePtr xn = x.node();
    TensorNode* op_node = out.get();
    attach(out, {xn}, [xn, op_node, xs, start, length]() {
      xn->ensure_grad();
      for (std::size_t o = 0; o < xs.outer; ++o) {
        const double* g = op_node->grad.data() + o * length * xs.inner;
        double* dst = xn->grad.data() + (o * xs.extent + start) * xs.inner;
        for (std::size_t i = 0; i < length * xs.inner; ++i) dst[i] += g[i];
      }
    });
  }
  return Tensor::wrap(out);
}

std::vector<Tensor> split(const Tensor& x, std::size_t axis,
                          const std::vector<std::size_t>& sizes) {
  require_defined(x, "split");
  check_axis(x, axis, "split");
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != x.shape()[axis]) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) +
                     " but axis " + std::to_string(axis) + " of " +
                     shape_str(x.shape()) + " has " +
                     std::to_string(x.shape()[axis]));
  }
  std::vector<Tensor> parts;
  parts.reserve(sizes.size());
  std::size_t start = 0;
  for (std::size_t s : sizes) {
    parts.push_back(slice(x, axis, start, s));
    start += s;
  }
  return parts;
}

Tensor stack(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("stack: no inputs");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const Tensor& p : parts) {
    if (axis > p.rank()) {
      throw ShapeError("stack: axis " + std::to_string(axis) +
                       " out of range for shape " + shape_str(p.shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, axis);
}

Tensor sum(const Tensor& x, std::size_t axis) {
  require_defined(x, "sum");
  check_axis(x, axis, "sum");
  const auto xs = split_at_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  auto out = fresh_node(out_shape, "sum");
  const auto& xv = x.values();
  for (std::size_t o = 0; o < xs.outer; ++o) {
    for (std::size_t i = 0; i < xs.inner; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < xs.extent; ++j) {
        acc += xv[(o * xs.extent + j) * xs.inner + i];
      }
      out->values[o * xs.inner + i] = acc;
    }
  }
  if (x.requires_grad()) {
    NodePtr xn = x.node();
    TensorNode* op_node = out.get();
    attach(out, {xn}, [xn, op_node, xs]() {
      xn->ensure_grad();
      for (std::size_t o = 0; o < xs.outer; ++o)
        for (std::size_t j = 0; j < xs.extent; ++j)
          for (std::size_t i = 0; i < xs.inner; ++i)
            xn->grad[(o * xs.extent + j) * xs.inner + i] += op_node->grad[o * xs.inner + i];
    });
  }
  return Tensor::wrap(out);
}

Tensor sum_all(const Tensor& x) {
  require_defined(x, "sum_all");
  auto out = fresh_node(Shape{}, "sum_all");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out->values[0] = acc;
  if (x.requires_grad()) {
    NodePtr xn = x.node();
    TensorNode* op_node = out.get();
    attach(out, {xn}, [xn, op_node]() {
      xn->ensure_grad();
      const double g = op_node->grad[0];
      for (double& d : xn->grad) d += g;
    });
  }
  return Tensor::wrap(out);
}

Tensor mean(const Tensor& x, std::size_t axis) {
  check_axis(x, axis, "mean");
  return scalar_mul(sum(x, axis), 1.0 / static_cast<double>(x.shape()[axis]));
}

Tensor mean_all(const Tensor& x) {
  require_defined(x, "mean_all");
  return scalar_mul(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  check_axis(x, axis, "softmax");
  const auto xs = split_at_axis(x.shape(), axis);
  auto out = fresh_node(x.shape(), "softmax");
  const auto& xv = x.values();
  auto& ov = out->values;
  for (std::size_t o = 0; o < xs.outer; ++o) {
    for (std::size_t i = 0; i < xs.inner; ++i) {
      const auto lane = [&](std::size_t j) { return (o * xs.extent + j) * xs.inner + i; };
      double hi = xv[lane(0)];
      for (std::size_t j = 1; j < xs.extent; ++j) hi = std::max(hi, xv[lane(j)]);
      double total = 0.0;
      for (std::size_t j = 0; j < xs.extent; ++j) {
        ov[lane(j)] = std::exp(xv[lane(j)] - hi);
        total += ov[lane(j)];
      }
      for (std::size_t j = 0; j < xs.extent; ++j) ov[lane(j)] /= total;
    }
  }
  if (x.requires_grad()) {
    NodePtr xn = x.node();
    TensorNode* op_node = out.get();
    attach(out, {xn}, [xn, op_node, xs]() {
      xn->ensure_grad();
      const auto& y = op_node->values;
      const auto& g = op_node->grad;
      for (std::size_t o = 0; o < xs.outer; ++o) {
        for (std::size_t i = 0; i < xs.inner; ++i) {
          const auto lane = [&](std::size_t j) { return (o * xs.extent + j) * xs.inner + i; };
          double dot = 0.0;
          for (std::size_t j = 0; j < xs.extent; ++j) dot += g[lane(j)] * y[lane(j)];
          for (std::size_t j = 0; j < xs.extent; ++j)
            xn->grad[lane(j)] += y[lane(j)] * (g[lane(j)] - dot);
        }
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(x, "layer_norm");
  require_defined(gain, "layer_norm");
  require_defined(bias, "layer_norm");
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input has no last axis");
  const std::size_t ch = x.shape().back();
  if (gain.numel() != ch || bias.numel() != ch) {
    throw ShapeError("layer_norm: gain/bias need " + std::to_string(ch) +
                     " entries for input " + shape_str(x.shape()) + ", got " +
                     shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / ch;
  auto out = fresh_node(x.shape(), "layer_norm");
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * ch;
    double mean = 0.0;
    for (std::size_t c = 0; c < ch; ++c) mean += row[c];
    mean /= static_cast<double>(ch);
    double var = 0.0;
    for (std::size_t c = 0; c < ch; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(ch);  // population variance
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < ch; ++c) {
      const double xh = (row[c] - mean) * is;
      (*xhat)[r * ch + c] = xh;
      out->values[r * ch + c] = xh * gv[c] + bv[c];
    }
  }
  if (x.requires_grad() || gain.requires_grad() || bias.requires_grad()) {
    NodePtr xn = x.node(), gn = gain.node(), bn = bias.node();
    TensorNode* op_node = out.get();
    attach(out, {xn, gn, bn}, [xn, gn, bn, op_node, xhat, inv_std, rows, ch]() {
      const auto& g = op_node->grad;
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ch; ++c) bn->grad[c] += g[r * ch + c];
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ch; ++c)
            gn->grad[c] += g[r * ch + c] * (*xhat)[r * ch + c];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        const double n = static_cast<double>(ch);
        std::vector<double> dxhat(ch);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_dx = 0.0, sum_dx_xh = 0.0;
          for (std::size_t c = 0; c < ch; ++c) {
            dxhat[c] = g[r * ch + c] * gn->values[c];
            sum_dx += dxhat[c];
            sum_dx_xh += dxhat[c] * (*xhat)[r * ch + c];
          }
          const double is = (*inv_std)[r];
          for (std::size_t c = 0; c < ch; ++c) {
            xn->grad[r * ch + c] +=
                is / n * (n * dxhat[c] - sum_dx - (*xhat)[r * ch + c] * sum_dx_xh);
          }
        }
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  BatchNormState& state, bool training, double momentum, double eps) {
  require_defined(x, "batch_norm");
  require_defined(gain, "batch_norm");
  require_defined(bias, "batch_norm");
  if (x.rank() != 2) {
    throw ShapeError("batch_norm: expects [batch, channels], got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.shape()[0], ch = x.shape()[1];
  if (gain.numel() != ch || bias.numel() != ch || state.running_mean.size() != ch ||
      state.running_var.size() != ch) {
    throw ShapeError("batch_norm: channel mismatch for input " + shape_str(x.shape()));
  }
  auto out = fresh_node(x.shape(), "batch_norm");
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(ch);
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();

  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  if (training) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) mean[c] += xv[b * ch + c];
    for (std::size_t c = 0; c < ch; ++c) mean[c] /= static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = xv[b * ch + c] - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < ch; ++c) var[c] /= static_cast<double>(batch);
    for (std::size_t c = 0; c < ch; ++c) {
      state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * mean[c];
      state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * var[c];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  for (std::size_t c = 0; c < ch; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + eps);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double xh = (xv[b * ch + c] - mean[c]) * (*inv_std)[c];
      (*xhat)[b * ch + c] = xh;
      out->values[b * ch + c] = xh * gv[c] + bv[c];
    }
  }
  if (x.requires_grad() || gain.requires_grad() || bias.requires_grad()) {
    NodePtr xn = x.node(), gn = gain.node(), bn = bias.node();
    TensorNode* op_node = out.get();
    attach(out, {xn, gn, bn},
           [xn, gn, bn, op_node, xhat, inv_std, batch, ch, training]() {
      const auto& g = op_node->grad;
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c) bn->grad[c] += g[b * ch + c];
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c)
            gn->grad[c] += g[b * ch + c] * (*xhat)[b * ch + c];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        if (training) {  // gradient flows through the batch statistics
          const double n = static_cast<double>(batch);
          for (std::size_t c = 0; c < ch; ++c) {
            double sum_dx = 0.0, sum_dx_xh = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              const double dxh = g[b * ch + c] * gn->values[c];
              sum_dx += dxh;
              sum_dx_xh += dxh * (*xhat)[b * ch + c];
            }
            const double is = (*inv_std)[c];
            for (std::size_t b = 0; b < batch; ++b) {
              const double dxh = g[b * ch + c] * gn->values[c];
              xn->grad[b * ch + c] +=
                  is / n * (n * dxh - sum_dx - (*xhat)[b * ch + c] * sum_dx_xh);
            }
          }
        } else {  // running statistics are constants
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c)
              xn->grad[b * ch + c] += g[b * ch + c] * gn->values[c] * (*inv_std)[c];
        }
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(weight, "linear");
  require_defined(bias, "linear");
  if (weight.rank() != 2) {
    throw ShapeError("linear: weight must be [in, out], got " + shape_str(weight.shape()));
  }
  if (bias.numel() != weight.shape()[1]) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) +
                     " does not match weight " + shape_str(weight.shape()));
  }
  return add(matmul(x, weight), bias);
}

}  // namespace poselift::ops
