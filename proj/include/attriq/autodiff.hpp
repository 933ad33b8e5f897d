#pragma once

// Minimal reverse-mode automatic differentiation over dense double arrays.
//
// A Tape records operations in construction order, so node ids are already a
// topological order. forward() evaluates every node given bindings for the
// free inputs; backward() walks the recorded nodes in reverse and returns the
// gradient of a scalar node with respect to every input.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attriq/error.hpp"
#include "attriq/tensor.hpp"

namespace attriq::ad {

using NodeId = std::size_t;

enum class OpKind {
  input,
  constant,
  add,
  sub,
  mul,
  matmul,
  dot,
  concat,
  row_select,
  tanh,
  relu,
  softmax,
  log,
  sum,
  mean,
  max_reduce,
};

/// Reduction extent for sum/mean: everything, or along the leading axis of a matrix.
enum class Axis { all, rows };

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::dot: return "dot";
    case OpKind::concat: return "concat";
    case OpKind::row_select: return "row_select";
    case OpKind::tanh: return "tanh";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::max_reduce: return "max_reduce";
  }
  return "?";
}

struct Node {
  OpKind kind = OpKind::input;
  std::vector<NodeId> inputs;
  Shape shape;
  std::string name;
  std::vector<std::size_t> indices;  // row_select
  Axis axis = Axis::all;
  Tensor value;                      // constant payload
  bool requires_grad = false;
};

using Bindings = std::map<NodeId, Tensor>;
using Values = std::vector<Tensor>;
using Gradients = std::map<NodeId, Tensor>;

class Tape {
 public:
  NodeId input(Shape shape, std::string name = {}) {
    Node n;
    n.kind = OpKind::input;
    n.shape = std::move(shape);
    n.name = std::move(name);
    n.requires_grad = true;
    return push(std::move(n));
  }

  NodeId constant(Tensor value, std::string name = {}) {
    Node n;
    n.kind = OpKind::constant;
    n.shape = value.shape;
    n.value = std::move(value);
    n.name = std::move(name);
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) { return binary(OpKind::add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(OpKind::sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(OpKind::mul, a, b); }

  /// Supports {k}x{k,p} -> {p}, {n,k}x{k,p} -> {n,p} and {n,k}x{k} -> {n}.
  NodeId matmul(NodeId a, NodeId b) {
    const Shape& sa = shape(a);
    const Shape& sb = shape(b);
    Shape out;
    if (sa.size() == 1 && sb.size() == 2 && sa[0] == sb[0]) {
      out = {sb[1]};
    } else if (sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0]) {
      out = {sa[0], sb[1]};
    } else if (sa.size() == 2 && sb.size() == 1 && sa[1] == sb[0]) {
      out = {sa[0]};
    } else {
      throw ShapeError("matmul: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
    }
    return op(OpKind::matmul, {a, b}, std::move(out));
  }

  NodeId dot(NodeId a, NodeId b) {
    if (shape_size(shape(a)) != shape_size(shape(b)))
      throw ShapeError("dot: sizes differ " + shape_string(shape(a)) + " vs " + shape_string(shape(b)));
    return op(OpKind::dot, {a, b}, {});
  }

  /// Stacks rank-1 tensors end to end, or rank-2 tensors with equal column counts row-wise.
  NodeId concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    const Shape& first = shape(parts.front());
    if (first.size() != 1 && first.size() != 2) throw ShapeError("concat: operands must be rank 1 or 2");
    std::size_t lead = 0;
    for (NodeId p : parts) {
      const Shape& s = shape(p);
      if (s.size() != first.size() || (s.size() == 2 && s[1] != first[1]))
        throw ShapeError("concat: operand shape " + shape_string(s) + " does not conform to " +
                         shape_string(first));
      lead += s[0];
    }
    Shape out = first;
    out[0] = lead;
    return op(OpKind::concat, parts, std::move(out));
  }

  /// Gathers rows of a matrix (embedding lookup) or entries of a vector.
  NodeId row_select(NodeId source, std::vector<std::size_t> indices) {
    const Shape& s = shape(source);
    if (s.size() != 1 && s.size() != 2) throw ShapeError("row_select: source must be rank 1 or 2");
    for (std::size_t i : indices)
      if (i >= s[0])
        throw ShapeError("row_select: index " + std::to_string(i) + " out of range " + std::to_string(s[0]));
    Shape out = s;
    out[0] = indices.size();
    NodeId id = op(OpKind::row_select, {source}, std::move(out));
    nodes_[id].indices = std::move(indices);
    return id;
  }

  NodeId tanh(NodeId a) { return op(OpKind::tanh, {a}, shape(a)); }
  NodeId relu(NodeId a) { return op(OpKind::relu, {a}, shape(a)); }
  NodeId log(NodeId a) { return op(OpKind::log, {a}, shape(a)); }

  NodeId softmax(NodeId a) {
    if (shape_size(shape(a)) == 0) throw ShapeError("softmax: empty operand");
    return op(OpKind::softmax, {a}, shape(a));
  }

  NodeId sum(NodeId a, Axis axis = Axis::all) { return reduce(OpKind::sum, a, axis); }
  NodeId mean(NodeId a, Axis axis = Axis::all) { return reduce(OpKind::mean, a, axis); }

  NodeId max_reduce(NodeId a) {
    if (shape_size(shape(a)) == 0) throw ShapeError("max_reduce: empty operand");
    return op(OpKind::max_reduce, {a}, {});
  }

  /// Convenience: the single entry `index` of a rank-1 node, as a size-1 node.
  NodeId pick(NodeId a, std::size_t index) { return row_select(a, {index}); }

  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Shape& shape(NodeId id) const { return nodes_.at(id).shape; }
  std::size_t size() const { return nodes_.size(); }

  std::vector<NodeId> inputs() const {
    std::vector<NodeId> ids;
    for (NodeId i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].kind == OpKind::input) ids.push_back(i);
    return ids;
  }

 private:
  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  NodeId op(OpKind kind, std::vector<NodeId> in, Shape out) {
    Node n;
    n.kind = kind;
    for (NodeId i : in) {
      if (i >= nodes_.size()) throw ShapeError(std::string(op_name(kind)) + ": unknown operand node");
      n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    }
    n.inputs = std::move(in);
    n.shape = std::move(out);
    return push(std::move(n));
  }

  NodeId binary(OpKind kind, NodeId a, NodeId b) {
    const Shape& sa = shape(a);
    const Shape& sb = shape(b);
    Shape out;
    if (sa == sb) {
      out = sa;
    } else if (shape_size(sb) == 1) {
      out = sa;
    } else if (shape_size(sa) == 1) {
      out = sb;
    } else {
      throw ShapeError(std::string(op_name(kind)) + ": shapes " + shape_string(sa) + " and " + shape_string(sb) +
                       " do not conform");
    }
    return op(kind, {a, b}, std::move(out));
  }

  NodeId reduce(OpKind kind, NodeId a, Axis axis) {
    const Shape& s = shape(a);
    if (axis == Axis::rows) {
      if (s.size() != 2 || s[0] == 0) throw ShapeError(std::string(op_name(kind)) + ": row reduction needs a non-empty matrix");
      NodeId id = op(kind, {a}, {s[1]});
      nodes_[id].axis = axis;
      return id;
    }
    if (kind == OpKind::mean && shape_size(s) == 0) throw ShapeError("mean: empty operand");
    return op(kind, {a}, {});
  }

  std::vector<Node> nodes_;
};

namespace detail {

// Views an operand of matmul as an (rows x cols) matrix.
inline std::pair<std::size_t, std::size_t> as_matrix(const Shape& s, bool left) {
  if (s.size() == 2) return {s[0], s[1]};
  return left ? std::pair{std::size_t{1}, s[0]} : std::pair{s[0], std::size_t{1}};
}

inline double broadcast_at(const Tensor& t, std::size_t i) { return t.size() == 1 ? t[0] : t[i]; }

inline void accumulate_broadcast(Tensor& grad, const Tensor& upstream, std::span<const double> factor) {
  if (grad.size() == upstream.size()) {
    for (std::size_t i = 0; i < upstream.size(); ++i) grad[i] += upstream[i] * factor[i];
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < upstream.size(); ++i) s += upstream[i] * factor[i];
    grad[0] += s;
  }
}

}  // namespace detail

/// Evaluates every node of the tape. Throws ShapeError for missing or
/// mis-shaped bindings and NonFiniteError for NaN/inf intermediates.
inline Values forward(const Tape& tape, const Bindings& bindings) {
  Values v(tape.size());
  for (NodeId id = 0; id < tape.size(); ++id) {
    const Node& n = tape.node(id);
    Tensor out(n.shape);
    auto in = [&](std::size_t k) -> const Tensor& { return v[n.inputs[k]]; };
    switch (n.kind) {
      case OpKind::input: {
        auto it = bindings.find(id);
        if (it == bindings.end())
          throw ShapeError("input node " + std::to_string(id) + " (" + n.name + ") is not bound");
        if (it->second.shape != n.shape)
          throw ShapeError("input node " + std::to_string(id) + " (" + n.name + ") bound with shape " +
                           shape_string(it->second.shape) + ", expected " + shape_string(n.shape));
        out = it->second;
        break;
      }
      case OpKind::constant:
        out = n.value;
        break;
      case OpKind::add:
      case OpKind::sub:
      case OpKind::mul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        for (std::size_t i = 0; i < out.size(); ++i) {
          double x = detail::broadcast_at(a, i), y = detail::broadcast_at(b, i);
          out[i] = n.kind == OpKind::add ? x + y : n.kind == OpKind::sub ? x - y : x * y;
        }
        break;
      }
      case OpKind::matmul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        auto [r, k] = detail::as_matrix(a.shape, true);
        auto [k2, p] = detail::as_matrix(b.shape, false);
        (void)k2;
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t q = 0; q < k; ++q) s += a[i * k + q] * b[q * p + j];
            out[i * p + j] = s;
          }
        break;
      }
      case OpKind::dot: {
        double s = 0.0;
        for (std::size_t i = 0; i < in(0).size(); ++i) s += in(0)[i] * in(1)[i];
        out[0] = s;
        break;
      }
      case OpKind::concat: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor& part = in(k);
          std::copy(part.data.begin(), part.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
          off += part.size();
        }
        break;
      }
      case OpKind::row_select: {
        const Tensor& src = in(0);
        std::size_t width = src.rank() == 2 ? src.shape[1] : 1;
        for (std::size_t r = 0; r < n.indices.size(); ++r)
          for (std::size_t c = 0; c < width; ++c) out[r * width + c] = src[n.indices[r] * width + c];
        break;
      }
      case OpKind::tanh:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(in(0)[i]);
        break;
      case OpKind::relu:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = in(0)[i] > 0.0 ? in(0)[i] : 0.0;
        break;
      case OpKind::log:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(in(0)[i]);
        break;
      case OpKind::softmax: {
        const Tensor& a = in(0);
        double mx = *std::max_element(a.data.begin(), a.data.end());
        double z = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) z += (out[i] = std::exp(a[i] - mx));
        for (double& x : out.data) x /= z;
        break;
      }
      case OpKind::sum:
      case OpKind::mean: {
        const Tensor& a = in(0);
        if (n.axis == Axis::rows) {
          std::size_t rows = a.shape[0], cols = a.shape[1];
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) out[c] += a[r * cols + c];
          if (n.kind == OpKind::mean)
            for (double& x : out.data) x /= static_cast<double>(rows);
        } else {
          double s = 0.0;
          for (double x : a.data) s += x;
          out[0] = n.kind == OpKind::mean ? s / static_cast<double>(a.size()) : s;
        }
        break;
      }
      case OpKind::max_reduce: {
        const Tensor& a = in(0);
        out[0] = *std::max_element(a.data.begin(), a.data.end());
        break;
      }
    }
    if (!out.all_finite()) throw NonFiniteError(id, std::string(op_name(n.kind)) + (n.name.empty() ? "" : " " + n.name));
    v[id] = std::move(out);
  }
  return v;
}

/// Gradient of the scalar node `target` with respect to every input node.
/// Inputs that do not influence the target receive exact zeros.
inline Gradients backward(const Tape& tape, const Values& values, NodeId target) {
  if (values.size() != tape.size()) throw Error("backward: forward values are absent for this tape");
  if (target >= tape.size()) throw Error("backward: unknown target node");
  if (shape_size(tape.shape(target)) != 1)
    throw ShapeError("backward: target node " + std::to_string(target) + " is not scalar (shape " +
                     shape_string(tape.shape(target)) + ")");

  std::vector<Tensor> grad(tape.size());
  std::vector<bool> live(tape.size(), false);
  grad[target] = Tensor(tape.shape(target), 1.0);
  live[target] = true;

  for (NodeId id = target + 1; id-- > 0;) {
    if (!live[id]) continue;
    const Node& n = tape.node(id);
    if (!n.requires_grad || n.kind == OpKind::input || n.kind == OpKind::constant) continue;
    const Tensor& g = grad[id];
    const Tensor& y = values[id];
    auto upstream = [&](std::size_t k) -> Tensor* {
      NodeId src = n.inputs[k];
      if (!tape.node(src).requires_grad) return nullptr;
      if (!live[src]) {
        grad[src] = Tensor(tape.shape(src));
        live[src] = true;
      }
      return &grad[src];
    };
    auto x = [&](std::size_t k) -> const Tensor& { return values[n.inputs[k]]; };

    switch (n.kind) {
      case OpKind::input:
      case OpKind::constant:
        break;
      case OpKind::add:
      case OpKind::sub: {
        std::vector<double> ones(g.size(), 1.0), neg(g.size(), -1.0);
        if (Tensor* ga = upstream(0)) detail::accumulate_broadcast(*ga, g, ones);
        if (Tensor* gb = upstream(1)) detail::accumulate_broadcast(*gb, g, n.kind == OpKind::add ? ones : neg);
        break;
      }
      case OpKind::mul: {
        const Tensor& a = x(0);
        const Tensor& b = x(1);
        std::vector<double> fa(g.size()), fb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          fa[i] = detail::broadcast_at(b, i);
          fb[i] = detail::broadcast_at(a, i);
        }
        if (Tensor* ga = upstream(0)) detail::accumulate_broadcast(*ga, g, fa);
        if (Tensor* gb = upstream(1)) detail::accumulate_broadcast(*gb, g, fb);
        break;
      }
      case OpKind::matmul: {
        const Tensor& a = x(0);
        const Tensor& b = x(1);
        auto [r, k] = detail::as_matrix(a.shape, true);
        auto [k2, p] = detail::as_matrix(b.shape, false);
        (void)k2;
        if (Tensor* ga = upstream(0))
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t q = 0; q < k; ++q) {
              double s = 0.0;
              for (std::size_t j = 0; j < p; ++j) s += g[i * p + j] * b[q * p + j];
              (*ga)[i * k + q] += s;
            }
        if (Tensor* gb = upstream(1))
          for (std::size_t q = 0; q < k; ++q)
            for (std::size_t j = 0; j < p; ++j) {
              double s = 0.0;
              for (std::size_t i = 0; i < r; ++i) s += a[i * k + q] * g[i * p + j];
              (*gb)[q * p + j] += s;
            }
        break;
      }
      case OpKind::dot: {
        if (Tensor* ga = upstream(0))
          for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0] * x(1)[i];
        if (Tensor* gb = upstream(1))
          for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += g[0] * x(0)[i];
        break;
      }
      case OpKind::concat: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          std::size_t len = shape_size(tape.shape(n.inputs[k]));
          if (Tensor* gk = upstream(k))
            for (std::size_t i = 0; i < len; ++i) (*gk)[i] += g[off + i];
          off += len;
        }
        break;
      }
      case OpKind::row_select: {
        if (Tensor* gs = upstream(0)) {
          std::size_t width = gs->rank() == 2 ? gs->shape[1] : 1;
          for (std::size_t r = 0; r < n.indices.size(); ++r)
            for (std::size_t c = 0; c < width; ++c) (*gs)[n.indices[r] * width + c] += g[r * width + c];
        }
        break;
      }
      case OpKind::tanh:
        if (Tensor* ga = upstream(0))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      case OpKind::relu:
        if (Tensor* ga = upstream(0))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += x(0)[i] > 0.0 ? g[i] : 0.0;
        break;
      case OpKind::log:
        if (Tensor* ga = upstream(0))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / x(0)[i];
        break;
      case OpKind::softmax:
        if (Tensor* ga = upstream(0)) {
          double s = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * y[i];
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += y[i] * (g[i] - s);
        }
        break;
      case OpKind::sum:
      case OpKind::mean:
        if (Tensor* ga = upstream(0)) {
          if (n.axis == Axis::rows) {
            std::size_t rows = ga->shape[0], cols = ga->shape[1];
            double scale = n.kind == OpKind::mean ? 1.0 / static_cast<double>(rows) : 1.0;
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < cols; ++c) (*ga)[r * cols + c] += g[c] * scale;
          } else {
            double scale = n.kind == OpKind::mean ? 1.0 / static_cast<double>(ga->size()) : 1.0;
            for (double& v : ga->data) v += g[0] * scale;
          }
        }
        break;
      case OpKind::max_reduce:
        if (Tensor* ga = upstream(0)) {
          const Tensor& a = x(0);
          // std::max_element returns the first maximum: ties resolve to the lowest index.
          auto best = static_cast<std::size_t>(std::max_element(a.data.begin(), a.data.end()) - a.data.begin());
          (*ga)[best] += g[0];
        }
        break;
    }
  }

  Gradients out;
  for (NodeId id : tape.inputs()) out[id] = live[id] ? std::move(grad[id]) : Tensor(tape.shape(id));
  return out;
}

}  // namespace attriq::ad
