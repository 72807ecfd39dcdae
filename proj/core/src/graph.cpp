#include "bitta/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bitta/errors.hpp"

namespace bitta {

namespace {

void check_same_shape(Op op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(op_name(op), a.shape_str() + " vs " + b.shape_str());
  }
}

std::vector<std::size_t> reduced_shape(const std::vector<std::size_t>& shape,
                                       int axis) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (static_cast<int>(i) != axis) out.push_back(shape[i]);
  }
  return out;
}

// Splits a shape around one axis: product of extents before / at / after.
struct AxisSplit {
  std::size_t outer = 1, axis = 1, inner = 1;
};

AxisSplit split_axis(const std::vector<std::size_t>& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
    if (i < axis) {
      s.outer *= shape[i];
    } else if (i == axis) {
      s.axis = shape[i];
    } else {
      s.inner *= shape[i];
    }
  }
  return s;
}

void check_axis(Op op, const Tensor& x, int axis) {
  if (axis < 0 || axis >= static_cast<int>(x.rank())) {
    throw ShapeError(op_name(op), "axis " + std::to_string(axis) +
                                      " out of range for " + x.shape_str());
  }
}

// Resample positions for 1-D linear interpolation onto out_len points.
// Endpoint aligned; a single output point reads the middle of the input.
double interp_position(std::size_t j, std::size_t in_len, std::size_t out_len) {
  if (out_len == 1) return 0.5 * static_cast<double>(in_len - 1);
  return static_cast<double>(j) * static_cast<double>(in_len - 1) /
         static_cast<double>(out_len - 1);
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSubtract: return "subtract";
    case Op::kMultiply: return "elementwise-multiply";
    case Op::kScale: return "scalar-scale";
    case Op::kMatmul: return "matmul";
    case Op::kConv2d: return "conv2d";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kAbs: return "abs";
    case Op::kHinge: return "hinge";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSlice: return "slice";
    case Op::kReshape: return "reshape";
    case Op::kConcat: return "concatenate";
    case Op::kInterp1d: return "linear-interpolate-1d";
    case Op::kAvgPool: return "average-pool";
  }
  return "?";
}

const Tensor& Value::tensor() const { return graph->value(*this); }

Value Graph::leaf(Tensor value) {
  nodes_.push_back({Op::kLeaf, {}, {}, std::move(value), true});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Value Graph::constant(Tensor value) {
  nodes_.push_back({Op::kConstant, {}, {}, std::move(value), false});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Value v) const { return nodes_.at(v.id).value; }

bool Graph::requires_grad(Value v) const {
  return nodes_.at(v.id).requires_grad;
}

Value Graph::apply(Op op, std::span<const Value> inputs, OpAttrs attrs) {
  std::vector<const Tensor*> in_tensors;
  std::vector<std::uint32_t> in_ids;
  bool grad = false;
  in_tensors.reserve(inputs.size());
  in_ids.reserve(inputs.size());
  for (const Value& v : inputs) {
    if (v.graph != this) {
      throw ValueError("apply: input node belongs to a different graph");
    }
    const Node& n = nodes_.at(v.id);
    in_tensors.push_back(&n.value);
    in_ids.push_back(v.id);
    grad = grad || n.requires_grad;
  }
  Tensor out = eval(op, attrs, in_tensors);
  nodes_.push_back(
      {op, std::move(attrs), std::move(in_ids), std::move(out), grad});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Graph::replay(Value v) const {
  if (v.graph != this) throw ValueError("replay: node from a different graph");
  std::vector<Tensor> values(v.id + 1);
  for (std::uint32_t id = 0; id <= v.id; ++id) {
    const Node& n = nodes_.at(id);
    if (n.op == Op::kLeaf || n.op == Op::kConstant) {
      values[id] = n.value;
      continue;
    }
    std::vector<const Tensor*> ins;
    ins.reserve(n.inputs.size());
    for (std::uint32_t in : n.inputs) ins.push_back(&values[in]);
    values[id] = eval(n.op, n.attrs, ins);
  }
  return std::move(values[v.id]);
}

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

Tensor Graph::eval(Op op, const OpAttrs& attrs,
                   std::span<const Tensor* const> inputs) {
  switch (op) {
    case Op::kLeaf:
    case Op::kConstant:
      throw ValueError("leaf nodes are not evaluated");

    case Op::kAdd:
    case Op::kSubtract:
    case Op::kMultiply: {
      const Tensor& a = *inputs[0];
      const Tensor& b = *inputs[1];
      check_same_shape(op, a, b);
      Tensor out(a.shape());
      const double* pa = a.data();
      const double* pb = b.data();
      double* po = out.data();
      const std::size_t n = a.size();
      if (op == Op::kAdd) {
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      } else if (op == Op::kSubtract) {
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      }
      return out;
    }

    case Op::kScale: {
      const Tensor& x = *inputs[0];
      Tensor out(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = attrs.scalar * x[i];
      }
      return out;
    }

    case Op::kMatmul: {
      const Tensor& a = *inputs[0];
      const Tensor& b = *inputs[1];
      if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
        throw ShapeError(op_name(op), a.shape_str() + " x " + b.shape_str());
      }
      const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(1);
      Tensor out({n, m});
      for (std::size_t i = 0; i < n; ++i) {
        double* orow = out.data() + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double aik = a.data()[i * k + kk];
          const double* brow = b.data() + kk * m;
          for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
        }
      }
      return out;
    }

    case Op::kConv2d: {
      const Tensor& in = *inputs[0];
      const Tensor& ker = *inputs[1];
      const Tensor* bias = inputs.size() > 2 ? inputs[2] : nullptr;
      if (in.rank() != 3 || ker.rank() != 4 || in.extent(2) != ker.extent(2)) {
        throw ShapeError(op_name(op),
                         "input " + in.shape_str() + ", kernel " +
                             ker.shape_str() +
                             " (want (T,S,Ci) and (kt,ks,Ci,Co))");
      }
      const std::size_t T = in.extent(0), S = in.extent(1), Ci = in.extent(2);
      const std::size_t kt = ker.extent(0), ks = ker.extent(1),
                        Co = ker.extent(3);
      if (bias && (bias->rank() != 1 || bias->extent(0) != Co)) {
        throw ShapeError(op_name(op), "bias " + bias->shape_str() +
                                          " vs kernel " + ker.shape_str());
      }
      if (attrs.stride_t < 1 || attrs.stride_s < 1 || attrs.pad_t < 0 ||
          attrs.pad_s < 0) {
        throw ShapeError(op_name(op), "invalid stride/padding");
      }
      const long Tp = static_cast<long>(T) + 2 * attrs.pad_t -
                      static_cast<long>(kt);
      const long Sp = static_cast<long>(S) + 2 * attrs.pad_s -
                      static_cast<long>(ks);
      if (Tp < 0 || Sp < 0) {
        throw ShapeError(op_name(op), "kernel " + ker.shape_str() +
                                          " larger than padded input " +
                                          in.shape_str());
      }
      const std::size_t To = static_cast<std::size_t>(Tp) / attrs.stride_t + 1;
      const std::size_t So = static_cast<std::size_t>(Sp) / attrs.stride_s + 1;
      Tensor out({To, So, Co});
      for (std::size_t to = 0; to < To; ++to) {
        for (std::size_t so = 0; so < So; ++so) {
          double* optr = out.data() + (to * So + so) * Co;
          if (bias) {
            for (std::size_t co = 0; co < Co; ++co) optr[co] = (*bias)[co];
          }
          const long t0 = static_cast<long>(to) * attrs.stride_t - attrs.pad_t;
          const long s0 = static_cast<long>(so) * attrs.stride_s - attrs.pad_s;
          for (std::size_t dt = 0; dt < kt; ++dt) {
            const long t = t0 + static_cast<long>(dt);
            if (t < 0 || t >= static_cast<long>(T)) continue;
            for (std::size_t ds = 0; ds < ks; ++ds) {
              const long s = s0 + static_cast<long>(ds);
              if (s < 0 || s >= static_cast<long>(S)) continue;
              const double* xptr = in.data() + (t * S + s) * Ci;
              const double* wptr = ker.data() + ((dt * ks + ds) * Ci) * Co;
              for (std::size_t ci = 0; ci < Ci; ++ci) {
                const double x = xptr[ci];
                const double* wrow = wptr + ci * Co;
                for (std::size_t co = 0; co < Co; ++co) {
                  optr[co] += x * wrow[co];
                }
              }
            }
          }
        }
      }
      return out;
    }

    case Op::kRelu: {
      const Tensor& x = *inputs[0];
      Tensor out(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] > 0.0 ? x[i] : 0.0;
      }
      return out;
    }

    case Op::kSigmoid: {
      const Tensor& x = *inputs[0];
      Tensor out(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = 1.0 / (1.0 + std::exp(-x[i]));
      }
      return out;
    }

    case Op::kAbs: {
      const Tensor& x = *inputs[0];
      Tensor out(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::fabs(x[i]);
      return out;
    }

    case Op::kHinge: {
      const Tensor& x = *inputs[0];
      Tensor out(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - attrs.scalar;
        out[i] = d > 0.0 ? d : 0.0;
      }
      return out;
    }

    case Op::kSum:
    case Op::kMean: {
      const Tensor& x = *inputs[0];
      if (attrs.axis < 0) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
        if (op == Op::kMean && x.size() > 0) {
          acc /= static_cast<double>(x.size());
        }
        return Tensor::scalar(acc);
      }
      check_axis(op, x, attrs.axis);
      const AxisSplit sp = split_axis(x.shape(), attrs.axis);
      Tensor out(reduced_shape(x.shape(), attrs.axis));
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t a = 0; a < sp.axis; ++a) {
          const double* src = x.data() + (o * sp.axis + a) * sp.inner;
          double* dst = out.data() + o * sp.inner;
          for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
      }
      if (op == Op::kMean) {
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i] /= static_cast<double>(sp.axis);
        }
      }
      return out;
    }

    case Op::kSlice: {
      const Tensor& x = *inputs[0];
      check_axis(op, x, attrs.axis);
      if (attrs.begin >= attrs.end || attrs.end > x.extent(attrs.axis)) {
        throw ShapeError(op_name(op),
                         "range [" + std::to_string(attrs.begin) + ", " +
                             std::to_string(attrs.end) + ") on axis " +
                             std::to_string(attrs.axis) + " of " +
                             x.shape_str());
      }
      const AxisSplit sp = split_axis(x.shape(), attrs.axis);
      auto shape = x.shape();
      shape[attrs.axis] = attrs.end - attrs.begin;
      Tensor out(shape);
      const std::size_t width = attrs.end - attrs.begin;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = x.data() + (o * sp.axis + attrs.begin) * sp.inner;
        double* dst = out.data() + o * width * sp.inner;
        std::memcpy(dst, src, width * sp.inner * sizeof(double));
      }
      return out;
    }

    case Op::kReshape: {
      const Tensor& x = *inputs[0];
      if (Tensor::shape_size(attrs.shape) != x.size()) {
        throw ShapeError(op_name(op),
                         x.shape_str() + " -> " +
                             Tensor::shape_str(attrs.shape) +
                             " changes element count");
      }
      return Tensor(attrs.shape,
                    std::vector<double>(x.data(), x.data() + x.size()));
    }

    case Op::kConcat: {
      if (inputs.empty()) throw ShapeError(op_name(op), "no inputs");
      const Tensor& first = *inputs[0];
      check_axis(op, first, attrs.axis);
      std::size_t total = 0;
      for (const Tensor* t : inputs) {
        if (t->rank() != first.rank()) {
          throw ShapeError(op_name(op),
                           first.shape_str() + " vs " + t->shape_str());
        }
        for (std::size_t i = 0; i < first.rank(); ++i) {
          if (static_cast<int>(i) != attrs.axis &&
              t->extent(i) != first.extent(i)) {
            throw ShapeError(op_name(op),
                             first.shape_str() + " vs " + t->shape_str());
          }
        }
        total += t->extent(attrs.axis);
      }
      auto shape = first.shape();
      shape[attrs.axis] = total;
      Tensor out(shape);
      const AxisSplit sp = split_axis(shape, attrs.axis);
      std::size_t offset = 0;
      for (const Tensor* t : inputs) {
        const std::size_t width = t->extent(attrs.axis);
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const double* src = t->data() + o * width * sp.inner;
          double* dst = out.data() + (o * total + offset) * sp.inner;
          std::memcpy(dst, src, width * sp.inner * sizeof(double));
        }
        offset += width;
      }
      return out;
    }

    case Op::kInterp1d: {
      const Tensor& x = *inputs[0];
      if (x.rank() != 1 || attrs.out_len == 0) {
        throw ShapeError(op_name(op), "rank-1 input required, got " +
                                          x.shape_str() + " -> length " +
                                          std::to_string(attrs.out_len));
      }
      const std::size_t n = x.extent(0), m = attrs.out_len;
      Tensor out({m});
      if (n == 1) {
        for (std::size_t j = 0; j < m; ++j) out[j] = x[0];
        return out;
      }
      for (std::size_t j = 0; j < m; ++j) {
        const double pos = interp_position(j, n, m);
        const std::size_t i0 = static_cast<std::size_t>(pos);
        const double w1 = pos - static_cast<double>(i0);
        out[j] = i0 + 1 < n ? (1.0 - w1) * x[i0] + w1 * x[i0 + 1] : x[i0];
      }
      return out;
    }

    case Op::kAvgPool: {
      const Tensor& x = *inputs[0];
      if (x.rank() != 3 || attrs.pool_t < 1 || attrs.pool_s < 1) {
        throw ShapeError(op_name(op), "rank-3 input required, got " +
                                          x.shape_str());
      }
      const std::size_t T = x.extent(0), S = x.extent(1), C = x.extent(2);
      const std::size_t To = T / attrs.pool_t, So = S / attrs.pool_s;
      if (To == 0 || So == 0) {
        throw ShapeError(op_name(op),
                         "pool " + std::to_string(attrs.pool_t) + "x" +
                             std::to_string(attrs.pool_s) +
                             " empties input " + x.shape_str());
      }
      Tensor out({To, So, C});
      const double inv = 1.0 / static_cast<double>(attrs.pool_t *
                                                   attrs.pool_s);
      for (std::size_t to = 0; to < To; ++to) {
        for (std::size_t so = 0; so < So; ++so) {
          double* optr = out.data() + (to * So + so) * C;
          for (int dt = 0; dt < attrs.pool_t; ++dt) {
            const std::size_t t = to * attrs.pool_t + dt;
            for (int ds = 0; ds < attrs.pool_s; ++ds) {
              const std::size_t s = so * attrs.pool_s + ds;
              const double* xptr = x.data() + (t * S + s) * C;
              for (std::size_t c = 0; c < C; ++c) optr[c] += xptr[c];
            }
          }
          for (std::size_t c = 0; c < C; ++c) optr[c] *= inv;
        }
      }
      return out;
    }
  }
  throw ValueError("unknown op");
}

// ---------------------------------------------------------------------------
// Reverse-mode sweep
// ---------------------------------------------------------------------------

namespace {

Tensor& grad_slot(std::vector<std::optional<Tensor>>& grads, std::uint32_t id,
                  const Tensor& like) {
  if (!grads[id]) grads[id] = Tensor::zeros_like(like);
  return *grads[id];
}

}  // namespace

Gradients Graph::backward(Value loss) const {
  if (loss.graph != this) {
    throw ValueError("backward: node from a different graph");
  }
  const Node& loss_node = nodes_.at(loss.id);
  if (loss_node.value.size() != 1) {
    throw ValueError("backward requires a scalar loss, got shape " +
                     loss_node.value.shape_str());
  }
  std::vector<std::optional<Tensor>> grads(nodes_.size());
  if (loss_node.requires_grad) {
    grads[loss.id] = Tensor(loss_node.value.shape(), 1.0);
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
      const Node& node = nodes_[id];
      if (!grads[id] || !node.requires_grad) continue;
      if (node.op == Op::kLeaf || node.op == Op::kConstant) continue;
      accumulate_backward(node, *grads[id], grads);
    }
  }
  return Gradients(std::move(grads), this);
}

void Graph::accumulate_backward(
    const Node& node, const Tensor& g,
    std::vector<std::optional<Tensor>>& grads) const {
  auto input = [&](std::size_t i) -> const Node& {
    return nodes_[node.inputs[i]];
  };
  auto wants = [&](std::size_t i) { return input(i).requires_grad; };
  auto slot = [&](std::size_t i) -> Tensor& {
    return grad_slot(grads, node.inputs[i], input(i).value);
  };

  switch (node.op) {
    case Op::kLeaf:
    case Op::kConstant:
      return;

    case Op::kAdd: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        Tensor& gi = slot(k);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      return;
    }

    case Op::kSubtract: {
      if (wants(0)) {
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(1)) {
        Tensor& gb = slot(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
      return;
    }

    case Op::kMultiply: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      if (wants(0)) {
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (wants(1)) {
        Tensor& gb = slot(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
      return;
    }

    case Op::kScale: {
      if (!wants(0)) return;
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += node.attrs.scalar * g[i];
      }
      return;
    }

    case Op::kMatmul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(1);
      if (wants(0)) {
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* grow = g.data() + i * m;
            const double* brow = b.data() + kk * m;
            for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
            ga.data()[i * k + kk] += acc;
          }
        }
      }
      if (wants(1)) {
        Tensor& gb = slot(1);
        for (std::size_t i = 0; i < n; ++i) {
          const double* arow = a.data() + i * k;
          const double* grow = g.data() + i * m;
          for (std::size_t kk = 0; kk < k; ++kk) {
            double* gbrow = gb.data() + kk * m;
            const double aik = arow[kk];
            for (std::size_t j = 0; j < m; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
      return;
    }

    case Op::kConv2d: {
      const Tensor& in = input(0).value;
      const Tensor& ker = input(1).value;
      const bool has_bias = node.inputs.size() > 2;
      const std::size_t T = in.extent(0), S = in.extent(1), Ci = in.extent(2);
      const std::size_t kt = ker.extent(0), ks = ker.extent(1),
                        Co = ker.extent(3);
      const std::size_t To = g.extent(0), So = g.extent(1);
      Tensor* gin = wants(0) ? &slot(0) : nullptr;
      Tensor* gker = wants(1) ? &slot(1) : nullptr;
      Tensor* gbias = has_bias && wants(2) ? &slot(2) : nullptr;
      for (std::size_t to = 0; to < To; ++to) {
        for (std::size_t so = 0; so < So; ++so) {
          const double* gptr = g.data() + (to * So + so) * Co;
          if (gbias) {
            for (std::size_t co = 0; co < Co; ++co) {
              (*gbias)[co] += gptr[co];
            }
          }
          const long t0 =
              static_cast<long>(to) * node.attrs.stride_t - node.attrs.pad_t;
          const long s0 =
              static_cast<long>(so) * node.attrs.stride_s - node.attrs.pad_s;
          for (std::size_t dt = 0; dt < kt; ++dt) {
            const long t = t0 + static_cast<long>(dt);
            if (t < 0 || t >= static_cast<long>(T)) continue;
            for (std::size_t ds = 0; ds < ks; ++ds) {
              const long s = s0 + static_cast<long>(ds);
              if (s < 0 || s >= static_cast<long>(S)) continue;
              const std::size_t in_off = (t * S + s) * Ci;
              const std::size_t k_off = (dt * ks + ds) * Ci * Co;
              for (std::size_t ci = 0; ci < Ci; ++ci) {
                const double x = in.data()[in_off + ci];
                const double* wrow = ker.data() + k_off + ci * Co;
                double acc = 0.0;
                if (gker) {
                  double* gwrow = gker->data() + k_off + ci * Co;
                  for (std::size_t co = 0; co < Co; ++co) {
                    gwrow[co] += x * gptr[co];
                    acc += wrow[co] * gptr[co];
                  }
                } else {
                  for (std::size_t co = 0; co < Co; ++co) {
                    acc += wrow[co] * gptr[co];
                  }
                }
                if (gin) gin->data()[in_off + ci] += acc;
              }
            }
          }
        }
      }
      return;
    }

    case Op::kRelu: {
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) gx[i] += g[i];
      }
      return;
    }

    case Op::kSigmoid: {
      if (!wants(0)) return;
      const Tensor& y = node.value;
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * y[i] * (1.0 - y[i]);
      }
      return;
    }

    case Op::kAbs: {
      // Subgradient 0 at x == 0.
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) {
          gx[i] += g[i];
        } else if (x[i] < 0.0) {
          gx[i] -= g[i];
        }
      }
      return;
    }

    case Op::kHinge: {
      // Subgradient 0 at the kink x == threshold.
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > node.attrs.scalar) gx[i] += g[i];
      }
      return;
    }

    case Op::kSum:
    case Op::kMean: {
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      Tensor& gx = slot(0);
      if (node.attrs.axis < 0) {
        const double f = node.op == Op::kMean && x.size() > 0
                             ? g[0] / static_cast<double>(x.size())
                             : g[0];
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += f;
        return;
      }
      const AxisSplit sp = split_axis(x.shape(), node.attrs.axis);
      const double inv = node.op == Op::kMean
                             ? 1.0 / static_cast<double>(sp.axis)
                             : 1.0;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* gsrc = g.data() + o * sp.inner;
        for (std::size_t a = 0; a < sp.axis; ++a) {
          double* dst = gx.data() + (o * sp.axis + a) * sp.inner;
          for (std::size_t i = 0; i < sp.inner; ++i) {
            dst[i] += gsrc[i] * inv;
          }
        }
      }
      return;
    }

    case Op::kSlice: {
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      Tensor& gx = slot(0);
      const AxisSplit sp = split_axis(x.shape(), node.attrs.axis);
      const std::size_t width = node.attrs.end - node.attrs.begin;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = g.data() + o * width * sp.inner;
        double* dst =
            gx.data() + (o * sp.axis + node.attrs.begin) * sp.inner;
        for (std::size_t i = 0; i < width * sp.inner; ++i) dst[i] += src[i];
      }
      return;
    }

    case Op::kReshape: {
      if (!wants(0)) return;
      Tensor& gx = slot(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      return;
    }

    case Op::kConcat: {
      const AxisSplit sp = split_axis(node.value.shape(), node.attrs.axis);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t width = input(k).value.extent(node.attrs.axis);
        if (wants(k)) {
          Tensor& gi = slot(k);
          for (std::size_t o = 0; o < sp.outer; ++o) {
            const double* src = g.data() + (o * sp.axis + offset) * sp.inner;
            double* dst = gi.data() + o * width * sp.inner;
            for (std::size_t i = 0; i < width * sp.inner; ++i) {
              dst[i] += src[i];
            }
          }
        }
        offset += width;
      }
      return;
    }

    case Op::kInterp1d: {
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      Tensor& gx = slot(0);
      const std::size_t n = x.extent(0), m = node.attrs.out_len;
      if (n == 1) {
        for (std::size_t j = 0; j < m; ++j) gx[0] += g[j];
        return;
      }
      for (std::size_t j = 0; j < m; ++j) {
        const double pos = interp_position(j, n, m);
        const std::size_t i0 = static_cast<std::size_t>(pos);
        const double w1 = pos - static_cast<double>(i0);
        if (i0 + 1 < n) {
          gx[i0] += (1.0 - w1) * g[j];
          gx[i0 + 1] += w1 * g[j];
        } else {
          gx[i0] += g[j];
        }
      }
      return;
    }

    case Op::kAvgPool: {
      if (!wants(0)) return;
      const Tensor& x = input(0).value;
      Tensor& gx = slot(0);
      const std::size_t S = x.extent(1), C = x.extent(2);
      const std::size_t To = node.value.extent(0), So = node.value.extent(1);
      const double inv =
          1.0 / static_cast<double>(node.attrs.pool_t * node.attrs.pool_s);
      for (std::size_t to = 0; to < To; ++to) {
        for (std::size_t so = 0; so < So; ++so) {
          const double* gptr = g.data() + (to * So + so) * C;
          for (int dt = 0; dt < node.attrs.pool_t; ++dt) {
            const std::size_t t = to * node.attrs.pool_t + dt;
            for (int ds = 0; ds < node.attrs.pool_s; ++ds) {
              const std::size_t s = so * node.attrs.pool_s + ds;
              double* xptr = gx.data() + (t * S + s) * C;
              for (std::size_t c = 0; c < C; ++c) xptr[c] += gptr[c] * inv;
            }
          }
        }
      }
      return;
    }
  }
}

Tensor Gradients::of(Value v) const {
  if (v.id < by_id_.size() && by_id_[v.id]) return *by_id_[v.id];
  return Tensor::zeros_like(graph_->value(v));
}

bool Gradients::reached(Value v) const {
  return v.id < by_id_.size() && by_id_[v.id].has_value();
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace {

Value apply1(Value x, Op op, OpAttrs attrs = {}) {
  const Value ins[] = {x};
  return x.graph->apply(op, ins, std::move(attrs));
}

Value apply2(Value a, Value b, Op op, OpAttrs attrs = {}) {
  const Value ins[] = {a, b};
  return a.graph->apply(op, ins, std::move(attrs));
}

}  // namespace

Value add(Value a, Value b) { return apply2(a, b, Op::kAdd); }
Value subtract(Value a, Value b) { return apply2(a, b, Op::kSubtract); }
Value multiply(Value a, Value b) { return apply2(a, b, Op::kMultiply); }

Value scale(Value x, double factor) {
  return apply1(x, Op::kScale, {.scalar = factor});
}

Value matmul(Value a, Value b) { return apply2(a, b, Op::kMatmul); }

Value conv2d(Value input, Value kernel, int stride_t, int stride_s, int pad_t,
             int pad_s) {
  return apply2(input, kernel, Op::kConv2d,
                {.stride_t = stride_t,
                 .stride_s = stride_s,
                 .pad_t = pad_t,
                 .pad_s = pad_s});
}

Value conv2d(Value input, Value kernel, Value bias, int stride_t, int stride_s,
             int pad_t, int pad_s) {
  const Value ins[] = {input, kernel, bias};
  return input.graph->apply(Op::kConv2d, ins,
                            {.stride_t = stride_t,
                             .stride_s = stride_s,
                             .pad_t = pad_t,
                             .pad_s = pad_s});
}

Value relu(Value x) { return apply1(x, Op::kRelu); }
Value sigmoid(Value x) { return apply1(x, Op::kSigmoid); }
Value abs(Value x) { return apply1(x, Op::kAbs); }

Value hinge(Value x, double threshold) {
  return apply1(x, Op::kHinge, {.scalar = threshold});
}

Value sum(Value x) { return apply1(x, Op::kSum, {.axis = -1}); }
Value sum(Value x, int axis) { return apply1(x, Op::kSum, {.axis = axis}); }
Value mean(Value x) { return apply1(x, Op::kMean, {.axis = -1}); }
Value mean(Value x, int axis) { return apply1(x, Op::kMean, {.axis = axis}); }

Value slice(Value x, int axis, std::size_t begin, std::size_t end) {
  return apply1(x, Op::kSlice, {.axis = axis, .begin = begin, .end = end});
}

Value reshape(Value x, std::vector<std::size_t> shape) {
  return apply1(x, Op::kReshape, {.shape = std::move(shape)});
}

Value concat(std::span<const Value> parts, int axis) {
  if (parts.empty()) throw ShapeError("concatenate", "no inputs");
  return parts[0].graph->apply(Op::kConcat, parts, {.axis = axis});
}

Value interp_linear(Value x, std::size_t out_len) {
  return apply1(x, Op::kInterp1d, {.out_len = out_len});
}

Value avg_pool(Value x, int pool_t, int pool_s) {
  return apply1(x, Op::kAvgPool, {.pool_t = pool_t, .pool_s = pool_s});
}

}  // namespace bitta
