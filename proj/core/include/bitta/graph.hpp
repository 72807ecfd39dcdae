#ifndef BITTA_GRAPH_HPP
#define BITTA_GRAPH_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bitta/tensor.hpp"

namespace bitta {

/// Primitive operations recorded on a Graph.
enum class Op : std::uint8_t {
  kLeaf,      // differentiable input (model parameter)
  kConstant,  // non-differentiable input (data, fixed coefficients)
  kAdd,
  kSubtract,
  kMultiply,  // elementwise
  kScale,     // x * attrs.scalar
  kMatmul,    // (n,k) x (k,m) -> (n,m)
  kConv2d,    // (T,S,Ci) * (kt,ks,Ci,Co) [+ bias (Co)] -> (To,So,Co)
  kRelu,
  kSigmoid,
  kAbs,
  kHinge,     // max(0, x - attrs.scalar)
  kSum,       // attrs.axis == -1: all elements; else reduce one axis
  kMean,
  kSlice,     // [attrs.begin, attrs.end) along attrs.axis
  kReshape,
  kConcat,    // along attrs.axis
  kInterp1d,  // rank-1 linear resample to attrs.out_len
  kAvgPool,   // rank-3, factors (attrs.pool_t, attrs.pool_s)
};

const char* op_name(Op op);

struct OpAttrs {
  double scalar = 0.0;  // kScale factor / kHinge threshold
  int axis = -1;        // kSum / kMean (-1 = all), kSlice, kConcat
  std::size_t begin = 0;
  std::size_t end = 0;
  int stride_t = 1;
  int stride_s = 1;
  int pad_t = 0;
  int pad_s = 0;
  int pool_t = 1;
  int pool_s = 1;
  std::size_t out_len = 0;
  std::vector<std::size_t> shape;  // kReshape target
};

class Graph;

/// Handle to one node of a Graph. Cheap to copy; valid until the graph is
/// cleared or destroyed.
struct Value {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor& tensor() const;
  double item() const { return tensor().item(); }
};

/// Gradient map produced by Graph::backward. Leaves unreachable from the
/// loss read back as zeros.
class Gradients {
 public:
  Tensor of(Value v) const;
  bool reached(Value v) const;

 private:
  friend class Graph;
  Gradients(std::vector<std::optional<Tensor>> by_id, const Graph* graph)
      : by_id_(std::move(by_id)), graph_(graph) {}
  std::vector<std::optional<Tensor>> by_id_;
  const Graph* graph_;
};

/// Tape of primitive applications in topological order. Owns every
/// intermediate tensor; confined to a single adaptation stream.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Differentiable input node.
  Value leaf(Tensor value);
  /// Non-differentiable input node.
  Value constant(Tensor value);

  /// Validates shapes, computes the result, and records the application.
  /// Throws ShapeError naming the op on any shape-rule violation.
  Value apply(Op op, std::span<const Value> inputs, OpAttrs attrs = {});

  const Tensor& value(Value v) const;
  bool requires_grad(Value v) const;
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar loss. Throws ValueError when the loss
  /// is not a scalar.
  Gradients backward(Value loss) const;

  /// Recomputes v from the recorded leaves without touching the tape.
  /// Deterministic: bitwise-identical to the recorded value.
  Tensor replay(Value v) const;

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Op op;
    OpAttrs attrs;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    bool requires_grad;
  };

  static Tensor eval(Op op, const OpAttrs& attrs,
                     std::span<const Tensor* const> inputs);
  void accumulate_backward(const Node& node, const Tensor& out_grad,
                           std::vector<std::optional<Tensor>>& grads) const;

  std::vector<Node> nodes_;
};

// Builders. Each records one primitive on the inputs' graph.
Value add(Value a, Value b);
Value subtract(Value a, Value b);
Value multiply(Value a, Value b);
Value scale(Value x, double factor);
Value matmul(Value a, Value b);
Value conv2d(Value input, Value kernel, int stride_t = 1, int stride_s = 1,
             int pad_t = 0, int pad_s = 0);
Value conv2d(Value input, Value kernel, Value bias, int stride_t = 1,
             int stride_s = 1, int pad_t = 0, int pad_s = 0);
Value relu(Value x);
Value sigmoid(Value x);
Value abs(Value x);
Value hinge(Value x, double threshold);
Value sum(Value x);
Value sum(Value x, int axis);
Value mean(Value x);
Value mean(Value x, int axis);
Value slice(Value x, int axis, std::size_t begin, std::size_t end);
Value reshape(Value x, std::vector<std::size_t> shape);
Value concat(std::span<const Value> parts, int axis);
Value interp_linear(Value x, std::size_t out_len);
Value avg_pool(Value x, int pool_t, int pool_s);

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return subtract(a, b); }
inline Value operator*(Value a, Value b) { return multiply(a, b); }

}  // namespace bitta

#endif  // BITTA_GRAPH_HPP
