#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "adgn/rng.hpp"
#include "adgn/tensor.hpp"

namespace adgn {

enum class OpKind : std::uint8_t {
  kConstant,
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScale,
  kMatmul,
  kMatmulNT,
  kAddBias,
  kMean,
  kSum,
  kConcat,
  kRelu,
  kLeakyRelu,
  kSigmoid,
  kLog,
  kSoftplus,
  kDropout,
};

const char* op_name(OpKind kind);

/// Handle to a node of a Graph. Only valid until the graph is cleared.
struct Var {
  std::uint32_t id = 0;
};

/// Define-by-run tape for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it and backward() is a single reverse sweep. Values are held in double
/// precision; tensors cross the boundary as float32 both ways (inputs,
/// value(), and gradients written back to bound leaves).
///
/// Elementwise ops require identical shapes. The only broadcast is
/// add_bias, which adds a [n] row to every row of an [m, n] matrix.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var constant(const Tensor& t);
  Var constant(Shape shape, std::vector<double> values);
  /// Binds an external tensor. When t.requires_grad, backward() accumulates
  /// d(loss)/dt into t.grad; the tensor must outlive the backward call.
  Var leaf(Tensor& t);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  // [m,k] x [k,n]
  Var matmul(Var a, Var b);
  // [m,k] x [n,k]^T, the layout of a linear layer's [out,in] weight.
  Var matmul_nt(Var a, Var b);
  Var add_bias(Var x, Var bias);
  Var mean(Var a);
  Var sum(Var a);
  // Column-wise concatenation of two 2-D tensors with equal row counts.
  Var concat(Var a, Var b);
  Var relu(Var a);
  Var leaky_relu(Var a, double alpha = 0.2);
  Var sigmoid(Var a);
  Var log(Var a);
  // log(1 + e^x), evaluated without overflow.
  Var softplus(Var a);
  // Inverted dropout: survivors are scaled by 1/(1-rate).
  Var dropout(Var a, double rate, Rng& rng);

  Tensor value(Var v) const;
  double item(Var v) const;
  const Shape& shape(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar [1] loss. Clears the graph afterwards.
  void backward(Var loss);
  /// Reverse sweep seeded with an explicit output gradient, as when the
  /// gradient of a downstream loss arrives from elsewhere.
  void backward(Var output, std::span<const float> seed);

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::int64_t a = -1;
    std::int64_t b = -1;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> aux;  // dropout mask scale
    double param = 0.0;       // leaky slope / scale factor
    bool requires_grad = false;
    Tensor* bound = nullptr;
  };

  const Node& node(Var v) const;
  Var push(Node n);
  Node unary(OpKind kind, Var a) const;
  void sweep(std::size_t from);

  std::vector<Node> nodes_;
};

/// Compares analytic gradients at `point` with central differences.
/// `f` builds a scalar loss from the graph node bound to the point; it must
/// be deterministic (two evaluations at the same point must agree exactly).
/// Returns max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
using ScalarFn = std::function<Var(Graph&, Var)>;
double grad_check(const ScalarFn& f, const Tensor& point, double eps);

}  // namespace adgn
