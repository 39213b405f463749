#include "adgn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adgn/error.hpp"

namespace adgn {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, float fill) : shape(std::move(s)), data(numel(shape), fill) {
  for (auto d : shape) {
    if (d == 0) throw ContractViolation("tensor extents must be positive: " + to_string(shape));
  }
}

Tensor::Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {
  if (numel(shape) != data.size()) {
    throw ContractViolation("tensor shape " + to_string(shape) + " does not match " +
                            std::to_string(data.size()) + " values");
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kMatmulNT: return "matmul_nt";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kConcat: return "concat";
    case OpKind::kRelu: return "relu";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kLog: return "log";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kDropout: return "dropout";
  }
  return "?";
}

namespace {

double sigmoid_of(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_of(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void require_same(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                            to_string(b));
  }
}

void require_2d(const char* op, const Shape& s) {
  if (s.size() != 2) {
    throw ContractViolation(std::string(op) + ": expected a 2-D tensor, got " + to_string(s));
  }
}

}  // namespace

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractViolation("stale or foreign graph variable");
  return nodes_[v.id];
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Graph::Node Graph::unary(OpKind kind, Var a) const {
  const Node& in = node(a);
  Node n;
  n.kind = kind;
  n.a = a.id;
  n.shape = in.shape;
  n.value.resize(in.value.size());
  n.requires_grad = in.requires_grad;
  return n;
}

Var Graph::constant(const Tensor& t) {
  Node n;
  n.kind = OpKind::kConstant;
  n.shape = t.shape;
  n.value.assign(t.data.begin(), t.data.end());
  return push(std::move(n));
}

Var Graph::constant(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw ContractViolation("constant: shape " + to_string(shape) + " does not match values");
  }
  Node n;
  n.kind = OpKind::kConstant;
  n.shape = std::move(shape);
  n.value = std::move(values);
  return push(std::move(n));
}

Var Graph::leaf(Tensor& t) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.shape = t.shape;
  n.value.assign(t.data.begin(), t.data.end());
  n.requires_grad = t.requires_grad;
  n.bound = &t;
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  require_same("add", node(a).shape, node(b).shape);
  Node n = unary(OpKind::kAdd, a);
  n.b = b.id;
  n.requires_grad |= node(b).requires_grad;
  const auto& x = node(a).value;
  const auto& y = node(b).value;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] + y[i];
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  require_same("sub", node(a).shape, node(b).shape);
  Node n = unary(OpKind::kSub, a);
  n.b = b.id;
  n.requires_grad |= node(b).requires_grad;
  const auto& x = node(a).value;
  const auto& y = node(b).value;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] - y[i];
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  require_same("mul", node(a).shape, node(b).shape);
  Node n = unary(OpKind::kMul, a);
  n.b = b.id;
  n.requires_grad |= node(b).requires_grad;
  const auto& x = node(a).value;
  const auto& y = node(b).value;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] * y[i];
  return push(std::move(n));
}

Var Graph::scale(Var a, double factor) {
  Node n = unary(OpKind::kScale, a);
  n.param = factor;
  const auto& x = node(a).value;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] * factor;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Node& A = node(a);
  const Node& B = node(b);
  require_2d("matmul", A.shape);
  require_2d("matmul", B.shape);
  if (A.shape[1] != B.shape[0]) {
    throw ContractViolation("matmul: shape mismatch " + to_string(A.shape) + " x " +
                            to_string(B.shape));
  }
  const std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
  Node n;
  n.kind = OpKind::kMatmul;
  n.a = a.id;
  n.b = b.id;
  n.shape = {m, p};
  n.value.assign(m * p, 0.0);
  n.requires_grad = A.requires_grad || B.requires_grad;
  for (std::size_t i = 0; i < m; ++i) {
    double* out = &n.value[i * p];
    for (std::size_t t = 0; t < k; ++t) {
      const double s = A.value[i * k + t];
      const double* row = &B.value[t * p];
      for (std::size_t j = 0; j < p; ++j) out[j] += s * row[j];
    }
  }
  return push(std::move(n));
}

Var Graph::matmul_nt(Var a, Var b) {
  const Node& A = node(a);
  const Node& B = node(b);
  require_2d("matmul_nt", A.shape);
  require_2d("matmul_nt", B.shape);
  if (A.shape[1] != B.shape[1]) {
    throw ContractViolation("matmul_nt: shape mismatch " + to_string(A.shape) + " x " +
                            to_string(B.shape) + "^T");
  }
  const std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[0];
  Node n;
  n.kind = OpKind::kMatmulNT;
  n.a = a.id;
  n.b = b.id;
  n.shape = {m, p};
  n.value.assign(m * p, 0.0);
  n.requires_grad = A.requires_grad || B.requires_grad;
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = &A.value[i * k];
    for (std::size_t j = 0; j < p; ++j) {
      const double* w = &B.value[j * k];
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += x[t] * w[t];
      n.value[i * p + j] = acc;
    }
  }
  return push(std::move(n));
}

Var Graph::add_bias(Var x, Var bias) {
  const Node& X = node(x);
  const Node& B = node(bias);
  require_2d("add_bias", X.shape);
  if (B.shape.size() != 1 || B.shape[0] != X.shape[1]) {
    throw ContractViolation("add_bias: shape mismatch " + to_string(X.shape) + " + " +
                            to_string(B.shape));
  }
  Node n = unary(OpKind::kAddBias, x);
  n.b = bias.id;
  n.requires_grad |= B.requires_grad;
  const std::size_t cols = X.shape[1];
  for (std::size_t i = 0; i < X.value.size(); ++i) n.value[i] = X.value[i] + B.value[i % cols];
  return push(std::move(n));
}

Var Graph::mean(Var a) {
  const Node& A = node(a);
  Node n;
  n.kind = OpKind::kMean;
  n.a = a.id;
  n.shape = {1};
  n.requires_grad = A.requires_grad;
  n.value = {std::accumulate(A.value.begin(), A.value.end(), 0.0) /
             static_cast<double>(A.value.size())};
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  const Node& A = node(a);
  Node n;
  n.kind = OpKind::kSum;
  n.a = a.id;
  n.shape = {1};
  n.requires_grad = A.requires_grad;
  n.value = {std::accumulate(A.value.begin(), A.value.end(), 0.0)};
  return push(std::move(n));
}

Var Graph::concat(Var a, Var b) {
  const Node& A = node(a);
  const Node& B = node(b);
  require_2d("concat", A.shape);
  require_2d("concat", B.shape);
  if (A.shape[0] != B.shape[0]) {
    throw ContractViolation("concat: row mismatch " + to_string(A.shape) + " and " +
                            to_string(B.shape));
  }
  const std::size_t m = A.shape[0], ca = A.shape[1], cb = B.shape[1];
  Node n;
  n.kind = OpKind::kConcat;
  n.a = a.id;
  n.b = b.id;
  n.shape = {m, ca + cb};
  n.requires_grad = A.requires_grad || B.requires_grad;
  n.value.resize(m * (ca + cb));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(&A.value[i * ca], ca, &n.value[i * (ca + cb)]);
    std::copy_n(&B.value[i * cb], cb, &n.value[i * (ca + cb) + ca]);
  }
  return push(std::move(n));
}

Var Graph::relu(Var a) {
  Node n = unary(OpKind::kRelu, a);
  const auto& x = node(a).value;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] > 0 ? x[i] : 0.0;
  return push(std::move(n));
}

Var Graph::leaky_relu(Var a, double alpha) {
  Node n = unary(OpKind::kLeakyRelu, a);
  n.param = alpha;
  const auto& x = node(a).value;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] > 0 ? x[i] : alpha * x[i];
  return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
  Node n = unary(OpKind::kSigmoid, a);
  const auto& x = node(a).value;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = sigmoid_of(x[i]);
  return push(std::move(n));
}

Var Graph::log(Var a) {
  Node n = unary(OpKind::kLog, a);
  const auto& x = node(a).value;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(x[i]) + " at index " +
                        std::to_string(i));
    }
    n.value[i] = std::log(x[i]);
  }
  return push(std::move(n));
}

Var Graph::softplus(Var a) {
  Node n = unary(OpKind::kSoftplus, a);
  const auto& x = node(a).value;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = softplus_of(x[i]);
  return push(std::move(n));
}

Var Graph::dropout(Var a, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractViolation("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  Node n = unary(OpKind::kDropout, a);
  const auto& x = node(a).value;
  n.aux.assign(x.size(), 1.0);
  if (rate > 0.0) {
    const double keep = 1.0 / (1.0 - rate);
    for (auto& m : n.aux) m = rng.uniform() < rate ? 0.0 : keep;
  }
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = x[i] * n.aux[i];
  return push(std::move(n));
}

Tensor Graph::value(Var v) const {
  const Node& n = node(v);
  std::vector<float> out(n.value.begin(), n.value.end());
  return Tensor(n.shape, std::move(out));
}

double Graph::item(Var v) const {
  const Node& n = node(v);
  if (n.value.size() != 1) {
    throw ContractViolation("item: expected a single value, shape " + to_string(n.shape));
  }
  return n.value[0];
}

const Shape& Graph::shape(Var v) const { return node(v).shape; }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

void Graph::backward(Var loss) {
  const Node& n = node(loss);
  if (n.shape != Shape{1}) {
    throw ContractViolation("backward: loss must have shape [1], got " + to_string(n.shape));
  }
  const float one = 1.0f;
  backward(loss, std::span<const float>(&one, 1));
}

void Graph::backward(Var output, std::span<const float> seed) {
  Node& out = nodes_.at(output.id);
  if (seed.size() != out.value.size()) {
    throw ContractViolation("backward: seed of " + std::to_string(seed.size()) +
                            " values for output " + to_string(out.shape));
  }
  out.grad.assign(seed.begin(), seed.end());
  sweep(output.id);
  nodes_.clear();
}

void Graph::sweep(std::size_t from) {
  auto grad_of = [this](std::int64_t id) -> std::vector<double>* {
    Node& in = nodes_[static_cast<std::size_t>(id)];
    if (!in.requires_grad) return nullptr;
    if (in.grad.empty()) in.grad.assign(in.value.size(), 0.0);
    return &in.grad;
  };

  for (std::size_t idx = from + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (!n.requires_grad || n.grad.empty()) continue;
    const auto& g = n.grad;

    switch (n.kind) {
      case OpKind::kConstant:
        break;
      case OpKind::kLeaf: {
        if (n.bound && n.bound->requires_grad) {
          auto& dst = n.bound->grad;
          if (!dst) dst.emplace(g.size(), 0.0f);
          for (std::size_t i = 0; i < g.size(); ++i) (*dst)[i] += static_cast<float>(g[i]);
        }
        break;
      }
      case OpKind::kAdd:
      case OpKind::kSub: {
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
        }
        if (auto* db = grad_of(n.b)) {
          const double s = n.kind == OpKind::kAdd ? 1.0 : -1.0;
          for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += s * g[i];
        }
        break;
      }
      case OpKind::kMul: {
        const auto& x = nodes_[n.a].value;
        const auto& y = nodes_[n.b].value;
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * y[i];
        }
        if (auto* db = grad_of(n.b)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * x[i];
        }
        break;
      }
      case OpKind::kScale: {
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * n.param;
        }
        break;
      }
      case OpKind::kMatmul: {
        const Node& A = nodes_[n.a];
        const Node& B = nodes_[n.b];
        const std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
        if (auto* da = grad_of(n.a)) {
          // dA = G B^T
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t t = 0; t < k; ++t) {
              double acc = 0.0;
              for (std::size_t j = 0; j < p; ++j) acc += g[i * p + j] * B.value[t * p + j];
              (*da)[i * k + t] += acc;
            }
          }
        }
        if (auto* db = grad_of(n.b)) {
          // dB = A^T G
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t t = 0; t < k; ++t) {
              const double s = A.value[i * k + t];
              double* row = &(*db)[t * p];
              for (std::size_t j = 0; j < p; ++j) row[j] += s * g[i * p + j];
            }
          }
        }
        break;
      }
      case OpKind::kMatmulNT: {
        const Node& A = nodes_[n.a];
        const Node& B = nodes_[n.b];
        const std::size_t m = A.shape[0], k = A.shape[1], p = B.shape[0];
        if (auto* da = grad_of(n.a)) {
          // dA = G B
          for (std::size_t i = 0; i < m; ++i) {
            double* row = &(*da)[i * k];
            for (std::size_t j = 0; j < p; ++j) {
              const double s = g[i * p + j];
              const double* w = &B.value[j * k];
              for (std::size_t t = 0; t < k; ++t) row[t] += s * w[t];
            }
          }
        }
        if (auto* db = grad_of(n.b)) {
          // dB = G^T A
          for (std::size_t i = 0; i < m; ++i) {
            const double* x = &A.value[i * k];
            for (std::size_t j = 0; j < p; ++j) {
              const double s = g[i * p + j];
              double* row = &(*db)[j * k];
              for (std::size_t t = 0; t < k; ++t) row[t] += s * x[t];
            }
          }
        }
        break;
      }
      case OpKind::kAddBias: {
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
        }
        if (auto* db = grad_of(n.b)) {
          const std::size_t cols = n.shape[1];
          for (std::size_t i = 0; i < g.size(); ++i) (*db)[i % cols] += g[i];
        }
        break;
      }
      case OpKind::kMean:
      case OpKind::kSum: {
        if (auto* da = grad_of(n.a)) {
          const double s =
              n.kind == OpKind::kMean ? g[0] / static_cast<double>(da->size()) : g[0];
          for (auto& v : *da) v += s;
        }
        break;
      }
      case OpKind::kConcat: {
        const std::size_t m = n.shape[0];
        const std::size_t ca = nodes_[n.a].shape[1], cb = nodes_[n.b].shape[1];
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t c = 0; c < ca; ++c) (*da)[i * ca + c] += g[i * (ca + cb) + c];
          }
        }
        if (auto* db = grad_of(n.b)) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t c = 0; c < cb; ++c) (*db)[i * cb + c] += g[i * (ca + cb) + ca + c];
          }
        }
        break;
      }
      case OpKind::kRelu:
      case OpKind::kLeakyRelu: {
        const auto& x = nodes_[n.a].value;
        const double slope = n.kind == OpKind::kRelu ? 0.0 : n.param;
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += x[i] > 0 ? g[i] : slope * g[i];
        }
        break;
      }
      case OpKind::kSigmoid: {
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = n.value[i];
            (*da)[i] += g[i] * s * (1.0 - s);
          }
        }
        break;
      }
      case OpKind::kLog: {
        const auto& x = nodes_[n.a].value;
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] / x[i];
        }
        break;
      }
      case OpKind::kSoftplus: {
        const auto& x = nodes_[n.a].value;
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * sigmoid_of(x[i]);
        }
        break;
      }
      case OpKind::kDropout: {
        if (auto* da = grad_of(n.a)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * n.aux[i];
        }
        break;
      }
    }
  }
}

double grad_check(const ScalarFn& f, const Tensor& point, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw ContractViolation("grad_check: eps must lie in (0, 1e-2]");
  }

  auto evaluate = [&f](Tensor& at) {
    Graph g;
    Var v = g.leaf(at);
    Var out = f(g, v);
    if (g.shape(out) != Shape{1}) {
      throw ContractViolation("grad_check: function is not scalar-valued");
    }
    return g.item(out);
  };

  Tensor x = point;
  x.requires_grad = false;
  const double base = evaluate(x);
  if (evaluate(x) != base) {
    throw ContractViolation("grad_check: function is not deterministic");
  }

  Tensor probe = point;
  probe.requires_grad = true;
  probe.grad.reset();
  {
    Graph g;
    Var v = g.leaf(probe);
    Var out = f(g, v);
    g.backward(out);
  }
  std::vector<float> analytic = probe.grad ? *probe.grad : std::vector<float>(point.size(), 0.0f);

  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    Tensor up = x, down = x;
    up.data[i] = static_cast<float>(static_cast<double>(x.data[i]) + eps);
    down.data[i] = static_cast<float>(static_cast<double>(x.data[i]) - eps);
    // The float-rounded step, not eps, is what the function actually saw.
    const double step = static_cast<double>(up.data[i]) - static_cast<double>(down.data[i]);
    const double numeric = (evaluate(up) - evaluate(down)) / step;
    const double a = analytic[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

}  // namespace adgn
