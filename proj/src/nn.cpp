#include "adgn/nn.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "adgn/bytes.hpp"
#include "adgn/error.hpp"

namespace adgn {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LinearLayer::LinearLayer(std::size_t in, std::size_t out)
    : weight({out, in}), bias({out}) {
  weight.requires_grad = true;
  bias.requires_grad = true;
}

Var LinearLayer::forward(Graph& g, Var x) {
  Var w = g.leaf(weight);
  Var b = g.leaf(bias);
  return g.add_bias(g.matmul_nt(x, w), b);
}

namespace {

std::vector<LinearLayer> make_mlp(std::size_t in, std::size_t hidden, std::size_t depth) {
  std::vector<LinearLayer> layers;
  std::size_t width = in;
  for (std::size_t i = 0; i < depth; ++i) {
    layers.emplace_back(width, hidden);
    width = hidden;
  }
  layers.emplace_back(width, 1);
  return layers;
}

std::vector<Tensor*> collect(std::vector<LinearLayer>& layers) {
  std::vector<Tensor*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> collect_named(
    const std::string& prefix, const std::vector<LinearLayer>& layers) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back(prefix + "." + std::to_string(i) + ".weight", &layers[i].weight);
    out.emplace_back(prefix + "." + std::to_string(i) + ".bias", &layers[i].bias);
  }
  return out;
}

void restore_layers(const std::string& prefix, std::vector<LinearLayer>& layers,
                    const NamedTensors& tensors) {
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    throw ContractViolation("checkpoint has no tensor named " + name);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (auto [suffix, dst] : {std::pair{".weight", &layers[i].weight},
                               std::pair{".bias", &layers[i].bias}}) {
      const std::string name = prefix + "." + std::to_string(i) + suffix;
      const Tensor& src = find(name);
      if (src.shape != dst->shape) {
        throw ContractViolation("checkpoint tensor " + name + " has shape " +
                                to_string(src.shape) + ", model expects " +
                                to_string(dst->shape));
      }
      dst->data = src.data;
    }
  }
}

}  // namespace

GeneratorNet::GeneratorNet(std::size_t components, std::size_t hidden, double dropout,
                           double leaky_alpha)
    : layers_(make_mlp(components, hidden, 2)), dropout_(dropout), alpha_(leaky_alpha) {
  if (dropout <= 0.0 || dropout >= 1.0) {
    throw ContractViolation("generator needs a dropout rate in (0,1) as its noise source");
  }
}

Var GeneratorNet::forward(Graph& g, Var x, Rng& dropout_rng) {
  Var h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    h = g.leaky_relu(layers_[i].forward(g, h), alpha_);
    h = g.dropout(h, dropout_, dropout_rng);
  }
  return layers_.back().forward(g, h);
}

std::vector<Tensor*> GeneratorNet::parameters() { return collect(layers_); }

std::vector<std::pair<std::string, const Tensor*>> GeneratorNet::named_parameters() const {
  return collect_named("generator", layers_);
}

DiscriminatorNet::DiscriminatorNet(std::size_t components, std::size_t hidden, double leaky_alpha)
    : layers_(make_mlp(components + 1, hidden, 2)), alpha_(leaky_alpha) {}

Var DiscriminatorNet::forward(Graph& g, Var y, Var x) {
  Var h = g.concat(y, x);
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    h = g.leaky_relu(layers_[i].forward(g, h), alpha_);
  }
  return layers_.back().forward(g, h);
}

std::vector<Tensor*> DiscriminatorNet::parameters() { return collect(layers_); }

std::vector<std::pair<std::string, const Tensor*>> DiscriminatorNet::named_parameters() const {
  return collect_named("discriminator", layers_);
}

void init_params(std::vector<LinearLayer>& layers, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& l : layers) {
    const double bound = std::sqrt(1.0 / static_cast<double>(l.fan_in()));
    for (auto& w : l.weight.data) w = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    std::fill(l.bias.data.begin(), l.bias.data.end(), 0.0f);
    l.weight.zero_grad();
    l.bias.zero_grad();
  }
}

void zero_grad(const std::vector<Tensor*>& params) {
  for (Tensor* p : params) p->zero_grad();
}

namespace {

void prepare(const std::vector<Tensor*>& params, OptimizerState& state, bool two_moments) {
  if (state.first.empty()) {
    for (Tensor* p : params) {
      state.first.emplace_back(p->size(), 0.0);
      if (two_moments) state.second.emplace_back(p->size(), 0.0);
    }
  }
  if (state.first.size() != params.size()) {
    throw ContractViolation("optimizer state tracks " + std::to_string(state.first.size()) +
                            " parameters, step called with " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->grad) {
      throw ContractViolation("optimizer step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.first[i].size() != params[i]->size()) {
      throw ContractViolation("optimizer step: moment buffer shape mismatch for parameter " +
                              std::to_string(i));
    }
  }
}

}  // namespace

void adam_step(const std::vector<Tensor*>& params, OptimizerState& state) {
  const auto* hp = std::get_if<AdamParams>(&state.kind);
  if (!hp) throw ContractViolation("adam_step on a non-adam optimizer state");
  prepare(params, state, true);
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp->beta1, t);
  const double c2 = 1.0 - std::pow(hp->beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const auto& g = *p.grad;
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = hp->beta1 * m[k] + (1.0 - hp->beta1) * g[k];
      v[k] = hp->beta2 * v[k] + (1.0 - hp->beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.data[k] = static_cast<float>(p.data[k] - hp->lr * mhat / (std::sqrt(vhat) + hp->eps));
    }
  }
}

void sgd_momentum_step(const std::vector<Tensor*>& params, OptimizerState& state) {
  const auto* hp = std::get_if<SgdMomentumParams>(&state.kind);
  if (!hp) throw ContractViolation("sgd_momentum_step on a non-sgd optimizer state");
  prepare(params, state, false);
  state.step += 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const auto& g = *p.grad;
    auto& vel = state.first[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      vel[k] = hp->momentum * vel[k] + g[k];
      p.data[k] = static_cast<float>(p.data[k] - hp->lr * vel[k]);
    }
  }
}

void optimizer_step(const std::vector<Tensor*>& params, OptimizerState& state) {
  if (std::holds_alternative<AdamParams>(state.kind)) {
    adam_step(params, state);
  } else {
    sgd_momentum_step(params, state);
  }
}

namespace {
constexpr char kCheckpointMagic[4] = {'A', 'D', 'G', 'N'};
}

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors) {
  ByteWriter w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u8(1);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw ContractViolation("checkpoint tensor name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data) w.f32(v);
  }
  return w.take();
}

NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  auto fail = [](const char* why) { return std::runtime_error(std::string("checkpoint: ") + why); };
  std::string magic;
  if (!r.str(4, magic) || magic != std::string(kCheckpointMagic, 4)) throw fail("bad magic");
  std::uint8_t version = 0;
  if (!r.u8(version) || version != 1) throw fail("unsupported version");
  std::uint32_t count = 0;
  if (!r.u32(count)) throw fail("truncated");
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t len = 0;
    std::string name;
    std::uint8_t ndim = 0;
    if (!r.u16(len) || !r.str(len, name) || !r.u8(ndim)) throw fail("truncated");
    Shape shape(ndim);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      std::uint32_t v = 0;
      if (!r.u32(v) || v == 0) throw fail("bad dimension");
      d = v;
      n *= v;
    }
    if (n * 4 > r.remaining()) throw fail("truncated");
    std::vector<float> data(n);
    for (auto& v : data) r.f32(v);
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) throw fail("trailing bytes");
  return out;
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  write_file_bytes(path, encode_checkpoint(tensors));
}

NamedTensors load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file_bytes(path));
}

NamedTensors snapshot(const std::vector<std::pair<std::string, const Tensor*>>& named) {
  NamedTensors out;
  for (const auto& [name, t] : named) out.emplace_back(name, Tensor(t->shape, t->data));
  return out;
}

void restore(GeneratorNet& net, const NamedTensors& tensors) {
  restore_layers("generator", net.layers(), tensors);
}

void restore(DiscriminatorNet& net, const NamedTensors& tensors) {
  restore_layers("discriminator", net.layers(), tensors);
}

}  // namespace adgn
