#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "adgn/autodiff.hpp"
#include "adgn/rng.hpp"
#include "adgn/tensor.hpp"

namespace adgn {

struct LinearLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  LinearLayer(std::size_t in, std::size_t out);
  std::size_t fan_in() const { return weight.shape[1]; }
  std::size_t fan_out() const { return weight.shape[0]; }
  Var forward(Graph& g, Var x);
};

struct MlpShape {
  std::size_t input = 0;
  std::size_t hidden = 64;
  std::size_t hidden_layers = 2;
  double leaky_alpha = 0.2;
};

/// Conditional generator y = G(x). The only source of randomness is dropout
/// after every hidden activation, which stays on when sampling.
class GeneratorNet {
 public:
  explicit GeneratorNet(std::size_t components, std::size_t hidden = 64, double dropout = 0.5,
                        double leaky_alpha = 0.2);

  // x_onehot: [m, components] -> [m, 1]
  Var forward(Graph& g, Var x_onehot, Rng& dropout_rng);

  std::size_t components() const { return layers_.front().fan_in(); }
  double dropout_rate() const { return dropout_; }
  std::vector<LinearLayer>& layers() { return layers_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }
  std::vector<Tensor*> parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;

 private:
  std::vector<LinearLayer> layers_;
  double dropout_;
  double alpha_;
};

/// Maps (y, one-hot x) to a raw logit; sigmoid is applied inside the losses.
class DiscriminatorNet {
 public:
  explicit DiscriminatorNet(std::size_t components, std::size_t hidden = 64,
                            double leaky_alpha = 0.2);

  // y: [m, 1], x_onehot: [m, components] -> logits [m, 1]
  Var forward(Graph& g, Var y, Var x_onehot);

  std::vector<LinearLayer>& layers() { return layers_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }
  std::vector<Tensor*> parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;

 private:
  std::vector<LinearLayer> layers_;
  double alpha_;
};

/// Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases zero.
void init_params(std::vector<LinearLayer>& layers, std::uint64_t seed);
inline void init_params(GeneratorNet& net, std::uint64_t seed) { init_params(net.layers(), seed); }
inline void init_params(DiscriminatorNet& net, std::uint64_t seed) {
  init_params(net.layers(), seed);
}

void zero_grad(const std::vector<Tensor*>& params);

struct AdamParams {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamParams&, const AdamParams&) = default;
};

struct SgdMomentumParams {
  double lr = 2e-4;
  double momentum = 0.9;
  friend bool operator==(const SgdMomentumParams&, const SgdMomentumParams&) = default;
};

using OptimizerKind = std::variant<AdamParams, SgdMomentumParams>;

struct OptimizerState {
  OptimizerKind kind = AdamParams{};
  std::vector<std::vector<double>> first;   // m (adam) or velocity (sgd)
  std::vector<std::vector<double>> second;  // v (adam only)
  std::uint64_t step = 0;

  OptimizerState() = default;
  explicit OptimizerState(OptimizerKind k) : kind(std::move(k)) {}
};

// Both throw ContractViolation when any parameter lacks a gradient.
void adam_step(const std::vector<Tensor*>& params, OptimizerState& state);
void sgd_momentum_step(const std::vector<Tensor*>& params, OptimizerState& state);
// Dispatches on state.kind.
void optimizer_step(const std::vector<Tensor*>& params, OptimizerState& state);

/// Checkpoint I/O: "ADGN", u8 version 1, u32 count, then per tensor
/// u16 name length, name, u8 ndim, u32 dims, f32 data (all little-endian).
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;
std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

NamedTensors snapshot(const std::vector<std::pair<std::string, const Tensor*>>& named);
// Copies values by name into the net; throws ContractViolation on a missing
// name or a shape mismatch.
void restore(GeneratorNet& net, const NamedTensors& tensors);
void restore(DiscriminatorNet& net, const NamedTensors& tensors);

}  // namespace adgn
