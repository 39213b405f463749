#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "adgn/autodiff.hpp"
#include "adgn/mixture.hpp"
#include "adgn/nn.hpp"

namespace adgn {

enum class GLossVariant : std::uint8_t {
  kSaturating,     // G descends log(1 - D(G(x)))
  kNonSaturating,  // G descends -log D(G(x))
};

/// -(1/m) sum [log D(y|x) + log(1 - D(y_hat|x))], written with softplus on
/// the logits so that saturated discriminators stay finite.
Var d_loss(Graph& g, DiscriminatorNet& d, Var real_y, Var fake_y, Var x);

/// Saturating: (1/m) sum log(1 - D(y_hat|x)). Non-saturating: -(1/m) sum log D(y_hat|x).
Var g_loss_from_node(Graph& g, DiscriminatorNet& d, Var fake_y, Var x,
                     GLossVariant variant = GLossVariant::kSaturating);

/// Per-node weights pi_j of the generator objective.
struct MixtureWeights {
  std::vector<double> pi;

  static MixtureWeights uniform(std::size_t n);
  static MixtureWeights from_sizes(std::span<const std::uint32_t> sizes);
  // Throws ContractViolation unless every weight is >= 0 and they sum to 1 within 1e-9.
  void validate() const;
};

/// [m, k] one-hot rows for component indices.
Tensor one_hot(std::span<const std::uint32_t> xs, std::size_t k);

struct ModelConfig {
  std::size_t components = 3;
  std::size_t hidden = 64;
  double dropout = 0.5;
  double leaky_alpha = 0.2;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NodeConfig {
  ModelConfig model;
  std::size_t batch = 64;
  OptimizerKind optimizer = AdamParams{};
  GLossVariant loss = GLossVariant::kSaturating;
  std::uint64_t init_seed = 0;
  std::uint64_t data_seed = 0;
};

/// Everything one discriminator site does with its private shard. Real
/// samples never leave this object: sample_aux() exports component labels
/// only, feedback() exports a gradient with respect to the fake batch.
class DiscriminatorWorker {
 public:
  DiscriminatorWorker(Shard shard, NodeConfig config);

  /// Draws a minibatch from the shard, keeps its y values as the real side
  /// of the next update, and returns the one-hot labels [m, k].
  Tensor sample_aux();
  /// One descent step on d_loss against the given fake batch. Returns the loss.
  double update(const Tensor& fake);

  struct Feedback {
    Tensor fake_grad;  // d(generator term)/d(fake), same shape as the fake batch
    double d_loss = 0.0;
    double g_term = 0.0;
  };
  /// Generator-phase answer: gradient of this node's generator loss term with
  /// respect to the fake batch, plus the current discriminator loss.
  Feedback feedback(const Tensor& fake);

  const Shard& shard() const { return shard_; }
  DiscriminatorNet& net() { return d_; }
  const NodeConfig& config() const { return config_; }

 private:
  Shard shard_;
  NodeConfig config_;
  DiscriminatorNet d_;
  OptimizerState opt_;
  Rng rng_;
  Tensor pending_x_;
  Tensor pending_y_;
};

struct GeneratorConfig {
  ModelConfig model;
  OptimizerKind optimizer = AdamParams{};
  std::uint64_t init_seed = 0;
  std::uint64_t dropout_seed = 0;
};

/// The central generator. Each node gets its own dropout stream, so the
/// result of a round does not depend on the order nodes are served in.
class GeneratorWorker {
 public:
  GeneratorWorker(GeneratorConfig config, std::size_t nodes);

  /// Fake batch for a discriminator-phase request; no graph is retained.
  Tensor generate(std::uint16_t node, const Tensor& aux);
  /// Fake batch for a generator-phase request; the graph is kept until
  /// accumulate() is called for the same node.
  Tensor generate_for_update(std::uint16_t node, const Tensor& aux);
  /// Back-propagates weight * fake_grad through the retained graph.
  void accumulate(std::uint16_t node, const Tensor& fake_grad, double weight);
  void zero_grad();
  void step();

  /// Draws samples for evaluation with an external dropout stream.
  std::vector<float> sample(std::span<const std::uint32_t> xs, Rng& dropout_rng);

  GeneratorNet& net() { return g_; }
  std::size_t nodes() const { return node_rngs_.size(); }

 private:
  struct Pending {
    Graph graph;
    Var output;
    Shape shape;
  };

  GeneratorConfig config_;
  GeneratorNet g_;
  OptimizerState opt_;
  std::vector<Rng> node_rngs_;
  std::vector<std::optional<Pending>> pending_;
};

struct TrainConfig {
  std::size_t iterations = 5000;
  std::size_t k_d = 1;
  GLossVariant loss = GLossVariant::kSaturating;
  std::chrono::milliseconds timeout{30000};
  // Overrides the shard-size-proportional default when set.
  std::optional<MixtureWeights> weights;
};

struct RoundReport {
  struct NodeEntry {
    std::uint16_t node = 0;
    double d_loss = 0.0;
    std::uint64_t bytes_tx = 0;  // generator -> node
    std::uint64_t bytes_rx = 0;  // node -> generator
  };
  std::uint32_t round = 0;
  std::vector<NodeEntry> nodes;
  // Game value sum_j pi_j * [mean log D_j(y) + mean log(1 - D_j(y_hat))] on the
  // generator-phase batches, i.e. minus the pi-weighted discriminator losses.
  double g_loss = 0.0;
  bool non_saturating = false;
};

using RoundSink = std::function<void(const RoundReport&)>;

void write_loss_csv_header(std::ostream& out);
void write_loss_csv_rows(std::ostream& out, const RoundReport& report);

/// Conditional GAN with a single discriminator and no transport in between.
/// Follows the same round structure and random streams as a one-node
/// distributed run.
std::vector<RoundReport> train_centralized(GeneratorWorker& g, DiscriminatorWorker& d,
                                           const TrainConfig& config, const RoundSink& sink = {});

}  // namespace adgn
