#include "adgn/gan.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "adgn/error.hpp"

namespace adgn {

namespace {

void require_batch(const char* op, const Graph& g, Var a, Var b) {
  if (g.shape(a).empty() || g.shape(b).empty() || g.shape(a)[0] != g.shape(b)[0]) {
    throw ContractViolation(std::string(op) + ": batch size mismatch " + to_string(g.shape(a)) +
                            " vs " + to_string(g.shape(b)));
  }
}

// -log sigmoid(l) = softplus(-l); -log(1 - sigmoid(l)) = softplus(l).
Var mean_neg_log_d(Graph& g, Var logits) { return g.mean(g.softplus(g.scale(logits, -1.0))); }
Var mean_neg_log_one_minus_d(Graph& g, Var logits) { return g.mean(g.softplus(logits)); }

}  // namespace

Var d_loss(Graph& g, DiscriminatorNet& d, Var real_y, Var fake_y, Var x) {
  require_batch("d_loss", g, real_y, fake_y);
  require_batch("d_loss", g, real_y, x);
  Var real_logits = d.forward(g, real_y, x);
  Var fake_logits = d.forward(g, fake_y, x);
  return g.add(mean_neg_log_d(g, real_logits), mean_neg_log_one_minus_d(g, fake_logits));
}

Var g_loss_from_node(Graph& g, DiscriminatorNet& d, Var fake_y, Var x, GLossVariant variant) {
  require_batch("g_loss_from_node", g, fake_y, x);
  Var logits = d.forward(g, fake_y, x);
  if (variant == GLossVariant::kSaturating) {
    return g.scale(mean_neg_log_one_minus_d(g, logits), -1.0);
  }
  return mean_neg_log_d(g, logits);
}

MixtureWeights MixtureWeights::uniform(std::size_t n) {
  if (n == 0) throw ContractViolation("MixtureWeights: need at least one node");
  return {std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

MixtureWeights MixtureWeights::from_sizes(std::span<const std::uint32_t> sizes) {
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  if (sizes.empty() || total <= 0.0) throw ContractViolation("MixtureWeights: empty shards");
  MixtureWeights w;
  for (auto s : sizes) w.pi.push_back(static_cast<double>(s) / total);
  return w;
}

void MixtureWeights::validate() const {
  if (pi.empty()) throw ContractViolation("MixtureWeights: no weights");
  double total = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0)) throw ContractViolation("MixtureWeights: negative weight");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractViolation("MixtureWeights: weights sum to " + std::to_string(total));
  }
}

Tensor one_hot(std::span<const std::uint32_t> xs, std::size_t k) {
  Tensor t({xs.size(), k});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] >= k) throw ContractViolation("one_hot: index out of range");
    t.at(i, xs[i]) = 1.0f;
  }
  return t;
}

DiscriminatorWorker::DiscriminatorWorker(Shard shard, NodeConfig config)
    : shard_(std::move(shard)),
      config_(config),
      d_(config.model.components, config.model.hidden, config.model.leaky_alpha),
      opt_(config.optimizer),
      rng_(config.data_seed) {
  if (shard_.samples.empty()) throw ContractViolation("discriminator node needs a nonempty shard");
  if (config.batch == 0) throw ContractViolation("batch size must be at least 1");
  init_params(d_, config.init_seed);
}

Tensor DiscriminatorWorker::sample_aux() {
  const std::size_t m = config_.batch;
  std::vector<std::uint32_t> xs(m);
  std::vector<float> ys(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Sample& s = shard_.samples[rng_.index(shard_.samples.size())];
    xs[i] = s.x;
    ys[i] = s.y;
  }
  pending_x_ = one_hot(xs, config_.model.components);
  pending_y_ = Tensor({m, 1}, std::move(ys));
  return pending_x_;
}

double DiscriminatorWorker::update(const Tensor& fake) {
  if (pending_y_.data.empty()) throw ContractViolation("update called before sample_aux");
  if (fake.shape != pending_y_.shape) {
    throw ContractViolation("fake batch shape " + to_string(fake.shape) + " does not answer " +
                            to_string(pending_y_.shape));
  }
  auto params = d_.parameters();
  zero_grad(params);
  Graph g;
  Var loss = d_loss(g, d_, g.constant(pending_y_), g.constant(fake), g.constant(pending_x_));
  const double value = g.item(loss);
  g.backward(loss);
  optimizer_step(params, opt_);
  return value;
}

DiscriminatorWorker::Feedback DiscriminatorWorker::feedback(const Tensor& fake) {
  if (pending_y_.data.empty()) throw ContractViolation("feedback called before sample_aux");
  if (fake.shape != pending_y_.shape) {
    throw ContractViolation("fake batch shape " + to_string(fake.shape) + " does not answer " +
                            to_string(pending_y_.shape));
  }
  Tensor probe = fake;
  probe.requires_grad = true;
  probe.grad.reset();

  Graph g;
  Var x = g.constant(pending_x_);
  Var real_logits = d_.forward(g, g.constant(pending_y_), x);
  Var fake_logits = d_.forward(g, g.leaf(probe), x);
  const double real_term = g.item(mean_neg_log_d(g, real_logits));
  Var fake_term = mean_neg_log_one_minus_d(g, fake_logits);
  const double fake_value = g.item(fake_term);
  Var objective = config_.loss == GLossVariant::kSaturating
                      ? g.scale(fake_term, -1.0)
                      : mean_neg_log_d(g, fake_logits);

  Feedback out;
  out.d_loss = real_term + fake_value;
  out.g_term = g.item(objective);
  g.backward(objective);
  // The backward pass also touched D's parameters; they are not updated here.
  zero_grad(d_.parameters());
  out.fake_grad = Tensor(fake.shape, probe.grad ? *probe.grad : std::vector<float>(fake.size()));
  return out;
}

GeneratorWorker::GeneratorWorker(GeneratorConfig config, std::size_t nodes)
    : config_(config),
      g_(config.model.components, config.model.hidden, config.model.dropout,
         config.model.leaky_alpha),
      opt_(config.optimizer),
      pending_(nodes) {
  if (nodes == 0) throw ContractViolation("generator needs at least one node");
  init_params(g_, config.init_seed);
  node_rngs_.reserve(nodes);
  for (std::size_t j = 0; j < nodes; ++j) node_rngs_.emplace_back(derive_seed(config.dropout_seed, j));
}

Tensor GeneratorWorker::generate(std::uint16_t node, const Tensor& aux) {
  Graph g;
  Var out = g_.forward(g, g.constant(aux), node_rngs_.at(node));
  return g.value(out);
}

Tensor GeneratorWorker::generate_for_update(std::uint16_t node, const Tensor& aux) {
  Pending p;
  p.output = g_.forward(p.graph, p.graph.constant(aux), node_rngs_.at(node));
  Tensor fake = p.graph.value(p.output);
  p.shape = fake.shape;
  pending_.at(node) = std::move(p);
  return fake;
}

void GeneratorWorker::accumulate(std::uint16_t node, const Tensor& fake_grad, double weight) {
  auto& slot = pending_.at(node);
  if (!slot) throw ContractViolation("accumulate: no pending fake batch for node " + std::to_string(node));
  if (fake_grad.shape != slot->shape) {
    throw ContractViolation("fake gradient shape " + to_string(fake_grad.shape) +
                            " does not match fake batch " + to_string(slot->shape));
  }
  std::vector<float> seed(fake_grad.size());
  for (std::size_t i = 0; i < seed.size(); ++i) {
    seed[i] = static_cast<float>(weight * static_cast<double>(fake_grad.data[i]));
  }
  slot->graph.backward(slot->output, seed);
  slot.reset();
}

void GeneratorWorker::zero_grad() { adgn::zero_grad(g_.parameters()); }

void GeneratorWorker::step() {
  auto params = g_.parameters();
  for (Tensor* p : params) {
    // Parameters no node's gradient reached (e.g. unseen one-hot inputs) get a zero gradient.
    if (!p->grad) p->grad.emplace(p->size(), 0.0f);
  }
  optimizer_step(params, opt_);
}

std::vector<float> GeneratorWorker::sample(std::span<const std::uint32_t> xs, Rng& dropout_rng) {
  std::vector<float> out;
  out.reserve(xs.size());
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < xs.size(); start += kChunk) {
    const auto chunk = xs.subspan(start, std::min(kChunk, xs.size() - start));
    Graph g;
    Var y = g_.forward(g, g.constant(one_hot(chunk, g_.components())), dropout_rng);
    const Tensor t = g.value(y);
    out.insert(out.end(), t.data.begin(), t.data.end());
  }
  return out;
}

void write_loss_csv_header(std::ostream& out) { out << "round,node,d_loss,g_loss,bytes_tx,bytes_rx\n"; }

void write_loss_csv_rows(std::ostream& out, const RoundReport& r) {
  char buf[160];
  for (const auto& n : r.nodes) {
    std::snprintf(buf, sizeof buf, "%u,%u,%.9g,%.9g,%llu,%llu\n", r.round, n.node, n.d_loss,
                  r.g_loss, static_cast<unsigned long long>(n.bytes_tx),
                  static_cast<unsigned long long>(n.bytes_rx));
    out << buf;
  }
}

std::vector<RoundReport> train_centralized(GeneratorWorker& g, DiscriminatorWorker& d,
                                           const TrainConfig& config, const RoundSink& sink) {
  if (config.k_d == 0) throw ContractViolation("k_d must be at least 1");
  std::vector<RoundReport> reports;
  reports.reserve(config.iterations);
  for (std::uint32_t round = 1; round <= config.iterations; ++round) {
    for (std::size_t k = 0; k < config.k_d; ++k) {
      Tensor aux = d.sample_aux();
      d.update(g.generate(0, aux));
    }
    Tensor aux = d.sample_aux();
    Tensor fake = g.generate_for_update(0, aux);
    auto fb = d.feedback(fake);
    g.zero_grad();
    g.accumulate(0, fb.fake_grad, 1.0);
    g.step();

    RoundReport r;
    r.round = round;
    r.nodes.push_back({0, fb.d_loss, 0, 0});
    r.g_loss = -fb.d_loss;
    r.non_saturating = config.loss == GLossVariant::kNonSaturating;
    if (!std::isfinite(fb.d_loss) || !fb.fake_grad.all_finite()) {
      throw RunFailure("non-finite loss at round " + std::to_string(round) +
                       ": d_loss=" + std::to_string(fb.d_loss));
    }
    if (sink) sink(r);
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace adgn
