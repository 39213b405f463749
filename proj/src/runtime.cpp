#include "adgn/runtime.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

#include "adgn/error.hpp"

namespace adgn {

void CommLedger::add_tx(std::uint32_t round, std::uint16_t node, std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  counts_[{round, node}].tx += bytes;
}

void CommLedger::add_rx(std::uint32_t round, std::uint16_t node, std::uint64_t bytes) {
  std::lock_guard lock(mu_);
  counts_[{round, node}].rx += bytes;
}

CommLedger::Counts CommLedger::get(std::uint32_t round, std::uint16_t node) const {
  std::lock_guard lock(mu_);
  auto it = counts_.find({round, node});
  return it == counts_.end() ? Counts{} : it->second;
}

std::uint64_t CommLedger::total() const {
  std::lock_guard lock(mu_);
  std::uint64_t t = 0;
  for (const auto& [key, c] : counts_) t += c.tx + c.rx;
  return t;
}

GeneratorServer::GeneratorServer(Listener& listener, ServerOptions options, Transcript* transcript)
    : listener_(listener), options_(options), transcript_(transcript) {
  if (options_.expected_nodes == 0) throw ContractViolation("server expects at least one node");
  if (options_.expected_nodes >= kUnassignedNode) throw ContractViolation("too many nodes");
}

GeneratorServer::~GeneratorServer() {
  for (auto& s : sessions_) {
    if (s.channel) s.channel->close();
  }
}

void GeneratorServer::accept_nodes() {
  const std::size_t n = options_.expected_nodes;
  sessions_.clear();
  sessions_.resize(n);
  std::size_t joined = 0;
  while (joined < n) {
    auto channel = listener_.accept(options_.join_timeout);
    if (!channel) {
      throw RunFailure("only " + std::to_string(joined) + " of " + std::to_string(n) +
                       " discriminator nodes joined");
    }
    std::optional<Bytes> frame;
    try {
      frame = channel->receive(options_.join_timeout);
    } catch (const ConnectionClosed&) {
      continue;
    }
    if (!frame) continue;

    Message msg;
    try {
      msg = decode(*frame);
    } catch (const DecodeError&) {
      continue;
    }
    if (msg.type != MsgType::kJoin) continue;

    std::uint16_t id = kUnassignedNode;
    if (msg.node_id == kUnassignedNode) {
      for (std::uint16_t j = 0; j < n; ++j) {
        if (!sessions_[j].channel) {
          id = j;
          break;
        }
      }
    } else if (msg.node_id < n && !sessions_[msg.node_id].channel) {
      id = msg.node_id;
    }

    if (transcript_) transcript_->append(Direction::kToGenerator, id, *frame);
    const auto ack = encode(make_join_ack(id));
    if (transcript_) transcript_->append(Direction::kFromGenerator, id, ack);
    if (id != kUnassignedNode) {
      ledger_.add_rx(0, id, frame->size());
      ledger_.add_tx(0, id, ack.size());
    }
    try {
      channel->send(ack);
    } catch (const ConnectionClosed&) {
      continue;
    }
    if (id == kUnassignedNode) {
      std::fprintf(stderr, "generator: rejected JOIN requesting node id %u\n", msg.node_id);
      channel->close();
      continue;
    }
    sessions_[id].channel = std::move(channel);
    sessions_[id].shard_size = std::get<JoinBody>(msg.payload).shard_size;
    ++joined;
  }
}

std::vector<std::uint32_t> GeneratorServer::shard_sizes() const {
  std::vector<std::uint32_t> out;
  for (const auto& s : sessions_) out.push_back(s.shard_size);
  return out;
}

void GeneratorServer::send(std::uint16_t node, const Message& msg) {
  const auto frame = encode(msg);
  if (transcript_) transcript_->append(Direction::kFromGenerator, node, frame);
  ledger_.add_tx(msg.round, node, frame.size());
  try {
    sessions_.at(node).channel->send(frame);
  } catch (const ConnectionClosed& e) {
    throw RunFailure("node " + std::to_string(node) + " disconnected: " + e.what());
  }
}

Message GeneratorServer::receive(std::uint16_t node, MsgType expected, std::uint32_t round) {
  auto& channel = *sessions_.at(node).channel;
  std::optional<Bytes> frame;
  try {
    frame = channel.receive(options_.timeout);
    if (!frame) {
      std::fprintf(stderr, "generator: node %u silent in round %u, retrying once\n", node, round);
      frame = channel.receive(options_.timeout);
    }
  } catch (const ConnectionClosed& e) {
    throw RunFailure("node " + std::to_string(node) + " disconnected in round " +
                     std::to_string(round) + ": " + e.what());
  }
  if (!frame) {
    throw NodeTimeout(node, "no " + std::string(msg_type_name(expected)) + " within timeout in round " +
                                std::to_string(round));
  }
  if (transcript_) transcript_->append(Direction::kToGenerator, node, *frame);
  ledger_.add_rx(round, node, frame->size());

  Message msg;
  try {
    msg = decode(*frame);
  } catch (const DecodeError& e) {
    throw RunFailure("node " + std::to_string(node) + " sent an undecodable frame: " + e.what());
  }
  if (msg.type != expected || msg.node_id != node || msg.round != round) {
    throw RunFailure("node " + std::to_string(node) + ": expected " + msg_type_name(expected) +
                     " for round " + std::to_string(round) + ", got " + msg_type_name(msg.type) +
                     " from node " + std::to_string(msg.node_id) + " round " +
                     std::to_string(msg.round));
  }
  return msg;
}

namespace {

void check_aux(const Tensor& aux, std::size_t components, std::uint16_t node) {
  bool ok = aux.shape.size() == 2 && aux.shape[1] == components;
  for (std::size_t i = 0; ok && i < aux.rows(); ++i) {
    int ones = 0;
    for (std::size_t c = 0; c < components; ++c) {
      const float v = aux.at(i, c);
      if (v == 1.0f) {
        ++ones;
      } else if (v != 0.0f) {
        ok = false;
      }
    }
    ok = ok && ones == 1;
  }
  if (!ok) throw RunFailure("node " + std::to_string(node) + " sent a malformed auxiliary batch");
}

}  // namespace

std::vector<RoundReport> GeneratorServer::train(GeneratorWorker& g, const TrainConfig& config,
                                                const RoundSink& sink) {
  const std::size_t n = sessions_.size();
  if (n == 0) throw ContractViolation("train called before accept_nodes");
  if (g.nodes() != n) throw ContractViolation("generator was built for a different node count");
  if (config.k_d == 0) throw ContractViolation("k_d must be at least 1");

  const MixtureWeights weights =
      config.weights ? *config.weights : MixtureWeights::from_sizes(shard_sizes());
  weights.validate();
  if (weights.pi.size() != n) throw ContractViolation("one mixture weight per node required");

  const std::size_t components = g.net().components();
  std::vector<RoundReport> reports;
  reports.reserve(config.iterations);
  auto node_id = [](std::size_t j) { return static_cast<std::uint16_t>(j); };

  for (std::uint32_t round = 1; round <= config.iterations; ++round) {
    last_round_ = round;
    for (std::size_t k = 0; k < config.k_d; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        send(node_id(j), make_round_begin(node_id(j), round, Phase::kDiscriminator));
      }
      for (std::size_t j = 0; j < n; ++j) {
        Message req = receive(node_id(j), MsgType::kAuxBatch, round);
        const Tensor& aux = std::get<Tensor>(req.payload);
        check_aux(aux, components, node_id(j));
        send(node_id(j), make_tensor_message(MsgType::kFakeBatch, node_id(j), round,
                                             g.generate(node_id(j), aux)));
      }
    }

    for (std::size_t j = 0; j < n; ++j) {
      send(node_id(j), make_round_begin(node_id(j), round, Phase::kGenerator));
    }
    for (std::size_t j = 0; j < n; ++j) {
      Message req = receive(node_id(j), MsgType::kAuxBatch, round);
      const Tensor& aux = std::get<Tensor>(req.payload);
      check_aux(aux, components, node_id(j));
      send(node_id(j), make_tensor_message(MsgType::kFakeBatch, node_id(j), round,
                                           g.generate_for_update(node_id(j), aux)));
    }

    g.zero_grad();
    RoundReport report;
    report.round = round;
    report.non_saturating = config.loss == GLossVariant::kNonSaturating;
    for (std::size_t j = 0; j < n; ++j) {
      Message grad = receive(node_id(j), MsgType::kFakeGrad, round);
      Message loss = receive(node_id(j), MsgType::kDLoss, round);
      const Tensor& fake_grad = std::get<Tensor>(grad.payload);
      const double d = std::get<Tensor>(loss.payload).data[0];
      if (!fake_grad.all_finite()) {
        throw RunFailure("non-finite fake gradient from node " + std::to_string(j) +
                         " in round " + std::to_string(round) + " (d_loss=" + std::to_string(d) +
                         ")");
      }
      try {
        g.accumulate(node_id(j), fake_grad, weights.pi[j]);
      } catch (const ContractViolation& e) {
        throw RunFailure("node " + std::to_string(j) + ": " + e.what());
      }
      report.nodes.push_back({node_id(j), d, 0, 0});
      report.g_loss -= weights.pi[j] * d;
    }
    g.step();

    for (auto& e : report.nodes) {
      const auto c = ledger_.get(round, e.node);
      e.bytes_tx = c.tx;
      e.bytes_rx = c.rx;
    }
    if (sink) sink(report);
    reports.push_back(std::move(report));
  }
  return reports;
}

void GeneratorServer::shutdown() {
  if (shut_down_) return;
  shut_down_ = true;
  for (std::size_t j = 0; j < sessions_.size(); ++j) {
    if (!sessions_[j].channel) continue;
    try {
      send(static_cast<std::uint16_t>(j),
           make_shutdown(static_cast<std::uint16_t>(j), last_round_ + 1));
    } catch (const RunFailure&) {
    }
  }
  for (auto& s : sessions_) {
    if (s.channel) s.channel->close();
  }
}

namespace {

enum class NodeExit { kShutdown, kReconnect, kFatal };

struct NodeSession {
  Channel& channel;
  DiscriminatorWorker& worker;
  std::uint16_t id;
  Millis idle;

  Message next() {
    auto frame = channel.receive(idle);
    if (!frame) throw RunFailure("generator silent past the idle timeout");
    return decode(*frame);
  }

  void send(const Message& m) { channel.send(encode(m)); }

  // Returns false when the generator ended the run instead of answering.
  bool request_fake(std::uint32_t round, Tensor& fake) {
    send(make_tensor_message(MsgType::kAuxBatch, id, round, worker.sample_aux()));
    Message reply = next();
    if (reply.type == MsgType::kShutdown) return false;
    if (reply.type != MsgType::kFakeBatch || reply.round != round) {
      throw RunFailure(std::string("expected FAKE_BATCH, got ") + msg_type_name(reply.type));
    }
    fake = std::get<Tensor>(std::move(reply.payload));
    return true;
  }

  NodeExit serve() {
    for (;;) {
      Message m = next();
      if (m.type == MsgType::kShutdown) return NodeExit::kShutdown;
      if (m.type != MsgType::kRoundBegin) {
        throw RunFailure(std::string("unexpected ") + msg_type_name(m.type));
      }
      const Phase phase = std::get<RoundBeginBody>(m.payload).phase;
      Tensor fake;
      if (!request_fake(m.round, fake)) return NodeExit::kShutdown;
      if (phase == Phase::kDiscriminator) {
        worker.update(fake);
        continue;
      }
      auto fb = worker.feedback(fake);
      if (!std::isfinite(fb.d_loss) || !fb.fake_grad.all_finite()) {
        std::fprintf(stderr, "node %u: non-finite loss in round %u (d_loss=%g g_term=%g)\n", id,
                     m.round, fb.d_loss, fb.g_term);
        return NodeExit::kFatal;
      }
      send(make_tensor_message(MsgType::kFakeGrad, id, m.round, std::move(fb.fake_grad)));
      send(make_tensor_message(MsgType::kDLoss, id, m.round,
                               Tensor::scalar(static_cast<float>(fb.d_loss))));
    }
  }
};

}  // namespace

int run_discriminator_node(const Connector& connect, DiscriminatorWorker& worker,
                           const NodeRunOptions& options) {
  std::uint16_t my_id = options.requested_id;
  int failures = 0;
  auto retry = [&](const char* what) {
    ++failures;
    if (failures > options.connect_attempts) {
      std::fprintf(stderr, "node: %s, giving up after %d retries\n", what, options.connect_attempts);
      return false;
    }
    std::fprintf(stderr, "node: %s (retry %d of %d)\n", what, failures, options.connect_attempts);
    std::this_thread::sleep_for(options.retry_delay);
    return true;
  };

  for (;;) {
    std::unique_ptr<Channel> channel;
    try {
      channel = connect();
    } catch (const std::exception& e) {
      if (!retry(e.what())) return 1;
      continue;
    }
    if (!channel) {
      if (!retry("no connection")) return 1;
      continue;
    }
    try {
      channel->send(encode(make_join(static_cast<std::uint32_t>(worker.shard().samples.size()), my_id)));
      auto frame = channel->receive(options.ack_timeout);
      if (!frame) {
        if (!retry("no JOIN_ACK")) return 1;
        continue;
      }
      Message ack = decode(*frame);
      if (ack.type != MsgType::kJoinAck || ack.node_id == kUnassignedNode) {
        if (!retry("JOIN rejected")) return 1;
        continue;
      }
      my_id = ack.node_id;
      failures = 0;
      NodeSession session{*channel, worker, my_id, options.idle_timeout};
      switch (session.serve()) {
        case NodeExit::kShutdown: return 0;
        case NodeExit::kFatal: return 3;
        case NodeExit::kReconnect: break;
      }
    } catch (const ConnectionClosed& e) {
      if (!retry(e.what())) return 1;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "node %u: %s\n", my_id, e.what());
      return 3;
    }
  }
}

}  // namespace adgn
