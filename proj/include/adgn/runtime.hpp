#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "adgn/gan.hpp"
#include "adgn/protocol.hpp"
#include "adgn/transport.hpp"

namespace adgn {

/// Bytes exchanged with each node, keyed by the round field of each frame.
class CommLedger {
 public:
  struct Counts {
    std::uint64_t tx = 0;  // generator -> node
    std::uint64_t rx = 0;  // node -> generator
  };

  void add_tx(std::uint32_t round, std::uint16_t node, std::uint64_t bytes);
  void add_rx(std::uint32_t round, std::uint16_t node, std::uint64_t bytes);
  Counts get(std::uint32_t round, std::uint16_t node) const;
  std::uint64_t total() const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::uint32_t, std::uint16_t>, Counts> counts_;
};

struct ServerOptions {
  std::size_t expected_nodes = 1;
  Millis timeout{30000};
  Millis join_timeout{60000};
};

/// Generator side of the protocol. Owns one session per node; every frame
/// sent or received goes through the transcript and the ledger.
///
/// Round r (1-based) runs k_d discriminator phases and one generator phase.
/// Each phase starts with ROUND_BEGIN to every node; node requests are then
/// served in node-id order, so results do not depend on arrival timing.
class GeneratorServer {
 public:
  GeneratorServer(Listener& listener, ServerOptions options, Transcript* transcript = nullptr);
  ~GeneratorServer();

  /// Accepts connections until expected_nodes have joined. A JOIN asking for
  /// an id that is taken or out of range is answered with an ACK carrying
  /// kUnassignedNode and the connection is dropped.
  void accept_nodes();
  std::vector<std::uint32_t> shard_sizes() const;

  std::vector<RoundReport> train(GeneratorWorker& g, const TrainConfig& config,
                                 const RoundSink& sink = {});
  /// Broadcasts SHUTDOWN and closes every session.
  void shutdown();

  const CommLedger& ledger() const { return ledger_; }

 private:
  struct Session {
    std::unique_ptr<Channel> channel;
    std::uint32_t shard_size = 0;
  };

  void send(std::uint16_t node, const Message& msg);
  Message receive(std::uint16_t node, MsgType expected, std::uint32_t round);

  Listener& listener_;
  ServerOptions options_;
  Transcript* transcript_;
  CommLedger ledger_;
  std::vector<Session> sessions_;
  std::uint32_t last_round_ = 0;
  bool shut_down_ = false;
};

struct NodeRunOptions {
  int connect_attempts = 3;
  Millis retry_delay{200};
  Millis ack_timeout{10000};
  Millis idle_timeout{600000};
  // Id asked for in the first JOIN; kUnassignedNode lets the generator pick.
  std::uint16_t requested_id = kUnassignedNode;
};

using Connector = std::function<std::unique_ptr<Channel>()>;

/// Discriminator-site event loop: JOIN, then answer ROUND_BEGIN phases until
/// SHUTDOWN. Returns the process exit code (0 on clean shutdown). Lost or
/// refused connections are retried up to connect_attempts times.
int run_discriminator_node(const Connector& connect, DiscriminatorWorker& worker,
                           const NodeRunOptions& options = {});

}  // namespace adgn
