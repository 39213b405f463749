#include <atomic>
#include <map>
#include <memory>
#include <thread>

#include "adgn/error.hpp"
#include "adgn/runtime.hpp"
#include "doctest.h"

using namespace adgn;

namespace {

std::vector<Shard> three_shards() {
  return make_shards(sample(MixtureSpec::synthetic_default(), 600, 11), ShardMode::kPerComponent);
}

NodeConfig small_node(std::size_t j) {
  NodeConfig c;
  c.model.hidden = 16;
  c.batch = 8;
  c.init_seed = 1000 + j;
  c.data_seed = 100 + j;
  return c;
}

GeneratorConfig small_generator() {
  GeneratorConfig c;
  c.model.hidden = 16;
  c.init_seed = 5;
  c.dropout_seed = 6;
  return c;
}

struct Run {
  std::vector<RoundReport> reports;
  Transcript transcript;
  std::uint64_t ledger_total = 0;
  std::vector<int> exit_codes;
};

// Nodes run in threads and dial through `dial`; the generator serves in this thread.
Run run_rounds(Listener& listener, const std::function<std::unique_ptr<Channel>()>& dial,
               std::size_t rounds, std::size_t k_d) {
  auto shards = three_shards();
  const std::size_t n = shards.size();
  std::vector<std::unique_ptr<DiscriminatorWorker>> workers;
  for (std::size_t j = 0; j < n; ++j) {
    workers.push_back(std::make_unique<DiscriminatorWorker>(shards[j], small_node(j)));
  }

  Run run;
  run.exit_codes.assign(n, -1);
  ServerOptions opts;
  opts.expected_nodes = n;
  opts.timeout = Millis(10000);
  opts.join_timeout = Millis(10000);
  GeneratorServer server(listener, opts, &run.transcript);

  std::vector<std::thread> threads;
  for (std::size_t j = 0; j < n; ++j) {
    // Dial from this thread so that join order, and hence node ids, is fixed.
    auto first = std::make_shared<std::unique_ptr<Channel>>(dial());
    threads.emplace_back([&, j, first] {
      Connector connect = [first, &dial]() -> std::unique_ptr<Channel> {
        if (*first) return std::move(*first);
        return dial();
      };
      run.exit_codes[j] = run_discriminator_node(connect, *workers[j]);
    });
  }
  server.accept_nodes();
  GeneratorWorker g(small_generator(), n);
  TrainConfig tc;
  tc.iterations = rounds;
  tc.k_d = k_d;
  run.reports = server.train(g, tc);
  server.shutdown();
  for (auto& t : threads) t.join();
  run.ledger_total = server.ledger().total();
  return run;
}

}  // namespace

TEST_SUITE("runtime") {

TEST_CASE("ledger counts") {
  CommLedger l;
  l.add_tx(1, 0, 10);
  l.add_rx(1, 0, 5);
  l.add_tx(2, 1, 7);
  CHECK(l.get(1, 0).tx == 10);
  CHECK(l.get(1, 0).rx == 5);
  CHECK(l.get(3, 3).tx == 0);
  CHECK(l.total() == 22);
}

TEST_CASE("nodes receive ids in join order") {
  InprocListener listener;
  ServerOptions opts;
  opts.expected_nodes = 3;
  GeneratorServer server(listener, opts);
  std::vector<std::unique_ptr<Channel>> clients;
  for (std::uint32_t j = 0; j < 3; ++j) {
    clients.push_back(listener.connect());
    clients.back()->send(encode(make_join(100 + j)));
  }
  server.accept_nodes();
  for (std::uint16_t j = 0; j < 3; ++j) {
    auto frame = clients[j]->receive(Millis(1000));
    REQUIRE(frame);
    const Message ack = decode(*frame);
    CHECK(ack.type == MsgType::kJoinAck);
    CHECK(ack.node_id == j);
  }
  CHECK(server.shard_sizes() == std::vector<std::uint32_t>{100, 101, 102});
}

TEST_CASE("a duplicate node id is rejected") {
  InprocListener listener;
  ServerOptions opts;
  opts.expected_nodes = 2;
  GeneratorServer server(listener, opts);
  auto a = listener.connect();
  a->send(encode(make_join(10, 0)));
  auto b = listener.connect();
  b->send(encode(make_join(10, 0)));
  auto c = listener.connect();
  c->send(encode(make_join(10, 7)));
  auto d = listener.connect();
  d->send(encode(make_join(10)));
  server.accept_nodes();
  CHECK(decode(*a->receive(Millis(1000))).node_id == 0);
  CHECK(decode(*b->receive(Millis(1000))).node_id == kUnassignedNode);
  CHECK(decode(*c->receive(Millis(1000))).node_id == kUnassignedNode);
  CHECK(decode(*d->receive(Millis(1000))).node_id == 1);
  CHECK_THROWS_AS(b->receive(Millis(1000)), ConnectionClosed);
}

TEST_CASE("too few nodes join") {
  InprocListener listener;
  ServerOptions opts;
  opts.expected_nodes = 2;
  opts.join_timeout = Millis(50);
  GeneratorServer server(listener, opts);
  auto a = listener.connect();
  a->send(encode(make_join(10)));
  CHECK_THROWS_AS(server.accept_nodes(), RunFailure);
}

TEST_CASE("one round message flow") {
  auto listener = std::make_shared<InprocListener>();
  const Run run = run_rounds(*listener, [listener] { return listener->connect(); }, 1, 1);
  REQUIRE(run.reports.size() == 1);
  CHECK(run.exit_codes == std::vector<int>{0, 0, 0});

  std::map<MsgType, int> round1, other;
  std::map<MsgType, int> inbound;
  for (const auto& e : run.transcript.entries()) {
    const Message m = decode(e.frame);
    (m.round == 1 ? round1 : other)[m.type]++;
    if (e.direction == Direction::kToGenerator) inbound[m.type]++;
  }
  // Discriminator phase: 3 AUX + 3 FAKE. Generator phase: 3 AUX + 3 FAKE + 3 GRAD + 3 D_LOSS.
  CHECK(round1[MsgType::kRoundBegin] == 6);
  CHECK(round1[MsgType::kAuxBatch] == 6);
  CHECK(round1[MsgType::kFakeBatch] == 6);
  CHECK(round1[MsgType::kFakeGrad] == 3);
  CHECK(round1[MsgType::kDLoss] == 3);
  CHECK(other[MsgType::kJoin] == 3);
  CHECK(other[MsgType::kJoinAck] == 3);
  CHECK(other[MsgType::kShutdown] == 3);
  CHECK(inbound[MsgType::kFakeBatch] == 0);
  CHECK(inbound[MsgType::kRoundBegin] == 0);
  CHECK(run.ledger_total == run.transcript.total_bytes());

  const auto& r = run.reports[0];
  REQUIRE(r.nodes.size() == 3);
  const auto shards = three_shards();
  std::vector<std::uint32_t> sizes;
  for (const auto& sh : shards) sizes.push_back(static_cast<std::uint32_t>(sh.samples.size()));
  const auto pi = MixtureWeights::from_sizes(sizes).pi;
  double weighted = 0.0;
  for (const auto& e : r.nodes) {
    weighted += pi[e.node] * e.d_loss;
    CHECK(e.bytes_tx > 0);
    CHECK(e.bytes_rx > 0);
  }
  CHECK(r.g_loss == doctest::Approx(-weighted).epsilon(1e-9));
}

TEST_CASE("k_d discriminator phases per round") {
  auto listener = std::make_shared<InprocListener>();
  const Run run = run_rounds(*listener, [listener] { return listener->connect(); }, 2, 3);
  int aux = 0;
  for (const auto& e : run.transcript.entries()) {
    aux += decode(e.frame).type == MsgType::kAuxBatch;
  }
  CHECK(aux == 2 * 4 * 3);
  CHECK(run.ledger_total == run.transcript.total_bytes());
}

TEST_CASE("tcp and inproc runs agree") {
  auto inproc = std::make_shared<InprocListener>();
  const Run a = run_rounds(*inproc, [inproc] { return inproc->connect(); }, 3, 1);
  TcpListener tcp("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(tcp.port());
  const Run b = run_rounds(tcp, [addr] { return tcp_connect(addr); }, 3, 1);
  REQUIRE(a.reports.size() == b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    CHECK(a.reports[i].g_loss == b.reports[i].g_loss);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(a.reports[i].nodes[j].d_loss == b.reports[i].nodes[j].d_loss);
    }
  }
  CHECK(b.exit_codes == std::vector<int>{0, 0, 0});
  CHECK(a.transcript.total_bytes() == b.transcript.total_bytes());
}

TEST_CASE("a silent node times out") {
  InprocListener listener;
  ServerOptions opts;
  opts.expected_nodes = 1;
  opts.timeout = Millis(30);
  GeneratorServer server(listener, opts);
  auto client = listener.connect();
  client->send(encode(make_join(10)));
  server.accept_nodes();
  GeneratorWorker g(small_generator(), 1);
  TrainConfig tc;
  tc.iterations = 1;
  try {
    server.train(g, tc);
    FAIL("expected NodeTimeout");
  } catch (const NodeTimeout& e) {
    CHECK(e.node() == 0);
    CHECK(std::string(e.what()).find("node 0") != std::string::npos);
  }
}

TEST_CASE("reconnect gives up after the configured attempts") {
  auto shards = three_shards();
  DiscriminatorWorker worker(shards[0], small_node(0));
  std::atomic<int> calls{0};
  Connector refuse = [&calls]() -> std::unique_ptr<Channel> {
    ++calls;
    throw ConnectionClosed("connection refused");
  };
  NodeRunOptions opts;
  opts.retry_delay = Millis(1);
  CHECK(run_discriminator_node(refuse, worker, opts) == 1);
  CHECK(calls == opts.connect_attempts + 1);
}

TEST_CASE("a node that loses its connection rejoins with its id") {
  auto shards = three_shards();
  DiscriminatorWorker worker(shards[0], small_node(0));
  InprocListener listener;
  std::atomic<int> dials{0};
  Connector connect = [&]() -> std::unique_ptr<Channel> {
    ++dials;
    return listener.connect();
  };
  NodeRunOptions nopts;
  nopts.retry_delay = Millis(1);
  int code = -1;
  std::thread node([&] { code = run_discriminator_node(connect, worker, nopts); });

  // First session: acknowledge as node 2, then drop the connection.
  auto first = listener.accept(Millis(5000));
  REQUIRE(first);
  const Message join1 = decode(*first->receive(Millis(5000)));
  CHECK(join1.node_id == kUnassignedNode);
  first->send(encode(make_join_ack(2)));
  first->close();

  auto second = listener.accept(Millis(5000));
  REQUIRE(second);
  const Message join2 = decode(*second->receive(Millis(5000)));
  CHECK(join2.node_id == 2);
  second->send(encode(make_join_ack(2)));
  second->send(encode(make_shutdown(2, 1)));
  node.join();
  CHECK(code == 0);
  CHECK(dials == 2);
}

TEST_CASE("a node can ask for its id") {
  auto shards = three_shards();
  DiscriminatorWorker worker(shards[1], small_node(1));
  InprocListener listener;
  NodeRunOptions nopts;
  nopts.requested_id = 1;
  int code = -1;
  std::thread node([&] {
    code = run_discriminator_node([&] { return listener.connect(); }, worker, nopts);
  });
  auto ch = listener.accept(Millis(5000));
  REQUIRE(ch);
  const Message join = decode(*ch->receive(Millis(5000)));
  CHECK(join.node_id == 1);
  CHECK(std::get<JoinBody>(join.payload).shard_size == shards[1].samples.size());
  ch->send(encode(make_join_ack(1)));
  ch->send(encode(make_shutdown(1, 1)));
  node.join();
  CHECK(code == 0);
}

}  // TEST_SUITE
