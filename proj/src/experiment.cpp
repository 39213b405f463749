#include "adgn/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cerrno>
#include <cstdlib>
#include <algorithm>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "adgn/error.hpp"
#include "adgn/protocol.hpp"
#include "adgn/runtime.hpp"
#include "adgn/transport.hpp"

namespace adgn {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt_double(v[i]);
  }
  return out;
}

class Fields {
 public:
  explicit Fields(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::optional<std::string> take(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    std::string v = it->second;
    kv_.erase(it);
    return v;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (auto v = take(key)) out = convert<T>(key, *v);
  }

  std::vector<double> doubles(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(convert<double>(key, trim(item)));
    return out;
  }

  void reject_leftovers() const {
    if (!kv_.empty()) throw ConfigError("unknown config key '" + kv_.begin()->first + "'");
  }

  template <typename T>
  static T convert(const std::string& key, const std::string& v) {
    const auto bad = [&]() { return ConfigError("bad value for " + key + ": '" + v + "'"); };
    if (v.empty()) throw bad();
    char* end = nullptr;
    errno = 0;
    if constexpr (std::is_same_v<T, double>) {
      const double d = std::strtod(v.c_str(), &end);
      if (*end || errno || !std::isfinite(d)) throw bad();
      return d;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (v == "true") return true;
      if (v == "false") return false;
      throw bad();
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else {
      if (v[0] == '-') throw bad();
      const unsigned long long u = std::strtoull(v.c_str(), &end, 10);
      if (*end || errno || u > std::numeric_limits<T>::max()) throw bad();
      return static_cast<T>(u);
    }
  }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError(why); };
  try {
    mixture.validate();
  } catch (const ContractViolation& e) {
    fail(std::string("mixture: ") + e.what());
  }
  if (nodes == 0) fail("nodes must be at least 1");
  if (dataset_size < nodes) fail("dataset_size must be at least the node count");
  if (shard_mode == ShardMode::kPerComponent && nodes != mixture.size()) {
    fail("shard_mode per_component needs nodes equal to the number of components");
  }
  if (scenario == Scenario::kSynSubset && subset >= nodes) fail("subset must be less than nodes");
  if (batch == 0 || k_d == 0 || iterations == 0) fail("batch, k_d and iterations must be at least 1");
  if (model.components != mixture.size()) fail("model components must match the mixture");
  if (model.hidden == 0) fail("hidden must be at least 1");
  if (!(model.dropout > 0.0 && model.dropout < 1.0)) fail("dropout must be in (0, 1)");
  if (!(model.leaky_alpha >= 0.0)) fail("leaky_alpha must be nonnegative");
  if (auto* a = std::get_if<AdamParams>(&optimizer)) {
    if (!(a->lr > 0) || !(a->beta1 >= 0 && a->beta1 < 1) || !(a->beta2 >= 0 && a->beta2 < 1) ||
        !(a->eps > 0)) {
      fail("adam parameters out of range");
    }
  } else {
    const auto& s = std::get<SgdMomentumParams>(optimizer);
    if (!(s.lr > 0) || !(s.momentum >= 0 && s.momentum < 1)) fail("sgd parameters out of range");
  }
  if (!weights.empty()) {
    if (weights.size() != nodes) fail("weights needs one entry per node");
    try {
      MixtureWeights{weights}.validate();
    } catch (const ContractViolation& e) {
      fail(e.what());
    }
  }
  if (transport == TransportKind::kTcp && tcp_bind.find(':') == std::string::npos) {
    fail("tcp_bind must be host:port");
  }
  if (timeout_ms == 0) fail("timeout_ms must be at least 1");
  if (eval_samples == 0) fail("eval_samples must be at least 1");
  if (histogram.bins < 10 || !(histogram.lo < histogram.hi)) fail("histogram range invalid");
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ConfigError("duplicate config key '" + key + "'");
    }
  }

  Fields f(std::move(kv));
  RunConfig c;
  for (const char* seed : {"seed_init", "seed_data", "seed_dropout"}) {
    if (!f.has(seed)) throw ConfigError(std::string("missing required key ") + seed);
  }

  if (auto v = f.take("scenario")) {
    if (*v == "syn_all") {
      c.scenario = Scenario::kSynAll;
    } else if (*v == "syn_subset") {
      c.scenario = Scenario::kSynSubset;
    } else if (*v == "asyndgan") {
      c.scenario = Scenario::kAsynDGAN;
    } else {
      throw ConfigError("unknown scenario '" + *v + "'");
    }
  }
  f.get("subset", c.subset);
  f.get("run_name", c.run_name);

  auto means = f.take("mixture.means");
  auto spreads = f.take("mixture.spreads");
  auto priors = f.take("mixture.priors");
  if (means || spreads || priors) {
    if (!means || !spreads) throw ConfigError("mixture.means and mixture.spreads go together");
    const auto m = f.doubles("mixture.means", *means);
    const auto s = f.doubles("mixture.spreads", *spreads);
    if (m.size() != s.size() || m.empty()) throw ConfigError("mixture.means/spreads length mismatch");
    c.mixture.components.clear();
    for (std::size_t i = 0; i < m.size(); ++i) c.mixture.components.push_back({m[i], s[i]});
    c.mixture.priors = priors ? f.doubles("mixture.priors", *priors)
                              : std::vector<double>(m.size(), 1.0 / static_cast<double>(m.size()));
  }
  if (auto v = f.take("mixture.spread")) {
    if (*v == "variance") {
      c.mixture.second_param_is_variance = true;
    } else if (*v == "stddev") {
      c.mixture.second_param_is_variance = false;
    } else {
      throw ConfigError("mixture.spread must be variance or stddev");
    }
  }
  c.model.components = c.mixture.size();
  f.get("dataset_size", c.dataset_size);
  if (auto v = f.take("shard_mode")) {
    if (*v == "per_component") {
      c.shard_mode = ShardMode::kPerComponent;
    } else if (*v == "random_split") {
      c.shard_mode = ShardMode::kRandomSplit;
    } else {
      throw ConfigError("unknown shard_mode '" + *v + "'");
    }
  }
  f.get("nodes", c.nodes);
  f.get("batch", c.batch);
  f.get("k_d", c.k_d);
  f.get("iterations", c.iterations);
  f.get("hidden", c.model.hidden);
  f.get("dropout", c.model.dropout);
  f.get("leaky_alpha", c.model.leaky_alpha);

  const std::string opt = f.take("optimizer").value_or("adam");
  if (opt == "adam") {
    AdamParams a;
    f.get("lr", a.lr);
    f.get("adam.beta1", a.beta1);
    f.get("adam.beta2", a.beta2);
    f.get("adam.eps", a.eps);
    if (f.has("sgd.momentum")) throw ConfigError("sgd.momentum given but optimizer is adam");
    c.optimizer = a;
  } else if (opt == "sgd_momentum") {
    SgdMomentumParams s;
    f.get("lr", s.lr);
    f.get("sgd.momentum", s.momentum);
    for (const char* k : {"adam.beta1", "adam.beta2", "adam.eps"}) {
      if (f.has(k)) throw ConfigError(std::string(k) + " given but optimizer is sgd_momentum");
    }
    c.optimizer = s;
  } else {
    throw ConfigError("unknown optimizer '" + opt + "'");
  }

  if (auto v = f.take("loss")) {
    if (*v == "saturating") {
      c.loss = GLossVariant::kSaturating;
    } else if (*v == "non_saturating") {
      c.loss = GLossVariant::kNonSaturating;
    } else {
      throw ConfigError("unknown loss '" + *v + "'");
    }
  }
  if (auto v = f.take("weights")) {
    if (*v != "shard_size") c.weights = f.doubles("weights", *v);
  }

  f.get("seed_init", c.seed_init);
  f.get("seed_data", c.seed_data);
  f.get("seed_dropout", c.seed_dropout);
  f.get("seed_eval", c.seed_eval);

  if (auto v = f.take("transport")) {
    if (*v == "inproc") {
      c.transport = TransportKind::kInproc;
    } else if (*v == "tcp") {
      c.transport = TransportKind::kTcp;
    } else {
      throw ConfigError("unknown transport '" + *v + "'");
    }
  }
  f.get("tcp_bind", c.tcp_bind);
  f.get("timeout_ms", c.timeout_ms);
  f.get("eval_samples", c.eval_samples);
  f.get("histogram.bins", c.histogram.bins);
  f.get("histogram.lo", c.histogram.lo);
  f.get("histogram.hi", c.histogram.hi);
  f.reject_leftovers();
  c.validate();
  return c;
}

std::string emit_config(const RunConfig& c) {
  std::ostringstream o;
  auto line = [&](const std::string& k, const std::string& v) { o << k << " = " << v << "\n"; };
  switch (c.scenario) {
    case Scenario::kSynAll: line("scenario", "syn_all"); break;
    case Scenario::kSynSubset: line("scenario", "syn_subset"); break;
    case Scenario::kAsynDGAN: line("scenario", "asyndgan"); break;
  }
  line("subset", std::to_string(c.subset));
  if (!c.run_name.empty()) line("run_name", c.run_name);

  std::vector<double> means, spreads;
  for (const auto& comp : c.mixture.components) {
    means.push_back(comp.mean);
    spreads.push_back(comp.second_param);
  }
  line("mixture.means", join_doubles(means));
  line("mixture.spreads", join_doubles(spreads));
  line("mixture.spread", c.mixture.second_param_is_variance ? "variance" : "stddev");
  line("mixture.priors", join_doubles(c.mixture.priors));
  line("dataset_size", std::to_string(c.dataset_size));
  line("shard_mode", c.shard_mode == ShardMode::kPerComponent ? "per_component" : "random_split");
  line("nodes", std::to_string(c.nodes));

  line("batch", std::to_string(c.batch));
  line("k_d", std::to_string(c.k_d));
  line("iterations", std::to_string(c.iterations));
  line("hidden", std::to_string(c.model.hidden));
  line("dropout", fmt_double(c.model.dropout));
  line("leaky_alpha", fmt_double(c.model.leaky_alpha));
  if (const auto* a = std::get_if<AdamParams>(&c.optimizer)) {
    line("optimizer", "adam");
    line("lr", fmt_double(a->lr));
    line("adam.beta1", fmt_double(a->beta1));
    line("adam.beta2", fmt_double(a->beta2));
    line("adam.eps", fmt_double(a->eps));
  } else {
    const auto& s = std::get<SgdMomentumParams>(c.optimizer);
    line("optimizer", "sgd_momentum");
    line("lr", fmt_double(s.lr));
    line("sgd.momentum", fmt_double(s.momentum));
  }
  line("loss", c.loss == GLossVariant::kSaturating ? "saturating" : "non_saturating");
  line("weights", c.weights.empty() ? "shard_size" : join_doubles(c.weights));

  line("seed_init", std::to_string(c.seed_init));
  line("seed_data", std::to_string(c.seed_data));
  line("seed_dropout", std::to_string(c.seed_dropout));
  line("seed_eval", std::to_string(c.seed_eval));

  line("transport", c.transport == TransportKind::kInproc ? "inproc" : "tcp");
  line("tcp_bind", c.tcp_bind);
  line("timeout_ms", std::to_string(c.timeout_ms));
  line("eval_samples", std::to_string(c.eval_samples));
  line("histogram.bins", std::to_string(c.histogram.bins));
  line("histogram.lo", fmt_double(c.histogram.lo));
  line("histogram.hi", fmt_double(c.histogram.hi));
  return o.str();
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string scenario_name(const RunConfig& c) {
  switch (c.scenario) {
    case Scenario::kSynAll: return "syn_all";
    case Scenario::kSynSubset: return "syn_subset_" + std::to_string(c.subset);
    case Scenario::kAsynDGAN: return "asyndgan";
  }
  return "unknown";
}

Dataset make_dataset(const RunConfig& c) {
  return sample(c.mixture, c.dataset_size, derive_seed(c.seed_data, 0));
}

std::vector<Shard> make_run_shards(const RunConfig& c, const Dataset& data) {
  auto shards = c.shard_mode == ShardMode::kPerComponent
                    ? make_shards(data, ShardMode::kPerComponent)
                    : make_shards(data, ShardMode::kRandomSplit, c.nodes, derive_seed(c.seed_data, 1));
  if (shards.size() != c.nodes) {
    throw ConfigError("dataset yields " + std::to_string(shards.size()) + " shards for " +
                      std::to_string(c.nodes) + " nodes");
  }
  return shards;
}

NodeConfig node_config(const RunConfig& c, std::size_t j) {
  NodeConfig n;
  n.model = c.model;
  n.batch = c.batch;
  n.optimizer = c.optimizer;
  n.loss = c.loss;
  n.init_seed = derive_seed(c.seed_init, 1000 + j);
  n.data_seed = derive_seed(c.seed_data, 100 + j);
  return n;
}

GeneratorConfig generator_config(const RunConfig& c) {
  GeneratorConfig g;
  g.model = c.model;
  g.optimizer = c.optimizer;
  g.init_seed = derive_seed(c.seed_init, 0);
  g.dropout_seed = c.seed_dropout;
  return g;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.iterations = c.iterations;
  t.k_d = c.k_d;
  t.loss = c.loss;
  t.timeout = std::chrono::milliseconds(c.timeout_ms);
  if (!c.weights.empty()) t.weights = MixtureWeights{c.weights};
  return t;
}

Evaluation evaluate(GeneratorWorker& g, const RunConfig& c) {
  const std::size_t n = c.eval_samples;
  Rng dropout(derive_seed(c.seed_eval, 200));
  Evaluation e;
  for (std::size_t k = 0; k < c.mixture.size(); ++k) {
    const std::vector<std::uint32_t> xs(n, static_cast<std::uint32_t>(k));
    const auto fake = g.sample(xs, dropout);
    const auto truth = sample_component(c.mixture, k, n, derive_seed(c.seed_eval, k));
    e.js_component.push_back(js_divergence(fake, truth, c.histogram));
  }
  const Dataset truth = sample(c.mixture, n, derive_seed(c.seed_eval, 100));
  const Dataset cond = sample(c.mixture, n, derive_seed(c.seed_eval, 101));
  std::vector<std::uint32_t> xs;
  xs.reserve(n);
  for (const auto& s : cond) xs.push_back(s.x);
  const auto fake = g.sample(xs, dropout);
  e.js_marginal = js_divergence(fake, y_values(truth), c.histogram);
  e.mixed.reserve(n);
  for (std::size_t i = 0; i < n; ++i) e.mixed.push_back({xs[i], fake[i]});
  return e;
}

fs::path artifact_root() {
  const char* env = std::getenv("ADGN_RUN_DIR");
  return env && *env ? fs::path(env) : fs::path("runs");
}

namespace {

constexpr std::size_t kSampleDumpCap = 100000;

fs::path pick_run_dir(const RunConfig& c, const RunOptions& options) {
  if (!options.dir.empty()) return options.dir;
  const std::string base =
      c.run_name.empty() ? scenario_name(c) + "-seed" + std::to_string(c.seed_init) : c.run_name;
  const fs::path root = artifact_root();
  fs::path dir = root / base;
  for (int i = 2; fs::exists(dir); ++i) dir = root / (base + "-" + std::to_string(i));
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<RoundReport> train_distributed(const RunConfig& c, const std::vector<Shard>& shards,
                                           GeneratorWorker& g, Transcript& transcript,
                                           std::uint64_t& bytes, const RoundSink& sink) {
  std::shared_ptr<Listener> listener;
  std::function<std::unique_ptr<Channel>()> dial;
  if (c.transport == TransportKind::kInproc) {
    auto l = std::make_shared<InprocListener>();
    dial = [l] { return l->connect(); };
    listener = std::move(l);
  } else {
    auto l = std::make_shared<TcpListener>(c.tcp_bind);
    std::string host = c.tcp_bind.substr(0, c.tcp_bind.rfind(':'));
    if (host.empty() || host == "0.0.0.0") host = "127.0.0.1";
    const std::string addr = host + ":" + std::to_string(l->port());
    dial = [addr] { return tcp_connect(addr); };
    listener = std::move(l);
  }

  std::vector<std::unique_ptr<DiscriminatorWorker>> workers;
  for (std::size_t j = 0; j < c.nodes; ++j) {
    workers.push_back(std::make_unique<DiscriminatorWorker>(shards[j], node_config(c, j)));
  }
  // Connecting from this thread fixes the accept order, hence the node ids.
  std::vector<std::unique_ptr<Channel>> first(c.nodes);
  for (auto& ch : first) ch = dial();

  NodeRunOptions node_opts;
  node_opts.ack_timeout = std::chrono::milliseconds(std::min<std::uint32_t>(c.timeout_ms, 5000));
  node_opts.idle_timeout = std::chrono::milliseconds(4ull * c.timeout_ms);
  std::vector<int> codes(c.nodes, -1);
  std::vector<std::thread> threads;
  for (std::size_t j = 0; j < c.nodes; ++j) {
    threads.emplace_back([&, j] {
      bool used = false;
      Connector connect = [&]() -> std::unique_ptr<Channel> {
        if (!used) {
          used = true;
          return std::move(first[j]);
        }
        return dial();
      };
      codes[j] = run_discriminator_node(connect, *workers[j], node_opts);
    });
  }

  std::vector<RoundReport> reports;
  std::exception_ptr error;
  {
    ServerOptions opts;
    opts.expected_nodes = c.nodes;
    opts.timeout = std::chrono::milliseconds(c.timeout_ms);
    opts.join_timeout = std::chrono::milliseconds(c.timeout_ms);
    GeneratorServer server(*listener, opts, &transcript);
    try {
      server.accept_nodes();
      reports = server.train(g, train_config(c), sink);
    } catch (...) {
      error = std::current_exception();
    }
    server.shutdown();
    bytes = server.ledger().total();
  }
  listener.reset();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
  for (std::size_t j = 0; j < c.nodes; ++j) {
    if (codes[j] != 0) {
      throw RunFailure("discriminator node " + std::to_string(j) + " exited with code " +
                       std::to_string(codes[j]));
    }
  }
  return reports;
}

void finish_run(RunArtifact& art, GeneratorWorker& g, const RunConfig& c,
                std::vector<std::string> files, std::chrono::steady_clock::time_point t0) {
  art.eval = evaluate(g, c);
  art.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Dataset dump(art.eval.mixed.begin(),
               art.eval.mixed.begin() +
                   static_cast<std::ptrdiff_t>(std::min(kSampleDumpCap, art.eval.mixed.size())));
  write_samples_csv((art.dir / "samples.csv").string(), dump);
  write_histogram_csv((art.dir / "histogram.csv").string(), y_values(art.eval.mixed), c.histogram);
  save_checkpoint((art.dir / "generator.ckpt").string(), snapshot(g.net().named_parameters()));
  files.insert(files.end(), {"samples.csv", "histogram.csv", "generator.ckpt"});

  std::ostringstream s;
  s << "scenario=" << scenario_name(c) << "\n";
  s << "js_marginal=" << fmt_double(art.eval.js_marginal) << "\n";
  for (std::size_t k = 0; k < art.eval.js_component.size(); ++k) {
    s << "js_component_" << k << "=" << fmt_double(art.eval.js_component[k]) << "\n";
  }
  s << "bytes=" << art.bytes << "\n";
  if (std::find(files.begin(), files.end(), "privacy_audit.txt") != files.end()) {
    s << "privacy_violations=" << art.privacy_violations << "\n";
  }
  s << "wall_seconds=" << fmt_double(art.wall_seconds) << "\n";
  s << "files=";
  for (std::size_t i = 0; i < files.size(); ++i) s << (i ? "," : "") << files[i];
  s << "\n";
  write_text(art.dir / "summary.txt", s.str());
}

}  // namespace

RunArtifact run_experiment(const RunConfig& c, const RunOptions& options) {
  c.validate();
  RunArtifact art;
  art.dir = pick_run_dir(c, options);
  fs::create_directories(art.dir);
  write_text(art.dir / "config.txt", options.config_text ? *options.config_text : emit_config(c));

  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = make_dataset(c);
  const auto shards = make_run_shards(c, data);

  std::ofstream loss_csv(art.dir / "loss.csv", std::ios::binary);
  write_loss_csv_header(loss_csv);
  const RoundSink sink = [&](const RoundReport& r) { write_loss_csv_rows(loss_csv, r); };

  std::vector<std::string> files = {"config.txt", "loss.csv"};
  GeneratorWorker g(generator_config(c), c.scenario == Scenario::kAsynDGAN ? c.nodes : 1);
  if (c.scenario == Scenario::kAsynDGAN) {
    Transcript transcript;
    try {
      art.reports = train_distributed(c, shards, g, transcript, art.bytes, sink);
    } catch (...) {
      loss_csv.flush();
      transcript.save((art.dir / "transcript.bin").string());
      throw;
    }
    transcript.save((art.dir / "transcript.bin").string());
    const auto violations = audit_privacy(transcript, data);
    art.privacy_violations = violations.size();
    std::ostringstream audit;
    audit << "frames=" << transcript.size() << "\nviolations=" << violations.size() << "\n";
    for (const auto& v : violations) audit << "frame " << v.frame_index << ": " << v.reason << "\n";
    write_text(art.dir / "privacy_audit.txt", audit.str());
    files.push_back("transcript.bin");
    files.push_back("privacy_audit.txt");
  } else {
    Shard shard;
    std::size_t node = 0;
    if (c.scenario == Scenario::kSynAll) {
      shard.samples = data;
    } else {
      node = c.subset;
      shard = shards[node];
    }
    DiscriminatorWorker d(shard, node_config(c, node));
    art.reports = train_centralized(g, d, train_config(c), sink);
  }
  loss_csv.close();
  if (!loss_csv) throw std::runtime_error("cannot write loss.csv");

  finish_run(art, g, c, files, t0);
  return art;
}

RunArtifact serve_generator(const RunConfig& c, const std::string& bind, std::size_t nodes,
                            const RunOptions& options) {
  c.validate();
  if (nodes != c.nodes) {
    throw ConfigError("--nodes " + std::to_string(nodes) + " disagrees with nodes = " +
                      std::to_string(c.nodes) + " in the config");
  }
  RunArtifact art;
  art.dir = pick_run_dir(c, options);
  fs::create_directories(art.dir);
  write_text(art.dir / "config.txt", options.config_text ? *options.config_text : emit_config(c));
  const auto t0 = std::chrono::steady_clock::now();

  std::ofstream loss_csv(art.dir / "loss.csv", std::ios::binary);
  write_loss_csv_header(loss_csv);
  TcpListener listener(bind);
  std::fprintf(stderr, "generator: listening on port %u for %zu nodes\n", listener.port(), nodes);
  ServerOptions opts;
  opts.expected_nodes = nodes;
  opts.timeout = std::chrono::milliseconds(c.timeout_ms);
  opts.join_timeout = std::chrono::milliseconds(std::max<std::uint64_t>(c.timeout_ms, 60000));
  Transcript transcript;
  GeneratorWorker g(generator_config(c), nodes);
  {
    GeneratorServer server(listener, opts, &transcript);
    try {
      server.accept_nodes();
      art.reports = server.train(g, train_config(c),
                                 [&](const RoundReport& r) { write_loss_csv_rows(loss_csv, r); });
    } catch (...) {
      server.shutdown();
      transcript.save((art.dir / "transcript.bin").string());
      throw;
    }
    server.shutdown();
    art.bytes = server.ledger().total();
  }
  loss_csv.close();
  transcript.save((art.dir / "transcript.bin").string());
  finish_run(art, g, c, {"config.txt", "loss.csv", "transcript.bin"}, t0);
  return art;
}

std::optional<Summary> read_summary(const fs::path& run_dir) {
  std::ifstream in(run_dir / "summary.txt");
  if (!in) return std::nullopt;
  Summary s;
  s.run = run_dir.filename().string();
  if (s.run.empty()) s.run = run_dir.parent_path().filename().string();
  std::map<std::size_t, double> comps;
  bool have_js = false;
  std::string line;
  try {
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "scenario") {
        s.scenario = val;
      } else if (key == "js_marginal") {
        s.js_marginal = std::stod(val);
        have_js = true;
      } else if (key.rfind("js_component_", 0) == 0) {
        comps[std::stoul(key.substr(13))] = std::stod(val);
      } else if (key == "bytes") {
        s.bytes = std::stoull(val);
      } else if (key == "wall_seconds") {
        s.wall_seconds = std::stod(val);
      }
    }
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (!have_js || s.scenario.empty()) return std::nullopt;
  for (const auto& [k, v] : comps) s.js_component.push_back(v);
  return s;
}

void write_report(const std::vector<fs::path>& run_dirs, std::ostream& out, std::ostream& warn) {
  std::vector<Summary> rows;
  std::size_t k = 0;
  for (const auto& dir : run_dirs) {
    auto s = read_summary(dir);
    if (!s) {
      warn << "warning: skipping " << dir.string() << " (no readable summary.txt)\n";
      continue;
    }
    k = std::max(k, s->js_component.size());
    rows.push_back(std::move(*s));
  }
  out << "run,scenario,js_marginal";
  for (std::size_t i = 0; i < k; ++i) out << ",js_component_" << i;
  out << ",bytes,wall_seconds\n";
  for (const auto& r : rows) {
    out << r.run << "," << r.scenario << "," << fmt_double(r.js_marginal);
    for (std::size_t i = 0; i < k; ++i) {
      out << ",";
      if (i < r.js_component.size()) out << fmt_double(r.js_component[i]);
    }
    out << "," << r.bytes << "," << fmt_double(r.wall_seconds) << "\n";
  }
}

}  // namespace adgn
