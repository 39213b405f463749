#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adgn/error.hpp"
#include "adgn/experiment.hpp"
#include "adgn/metrics.hpp"
#include "adgn/oracle.hpp"
#include "adgn/protocol.hpp"
#include "adgn/runtime.hpp"
#include "adgn/transport.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw adgn::ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

int cmd_train(const std::string& config_path, const std::string& out) {
  const std::string text = read_text(config_path);
  const auto config = adgn::parse_config(text);
  adgn::RunOptions opts;
  opts.config_text = text;
  opts.dir = out;
  const auto art = adgn::run_experiment(config, opts);
  std::printf("run directory: %s\n", art.dir.string().c_str());
  std::printf("js_marginal=%.6f", art.eval.js_marginal);
  for (std::size_t k = 0; k < art.eval.js_component.size(); ++k) {
    std::printf(" js_component_%zu=%.6f", k, art.eval.js_component[k]);
  }
  std::printf(" bytes=%llu\n", static_cast<unsigned long long>(art.bytes));
  if (art.privacy_violations) {
    std::fprintf(stderr, "privacy audit: %zu violations\n", art.privacy_violations);
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_serve_generator(const std::string& bind, std::size_t nodes, const std::string& config_path,
                        const std::string& out) {
  const std::string text = read_text(config_path);
  const auto config = adgn::parse_config(text);
  adgn::RunOptions opts;
  opts.config_text = text;
  opts.dir = out;
  const auto art = adgn::serve_generator(config, bind, nodes, opts);
  std::printf("run directory: %s\n", art.dir.string().c_str());
  return kExitOk;
}

int cmd_serve_discriminator(const std::string& server, const std::string& shard_path,
                            const std::string& config_path, std::size_t index, bool request_id) {
  const auto config = adgn::load_config(config_path);
  adgn::Shard shard;
  shard.node_id = static_cast<std::uint16_t>(index);
  shard.samples = adgn::read_samples_csv(shard_path);
  if (shard.samples.empty()) throw adgn::ConfigError("shard " + shard_path + " is empty");
  adgn::DiscriminatorWorker worker(shard, adgn::node_config(config, index));
  adgn::Connector connect = [&server] { return adgn::tcp_connect(server); };
  adgn::NodeRunOptions opts;
  opts.ack_timeout = std::chrono::milliseconds(config.timeout_ms);
  if (request_id) opts.requested_id = static_cast<std::uint16_t>(index);
  return adgn::run_discriminator_node(connect, worker, opts);
}

int cmd_make_shards(const std::string& config_path, const std::string& out) {
  const auto config = adgn::load_config(config_path);
  const auto data = adgn::make_dataset(config);
  const auto shards = adgn::make_run_shards(config, data);
  std::filesystem::create_directories(out);
  for (std::size_t j = 0; j < shards.size(); ++j) {
    const auto path = std::filesystem::path(out) / ("shard_" + std::to_string(j) + ".csv");
    adgn::write_samples_csv(path.string(), shards[j].samples);
    std::printf("%s %zu\n", path.string().c_str(), shards[j].samples.size());
  }
  return kExitOk;
}

int cmd_eval_metrics(const std::vector<std::string>& files, bool instance) {
  if (files.size() % 2 != 0) throw adgn::ConfigError("eval-metrics takes GT/PRED file pairs");
  if (instance) {
    std::printf("pair,Dice,AJI\n");
  } else {
    std::printf("pair,Dice,Sens,Spec,HD95\n");
  }
  const std::size_t pairs = files.size() / 2;
  double sum[4] = {0, 0, 0, 0};
  std::size_t hd_count = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto& gt = files[2 * i];
    const auto& pred = files[2 * i + 1];
    if (instance) {
      const auto g = adgn::read_instance_pgm(gt);
      const auto s = adgn::read_instance_pgm(pred);
      const double d = adgn::dice(adgn::foreground(g), adgn::foreground(s));
      const double a = adgn::aji(g, s);
      sum[0] += d;
      sum[1] += a;
      std::printf("%zu,%s,%s\n", i, num(d).c_str(), num(a).c_str());
    } else {
      const auto g = adgn::read_binary_pgm(gt);
      const auto s = adgn::read_binary_pgm(pred);
      const double d = adgn::dice(g, s);
      const double se = adgn::sensitivity(g, s);
      const double sp = adgn::specificity(g, s);
      double hd = std::nan("");
      if (g.count() && s.count()) {
        hd = adgn::hd95(g, s);
        sum[3] += hd;
        ++hd_count;
      }
      sum[0] += d;
      sum[1] += se;
      sum[2] += sp;
      std::printf("%zu,%s,%s,%s,%s\n", i, num(d).c_str(), num(se).c_str(), num(sp).c_str(),
                  num(hd).c_str());
    }
  }
  if (pairs == 0) return kExitOk;
  const double n = static_cast<double>(pairs);
  if (instance) {
    std::printf("mean,%s,%s\n", num(sum[0] / n).c_str(), num(sum[1] / n).c_str());
  } else {
    const double hd = hd_count ? sum[3] / static_cast<double>(hd_count) : std::nan("");
    std::printf("mean,%s,%s,%s,%s\n", num(sum[0] / n).c_str(), num(sum[1] / n).c_str(),
                num(sum[2] / n).c_str(), num(hd).c_str());
  }
  return kExitOk;
}

int cmd_oracle_check(const std::string& config_path) {
  adgn::MixtureSpec spec = adgn::MixtureSpec::synthetic_default();
  if (!config_path.empty()) spec = adgn::load_config(config_path).mixture;
  bool ok = true;
  std::printf("%-44s %-20s %-20s %s\n", "identity", "value", "expected", "result");
  for (const auto& c : adgn::theorem_checks(spec)) {
    std::printf("%-44s %-20.12f %-20.12f %s\n", c.name.c_str(), c.value, c.expected,
                c.pass ? "PASS" : "FAIL");
    ok = ok && c.pass;
  }
  return ok ? kExitOk : kExitRuntime;
}

int cmd_report(const std::vector<std::string>& dirs) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  adgn::write_report(paths, std::cout, std::cerr);
  return kExitOk;
}

int cmd_comm_cost(std::uint64_t h, std::uint64_t w, std::uint64_t c, std::uint64_t batch,
                  std::uint64_t bytes, std::uint64_t params) {
  const auto b = adgn::comm_cost_breakdown(h, w, c, batch, bytes);
  std::printf("fake_batch_bytes=%llu\n", static_cast<unsigned long long>(b.fake_batch));
  std::printf("aux_batch_bytes=%llu\n", static_cast<unsigned long long>(b.aux_batch));
  std::printf("loss_bytes=%llu\n", static_cast<unsigned long long>(b.loss));
  std::printf("total_bytes=%llu\n", static_cast<unsigned long long>(b.total()));
  if (params) {
    std::printf("gradient_sharing_bytes=%llu\n",
                static_cast<unsigned long long>(adgn::gradient_sharing_cost(params, bytes)));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed conditional GAN on a 1-D Gaussian mixture"};
  app.require_subcommand(1);

  std::string config_path, out, bind = "0.0.0.0:7000", server, shard;
  std::size_t nodes = 3, index = 0;

  auto* train = app.add_subcommand("train", "Run one experiment and write its run directory");
  train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Run directory (default: $ADGN_RUN_DIR/<name>)");

  auto* serve_g = app.add_subcommand("serve-generator", "Central generator over TCP");
  serve_g->add_option("--bind", bind, "host:port to listen on");
  serve_g->add_option("--nodes", nodes, "Number of discriminator nodes")->required();
  serve_g->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  serve_g->add_option("--out", out, "Run directory");

  auto* serve_d = app.add_subcommand("serve-discriminator", "Discriminator node over TCP");
  serve_d->add_option("--server", server, "Generator host:port")->required();
  serve_d->add_option("--shard", shard, "Shard CSV (x,y)")->required()->check(CLI::ExistingFile);
  serve_d->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  auto* index_opt = serve_d->add_option(
      "--index", index, "Node id to request; also selects this node's seed streams");

  auto* shards = app.add_subcommand("make-shards", "Write the per-node shard CSVs of a config");
  shards->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  shards->add_option("--out", out, "Output directory")->required();

  bool instance = false;
  std::vector<std::string> mask_files;
  auto* metrics = app.add_subcommand("eval-metrics", "Segmentation metrics for GT/PRED PGM pairs");
  metrics->add_flag("--instance", instance, "Masks are 16-bit instance labels (Dice, AJI)");
  metrics->add_option("files", mask_files, "GT PRED [GT PRED ...]")->check(CLI::ExistingFile);

  auto* oracle = app.add_subcommand("oracle-check", "Check the optimality identities numerically");
  oracle->add_option("--config", config_path, "Take the mixture from this config");

  std::vector<std::string> run_dirs;
  auto* report = app.add_subcommand("report", "Comparison table over run directories");
  report->add_option("runs", run_dirs, "Run directories");

  std::uint64_t h = 128, w = 128, c = 1, batch = 128, bytes = 4, params = 0;
  auto* cost = app.add_subcommand("comm-cost", "Per-node per-iteration traffic");
  cost->add_option("--height", h);
  cost->add_option("--width", w);
  cost->add_option("--channels", c);
  cost->add_option("--batch", batch);
  cost->add_option("--bytes", bytes);
  cost->add_option("--params", params, "Also report gradient sharing for this many parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config_path, out);
    if (*serve_g) return cmd_serve_generator(bind, nodes, config_path, out);
    if (*serve_d) return cmd_serve_discriminator(server, shard, config_path, index, index_opt->count() > 0);
    if (*shards) return cmd_make_shards(config_path, out);
    if (*metrics) return cmd_eval_metrics(mask_files, instance);
    if (*oracle) return cmd_oracle_check(config_path);
    if (*report) return cmd_report(run_dirs);
    if (*cost) return cmd_comm_cost(h, w, c, batch, bytes, params);
  } catch (const adgn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const adgn::ContractViolation& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
