#include <filesystem>
#include <fstream>
#include <sstream>

#include <stdlib.h>

#include "adgn/error.hpp"
#include "adgn/experiment.hpp"
#include "adgn/protocol.hpp"
#include "doctest.h"

using namespace adgn;
namespace fs = std::filesystem;

namespace {

const char* kSeeds = "seed_init = 1\nseed_data = 2\nseed_dropout = 3\n";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "adgn_experiment_test" / name;
  fs::remove_all(dir);
  return dir;
}

std::string short_run_text(const std::string& scenario) {
  return "# short run\nscenario = " + scenario +
         "\niterations = 20\ndataset_size = 600\nbatch = 16\nhidden = 8\n"
         "eval_samples = 2000\ntimeout_ms = 10000\n" + kSeeds;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config parse and emit round trip") {
  const RunConfig defaults = parse_config(kSeeds);
  CHECK(defaults.nodes == 3);
  CHECK(defaults.batch == 64);
  CHECK(defaults.iterations == 5000);
  CHECK(defaults.seed_init == 1);
  CHECK(parse_config(emit_config(defaults)) == defaults);

  RunConfig c = parse_config(std::string(kSeeds) +
                             "scenario = syn_subset\nsubset = 2\nk_d = 2\noptimizer = sgd_momentum\n"
                             "lr = 0.01\nweights = 0.5, 0.25, 0.25\nmixture.spread = stddev\n"
                             "loss = non_saturating\ntransport = tcp\n");
  CHECK(c.scenario == Scenario::kSynSubset);
  CHECK(c.subset == 2);
  CHECK(c.k_d == 2);
  CHECK(std::holds_alternative<SgdMomentumParams>(c.optimizer));
  CHECK(c.weights == std::vector<double>{0.5, 0.25, 0.25});
  CHECK(c.loss == GLossVariant::kNonSaturating);
  CHECK(c.transport == TransportKind::kTcp);
  CHECK(scenario_name(c) == "syn_subset_2");
  CHECK(parse_config(emit_config(c)) == c);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("seed_init = 1\nseed_data = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kSeeds) + "colour = blue\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kSeeds) + "batch = 3\nbatch = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kSeeds) + "batch = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kSeeds) + "scenario = syn_subset\nsubset = 3\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kSeeds) + "weights = 0.5, 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kSeeds) + "nodes = 2\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/adgn.conf"), ConfigError);
}

TEST_CASE("seed streams") {
  const RunConfig c = parse_config(std::string(kSeeds) + "dataset_size = 900\n");
  const auto data = make_dataset(c);
  CHECK(data.size() == 900);
  CHECK(make_dataset(c) == data);
  const auto shards = make_run_shards(c, data);
  REQUIRE(shards.size() == 3);
  CHECK(node_config(c, 0).init_seed != node_config(c, 1).init_seed);
  CHECK(node_config(c, 0).data_seed != node_config(c, 1).data_seed);
}

TEST_CASE("short run writes a complete directory") {
  const auto root = scratch("complete");
  const std::string text = short_run_text("asyndgan");
  RunOptions opts;
  opts.config_text = text;
  opts.dir = root / "run";
  const auto art = run_experiment(parse_config(text), opts);
  CHECK(art.dir == opts.dir);
  for (const char* f : {"config.txt", "loss.csv", "samples.csv", "histogram.csv", "generator.ckpt",
                        "summary.txt", "transcript.bin", "privacy_audit.txt"}) {
    CHECK_MESSAGE(fs::exists(art.dir / f), f);
  }
  CHECK(slurp(art.dir / "config.txt") == text);
  CHECK(art.reports.size() == 20);
  CHECK(art.privacy_violations == 0);
  CHECK(art.bytes == Transcript::load((art.dir / "transcript.bin").string()).total_bytes());

  const auto s = read_summary(art.dir);
  REQUIRE(s);
  CHECK(s->scenario == "asyndgan");
  CHECK(s->js_component.size() == 3);
  CHECK(s->bytes == art.bytes);

  std::ifstream loss(art.dir / "loss.csv");
  std::string header;
  std::getline(loss, header);
  CHECK(header.rfind("round,", 0) == 0);
}

TEST_CASE("runs are deterministic and the directory name is not reused") {
  const auto root = scratch("determinism");
  const RunConfig c = parse_config(short_run_text("syn_all") + "run_name = same\n");
  ::setenv("ADGN_RUN_DIR", root.c_str(), 1);
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  ::unsetenv("ADGN_RUN_DIR");
  CHECK(a.dir == root / "same");
  CHECK(b.dir == root / "same-2");
  CHECK(slurp(a.dir / "loss.csv") == slurp(b.dir / "loss.csv"));
  CHECK(slurp(a.dir / "samples.csv") == slurp(b.dir / "samples.csv"));
  CHECK(a.eval.js_marginal == b.eval.js_marginal);
  CHECK(slurp(a.dir / "config.txt") == emit_config(c));
}

TEST_CASE("report table") {
  const auto root = scratch("report");
  std::ostringstream out, warn;
  write_report({}, out, warn);
  CHECK(out.str() == "run,scenario,js_marginal,bytes,wall_seconds\n");

  fs::create_directories(root / "good");
  fs::create_directories(root / "broken");
  std::ofstream(root / "good" / "summary.txt")
      << "scenario=syn_all\njs_marginal=0.25\njs_component_0=0.5\njs_component_1=0.125\n"
         "bytes=0\nwall_seconds=1.5\n";
  out.str("");
  write_report({root / "good", root / "broken"}, out, warn);
  CHECK(out.str() ==
        "run,scenario,js_marginal,js_component_0,js_component_1,bytes,wall_seconds\n"
        "good,syn_all,0.25,0.5,0.125,0,1.5\n");
  CHECK(warn.str().find("broken") != std::string::npos);
}

}  // TEST_SUITE
