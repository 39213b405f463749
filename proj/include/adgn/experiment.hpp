#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adgn/gan.hpp"
#include "adgn/mixture.hpp"
#include "adgn/nn.hpp"

namespace adgn {

enum class Scenario { kSynAll, kSynSubset, kAsynDGAN };
enum class TransportKind { kInproc, kTcp };

/// Everything a run depends on. Text form is one `key = value` per line;
/// '#' starts a comment. emit() writes every key, parse() accepts any subset
/// except the seeds, which must be given explicitly.
struct RunConfig {
  Scenario scenario = Scenario::kAsynDGAN;
  std::size_t subset = 0;  // shard index for syn_subset
  std::string run_name;    // empty: derived from scenario and seeds

  MixtureSpec mixture = MixtureSpec::synthetic_default();
  std::size_t dataset_size = 30000;
  ShardMode shard_mode = ShardMode::kPerComponent;
  std::size_t nodes = 3;

  std::size_t batch = 64;
  std::size_t k_d = 1;
  std::size_t iterations = 5000;
  ModelConfig model;
  OptimizerKind optimizer = AdamParams{};
  GLossVariant loss = GLossVariant::kSaturating;
  std::vector<double> weights;  // empty: proportional to shard sizes

  std::uint64_t seed_init = 0;
  std::uint64_t seed_data = 0;
  std::uint64_t seed_dropout = 0;
  std::uint64_t seed_eval = 0;

  TransportKind transport = TransportKind::kInproc;
  std::string tcp_bind = "127.0.0.1:0";
  std::uint32_t timeout_ms = 30000;

  std::size_t eval_samples = 100000;
  HistogramRange histogram;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_config(const std::string& text);
std::string emit_config(const RunConfig& config);
RunConfig load_config(const std::string& path);

std::string scenario_name(const RunConfig& config);

// Seed streams shared by every execution path, so that a one-node
// distributed run and a centralized run consume identical randomness.
Dataset make_dataset(const RunConfig& config);
std::vector<Shard> make_run_shards(const RunConfig& config, const Dataset& data);
NodeConfig node_config(const RunConfig& config, std::size_t node_index);
GeneratorConfig generator_config(const RunConfig& config);
TrainConfig train_config(const RunConfig& config);

struct Evaluation {
  double js_marginal = 0.0;
  std::vector<double> js_component;
  Dataset mixed;  // generated (x, y) pairs conditioned on a true x draw
};

/// 10^5 (eval_samples) draws per component and for the prior-weighted mix,
/// scored against fresh samples from the true mixture.
Evaluation evaluate(GeneratorWorker& g, const RunConfig& config);

struct RunArtifact {
  std::filesystem::path dir;
  Evaluation eval;
  std::vector<RoundReport> reports;
  std::uint64_t bytes = 0;
  std::size_t privacy_violations = 0;
  double wall_seconds = 0.0;
};

struct RunOptions {
  // Byte-for-byte config snapshot; emit_config(config) when empty.
  std::optional<std::string> config_text;
  // Run directory; <ADGN_RUN_DIR or "runs">/<name> when empty.
  std::filesystem::path dir;
};

/// Trains, evaluates and writes the run directory: config.txt, loss.csv,
/// samples.csv, histogram.csv, generator.ckpt, summary.txt and, for
/// asyndgan, transcript.bin and privacy_audit.txt. The directory is kept
/// when a module error aborts the run.
RunArtifact run_experiment(const RunConfig& config, const RunOptions& options = {});

/// Generator half of a multi-process run: listens on `bind`, waits for
/// `nodes` discriminator processes and writes the same run directory minus
/// the privacy audit (the generator holds no real data to audit against).
RunArtifact serve_generator(const RunConfig& config, const std::string& bind, std::size_t nodes,
                            const RunOptions& options = {});

std::filesystem::path artifact_root();

struct Summary {
  std::string run;
  std::string scenario;
  double js_marginal = 0.0;
  std::vector<double> js_component;
  std::uint64_t bytes = 0;
  double wall_seconds = 0.0;
};

std::optional<Summary> read_summary(const std::filesystem::path& run_dir);
/// CSV table, one row per run that has a readable summary; others are
/// skipped with a warning on `warn`.
void write_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& out,
                  std::ostream& warn);

}  // namespace adgn
