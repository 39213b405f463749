#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adgn {

struct GaussianComponent {
  double mean = 0.0;
  double second_param = 1.0;  // variance, or standard deviation when flagged
  friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

/// Conditional target p(y|x): x picks a component, y is Gaussian given x.
struct MixtureSpec {
  std::vector<GaussianComponent> components;
  std::vector<double> priors;
  bool second_param_is_variance = true;

  /// Three components N(-3,2), N(1,1), N(3,0.5) with equal priors.
  static MixtureSpec synthetic_default();

  std::size_t size() const { return components.size(); }
  double stddev(std::size_t component) const;
  // Throws ContractViolation unless priors sum to 1 and all spreads are positive.
  void validate() const;

  friend bool operator==(const MixtureSpec&, const MixtureSpec&) = default;
};

struct Sample {
  std::uint32_t x = 0;  // component index, 0-based
  float y = 0.0f;
  friend bool operator==(const Sample&, const Sample&) = default;
};

using Dataset = std::vector<Sample>;

Dataset sample(const MixtureSpec& spec, std::size_t n, std::uint64_t seed);
// Draws from one component only.
std::vector<float> sample_component(const MixtureSpec& spec, std::size_t component,
                                    std::size_t n, std::uint64_t seed);

/// Conditional density p(y|x) when x is given, otherwise the prior-weighted marginal.
double pdf(const MixtureSpec& spec, double y, std::optional<std::size_t> x = std::nullopt);

struct HistogramRange {
  std::size_t bins = 100;
  double lo = -10.0;
  double hi = 10.0;
  friend bool operator==(const HistogramRange&, const HistogramRange&) = default;
};

/// Counts per bin; samples outside [lo, hi) are clamped into the edge bins.
std::vector<std::uint64_t> histogram(std::span<const float> values, const HistogramRange& range);

/// Jensen-Shannon divergence (natural log) between add-one-smoothed
/// histograms of the two sample sets. Result lies in [0, log 2].
double js_divergence(std::span<const float> a, std::span<const float> b,
                     const HistogramRange& range = {});

struct Shard {
  std::uint16_t node_id = 0;
  Dataset samples;
};

enum class ShardMode { kPerComponent, kRandomSplit };

/// kPerComponent: one shard per x value present, ordered by x.
/// kRandomSplit: `nodes` shards whose sizes differ by at most one; sample
/// order inside a shard follows the dataset order.
std::vector<Shard> make_shards(const Dataset& data, ShardMode mode, std::size_t nodes = 0,
                               std::uint64_t seed = 0);

std::vector<float> y_values(const Dataset& data);

// Two-column CSV (x,y) with a header row.
void write_samples_csv(const std::string& path, const Dataset& data);
Dataset read_samples_csv(const std::string& path);
// CSV (bin_left,count).
void write_histogram_csv(const std::string& path, std::span<const float> values,
                         const HistogramRange& range = {});

}  // namespace adgn
