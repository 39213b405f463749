#include "adgn/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "adgn/error.hpp"
#include "adgn/rng.hpp"

namespace adgn {

MixtureSpec MixtureSpec::synthetic_default() {
  MixtureSpec s;
  s.components = {{-3.0, 2.0}, {1.0, 1.0}, {3.0, 0.5}};
  s.priors = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  s.second_param_is_variance = true;
  return s;
}

double MixtureSpec::stddev(std::size_t j) const {
  const double p = components.at(j).second_param;
  return second_param_is_variance ? std::sqrt(p) : p;
}

void MixtureSpec::validate() const {
  if (components.empty()) throw ContractViolation("mixture has no components");
  if (priors.size() != components.size()) {
    throw ContractViolation("mixture has " + std::to_string(components.size()) +
                            " components but " + std::to_string(priors.size()) + " priors");
  }
  double total = 0.0;
  for (double p : priors) {
    if (!(p >= 0.0)) throw ContractViolation("mixture prior must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractViolation("mixture priors sum to " + std::to_string(total) + ", expected 1");
  }
  for (const auto& c : components) {
    if (!(c.second_param > 0.0)) throw ContractViolation("mixture spread must be positive");
  }
}

namespace {

std::size_t draw_component(const std::vector<double>& priors, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < priors.size(); ++j) {
    acc += priors[j];
    if (u < acc) return j;
  }
  // u landed in the rounding gap above the last cumulative sum
  for (std::size_t j = priors.size(); j-- > 0;) {
    if (priors[j] > 0) return j;
  }
  return 0;
}

}  // namespace

Dataset sample(const MixtureSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw ContractViolation("sample: n must be at least 1");
  Rng rng(seed);
  Dataset out(n);
  for (auto& s : out) {
    const std::size_t j = draw_component(spec.priors, rng);
    s.x = static_cast<std::uint32_t>(j);
    s.y = static_cast<float>(spec.components[j].mean + spec.stddev(j) * rng.normal());
  }
  return out;
}

std::vector<float> sample_component(const MixtureSpec& spec, std::size_t component,
                                    std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (component >= spec.size()) throw ContractViolation("sample_component: bad component index");
  Rng rng(seed);
  std::vector<float> out(n);
  const double mu = spec.components[component].mean;
  const double sd = spec.stddev(component);
  for (auto& y : out) y = static_cast<float>(mu + sd * rng.normal());
  return out;
}

double pdf(const MixtureSpec& spec, double y, std::optional<std::size_t> x) {
  auto normal = [&](std::size_t j) {
    const double sd = spec.stddev(j);
    const double z = (y - spec.components[j].mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
  };
  if (x) {
    if (*x >= spec.size()) throw ContractViolation("pdf: bad component index");
    return normal(*x);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < spec.size(); ++j) total += spec.priors[j] * normal(j);
  return total;
}

std::vector<std::uint64_t> histogram(std::span<const float> values, const HistogramRange& range) {
  if (range.bins == 0 || !(range.hi > range.lo)) {
    throw ContractViolation("histogram: need bins >= 1 and hi > lo");
  }
  std::vector<std::uint64_t> counts(range.bins, 0);
  const double width = (range.hi - range.lo) / static_cast<double>(range.bins);
  for (float v : values) {
    double pos = std::floor((static_cast<double>(v) - range.lo) / width);
    if (!(pos >= 0.0)) pos = 0.0;  // also catches NaN
    auto idx = static_cast<std::size_t>(std::min(pos, static_cast<double>(range.bins - 1)));
    counts[idx] += 1;
  }
  return counts;
}

double js_divergence(std::span<const float> a, std::span<const float> b,
                     const HistogramRange& range) {
  if (a.empty() || b.empty()) throw ContractViolation("js_divergence: empty sample set");
  if (range.bins < 10) throw ContractViolation("js_divergence: need at least 10 bins");
  const auto ha = histogram(a, range);
  const auto hb = histogram(b, range);
  const double na = static_cast<double>(a.size() + range.bins);
  const double nb = static_cast<double>(b.size() + range.bins);
  double js = 0.0;
  for (std::size_t i = 0; i < range.bins; ++i) {
    const double p = (static_cast<double>(ha[i]) + 1.0) / na;
    const double q = (static_cast<double>(hb[i]) + 1.0) / nb;
    const double m = 0.5 * (p + q);
    js += 0.5 * p * std::log(p / m) + 0.5 * q * std::log(q / m);
  }
  return std::clamp(js, 0.0, std::numbers::ln2);
}

std::vector<Shard> make_shards(const Dataset& data, ShardMode mode, std::size_t nodes,
                               std::uint64_t seed) {
  if (data.empty()) throw ContractViolation("make_shards: empty dataset");
  std::vector<Shard> shards;
  if (mode == ShardMode::kPerComponent) {
    std::uint32_t max_x = 0;
    for (const auto& s : data) max_x = std::max(max_x, s.x);
    std::vector<Dataset> by_x(max_x + 1);
    for (const auto& s : data) by_x[s.x].push_back(s);
    for (auto& d : by_x) {
      if (d.empty()) continue;
      shards.push_back({static_cast<std::uint16_t>(shards.size()), std::move(d)});
    }
    return shards;
  }
  if (nodes == 0) throw ContractViolation("make_shards: random split needs at least one node");
  if (nodes > data.size()) {
    throw ContractViolation("make_shards: " + std::to_string(nodes) + " nodes exceed " +
                            std::to_string(data.size()) + " samples");
  }
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<std::vector<std::size_t>> idx(nodes);
  for (std::size_t i = 0; i < perm.size(); ++i) idx[i % nodes].push_back(perm[i]);
  for (std::size_t j = 0; j < nodes; ++j) {
    std::sort(idx[j].begin(), idx[j].end());
    Shard s{static_cast<std::uint16_t>(j), {}};
    s.samples.reserve(idx[j].size());
    for (auto i : idx[j]) s.samples.push_back(data[i]);
    shards.push_back(std::move(s));
  }
  return shards;
}

std::vector<float> y_values(const Dataset& data) {
  std::vector<float> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.y);
  return out;
}

void write_samples_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "x,y\n";
  char buf[64];
  for (const auto& s : data) {
    std::snprintf(buf, sizeof buf, "%u,%.9g\n", s.x, static_cast<double>(s.y));
    out << buf;
  }
}

Dataset read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.rfind("x,", 0) == 0)) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected x,y");
    }
    try {
      Sample s;
      s.x = static_cast<std::uint32_t>(std::stoul(line.substr(0, comma)));
      s.y = std::stof(line.substr(comma + 1));
      out.push_back(s);
    } catch (const std::logic_error&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  return out;
}

void write_histogram_csv(const std::string& path, std::span<const float> values,
                         const HistogramRange& range) {
  const auto counts = histogram(values, range);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "bin_left,count\n";
  const double width = (range.hi - range.lo) / static_cast<double>(range.bins);
  char buf[64];
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6g,%llu\n", range.lo + width * static_cast<double>(i),
                  static_cast<unsigned long long>(counts[i]));
    out << buf;
  }
}

}  // namespace adgn
