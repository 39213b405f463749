#include "adgn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adgn/error.hpp"
#include "adgn/nn.hpp"

namespace adgn {

double simpson(const Density& f, const QuadratureGrid& grid) {
  if (!(grid.hi > grid.lo) || !(grid.step > 0.0)) {
    throw ContractViolation("simpson: need hi > lo and a positive step");
  }
  auto n = static_cast<std::size_t>(std::llround((grid.hi - grid.lo) / grid.step));
  if (n < 2) n = 2;
  if (n % 2) ++n;
  const double h = (grid.hi - grid.lo) / static_cast<double>(n);
  double odd = 0.0, even = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double v = f(grid.lo + h * static_cast<double>(i));
    (i % 2 ? odd : even) += v;
  }
  return h / 3.0 * (f(grid.lo) + f(grid.hi) + 4.0 * odd + 2.0 * even);
}

double optimal_discriminator(const DensityPair& pair, double y, std::size_t x) {
  const double p = pair.p(y, x);
  const double q = pair.q(y, x);
  if (p < 0.0 || q < 0.0) throw DomainError("optimal_discriminator: negative density");
  if (p + q <= 0.0) {
    throw DomainError("optimal_discriminator: both densities vanish at y=" + std::to_string(y));
  }
  return p / (p + q);
}

namespace {

double xlog_ratio(double u, double total) {
  if (u <= 0.0) return 0.0;
  return u * std::log(u / total);
}

}  // namespace

double pair_loss(const Density& a, const Density& b, const QuadratureGrid& grid) {
  auto integrand = [&](double y) {
    const double av = a(y);
    const double bv = b(y);
    if (av > 0.0 && bv <= 0.0) {
      throw ContractViolation("pair_loss: support of a is not contained in support of b at y=" +
                              std::to_string(y));
    }
    const double total = av + bv;
    if (total <= 0.0) return 0.0;
    return xlog_ratio(av, total) + xlog_ratio(bv, total);
  };
  const double coarse = simpson(integrand, grid);
  QuadratureGrid fine = grid;
  fine.step = grid.step / 2.0;
  const double refined = simpson(integrand, fine);
  if (std::abs(refined - coarse) > 1e-6) {
    throw PrecisionError("pair_loss: quadrature moved by " +
                         std::to_string(std::abs(refined - coarse)) + " on refinement");
  }
  return refined;
}

double generator_value(const MixtureSpec& p, const MixtureSpec& q, std::span<const double> pi,
                       const QuadratureGrid& grid) {
  p.validate();
  q.validate();
  if (p.size() != q.size() || pi.size() != p.size()) {
    throw ContractViolation("generator_value: component sets of p, q and pi differ in size");
  }
  double total_weight = 0.0;
  for (double w : pi) {
    if (!(w >= 0.0)) throw ContractViolation("generator_value: negative mixture weight");
    total_weight += w;
  }
  if (std::abs(total_weight - 1.0) > 1e-9) {
    throw ContractViolation("generator_value: mixture weights do not sum to 1");
  }
  double value = 0.0;
  for (std::size_t j = 0; j < pi.size(); ++j) {
    if (pi[j] == 0.0) continue;
    const Density a = [&p, j](double y) { return pdf(p, y, j); };
    const Density b = [&q, j](double y) { return pdf(q, y, j); };
    value += pi[j] * pair_loss(a, b, grid);
  }
  return value;
}

std::vector<IdentityCheck> theorem_checks(const MixtureSpec& spec, const QuadratureGrid& grid) {
  constexpr double kTol = 1e-5;
  const double log4 = std::log(4.0);
  std::vector<IdentityCheck> out;
  const std::vector<double> pi(spec.size(), 1.0 / static_cast<double>(spec.size()));

  const double v = generator_value(spec, spec, pi, grid);
  out.push_back({"generator_value(p, p) = -log 4", v, -log4, std::abs(v + log4) <= kTol});

  for (std::size_t j = 0; j < spec.size(); ++j) {
    const Density a = [&spec, j](double y) { return pdf(spec, y, j); };
    const double l = pair_loss(a, a, grid);
    out.push_back({"pair_loss(p_" + std::to_string(j) + ", p_" + std::to_string(j) + ") = -2 log 2", l,
                   -2.0 * std::log(2.0), std::abs(l + 2.0 * std::log(2.0)) <= kTol});
  }

  MixtureSpec q = spec;
  for (auto& c : q.components) c.mean += 0.5;
  const double vq = generator_value(spec, q, pi, grid);
  out.push_back({"generator_value(p, shifted q) > -log 4", vq, -log4, vq > -log4 + 1e-6});
  return out;
}

HistogramDensity HistogramDensity::fit(std::span<const Sample> samples, std::size_t components,
                                       double lo, double hi, std::size_t bins) {
  HistogramDensity h;
  h.lo = lo;
  h.hi = hi;
  h.bins = bins;
  h.density.assign(components, std::vector<double>(bins, 0.0));
  std::vector<double> totals(components, 0.0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (const auto& s : samples) {
    if (s.x >= components) throw ContractViolation("HistogramDensity: sample x out of range");
    totals[s.x] += 1.0;
    const double pos = (static_cast<double>(s.y) - lo) / width;
    if (!(pos >= 0.0) || pos >= static_cast<double>(bins)) continue;
    h.density[s.x][static_cast<std::size_t>(pos)] += 1.0;
  }
  for (std::size_t j = 0; j < components; ++j) {
    if (totals[j] == 0.0) continue;
    for (auto& c : h.density[j]) c /= totals[j] * width;
  }
  return h;
}

double HistogramDensity::operator()(double y, std::size_t x) const {
  const double width = (hi - lo) / static_cast<double>(bins);
  const double pos = (y - lo) / width;
  if (!(pos >= 0.0) || pos >= static_cast<double>(bins)) return 0.0;
  return density.at(x)[static_cast<std::size_t>(pos)];
}

DiscriminatorCheck empirical_discriminator_check(DiscriminatorNet& d, const MixtureSpec& p,
                                                 const HistogramDensity& q_hat,
                                                 std::span<const double> loss_history,
                                                 double lo, double hi, double step,
                                                 double min_density) {
  DiscriminatorCheck out;
  if (loss_history.size() >= 200) {
    const auto n = loss_history.size();
    const double recent =
        std::accumulate(loss_history.end() - 100, loss_history.end(), 0.0) / 100.0;
    const double before =
        std::accumulate(loss_history.begin() + static_cast<std::ptrdiff_t>(n - 200),
                        loss_history.end() - 100, 0.0) /
        100.0;
    if (before - recent > 1e-4) out.inconclusive = true;
  }

  const std::size_t k = p.size();
  std::vector<double> ys;
  for (double y = lo; y <= hi + 1e-12; y += step) ys.push_back(y);

  for (std::size_t x = 0; x < k; ++x) {
    std::vector<float> yv, xv;
    std::vector<double> target;
    for (double y : ys) {
      const double pv = pdf(p, y, x);
      const double qv = q_hat(y, x);
      if (pv + qv <= min_density) continue;
      yv.push_back(static_cast<float>(y));
      for (std::size_t c = 0; c < k; ++c) xv.push_back(c == x ? 1.0f : 0.0f);
      target.push_back(pv / (pv + qv));
    }
    if (target.empty()) continue;
    Graph g;
    Var logits = d.forward(g, g.constant(Tensor({yv.size(), 1}, yv)),
                           g.constant(Tensor({yv.size(), k}, xv)));
    Var prob = g.sigmoid(logits);
    const Tensor probs = g.value(prob);
    for (std::size_t i = 0; i < target.size(); ++i) {
      out.max_abs_deviation =
          std::max(out.max_abs_deviation, std::abs(static_cast<double>(probs.data[i]) - target[i]));
    }
    out.points += target.size();
  }
  if (out.points == 0) out.inconclusive = true;
  return out;
}

}  // namespace adgn
