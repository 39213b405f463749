#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "adgn/mixture.hpp"

namespace adgn {

class DiscriminatorNet;

using Density = std::function<double(double)>;
using ConditionalDensity = std::function<double(double y, std::size_t x)>;

/// Composite Simpson grid. The default covers [-15, 15] at step 1e-3; tails of
/// every component of the synthetic mixture are below 1e-12 outside it.
struct QuadratureGrid {
  double lo = -15.0;
  double hi = 15.0;
  double step = 1e-3;
};

struct DensityPair {
  ConditionalDensity p;
  ConditionalDensity q;
  QuadratureGrid grid;
};

double simpson(const Density& f, const QuadratureGrid& grid);

/// Optimal discriminator against a fixed generator: p / (p + q).
/// Throws DomainError when both densities vanish at (y, x).
double optimal_discriminator(const DensityPair& pair, double y, std::size_t x);

/// Integral of a log(a/(a+b)) + b log(b/(a+b)) over the grid, with
/// 0 log 0 = 0. Bounded below by -2 log 2, attained iff a == b.
/// Refines the grid once and throws PrecisionError if the value moves by
/// more than 1e-6.
double pair_loss(const Density& a, const Density& b, const QuadratureGrid& grid = {});

/// Generator objective under optimal discriminators:
/// sum_j pi_j * pair_loss(p(.|x_j), q(.|x_j)). Equals -log 4 iff q == p.
double generator_value(const MixtureSpec& p, const MixtureSpec& q, std::span<const double> pi,
                       const QuadratureGrid& grid = {});

struct IdentityCheck {
  std::string name;
  double value = 0.0;
  double expected = 0.0;
  bool pass = false;
};

/// The optimality identities for `spec`: value -log 4 at q = p under uniform
/// pi, -2 log 2 per component, and a strictly larger value for a perturbed q.
std::vector<IdentityCheck> theorem_checks(const MixtureSpec& spec, const QuadratureGrid& grid = {});

struct DiscriminatorCheck {
  double max_abs_deviation = 0.0;
  std::size_t points = 0;     // grid points that passed the density filter
  bool inconclusive = false;  // no eligible points, or D had not converged
};

/// Frozen-generator density estimate: one normalised histogram per component.
struct HistogramDensity {
  double lo = -15.0;
  double hi = 15.0;
  std::size_t bins = 600;
  std::vector<std::vector<double>> density;  // [component][bin]

  static HistogramDensity fit(std::span<const Sample> samples, std::size_t components,
                              double lo = -15.0, double hi = 15.0, std::size_t bins = 600);
  double operator()(double y, std::size_t x) const;
};

/// Compares sigmoid(D(y|x)) with p / (p + q_hat) on a grid over every
/// component, ignoring points where p + q_hat <= min_density. `loss_history` is the
/// D training loss trace; if it was still falling by more than 1e-4 over its
/// last 100 entries the result is flagged inconclusive.
DiscriminatorCheck empirical_discriminator_check(DiscriminatorNet& d, const MixtureSpec& p,
                                                 const HistogramDensity& q_hat,
                                                 std::span<const double> loss_history,
                                                 double lo = -10.0, double hi = 10.0,
                                                 double step = 0.05, double min_density = 1e-3);

}  // namespace adgn
