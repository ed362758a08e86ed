#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>

#include "lgcp/optim.hpp"

namespace lgcp {

/// Power exponential correlation exp(-rho * d^delta).
struct PowerExponential {
  double rho;    // decay, > 0
  double delta;  // exponent, in (0, 2]
};

/// Matern correlation (d/phi)^nu K_nu(d/phi) / (Gamma(nu) 2^{nu-1}).
struct Matern {
  double phi;  // range, > 0
  double nu;   // shape, > 0
};

using CorrelationModel = std::variant<PowerExponential, Matern>;

inline void validate(const CorrelationModel& model) {
  if (const auto* p = std::get_if<PowerExponential>(&model)) {
    if (!(p->rho > 0.0)) throw std::invalid_argument("PowerExponential: rho must be > 0");
    if (!(p->delta > 0.0 && p->delta <= 2.0))
      throw std::invalid_argument("PowerExponential: delta must be in (0, 2]");
  } else {
    const auto& m = std::get<Matern>(model);
    if (!(m.phi > 0.0)) throw std::invalid_argument("Matern: phi must be > 0");
    if (!(m.nu > 0.0)) throw std::invalid_argument("Matern: nu must be > 0");
  }
}

namespace detail {

/// Modified Bessel function of the second kind. Integer orders go through
/// the upward recurrence K_{k+1} = K_{k-1} + (2k/x) K_k from K_0, K_1; other
/// orders use the library routine directly.
inline double bessel_k(double nu, double x) {
  nu = std::abs(nu);
  const double rounded = std::round(nu);
  if (std::abs(nu - rounded) < 1e-12 && rounded <= 64.0) {
    const int order = static_cast<int>(rounded);
    double km1 = std::cyl_bessel_k(0.0, x);
    if (order == 0) return km1;
    double k = std::cyl_bessel_k(1.0, x);
    for (int j = 1; j < order; ++j) {
      const double next = km1 + (2.0 * j / x) * k;
      km1 = k;
      k = next;
    }
    return k;
  }
  return std::cyl_bessel_k(nu, x);
}

}  // namespace detail

/// Correlation at distance d >= 0. Both families return 1 at d = 0 (the
/// Matern value by its continuous limit).
inline double corr(const CorrelationModel& model, double d) {
  if (!(d >= 0.0) || !std::isfinite(d))
    throw std::invalid_argument("corr: distance must be finite and >= 0");
  if (const auto* p = std::get_if<PowerExponential>(&model)) {
    return d == 0.0 ? 1.0 : std::exp(-p->rho * std::pow(d, p->delta));
  }
  const auto& m = std::get<Matern>(model);
  if (d < 1e-14 * m.phi) return 1.0;  // removable singularity
  const double x = d / m.phi;
  if (x > 700.0) return 0.0;  // K_nu underflows
  const double value = std::pow(x, m.nu) * detail::bessel_k(m.nu, x) /
                       (std::tgamma(m.nu) * std::pow(2.0, m.nu - 1.0));
  return std::min(1.0, std::max(0.0, value));
}

/// Distance at which the correlation drops to 0.5. Closed form for the power
/// exponential; bracketed bisection for the Matern, expanding the upper end
/// until the root is enclosed.
inline double d_half(const CorrelationModel& model) {
  validate(model);
  if (const auto* p = std::get_if<PowerExponential>(&model)) {
    return std::pow(std::log(2.0) / p->rho, 1.0 / p->delta);
  }
  const auto& m = std::get<Matern>(model);
  double hi = m.phi;
  while (corr(model, hi) > 0.5) hi *= 2.0;
  double lo = 0.0;
  double mid = 0.5 * hi;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double c = corr(model, mid);
    if (std::abs(c - 0.5) <= 1e-12) break;
    (c > 0.5 ? lo : hi) = mid;
  }
  return mid;
}

struct MatchResult {
  double rho;
  double delta;
  double sse;
  int iterations;
};

/// Least-squares fit of the power exponential shape to a Matern target over
/// the given distance grid. Parameters are optimized on transformed scales
/// (log rho, logit of delta/2) to keep them in range.
inline MatchResult match_power_to_matern(const Matern& target, const Eigen::VectorXd& dgrid) {
  validate(CorrelationModel{target});
  if (dgrid.size() == 0) throw std::invalid_argument("match_power_to_matern: empty grid");
  if ((dgrid.array() <= 0.0).any())
    throw std::invalid_argument("match_power_to_matern: grid distances must be > 0");

  Eigen::VectorXd target_values(dgrid.size());
  for (Eigen::Index i = 0; i < dgrid.size(); ++i)
    target_values[i] = corr(CorrelationModel{target}, dgrid[i]);

  auto unpack = [](const Eigen::VectorXd& x) {
    const double rho = std::exp(x[0]);
    const double delta = 2.0 / (1.0 + std::exp(-x[1]));
    return PowerExponential{rho, delta};
  };
  auto residuals = [&](const Eigen::VectorXd& x) {
    const PowerExponential p = unpack(x);
    Eigen::VectorXd r(dgrid.size());
    for (Eigen::Index i = 0; i < dgrid.size(); ++i)
      r[i] = std::exp(-p.rho * std::pow(dgrid[i], p.delta)) - target_values[i];
    return r;
  };

  // start at delta = 1 with rho matched to the target's half-distance
  Eigen::VectorXd x0(2);
  x0[0] = std::log(std::log(2.0) / d_half(CorrelationModel{target}));
  x0[1] = 0.0;
  const LsqResult fit = levenberg_marquardt(residuals, x0);
  const PowerExponential p = unpack(fit.x);
  if (!fit.converged) {
    std::ostringstream msg;
    msg << "match_power_to_matern: no convergence after " << fit.iterations
        << " iterations; best iterate rho=" << p.rho << " delta=" << p.delta
        << " sse=" << fit.sse;
    throw std::runtime_error(msg.str());
  }
  return MatchResult{p.rho, p.delta, fit.sse, fit.iterations};
}

/// Default grid for shape matching: 100 equally spaced distances on (0, 0.5].
inline Eigen::VectorXd default_match_grid() {
  Eigen::VectorXd grid(100);
  for (int i = 0; i < 100; ++i) grid[i] = 0.5 * (i + 1) / 100.0;
  return grid;
}

}  // namespace lgcp
