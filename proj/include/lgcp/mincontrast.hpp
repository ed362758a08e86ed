#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "lgcp/kfunction.hpp"
#include "lgcp/optim.hpp"

namespace lgcp {

/// Which correlation parameters minimum contrast treats as free.
enum class ContrastFamily { Rho, RhoDelta, Phi, PhiNu };

struct MinContrastOptions {
  ContrastFamily family = ContrastFamily::Rho;
  bool fit_sigma2 = false;
  double fit_max = 0.25;    // contrast integral over (0, fit_max]
  int grid_points = 100;
  double exponent = 0.25;   // contrast exponent c
  CorrelationModel init_model{PowerExponential{std::log(2.0) / 0.05, 1.0}};
  double init_sigma2 = 1.0;  // fixed value unless fit_sigma2
};

struct MinContrastResult {
  CorrelationModel model;
  double sigma2 = 1.0;
  double contrast = 0.0;
  int iterations = 0;
};

namespace detail {

inline Eigen::VectorXd pack_contrast(const MinContrastOptions& opt) {
  std::vector<double> x;
  if (opt.family == ContrastFamily::Rho || opt.family == ContrastFamily::RhoDelta) {
    const auto& p = std::get<PowerExponential>(opt.init_model);
    x.push_back(std::log(p.rho));
    if (opt.family == ContrastFamily::RhoDelta)
      x.push_back(std::log(p.delta / (2.0 - p.delta)));
  } else {
    const auto& m = std::get<Matern>(opt.init_model);
    x.push_back(std::log(m.phi));
    if (opt.family == ContrastFamily::PhiNu) x.push_back(std::log(m.nu));
  }
  if (opt.fit_sigma2) x.push_back(std::log(opt.init_sigma2));
  return Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

inline std::pair<CorrelationModel, double> unpack_contrast(const Eigen::VectorXd& x,
                                                           const MinContrastOptions& opt) {
  CorrelationModel model = opt.init_model;
  Eigen::Index k = 0;
  if (opt.family == ContrastFamily::Rho || opt.family == ContrastFamily::RhoDelta) {
    auto p = std::get<PowerExponential>(opt.init_model);
    p.rho = std::exp(x[k++]);
    if (opt.family == ContrastFamily::RhoDelta) p.delta = 2.0 / (1.0 + std::exp(-x[k++]));
    model = p;
  } else {
    auto m = std::get<Matern>(opt.init_model);
    m.phi = std::exp(x[k++]);
    if (opt.family == ContrastFamily::PhiNu) m.nu = std::exp(x[k++]);
    model = m;
  }
  const double sigma2 = opt.fit_sigma2 ? std::exp(x[k]) : opt.init_sigma2;
  return {model, sigma2};
}

}  // namespace detail

/// Fit correlation parameters by minimizing the discretized contrast
/// integral over (0, fit_max] of (Khat^c - K(.; params)^c)^2 against a given
/// empirical curve. The same Levenberg-Marquardt routine used for shape
/// matching drives the fit on transformed (log / logit) parameter scales.
inline MinContrastResult min_contrast_fit(const KCurve& empirical,
                                          const MinContrastOptions& opt) {
  if (empirical.r.size() < 2)
    throw std::invalid_argument("min_contrast_fit: need at least 2 grid distances");
  if (!(opt.exponent > 0.0)) throw std::invalid_argument("min_contrast_fit: exponent must be > 0");
  if ((opt.family == ContrastFamily::Rho || opt.family == ContrastFamily::RhoDelta) &&
      !std::holds_alternative<PowerExponential>(opt.init_model))
    throw std::invalid_argument("min_contrast_fit: rho families need a power-exponential init");
  if ((opt.family == ContrastFamily::Phi || opt.family == ContrastFamily::PhiNu) &&
      !std::holds_alternative<Matern>(opt.init_model))
    throw std::invalid_argument("min_contrast_fit: phi families need a Matern init");

  const double c = opt.exponent;
  Eigen::VectorXd khat_c = empirical.k.array().pow(c);
  const double dr = empirical.r[1] - empirical.r[0];
  const double sqrt_dr = std::sqrt(dr);

  auto residuals = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const auto [model, sigma2] = detail::unpack_contrast(x, opt);
    try {
      validate(model);
      const KCurve theory = k_theory_lgcp(model, sigma2, empirical.r);
      return (theory.k.array().pow(c) - khat_c.array()) * sqrt_dr;
    } catch (const std::exception&) {
      return Eigen::VectorXd::Constant(empirical.r.size(),
                                       std::numeric_limits<double>::infinity());
    }
  };

  const LsqResult fit = levenberg_marquardt(residuals, detail::pack_contrast(opt));
  const auto [model, sigma2] = detail::unpack_contrast(fit.x, opt);
  if (!fit.converged) {
    std::ostringstream msg;
    msg << "min_contrast: no convergence after " << fit.iterations
        << " iterations; best contrast " << fit.sse;
    throw std::runtime_error(msg.str());
  }
  return MinContrastResult{model, sigma2, fit.sse, fit.iterations};
}

/// Minimum-contrast estimation from a point pattern: the empirical K is the
/// translation-corrected estimate on a uniform grid over (0, fit_max].
inline MinContrastResult min_contrast(const PointPattern& pattern, const Domain& domain,
                                      const MinContrastOptions& opt) {
  if (pattern.size() == 0) throw std::invalid_argument("min_contrast: empty pattern");
  Eigen::VectorXd rgrid(opt.grid_points);
  if (opt.grid_points < 2 || !(opt.fit_max > 0.0))
    throw std::invalid_argument("min_contrast: bad fit grid");
  for (int i = 0; i < opt.grid_points; ++i)
    rgrid[i] = opt.fit_max * (i + 1) / opt.grid_points;
  return min_contrast_fit(k_hat(pattern, rgrid, domain), opt);
}

}  // namespace lgcp
