#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lgcp {

struct LsqOptions {
  int max_iterations = 200;
  double ftol = 1e-14;   // relative SSE improvement
  double xtol = 1e-12;   // relative step size
  double fd_step = 1e-6; // central-difference Jacobian step scale
};

struct LsqResult {
  Eigen::VectorXd x;
  double sse = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt least squares with a central-difference Jacobian.
/// `fn` maps parameters to a residual vector; the returned SSE never exceeds
/// the SSE at x0 because only improving steps are accepted.
template <class F>
LsqResult levenberg_marquardt(F&& fn, Eigen::VectorXd x0, const LsqOptions& opt = {}) {
  auto safe_sse = [](const Eigen::VectorXd& r) {
    const double s = r.squaredNorm();
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
  };

  LsqResult res;
  res.x = std::move(x0);
  Eigen::VectorXd r = fn(res.x);
  res.sse = safe_sse(r);
  if (!std::isfinite(res.sse))
    throw std::invalid_argument("levenberg_marquardt: residuals not finite at start");

  const auto dim = res.x.size();
  double lambda = 1e-3;
  Eigen::MatrixXd jac(r.size(), dim);

  for (res.iterations = 1; res.iterations <= opt.max_iterations; ++res.iterations) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double h = opt.fd_step * (1.0 + std::abs(res.x[j]));
      Eigen::VectorXd xp = res.x, xm = res.x;
      xp[j] += h;
      xm[j] -= h;
      jac.col(j) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;

    bool stepped = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      const Eigen::VectorXd trial = res.x + step;
      const Eigen::VectorXd r_trial = fn(trial);
      const double sse_trial = safe_sse(r_trial);
      if (sse_trial <= res.sse) {
        const double improvement = res.sse - sse_trial;
        const double step_norm = step.norm();
        res.x = trial;
        r = r_trial;
        res.sse = sse_trial;
        lambda = std::max(lambda / 4.0, 1e-14);
        stepped = true;
        if (improvement <= opt.ftol * (1.0 + res.sse) ||
            step_norm <= opt.xtol * (1.0 + res.x.norm())) {
          res.converged = true;
          return res;
        }
        break;
      }
      lambda *= 8.0;
      if (lambda > 1e14) break;
    }
    if (!stepped) {
      // no improving step exists at any damping: stationary point
      res.converged = true;
      return res;
    }
  }
  return res;
}

}  // namespace lgcp
