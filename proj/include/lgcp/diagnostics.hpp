#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgcp/hmc.hpp"
#include "lgcp/kfunction.hpp"
#include "lgcp/math.hpp"
#include "lgcp/simulate.hpp"
#include "lgcp/vb.hpp"

namespace lgcp {

/// One posterior (or variational) draw: window log-intensity plus hypers.
struct PosteriorDraw {
  Eigen::VectorXd y_window;
  double mu = 0.0;
  double sigma2 = 1.0;
  double rho = 1.0;
};

inline std::vector<PosteriorDraw> draws_from_chain(const ChainSamples& samples, long thin = 1) {
  if (thin < 1) throw std::invalid_argument("draws_from_chain: thin must be >= 1");
  std::vector<PosteriorDraw> draws;
  for (Eigen::Index k = thin - 1; k < samples.size(); k += thin) {
    draws.push_back(PosteriorDraw{samples.y.row(k), samples.theta(k, 0), samples.theta(k, 1),
                                  samples.theta(k, 2)});
  }
  return draws;
}

/// Independent samples from the factorized variational distribution: the
/// field from N(mu_y, Sigma_y), mu from q(mu), sigma2 from q(sigma2).
inline std::vector<PosteriorDraw> draws_from_vb(const VbState& state, long count,
                                                std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("draws_from_vb: count must be >= 1");
  std::vector<PosteriorDraw> draws;
  draws.reserve(count);
  const double rho = std::holds_alternative<PowerExponential>(state.model)
                         ? std::get<PowerExponential>(state.model).rho
                         : std::log(2.0) / d_half(state.model);
  for (long k = 0; k < count; ++k) {
    RngStream rng(seed, static_cast<std::uint64_t>(k));
    PosteriorDraw draw;
    draw.y_window.resize(state.cells());
    for (Eigen::Index i = 0; i < state.cells(); ++i)
      draw.y_window[i] = state.mu_y[i] + std::sqrt(state.var_y[i]) * rng.normal();
    draw.mu = state.mu_mu_q + std::sqrt(state.sigma2_mu_q) * rng.normal();
    draw.sigma2 = state.beta_q / rng.gamma(state.alpha_q);
    draw.rho = rho;
    draws.push_back(std::move(draw));
  }
  return draws;
}

/// Posterior predictive discrepancy results at each grid distance.
struct PpcResult {
  Eigen::VectorXd rgrid;
  Eigen::MatrixXd delta;  // draws x distances; missing replicates are NaN rows
  Eigen::VectorXd lower, upper, mean, median;
  long n_draws = 0;
  long n_missing = 0;
};

/// Observed-minus-replicate L discrepancy for one replicate pattern.
inline Eigen::VectorXd delta_curve(const Eigen::VectorXd& observed_l,
                                   const PointPattern& replicate, const Eigen::VectorXd& rgrid,
                                   const Domain& domain) {
  return observed_l - k_hat(replicate, rgrid, domain).l();
}

/// Posterior predictive check via Delta(r) = L_obs(r) - L_rep(r): for each
/// draw, a replicate pattern is simulated from the draw's intensity and the
/// discrepancy aggregated into 95% bounds, mean, and median per distance.
/// Replicates with fewer than 2 points are recorded as missing.
inline PpcResult ppc_run(const std::vector<PosteriorDraw>& draws, const PointPattern& observed,
                         const GridSpec& grid, const TorusEmbedding& emb,
                         const Eigen::VectorXd& rgrid, std::uint64_t seed) {
  if (draws.empty()) throw std::invalid_argument("ppc_run: need at least one draw");
  const Eigen::VectorXd observed_l = k_hat(observed, rgrid, grid.domain()).l();

  PpcResult result;
  result.rgrid = rgrid;
  result.n_draws = static_cast<long>(draws.size());
  result.delta.setConstant(result.n_draws, rgrid.size(),
                           std::numeric_limits<double>::quiet_NaN());

  for (std::size_t d = 0; d < draws.size(); ++d) {
    LatentField field{emb.scatter_from_window(draws[d].y_window)};
    RngStream rng(seed, static_cast<std::uint64_t>(d));
    const PointPattern replicate = sample_pattern(field, grid, emb, rng);
    if (replicate.size() < 2) {
      ++result.n_missing;
      continue;
    }
    result.delta.row(d) = delta_curve(observed_l, replicate, rgrid, grid.domain());
  }

  const Eigen::Index distances = rgrid.size();
  result.lower.resize(distances);
  result.upper.resize(distances);
  result.mean.resize(distances);
  result.median.resize(distances);
  for (Eigen::Index j = 0; j < distances; ++j) {
    std::vector<double> column;
    column.reserve(draws.size());
    double sum = 0.0;
    for (Eigen::Index d = 0; d < result.delta.rows(); ++d) {
      const double value = result.delta(d, j);
      if (std::isfinite(value)) {
        column.push_back(value);
        sum += value;
      }
    }
    if (column.empty()) {
      result.lower[j] = result.upper[j] = result.mean[j] = result.median[j] =
          std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    result.lower[j] = quantile_type7(column, 0.025);
    result.upper[j] = quantile_type7(column, 0.975);
    result.median[j] = quantile_type7(column, 0.5);
    result.mean[j] = sum / static_cast<double>(column.size());
  }
  return result;
}

/// Per-method inputs to a replicate study: point estimates and (optionally)
/// marginal posterior variances, one row per replicate, one column per
/// parameter.
struct MethodEstimates {
  Eigen::MatrixXd estimates;
  Eigen::MatrixXd marginal_variances;  // may be empty
};

/// Bias / variance / MSE table across replicates, with each measure also
/// reported relative to a named baseline method. The variance convention is
/// the sample variance (1/(n-1)); MSE uses 1/n, so the exact identity is
/// MSE = bias^2 + (n-1)/n * variance.
struct StudyTable {
  std::vector<std::string> parameters;
  std::vector<std::string> methods;
  std::string baseline;
  long replicates = 0;
  // parameters x methods
  Eigen::MatrixXd bias, variance, mse, avg_marginal_var;
  Eigen::MatrixXd bias_rel, variance_rel, mse_rel, avg_marginal_var_rel;
};

inline StudyTable study_aggregate(const std::map<std::string, MethodEstimates>& methods,
                                  const std::vector<std::string>& parameters,
                                  const Eigen::VectorXd& truth, const std::string& baseline) {
  if (methods.empty()) throw std::invalid_argument("study_aggregate: no methods");
  if (!methods.count(baseline))
    throw std::invalid_argument("study_aggregate: baseline method '" + baseline + "' missing");
  const Eigen::Index params = static_cast<Eigen::Index>(parameters.size());
  if (truth.size() != params)
    throw std::invalid_argument("study_aggregate: truth length does not match parameters");
  const Eigen::Index replicates = methods.begin()->second.estimates.rows();
  for (const auto& [name, data] : methods) {
    if (data.estimates.rows() != replicates)
      throw std::invalid_argument("study_aggregate: replicate count mismatch for '" + name + "'");
    if (data.estimates.cols() != params)
      throw std::invalid_argument("study_aggregate: parameter count mismatch for '" + name + "'");
  }

  StudyTable table;
  table.parameters = parameters;
  table.baseline = baseline;
  table.replicates = replicates;
  const Eigen::Index n_methods = static_cast<Eigen::Index>(methods.size());
  table.bias.resize(params, n_methods);
  table.variance.resize(params, n_methods);
  table.mse.resize(params, n_methods);
  table.avg_marginal_var.setConstant(params, n_methods,
                                     std::numeric_limits<double>::quiet_NaN());

  Eigen::Index column = 0;
  for (const auto& [name, data] : methods) {
    table.methods.push_back(name);
    for (Eigen::Index p = 0; p < params; ++p) {
      RunningStat stat;
      double sq_err = 0.0;
      for (Eigen::Index r = 0; r < replicates; ++r) {
        const double est = data.estimates(r, p);
        stat.add(est);
        sq_err += (est - truth[p]) * (est - truth[p]);
      }
      table.bias(p, column) = stat.mean() - truth[p];
      table.variance(p, column) = stat.variance();
      table.mse(p, column) = sq_err / static_cast<double>(replicates);
      if (data.marginal_variances.size() > 0)
        table.avg_marginal_var(p, column) = data.marginal_variances.col(p).mean();
    }
    ++column;
  }

  const Eigen::Index base_col = static_cast<Eigen::Index>(
      std::find(table.methods.begin(), table.methods.end(), baseline) - table.methods.begin());
  auto relative = [&](const Eigen::MatrixXd& measure) {
    Eigen::MatrixXd rel(params, n_methods);
    for (Eigen::Index p = 0; p < params; ++p)
      for (Eigen::Index m = 0; m < n_methods; ++m) rel(p, m) = measure(p, m) / measure(p, base_col);
    return rel;
  };
  table.bias_rel = relative(table.bias);
  table.variance_rel = relative(table.variance);
  table.mse_rel = relative(table.mse);
  table.avg_marginal_var_rel = relative(table.avg_marginal_var);
  return table;
}

}  // namespace lgcp
