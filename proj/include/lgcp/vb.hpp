#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "lgcp/correlation.hpp"
#include "lgcp/embedding.hpp"
#include "lgcp/grid.hpp"
#include "lgcp/math.hpp"
#include "lgcp/posterior.hpp"

namespace lgcp {

struct VbConfig {
  long max_iterations = 2000;
  double tol = 1e-8;  // ELBO increase below which the loop stops
  int newton_max_iterations = 50;
  double newton_tol = 1e-10;  // |f| at the accepted root
  int max_grid_side = 64;     // dense-C guard; the init cost grows as n^6
  bool allow_large_grid = false;
};

/// Mean-field variational state: per-cell Gaussian field factors, Gaussian
/// q(mu), inverse-gamma q(sigma2), and the cached dense C^{-1} pieces every
/// update reads.
struct VbState {
  Eigen::VectorXd mu_y;   // field means, window order
  Eigen::VectorXd var_y;  // diagonal of Sigma_y
  double mu_mu_q = 0.0;
  double sigma2_mu_q = 1.0;
  double alpha_q = 1.0;
  double beta_q = 1.0;
  double e_prec = 1.0;  // E(sigma^{-2}) = alpha_q / beta_q

  CorrelationModel model{PowerExponential{1.0, 1.0}};  // fixed-correlation model
  double cell_area = 0.0;

  NormalPrior prior_mu{0.0, 625.0};
  InvGammaPrior prior_sigma2{1.0, 1.0};
  VbConfig config;

  // cached dense pieces
  Eigen::MatrixXd c_inv;
  double log_det_c = 0.0;
  Eigen::VectorXd c_inv_diag;
  Eigen::VectorXd c_inv_rowsum;  // C^{-1} 1
  double one_c_inv_one = 0.0;    // 1' C^{-1} 1

  Eigen::Index cells() const { return mu_y.size(); }
};

/// Initialize the variational state from an explicit dense correlation
/// matrix. Fails rather than jittering when C is not positive definite.
inline VbState vb_init_dense(const Eigen::VectorXi& window_counts, double cell_area,
                             const Eigen::MatrixXd& c, const PriorSpec& priors,
                             const CorrelationModel& model, const VbConfig& config = {}) {
  priors.validate();
  if (!priors.mu || !priors.sigma2)
    throw std::invalid_argument(
        "vb_init: requires conditionally conjugate priors (normal mu, inverse-gamma sigma2)");
  if (c.rows() != c.cols() || c.rows() != window_counts.size())
    throw std::invalid_argument("vb_init: C dimensions do not match counts");
  if (!(cell_area > 0.0)) throw std::invalid_argument("vb_init: cell_area must be > 0");

  const Eigen::Index cells = window_counts.size();
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(
        "vb_init: correlation matrix is not positive definite; consider adding "
        "jitter to the diagonal or changing the correlation parameters");

  VbState state;
  state.model = model;
  state.cell_area = cell_area;
  state.prior_mu = *priors.mu;
  state.prior_sigma2 = *priors.sigma2;
  state.config = config;

  state.c_inv = llt.solve(Eigen::MatrixXd::Identity(cells, cells));
  state.log_det_c = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  state.c_inv_diag = state.c_inv.diagonal();
  state.c_inv_rowsum = state.c_inv.rowwise().sum();
  state.one_c_inv_one = state.c_inv_rowsum.sum();

  state.mu_y.resize(cells);
  for (Eigen::Index i = 0; i < cells; ++i)
    state.mu_y[i] = std::log((window_counts[i] + 0.5) / cell_area);
  state.var_y = Eigen::VectorXd::Ones(cells);
  state.mu_mu_q = state.mu_y.mean();
  state.sigma2_mu_q = state.prior_mu.var;
  state.alpha_q = state.prior_sigma2.alpha + 0.5 * static_cast<double>(cells);
  state.beta_q = state.prior_sigma2.beta;
  state.e_prec = state.alpha_q / state.beta_q;
  return state;
}

/// Initialize from grid geometry: C built from window centroid distances
/// under the fixed-parameter correlation model.
inline VbState vb_init(const CellCounts& counts, const GridSpec& grid,
                       const CorrelationModel& model, const PriorSpec& priors,
                       const VbConfig& config = {}) {
  validate(model);
  if (grid.n() > config.max_grid_side && !config.allow_large_grid) {
    std::ostringstream msg;
    msg << "vb_init: grid side " << grid.n() << " exceeds the dense-path default limit "
        << config.max_grid_side << "; set allow_large_grid to override";
    throw std::invalid_argument(msg.str());
  }
  const int n = grid.n();
  const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(counts.counts.size()))));
  if (static_cast<Eigen::Index>(m) * m != counts.counts.size() || m < n)
    throw std::invalid_argument("vb_init: counts length is not a valid extended grid");

  Eigen::VectorXi window(n * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) window[r * n + c] = counts.counts[r * m + c];

  const Eigen::Index cells = static_cast<Eigen::Index>(n) * n;
  Eigen::MatrixXd c(cells, cells);
  for (Eigen::Index i = 0; i < cells; ++i) {
    c(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < cells; ++j) {
      const double d = std::hypot(grid.centroid_x(i) - grid.centroid_x(j),
                                  grid.centroid_y(i) - grid.centroid_y(j));
      c(i, j) = c(j, i) = corr(model, d);
    }
  }
  return vb_init_dense(window, grid.cell_area(), c, priors, model, config);
}

/// Laplace field update, Eq.-8 form: one row-major Gauss-Seidel sweep of
/// per-cell Newton solves f(y_i) = 0 with
///   f(y) = n_i - A e^y - E(s^-2) [ Qii (y - E mu) + sum_{j != i} Qij (y~ - E mu)_j ]
/// started from the closed-form root with the linear term omitted. Each
/// accepted root satisfies |f| <= newton_tol; the variance is -1/H at the root.
inline void update_field(VbState& state, const Eigen::VectorXi& counts,
                         Eigen::VectorXd* achieved_residuals = nullptr) {
  if (counts.size() != state.cells())
    throw std::invalid_argument("update_field: counts length mismatch");
  if (achieved_residuals) achieved_residuals->resize(state.cells());
  const double area = state.cell_area;
  const double g = state.e_prec;
  const double e_mu = state.mu_mu_q;
  const Eigen::Index cells = state.cells();

  for (Eigen::Index i = 0; i < cells; ++i) {
    const double qii = state.c_inv_diag[i];
    // freshest off-diagonal contribution
    double s = 0.0;
    for (Eigen::Index j = 0; j < cells; ++j)
      s += state.c_inv(i, j) * (state.mu_y[j] - e_mu);
    s -= qii * (state.mu_y[i] - e_mu);

    const double ni = static_cast<double>(counts[i]);
    auto f = [&](double y) {
      const double ey = y < 700.0 ? std::exp(y) : std::numeric_limits<double>::infinity();
      return ni - area * ey - g * (qii * (y - e_mu) + s);
    };
    auto fprime = [&](double y) { return -area * std::exp(y) - g * qii; };

    const double numerator = ni + g * qii * e_mu - g * s;
    double y = numerator > 0.0 ? std::log(numerator / area) : state.mu_y[i];
    double fy = f(y);
    bool converged = std::abs(fy) <= state.config.newton_tol;
    for (int it = 0; it < state.config.newton_max_iterations && !converged; ++it) {
      double step = -fy / fprime(y);
      double y_new = y + step;
      double f_new = f(y_new);
      int halvings = 0;
      while ((!std::isfinite(f_new) || std::abs(f_new) > std::abs(fy)) && halvings < 60) {
        step *= 0.5;
        y_new = y + step;
        f_new = f(y_new);
        ++halvings;
      }
      if (!std::isfinite(f_new) || std::abs(f_new) > std::abs(fy)) break;
      y = y_new;
      fy = f_new;
      converged = std::abs(fy) <= state.config.newton_tol;
    }
    if (!converged) {
      std::ostringstream msg;
      msg << "update_field: Newton solve did not reach |f| <= " << state.config.newton_tol
          << " in cell " << i << " (|f| = " << std::abs(fy) << ")";
      throw std::runtime_error(msg.str());
    }
    state.mu_y[i] = y;
    state.var_y[i] = 1.0 / (area * std::exp(y) + g * qii);  // = -1/H(y), H < 0
    if (achieved_residuals) (*achieved_residuals)[i] = std::abs(fy);
  }
}

/// Exact conjugate update of q(mu).
inline void update_mu(VbState& state) {
  const double g = state.e_prec;
  const double precision = g * state.one_c_inv_one + 1.0 / state.prior_mu.var;
  state.sigma2_mu_q = 1.0 / precision;
  state.mu_mu_q = (g * state.mu_y.dot(state.c_inv_rowsum) +
                   state.prior_mu.mean / state.prior_mu.var) *
                  state.sigma2_mu_q;
}

/// Exact conjugate update of q(sigma2).
inline void update_sigma2(VbState& state) {
  const Eigen::VectorXd dev = state.mu_y.array() - state.mu_mu_q;
  const double quad = dev.dot(state.c_inv * dev);
  state.beta_q = state.prior_sigma2.beta +
                 0.5 * (quad + state.sigma2_mu_q * state.one_c_inv_one +
                        state.c_inv_diag.dot(state.var_y));
  state.e_prec = state.alpha_q / state.beta_q;
}

/// Full evidence lower bound E_q[log joint] - E_q[log q] for the factorized
/// q, up to data-only constants. E[exp(y_i)] enters through the lognormal
/// mean exp(mu + var/2); E[log sigma2] = log beta_q - psi(alpha_q).
inline double elbo(const VbState& state, const Eigen::VectorXi& counts) {
  if (counts.size() != state.cells()) throw std::invalid_argument("elbo: counts length mismatch");
  const double n_cells = static_cast<double>(state.cells());
  const double g = state.e_prec;
  const double e_log_sigma2 = std::log(state.beta_q) - digamma(state.alpha_q);
  constexpr double log_2pi = 1.8378770664093454835606594728112;

  double lik = 0.0;
  for (Eigen::Index i = 0; i < state.cells(); ++i)
    lik += state.mu_y[i] * counts[i] -
           state.cell_area * std::exp(state.mu_y[i] + 0.5 * state.var_y[i]);

  const Eigen::VectorXd dev = state.mu_y.array() - state.mu_mu_q;
  const double quad = dev.dot(state.c_inv * dev) + state.sigma2_mu_q * state.one_c_inv_one +
                      state.c_inv_diag.dot(state.var_y);
  const double field_prior = -0.5 * state.log_det_c - 0.5 * n_cells * e_log_sigma2 -
                             0.5 * g * quad - 0.5 * n_cells * log_2pi;

  const double mu_dev = state.mu_mu_q - state.prior_mu.mean;
  const double mu_prior = -0.5 * std::log(2.0 * M_PI * state.prior_mu.var) -
                          0.5 * (mu_dev * mu_dev + state.sigma2_mu_q) / state.prior_mu.var;

  const double a0 = state.prior_sigma2.alpha, b0 = state.prior_sigma2.beta;
  const double sigma2_prior =
      a0 * std::log(b0) - std::lgamma(a0) - (a0 + 1.0) * e_log_sigma2 - b0 * g;

  const double ent_y = 0.5 * (state.var_y.array().log() + log_2pi + 1.0).sum();
  const double ent_mu = 0.5 * (std::log(state.sigma2_mu_q) + log_2pi + 1.0);
  const double ent_sigma2 = state.alpha_q + std::log(state.beta_q) + std::lgamma(state.alpha_q) -
                            (1.0 + state.alpha_q) * digamma(state.alpha_q);

  return lik + field_prior + mu_prior + sigma2_prior + ent_y + ent_mu + ent_sigma2;
}

/// The printed Algorithm-2 lower bound (drops the sigma2-related terms);
/// emitted for comparison output only, never used as the convergence monitor.
inline double elbo_printed(const VbState& state, const Eigen::VectorXi& counts) {
  double lik = 0.0;
  for (Eigen::Index i = 0; i < state.cells(); ++i)
    lik += state.mu_y[i] * counts[i] -
           state.cell_area * std::exp(state.mu_y[i] + 0.5 * state.var_y[i]);
  const double mu_dev = state.mu_mu_q - state.prior_mu.mean;
  return lik - 0.5 * state.log_det_c -
         0.5 * (mu_dev * mu_dev + state.sigma2_mu_q) / state.prior_mu.var +
         0.5 * state.var_y.array().log().sum() + 0.5 * std::log(state.sigma2_mu_q);
}

namespace detail {

/// An ELBO decrease beyond this absolute slack indicates an update bug.
inline void check_elbo_step(double previous, double next) {
  if (next < previous - 1e-6) {
    std::ostringstream msg;
    msg << "run_vb: ELBO decreased from " << previous << " to " << next
        << "; coordinate updates are inconsistent";
    throw std::runtime_error(msg.str());
  }
}

}  // namespace detail

struct VbResult {
  VbState state;
  std::vector<double> elbo_trace;
  long iterations = 0;
  bool converged = false;
};

/// Coordinate-ascent loop (Algorithm 2 steps 4-7) from an initialized state.
inline VbResult run_vb_from(VbState state, const Eigen::VectorXi& counts) {
  VbResult result;
  double previous = -std::numeric_limits<double>::infinity();
  for (long it = 1; it <= state.config.max_iterations; ++it) {
    update_field(state, counts);
    update_mu(state);
    update_sigma2(state);
    const double f = elbo(state, counts);
    if (std::isfinite(previous)) detail::check_elbo_step(previous, f);
    result.elbo_trace.push_back(f);
    result.iterations = it;
    if (std::isfinite(previous) && (f - previous) < state.config.tol) {
      result.converged = true;
      break;
    }
    previous = f;
  }
  result.state = std::move(state);
  return result;
}

inline VbResult run_vb(const CellCounts& counts, const GridSpec& grid,
                       const CorrelationModel& model, const PriorSpec& priors,
                       const VbConfig& config = {}) {
  VbState state = vb_init(counts, grid, model, priors, config);
  const int n = grid.n();
  const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(counts.counts.size()))));
  Eigen::VectorXi window(n * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) window[r * n + c] = counts.counts[r * m + c];
  return run_vb_from(std::move(state), window);
}

struct VbSummary {
  double mu_mean = 0.0, mu_var = 0.0;
  double sigma2_inv_mean = 0.0, sigma2_inv_var = 0.0;
  double d_half_fixed = 0.0;  // point mass at the fixed correlation model
  double expected_n = 0.0;
  Eigen::VectorXd y_mean;
  Eigen::VectorXd y_var;
};

/// Posterior summaries under the fitted q. The precision moments are the
/// gamma moments alpha_q/beta_q and alpha_q/beta_q^2; d_half is degenerate
/// at the fixed correlation parameters.
inline VbSummary vb_summaries(const VbState& state) {
  VbSummary out;
  out.mu_mean = state.mu_mu_q;
  out.mu_var = state.sigma2_mu_q;
  out.sigma2_inv_mean = state.alpha_q / state.beta_q;
  out.sigma2_inv_var = state.alpha_q / (state.beta_q * state.beta_q);
  out.d_half_fixed = d_half(state.model);
  out.expected_n = (state.cell_area *
                    (state.mu_y.array() + 0.5 * state.var_y.array()).exp())
                       .sum();
  out.y_mean = state.mu_y;
  out.y_var = state.var_y;
  return out;
}

}  // namespace lgcp
