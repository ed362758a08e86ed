#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "lgcp/math.hpp"
#include "lgcp/posterior.hpp"
#include "lgcp/random.hpp"

namespace lgcp {

struct HmcConfig {
  double epsilon0 = 0.005;
  double target_accept = 0.65;
  double l_mean = 100.0;  // mean of the Poisson leapfrog-step draw
  double mass_gamma = 1.0;
  double mass_mu = 1.0;
  double mass_sigma = 1.0;  // mass of the log sigma2 coordinate
  double mass_rho = 1.0;    // mass of the log rho coordinate
  long iterations = 1500;
  long burn_in = 500;
  long thin = 1;
  std::uint64_t seed = 1;
  bool adapt = true;       // dual-averaging step-size adaptation during burn-in
  bool adapt_mass = true;  // variance-based mass retuning at burn-in checkpoints
  double init_mu = std::numeric_limits<double>::quiet_NaN();   // NaN: derived from data
  double init_sigma2 = 1.0;
  double init_rho = std::numeric_limits<double>::quiet_NaN();  // NaN: d_half = 0.05

  void validate() const {
    if (!(epsilon0 > 0.0)) throw std::invalid_argument("HmcConfig: epsilon0 must be > 0");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw std::invalid_argument("HmcConfig: target_accept must be in (0,1)");
    if (!(l_mean >= 1.0)) throw std::invalid_argument("HmcConfig: l_mean must be >= 1");
    if (!(mass_gamma > 0.0 && mass_mu > 0.0 && mass_sigma > 0.0 && mass_rho > 0.0))
      throw std::invalid_argument("HmcConfig: masses must be > 0");
    if (burn_in < 0 || iterations <= burn_in)
      throw std::invalid_argument("HmcConfig: need iterations > burn_in >= 0");
    if (thin < 1) throw std::invalid_argument("HmcConfig: thin must be >= 1");
  }
};

/// One leapfrog trajectory, in place: initial momentum half-step, L position
/// updates with interleaved momentum updates, final momentum half-step.
/// Returns false (integration abort) on a non-finite gradient or state.
template <class GradFn>
bool leapfrog(Eigen::VectorXd& q, Eigen::VectorXd& p, double epsilon, long steps,
              GradFn&& grad_fn, const Eigen::VectorXd& mass) {
  if (steps < 1 || !(epsilon > 0.0))
    throw std::invalid_argument("leapfrog: need steps >= 1 and epsilon > 0");
  const Eigen::VectorXd inv_mass = mass.cwiseInverse();
  Eigen::VectorXd grad(q.size());
  if (!grad_fn(q, grad)) return false;
  p += (0.5 * epsilon) * grad;
  for (long l = 1; l <= steps; ++l) {
    q += epsilon * inv_mass.cwiseProduct(p);
    if (!q.allFinite()) return false;
    if (!grad_fn(q, grad)) return false;
    const double eps_l = (l < steps) ? epsilon : 0.5 * epsilon;
    p += eps_l * grad;
  }
  return p.allFinite();
}

struct HmcStepResult {
  bool accepted = false;
  double delta_h = std::numeric_limits<double>::quiet_NaN();
  long steps = 0;
};

/// One HMC transition: momentum refresh, Poisson-length trajectory
/// (truncated at >= 1), Metropolis accept/reject on the Hamiltonian.
/// `q` and `logp` are updated in place on acceptance.
template <class Target>
HmcStepResult hmc_step(Eigen::VectorXd& q, double& logp, Target& target, double epsilon,
                       double l_mean, const Eigen::VectorXd& mass, RngStream& rng) {
  HmcStepResult result;
  result.steps = std::max<long>(1, rng.poisson(l_mean));

  Eigen::VectorXd p(q.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = rng.normal() * std::sqrt(mass[i]);
  const double kinetic0 = 0.5 * p.cwiseQuotient(mass).dot(p);
  const double h0 = -logp + kinetic0;

  Eigen::VectorXd q_new = q;
  Eigen::VectorXd p_new = p;
  auto grad_fn = [&target](const Eigen::VectorXd& position, Eigen::VectorXd& out) {
    return target.grad(position, out);
  };
  if (!leapfrog(q_new, p_new, epsilon, result.steps, grad_fn, mass)) {
    return result;  // abort counts as rejection
  }
  const double logp_new = target.log_prob(q_new);
  const double kinetic1 = 0.5 * p_new.cwiseQuotient(mass).dot(p_new);
  const double h1 = -logp_new + kinetic1;
  result.delta_h = h1 - h0;
  if (!std::isfinite(result.delta_h)) return result;

  if (std::log(rng.uniform()) < -result.delta_h) {
    q = std::move(q_new);
    logp = logp_new;
    result.accepted = true;
  }
  return result;
}

namespace detail {

/// Dual-averaging step-size controller (Hoffman-Gelman scheme).
class DualAveraging {
 public:
  explicit DualAveraging(double epsilon0) { reset(epsilon0); }

  void reset(double epsilon0) {
    mu_ = std::log(10.0 * epsilon0);
    log_eps_ = std::log(epsilon0);
    log_eps_bar_ = std::log(epsilon0);
    h_bar_ = 0.0;
    t_ = 0;
  }
  void update(double accept_prob, double target) {
    ++t_;
    const double t = static_cast<double>(t_);
    const double w = 1.0 / (t + t0_);
    h_bar_ = (1.0 - w) * h_bar_ + w * (target - accept_prob);
    log_eps_ = mu_ - std::sqrt(t) / gamma_ * h_bar_;
    const double eta = std::pow(t, -kappa_);
    log_eps_bar_ = eta * log_eps_ + (1.0 - eta) * log_eps_bar_;
  }
  double current() const { return std::exp(log_eps_); }
  double settled() const { return std::exp(log_eps_bar_); }

 private:
  double gamma_ = 0.05;
  double t0_ = 10.0;
  double kappa_ = 0.75;
  double mu_ = 0.0, log_eps_ = 0.0, log_eps_bar_ = 0.0, h_bar_ = 0.0;
  long t_ = 0;
};

}  // namespace detail

/// Raw output of a generic HMC run: kept states in sampled coordinates.
struct GenericChain {
  Eigen::MatrixXd states;  // kept x dim
  std::vector<std::uint8_t> accepted;
  Eigen::VectorXd delta_h;
  double acceptance_rate = 0.0;
  double epsilon_final = 0.0;
  Eigen::VectorXd mass_final;
};

/// Burn-in with optional step-size/mass adaptation, then thinned sampling.
/// Mass entries are retuned from component-wise sample variances at two
/// burn-in checkpoints when block boundaries are provided (each block shares
/// one mass scalar).
template <class Target>
GenericChain run_hmc(Target& target, Eigen::VectorXd q, const HmcConfig& cfg,
                     Eigen::VectorXd mass,
                     const std::vector<std::pair<Eigen::Index, Eigen::Index>>& mass_blocks = {}) {
  cfg.validate();
  RngStream rng(cfg.seed, 0);
  double logp = target.log_prob(q);
  if (!std::isfinite(logp))
    throw std::invalid_argument("run_hmc: initial state has non-finite log density");

  detail::DualAveraging da(cfg.epsilon0);
  double epsilon = cfg.epsilon0;

  Eigen::VectorXd welford_mean = Eigen::VectorXd::Zero(q.size());
  Eigen::VectorXd welford_m2 = Eigen::VectorXd::Zero(q.size());
  long welford_count = 0;
  auto welford_add = [&](const Eigen::VectorXd& x) {
    ++welford_count;
    Eigen::VectorXd delta = x - welford_mean;
    welford_mean += delta / static_cast<double>(welford_count);
    welford_m2.array() += delta.array() * (x - welford_mean).array();
  };
  auto retune_mass = [&]() {
    if (welford_count < 20) return;
    for (const auto& [begin, end] : mass_blocks) {
      const double var =
          welford_m2.segment(begin, end - begin).mean() / static_cast<double>(welford_count - 1);
      if (var > 0.0 && std::isfinite(var)) {
        const double value = std::min(std::max(1.0 / var, 1e-6), 1e9);
        mass.segment(begin, end - begin).setConstant(value);
      }
    }
    welford_mean.setZero();
    welford_m2.setZero();
    welford_count = 0;
  };

  const long accept_window = std::max<long>(50, cfg.burn_in / 10);
  long window_accepts = 0, window_steps = 0;

  const long checkpoint1 = cfg.burn_in / 2;
  const long checkpoint2 = (3 * cfg.burn_in) / 4;

  for (long it = 0; it < cfg.burn_in; ++it) {
    epsilon = cfg.adapt ? da.current() : cfg.epsilon0;
    const HmcStepResult step = hmc_step(q, logp, target, epsilon, cfg.l_mean, mass, rng);
    if (cfg.adapt) {
      const double alpha =
          std::isfinite(step.delta_h) ? std::min(1.0, std::exp(-step.delta_h)) : 0.0;
      da.update(alpha, cfg.target_accept);
    }
    if (cfg.adapt_mass && !mass_blocks.empty()) {
      welford_add(q);
      if (it + 1 == checkpoint1 || it + 1 == checkpoint2) {
        retune_mass();
        if (cfg.adapt) da.reset(std::max(da.settled(), 1e-12));
      }
    }
    window_accepts += step.accepted ? 1 : 0;
    if (++window_steps >= accept_window) {
      if (window_accepts == 0)
        throw std::runtime_error(
            "run_hmc: zero acceptances over a full adaptation window; "
            "step size or initialization is unusable");
      window_accepts = 0;
      window_steps = 0;
    }
  }
  epsilon = cfg.adapt ? da.settled() : cfg.epsilon0;

  const long post = cfg.iterations - cfg.burn_in;
  const long kept = post / cfg.thin;
  GenericChain chain;
  chain.states.resize(kept, q.size());
  chain.accepted.resize(kept);
  chain.delta_h.resize(kept);
  chain.epsilon_final = epsilon;
  chain.mass_final = mass;

  long accept_count = 0;
  long record = 0;
  for (long k = 1; k <= post; ++k) {
    const HmcStepResult step = hmc_step(q, logp, target, epsilon, cfg.l_mean, mass, rng);
    accept_count += step.accepted ? 1 : 0;
    if (k % cfg.thin == 0 && record < kept) {
      chain.states.row(record) = q;
      chain.accepted[record] = step.accepted ? 1 : 0;
      chain.delta_h[record] = step.delta_h;
      ++record;
    }
  }
  chain.acceptance_rate = static_cast<double>(accept_count) / static_cast<double>(post);
  return chain;
}

/// Post-burn-in records of an LGCP chain on the original parameter scale.
struct ChainSamples {
  int n = 0;               // window grid side
  double cell_area = 0.0;
  double delta = 1.0;      // power-exponential exponent (fixed)
  Eigen::MatrixXd theta;   // kept x 3: mu, sigma2, rho
  Eigen::MatrixXd y;       // kept x n^2 window field
  std::vector<std::uint8_t> accepted;
  Eigen::VectorXd delta_h;
  double acceptance_rate = 0.0;
  double epsilon_final = 0.0;
  double mass_gamma = 1.0, mass_mu = 1.0, mass_sigma = 1.0, mass_rho = 1.0;

  Eigen::Index size() const { return theta.rows(); }

  Eigen::VectorXd sigma2_inv_draws() const { return theta.col(1).cwiseInverse(); }
  Eigen::VectorXd d_half_draws() const {
    return (std::log(2.0) / theta.col(2).array()).pow(1.0 / delta);
  }
  Eigen::VectorXd expected_n_draws() const {
    Eigen::VectorXd out(size());
    for (Eigen::Index k = 0; k < size(); ++k)
      out[k] = cell_area * y.row(k).array().exp().sum();
    return out;
  }
};

/// Algorithm-1 chain for the discretized LGCP. The counts must be binned on
/// the embedding's extended grid; delta is fixed by the embedding's model.
inline ChainSamples run_chain(const CellCounts& counts, const TorusEmbedding& emb,
                              const PriorSpec& priors, const HmcConfig& cfg,
                              bool mask_likelihood = true) {
  cfg.validate();
  LgcpTarget target(counts, emb, priors, mask_likelihood);
  const Eigen::Index latent = target.latent_dim();

  double init_mu = cfg.init_mu;
  if (!std::isfinite(init_mu)) {
    const double window_area = emb.grid().domain().area();
    init_mu = std::log(std::max<double>(counts.total, 1) / window_area);
  }
  double init_rho = cfg.init_rho;
  if (!std::isfinite(init_rho))
    init_rho = std::log(2.0) / std::pow(0.05, target.delta());

  Eigen::VectorXd q =
      target.pack(Eigen::VectorXd::Zero(latent), HyperParams{init_mu, cfg.init_sigma2, init_rho});

  Eigen::VectorXd mass(target.dim());
  mass.head(latent).setConstant(cfg.mass_gamma);
  mass[latent] = cfg.mass_mu;
  mass[latent + 1] = cfg.mass_sigma;
  mass[latent + 2] = cfg.mass_rho;
  const std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks = {
      {0, latent}, {latent, latent + 1}, {latent + 1, latent + 2}, {latent + 2, latent + 3}};

  GenericChain raw = run_hmc(target, std::move(q), cfg, std::move(mass), blocks);

  ChainSamples samples;
  samples.n = emb.n();
  samples.cell_area = emb.grid().cell_area();
  samples.delta = target.delta();
  samples.accepted = std::move(raw.accepted);
  samples.delta_h = std::move(raw.delta_h);
  samples.acceptance_rate = raw.acceptance_rate;
  samples.epsilon_final = raw.epsilon_final;
  samples.mass_gamma = raw.mass_final[0];
  samples.mass_mu = raw.mass_final[latent];
  samples.mass_sigma = raw.mass_final[latent + 1];
  samples.mass_rho = raw.mass_final[latent + 2];

  const Eigen::Index kept = raw.states.rows();
  samples.theta.resize(kept, 3);
  samples.y.resize(kept, static_cast<Eigen::Index>(samples.n) * samples.n);
  for (Eigen::Index k = 0; k < kept; ++k) {
    const Eigen::VectorXd state = raw.states.row(k);
    const HyperParams theta = target.unpack_theta(state);
    samples.theta(k, 0) = theta.mu;
    samples.theta(k, 1) = theta.sigma2;
    samples.theta(k, 2) = theta.rho;
    samples.y.row(k) = target.y_window(state);
  }
  return samples;
}

struct ScalarSummary {
  double mean = 0.0;
  double variance = 0.0;
};

/// Posterior summaries from chain records. sigma^{-2} and d_half are
/// transformed per draw (not transforms of the means).
struct PosteriorSummary {
  Eigen::VectorXd y_mean;
  Eigen::VectorXd y_var;
  ScalarSummary mu, sigma2_inv, d_half, expected_n;
};

namespace detail {

inline ScalarSummary summarize_draws(const Eigen::VectorXd& draws) {
  RunningStat stat;
  for (Eigen::Index i = 0; i < draws.size(); ++i) stat.add(draws[i]);
  return ScalarSummary{stat.mean(), stat.variance()};
}

}  // namespace detail

inline PosteriorSummary summarize(const ChainSamples& samples) {
  if (samples.size() == 0) throw std::invalid_argument("summarize: empty chain");
  PosteriorSummary out;
  const Eigen::Index cells = samples.y.cols();
  out.y_mean.resize(cells);
  out.y_var.resize(cells);
  for (Eigen::Index j = 0; j < cells; ++j) {
    RunningStat stat;
    for (Eigen::Index k = 0; k < samples.size(); ++k) stat.add(samples.y(k, j));
    out.y_mean[j] = stat.mean();
    out.y_var[j] = stat.variance();
  }
  out.mu = detail::summarize_draws(samples.theta.col(0));
  out.sigma2_inv = detail::summarize_draws(samples.sigma2_inv_draws());
  out.d_half = detail::summarize_draws(samples.d_half_draws());
  out.expected_n = detail::summarize_draws(samples.expected_n_draws());
  return out;
}

}  // namespace lgcp
