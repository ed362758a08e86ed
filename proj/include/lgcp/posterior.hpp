#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "lgcp/embedding.hpp"

namespace lgcp {

/// GRF hyper-parameters under the power-exponential correlation; the
/// exponent delta is a known constant carried by the embedding.
struct HyperParams {
  double mu;
  double sigma2;
  double rho;

  void validate() const {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("HyperParams: sigma2 must be > 0");
    if (!(rho > 0.0)) throw std::invalid_argument("HyperParams: rho must be > 0");
  }
};

struct NormalPrior {
  double mean;
  double var;
};

struct InvGammaPrior {
  double alpha;
  double beta;
};

/// Priors on (mu, sigma2, rho): empty optionals mean flat (on the positive
/// half-line where applicable); rho always carries a flat prior.
struct PriorSpec {
  std::optional<NormalPrior> mu;
  std::optional<InvGammaPrior> sigma2;

  void validate() const {
    if (mu && !(mu->var > 0.0)) throw std::invalid_argument("PriorSpec: mu prior variance <= 0");
    if (sigma2 && !(sigma2->alpha > 0.0 && sigma2->beta > 0.0))
      throw std::invalid_argument("PriorSpec: inverse-gamma parameters must be > 0");
  }

  double log_density(const HyperParams& theta) const {
    double value = 0.0;
    if (mu) value += -0.5 * (theta.mu - mu->mean) * (theta.mu - mu->mean) / mu->var;
    if (sigma2)
      value += -(sigma2->alpha + 1.0) * std::log(theta.sigma2) - sigma2->beta / theta.sigma2;
    return value;
  }
};

namespace detail {

/// Spectrum of E(rho) and E*(rho) for a fixed torus geometry and fixed delta,
/// recomputed lazily as rho moves during sampling. Invalid embeddings (hard
/// negative eigenvalues) are flagged rather than thrown so a sampler can
/// treat them as rejections.
class SpectralCache {
 public:
  explicit SpectralCache(const TorusEmbedding& emb) : m_(emb.m()), size_(emb.size()) {
    const auto* p = std::get_if<PowerExponential>(&emb.model());
    if (!p)
      throw std::invalid_argument(
          "posterior: requires an embedding built from a power-exponential model");
    delta_ = p->delta;
    dist_pow_ = emb.torus_distances().array().pow(delta_);
    dist_pow_[0] = 0.0;
    base_.resize(size_);
    lambda_.resize(size_);
    psi_.resize(size_);
    sqrt_lambda_.resize(size_);
    inv_sqrt_psi_.resize(size_);
  }

  double delta() const { return delta_; }
  bool valid() const { return valid_; }
  const ClampReport& clamp_report() const { return clamp_; }

  /// Rebuild the spectrum for the given rho. Returns false when the
  /// embedding fails the clamping policy.
  bool ensure_rho(double rho) {
    if (rho == rho_ && have_spectrum_) return valid_;
    rho_ = rho;
    have_spectrum_ = true;
    base_ = (-rho * dist_pow_.array()).exp();
    auto& ws = workspace_for(m_);
    ws.dft2_real(base_.data(), lambda_.data());
    valid_ = clamp_eigenvalues(lambda_, clamp_, /*soft_fail=*/true);
    if (!valid_) return false;
    Eigen::VectorXd star_base = dist_pow_.cwiseProduct(base_);
    ws.dft2_real(star_base.data(), psi_.data());
    sqrt_lambda_ = lambda_.array().sqrt();
    inv_sqrt_psi_ =
        (lambda_.array() > 0.0).select(psi_.array() * lambda_.array().rsqrt(), 0.0);
    return true;
  }

  /// E^{1/2} v at the cached rho.
  void apply_half(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
    out.resize(size_);
    workspace_for(m_).spectral_apply(v.data(), sqrt_lambda_.data(), out.data());
  }
  /// E^{-1/2} E* v at the cached rho (fused eigenvalue scaling).
  void apply_inv_half_star(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
    out.resize(size_);
    workspace_for(m_).spectral_apply(v.data(), inv_sqrt_psi_.data(), out.data());
  }

 private:
  int m_;
  Eigen::Index size_;
  double delta_ = 1.0;
  double rho_ = std::numeric_limits<double>::quiet_NaN();
  bool have_spectrum_ = false;
  bool valid_ = false;
  Eigen::VectorXd dist_pow_;
  Eigen::VectorXd base_;
  Eigen::VectorXd lambda_;
  Eigen::VectorXd psi_;
  Eigen::VectorXd sqrt_lambda_;
  Eigen::VectorXd inv_sqrt_psi_;
  ClampReport clamp_;
};

}  // namespace detail

/// Whitened (gamma, theta) log posterior and its gradient in the sampled
/// coordinates (gamma, mu, log sigma2, log rho). Evaluating through this
/// class is what the sampler does; the free functions below expose the same
/// quantities with strict error reporting.
class LgcpTarget {
 public:
  LgcpTarget(const CellCounts& counts, const TorusEmbedding& emb, const PriorSpec& priors,
             bool mask_likelihood = true)
      : emb_(emb),
        priors_(priors),
        cache_(emb),
        mask_likelihood_(mask_likelihood),
        cell_area_(emb.grid().cell_area()) {
    priors.validate();
    if (counts.counts.size() != emb.size())
      throw std::invalid_argument("LgcpTarget: counts length does not match embedding");
    counts_ = counts.counts.cast<double>();
    weights_.resize(emb.size());
    const auto& mask = emb.window_mask();
    for (Eigen::Index i = 0; i < weights_.size(); ++i)
      weights_[i] = mask_likelihood ? static_cast<double>(mask[i]) : 1.0;
  }

  Eigen::Index latent_dim() const { return emb_.size(); }
  Eigen::Index dim() const { return emb_.size() + 3; }
  double delta() const { return cache_.delta(); }
  const TorusEmbedding& embedding() const { return emb_; }
  bool mask_likelihood() const { return mask_likelihood_; }

  Eigen::VectorXd pack(const Eigen::VectorXd& gamma, const HyperParams& theta) const {
    Eigen::VectorXd q(dim());
    q.head(latent_dim()) = gamma;
    q[latent_dim()] = theta.mu;
    q[latent_dim() + 1] = std::log(theta.sigma2);
    q[latent_dim() + 2] = std::log(theta.rho);
    return q;
  }
  HyperParams unpack_theta(const Eigen::VectorXd& q) const {
    return HyperParams{q[latent_dim()], std::exp(q[latent_dim() + 1]),
                       std::exp(q[latent_dim() + 2])};
  }

  /// Log density in sampled coordinates, including the log-Jacobians of the
  /// log sigma2 and log rho transforms. -inf marks an invalid state
  /// (embedding failure or intensity overflow), which a sampler rejects.
  double log_prob(const Eigen::VectorXd& q) {
    const HyperParams theta = unpack_theta(q);
    if (!cache_.ensure_rho(theta.rho)) return -std::numeric_limits<double>::infinity();
    const double sigma = std::sqrt(theta.sigma2);
    const auto gamma = q.head(latent_dim());
    cache_.apply_half(gamma, ehalf_gamma_);
    y_ = (sigma * ehalf_gamma_).array() + theta.mu;
    Eigen::ArrayXd exp_y = y_.array().exp();
    if (!exp_y.allFinite()) return -std::numeric_limits<double>::infinity();
    const double loglik =
        (y_.array() * counts_.array()).sum() - cell_area_ * (weights_.array() * exp_y).sum();
    const double s = q[latent_dim() + 1];
    const double t = q[latent_dim() + 2];
    return loglik - 0.5 * gamma.squaredNorm() + priors_.log_density(theta) + s + t;
  }

  /// Gradient in sampled coordinates; false when the state is invalid.
  bool grad(const Eigen::VectorXd& q, Eigen::VectorXd& out) {
    const HyperParams theta = unpack_theta(q);
    if (!cache_.ensure_rho(theta.rho)) return false;
    const double sigma = std::sqrt(theta.sigma2);
    const auto gamma = q.head(latent_dim());
    cache_.apply_half(gamma, ehalf_gamma_);
    y_ = (sigma * ehalf_gamma_).array() + theta.mu;
    Eigen::ArrayXd exp_y = y_.array().exp();
    if (!exp_y.allFinite()) return false;
    residual_ = counts_.array() - cell_area_ * weights_.array() * exp_y;

    out.resize(dim());
    cache_.apply_half(residual_, scratch_);
    out.head(latent_dim()) = sigma * scratch_ - gamma;

    double d_mu = residual_.sum();
    if (priors_.mu) d_mu -= (theta.mu - priors_.mu->mean) / priors_.mu->var;
    out[latent_dim()] = d_mu;

    // d/d log sigma2: chain rule through sigma = exp(s/2), plus prior and
    // Jacobian contributions in s.
    double d_s = 0.5 * sigma * residual_.dot(ehalf_gamma_);
    d_s += priors_.sigma2 ? (-priors_.sigma2->alpha + priors_.sigma2->beta / theta.sigma2) : 1.0;
    out[latent_dim() + 1] = d_s;

    // d/d log rho: -(sigma/2) r^T E^{-1/2} E* gamma, scaled by rho, plus the
    // flat-prior Jacobian term.
    cache_.apply_inv_half_star(gamma, scratch_);
    out[latent_dim() + 2] = theta.rho * (-0.5 * sigma) * residual_.dot(scratch_) + 1.0;
    return out.allFinite();
  }

  /// Window-restricted latent field at the given state.
  Eigen::VectorXd y_window(const Eigen::VectorXd& q) {
    const HyperParams theta = unpack_theta(q);
    if (!cache_.ensure_rho(theta.rho))
      throw EmbeddingError("y_window: embedding invalid at this rho");
    const double sigma = std::sqrt(theta.sigma2);
    cache_.apply_half(q.head(latent_dim()), ehalf_gamma_);
    y_ = (sigma * ehalf_gamma_).array() + theta.mu;
    return emb_.restrict_to_window(y_);
  }

 private:
  const TorusEmbedding& emb_;
  PriorSpec priors_;
  detail::SpectralCache cache_;
  bool mask_likelihood_;
  double cell_area_;
  Eigen::VectorXd counts_;
  Eigen::VectorXd weights_;
  // scratch buffers reused across evaluations
  Eigen::VectorXd ehalf_gamma_, y_, residual_, scratch_;
};

/// Whitened log posterior at (gamma, theta) on the original parameter scale:
/// sum_i [y_i m_i - A w_i exp(y_i)] - gamma'gamma/2 + log pi(theta) with
/// y = mu 1 + sigma E^{1/2} gamma. No transform Jacobians are included here.
inline double log_posterior(const Eigen::VectorXd& gamma, const HyperParams& theta,
                            const CellCounts& counts, const TorusEmbedding& emb,
                            const PriorSpec& priors, bool mask_likelihood = true) {
  theta.validate();
  LgcpTarget target(counts, emb, priors, mask_likelihood);
  const Eigen::VectorXd q = target.pack(gamma, theta);
  const double value = target.log_prob(q);
  if (!std::isfinite(value)) {
    // identify the failure for the strict interface
    const double sigma = std::sqrt(theta.sigma2);
    const Eigen::VectorXd field =
        (sigma * spectral_matvec(emb, gamma, SpectralPower::Half)).array() + theta.mu;
    for (Eigen::Index i = 0; i < field.size(); ++i) {
      if (!std::isfinite(std::exp(field[i]))) {
        std::ostringstream msg;
        msg << "log_posterior: exp(y) overflow in extended cell " << i << " (row "
            << i / emb.m() << ", col " << i % emb.m() << ")";
        throw std::overflow_error(msg.str());
      }
    }
    throw EmbeddingError("log_posterior: embedding invalid at rho=" + std::to_string(theta.rho));
  }
  // remove the Jacobian terms the sampler-facing density carries
  return value - std::log(theta.sigma2) - std::log(theta.rho);
}

/// Full gradient in the sampled coordinates (gamma, mu, log sigma2, log rho),
/// including transform derivatives; length m^2 + 3.
inline Eigen::VectorXd grad_log_posterior(const Eigen::VectorXd& gamma, const HyperParams& theta,
                                          const CellCounts& counts, const TorusEmbedding& emb,
                                          const PriorSpec& priors, bool mask_likelihood = true) {
  theta.validate();
  LgcpTarget target(counts, emb, priors, mask_likelihood);
  const Eigen::VectorXd q = target.pack(gamma, theta);
  Eigen::VectorXd out;
  if (!target.grad(q, out)) {
    // reuse the strict error reporting of log_posterior
    log_posterior(gamma, theta, counts, emb, priors, mask_likelihood);
    throw EmbeddingError("grad_log_posterior: invalid state");
  }
  return out;
}

}  // namespace lgcp
