#pragma once

#include <Eigen/Dense>
#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "lgcp/correlation.hpp"
#include "lgcp/grid.hpp"

namespace lgcp {

/// Raised when the circulant extension of the correlation matrix has a
/// negative eigenvalue beyond the clamping tolerance.
struct EmbeddingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Per-thread FFT scratch: complex buffers and plans for one grid side m.
/// FFTW planning is serialized globally; execution on private buffers is not.
class FftWorkspace {
 public:
  explicit FftWorkspace(int m) : m_(m), size_(static_cast<std::size_t>(m) * m) {
    a_ = fftw_alloc_complex(size_);
    b_ = fftw_alloc_complex(size_);
    if (!a_ || !b_) throw std::bad_alloc();
    static std::mutex planner_mutex;
    std::lock_guard<std::mutex> lock(planner_mutex);
    fwd_ = fftw_plan_dft_2d(m, m, a_, b_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_2d(m, m, b_, a_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~FftWorkspace() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(a_);
    fftw_free(b_);
  }
  FftWorkspace(const FftWorkspace&) = delete;
  FftWorkspace& operator=(const FftWorkspace&) = delete;

  /// out = Re DFT2(in) for a real input whose transform must be real
  /// (symmetric base vectors). Throws if the imaginary residue is not small.
  void dft2_real(const double* in, double* out) {
    for (std::size_t i = 0; i < size_; ++i) {
      a_[i][0] = in[i];
      a_[i][1] = 0.0;
    }
    fftw_execute(fwd_);
    double max_re = 0.0, max_im = 0.0;
    for (std::size_t i = 0; i < size_; ++i) {
      max_re = std::max(max_re, std::abs(b_[i][0]));
      max_im = std::max(max_im, std::abs(b_[i][1]));
    }
    if (max_im > 1e-8 * std::max(max_re, 1.0))
      throw EmbeddingError("embedding: DFT of base vector is not real; base is not symmetric");
    for (std::size_t i = 0; i < size_; ++i) out[i] = b_[i][0];
  }

  /// out = Re IDFT2( scale .* DFT2(in) ) / m^2, checking the imaginary residue.
  void spectral_apply(const double* in, const double* scale, double* out) {
    for (std::size_t i = 0; i < size_; ++i) {
      a_[i][0] = in[i];
      a_[i][1] = 0.0;
    }
    fftw_execute(fwd_);
    for (std::size_t i = 0; i < size_; ++i) {
      b_[i][0] *= scale[i];
      b_[i][1] *= scale[i];
    }
    fftw_execute(bwd_);
    const double norm = 1.0 / static_cast<double>(size_);
    double max_re = 0.0, max_im = 0.0;
    for (std::size_t i = 0; i < size_; ++i) {
      max_re = std::max(max_re, std::abs(a_[i][0]));
      max_im = std::max(max_im, std::abs(a_[i][1]));
    }
    if (max_im > 1e-8 * std::max(max_re, 1.0))
      throw EmbeddingError("spectral_matvec: non-negligible imaginary residue");
    for (std::size_t i = 0; i < size_; ++i) out[i] = a_[i][0] * norm;
  }

 private:
  int m_;
  std::size_t size_;
  fftw_complex* a_;
  fftw_complex* b_;
  fftw_plan fwd_;
  fftw_plan bwd_;
};

inline FftWorkspace& workspace_for(int m) {
  thread_local std::map<int, std::unique_ptr<FftWorkspace>> cache;
  auto& slot = cache[m];
  if (!slot) slot = std::make_unique<FftWorkspace>(m);
  return *slot;
}

/// Clamp policy for eigenvalues of the circulant extension: negatives within
/// 1e-8 * lambda_max of zero are set to zero; anything more negative is a
/// hard failure. Returns false instead of throwing when soft_fail is set
/// (used while exploring rho inside a sampler).
struct ClampReport {
  std::size_t clamped_count = 0;
  double max_clamped_magnitude = 0.0;
};

inline bool clamp_eigenvalues(Eigen::VectorXd& lambda, ClampReport& report, bool soft_fail) {
  const double lambda_max = lambda.maxCoeff();
  const double tol = 1e-8 * lambda_max;
  report = {};
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < 0.0) {
      if (-lambda[i] > tol) {
        if (soft_fail) return false;
        std::ostringstream msg;
        msg << "embedding is not positive semidefinite: eigenvalue " << lambda[i]
            << " below -1e-8*lambda_max (" << -tol
            << "); enlarge the torus extension or change the correlation parameters";
        throw EmbeddingError(msg.str());
      }
      report.max_clamped_magnitude = std::max(report.max_clamped_magnitude, -lambda[i]);
      lambda[i] = 0.0;
      ++report.clamped_count;
    }
  }
  return true;
}

}  // namespace detail

using ClampReport = detail::ClampReport;

enum class SpectralPower { One, Half, MinusHalf, Star };

/// Block-circulant torus extension of the grid correlation matrix, stored by
/// its base vector and eigenvalue spectrum. Immutable after construction and
/// safe to share across threads.
class TorusEmbedding {
 public:
  TorusEmbedding(const GridSpec& grid, const CorrelationModel& model)
      : grid_(grid), model_(model) {
    validate(model);
    const int n = grid.n();
    m_ = 2;
    while (m_ < 2 * (n - 1)) m_ *= 2;
    const std::size_t size = static_cast<std::size_t>(m_) * m_;
    const double h = grid.spacing();

    dist_.resize(size);
    base_.resize(size);
    for (int r = 0; r < m_; ++r) {
      const double dy = h * std::min(r, m_ - r);
      for (int c = 0; c < m_; ++c) {
        const double dx = h * std::min(c, m_ - c);
        const std::size_t k = static_cast<std::size_t>(r) * m_ + c;
        dist_[k] = std::hypot(dx, dy);
        base_[k] = corr(model, dist_[k]);
      }
    }

    eigenvalues_.resize(size);
    detail::workspace_for(m_).dft2_real(base_.data(), eigenvalues_.data());
    detail::clamp_eigenvalues(eigenvalues_, clamp_, /*soft_fail=*/false);

    if (const auto* p = std::get_if<PowerExponential>(&model_)) {
      Eigen::VectorXd star_base(size);
      for (std::size_t k = 0; k < size; ++k)
        star_base[k] = std::pow(dist_[k], p->delta) * base_[k];
      star_base[0] = 0.0;  // 0^delta
      star_eigenvalues_.resize(size);
      detail::workspace_for(m_).dft2_real(star_base.data(), star_eigenvalues_.data());
    }

    window_mask_.assign(size, 0);
    window_to_ext_.resize(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const int ext = r * m_ + c;
        window_mask_[ext] = 1;
        window_to_ext_[r * n + c] = ext;
      }
    }
  }

  int n() const { return grid_.n(); }
  int m() const { return m_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(m_) * m_; }
  const GridSpec& grid() const { return grid_; }
  const CorrelationModel& model() const { return model_; }
  const Eigen::VectorXd& base() const { return base_; }
  const Eigen::VectorXd& torus_distances() const { return dist_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::VectorXd& star_eigenvalues() const { return star_eigenvalues_; }
  bool has_star() const { return star_eigenvalues_.size() > 0; }
  const std::vector<std::uint8_t>& window_mask() const { return window_mask_; }
  const std::vector<int>& window_to_ext() const { return window_to_ext_; }
  const ClampReport& clamp_report() const { return clamp_; }

  Eigen::VectorXd restrict_to_window(const Eigen::VectorXd& ext) const {
    Eigen::VectorXd out(window_to_ext_.size());
    for (std::size_t i = 0; i < window_to_ext_.size(); ++i) out[i] = ext[window_to_ext_[i]];
    return out;
  }
  Eigen::VectorXd scatter_from_window(const Eigen::VectorXd& window_values) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
    for (std::size_t i = 0; i < window_to_ext_.size(); ++i)
      out[window_to_ext_[i]] = window_values[i];
    return out;
  }

 private:
  GridSpec grid_;
  CorrelationModel model_;
  int m_ = 0;
  Eigen::VectorXd dist_;
  Eigen::VectorXd base_;
  Eigen::VectorXd eigenvalues_;
  Eigen::VectorXd star_eigenvalues_;
  std::vector<std::uint8_t> window_mask_;
  std::vector<int> window_to_ext_;
  ClampReport clamp_;
};

inline TorusEmbedding build_embedding(const GridSpec& grid, const CorrelationModel& model) {
  return TorusEmbedding(grid, model);
}

/// F diag(scale) F^H v by forward FFT, elementwise scaling, inverse FFT.
inline Eigen::VectorXd spectral_apply(const TorusEmbedding& emb, const Eigen::VectorXd& v,
                                      const Eigen::VectorXd& scale) {
  if (v.size() != emb.size())
    throw std::invalid_argument("spectral_apply: vector length does not match embedding");
  if (!v.allFinite()) throw std::invalid_argument("spectral_apply: input has non-finite entries");
  Eigen::VectorXd out(v.size());
  detail::workspace_for(emb.m()).spectral_apply(v.data(), scale.data(), out.data());
  return out;
}

/// E^p v for p in {+1, +1/2, -1/2} and E* v, all via the eigenvalue spectrum.
/// Eigenvalues clamped to zero contribute nothing under the -1/2 power
/// (pseudo-inverse convention).
inline Eigen::VectorXd spectral_matvec(const TorusEmbedding& emb, const Eigen::VectorXd& v,
                                       SpectralPower power) {
  const Eigen::VectorXd& lambda = emb.eigenvalues();
  Eigen::VectorXd scale;
  switch (power) {
    case SpectralPower::One:
      scale = lambda;
      break;
    case SpectralPower::Half:
      scale = lambda.array().sqrt();
      break;
    case SpectralPower::MinusHalf:
      scale = (lambda.array() > 0.0).select(lambda.array().rsqrt(), 0.0);
      break;
    case SpectralPower::Star:
      if (!emb.has_star())
        throw std::invalid_argument(
            "spectral_matvec: E* requires a power-exponential correlation model");
      scale = emb.star_eigenvalues();
      break;
  }
  return spectral_apply(emb, v, scale);
}

/// Counts on the extended grid: n_i on window cells, zero elsewhere.
struct CellCounts {
  Eigen::VectorXi counts;
  long total = 0;

  Eigen::VectorXi window(const TorusEmbedding& emb) const {
    const auto& map = emb.window_to_ext();
    Eigen::VectorXi out(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = counts[map[i]];
    return out;
  }
};

/// Bin points into grid cells (row = floor(y*n), col = floor(x*n), upper
/// boundaries clamped to the last cell). Points outside the closed domain
/// are rejected.
inline CellCounts bin_points(const PointPattern& pattern, const GridSpec& grid,
                             const TorusEmbedding& emb) {
  CellCounts out;
  out.counts = Eigen::VectorXi::Zero(emb.size());
  const Domain& dom = grid.domain();
  const double h = grid.spacing();
  const int n = grid.n();
  const int m = emb.m();
  for (const Point& p : pattern.points) {
    if (!dom.contains(p.x, p.y)) {
      std::ostringstream msg;
      msg << "bin_points: point (" << p.x << ", " << p.y << ") outside domain";
      throw std::invalid_argument(msg.str());
    }
    int col = std::min(static_cast<int>(std::floor((p.x - dom.x0) / h)), n - 1);
    int row = std::min(static_cast<int>(std::floor((p.y - dom.y0) / h)), n - 1);
    ++out.counts[row * m + col];
    ++out.total;
  }
  return out;
}

}  // namespace lgcp
