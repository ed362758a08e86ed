#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lgcp/embedding.hpp"
#include "lgcp/grid.hpp"
#include "lgcp/random.hpp"

namespace lgcp {

/// Log-intensity values on the extended m x m grid.
struct LatentField {
  Eigen::VectorXd values;  // length m^2

  Eigen::VectorXd window(const TorusEmbedding& emb) const {
    return emb.restrict_to_window(values);
  }
};

/// Exact draw from N(mu 1, sigma2 E) via the whitened representation
/// mu + sigma E^{1/2} gamma with gamma iid standard normal.
inline LatentField sample_grf(const TorusEmbedding& emb, double mu, double sigma2,
                              RngStream& rng) {
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("sample_grf: sigma2 must be >= 0");
  Eigen::VectorXd gamma(emb.size());
  for (Eigen::Index i = 0; i < gamma.size(); ++i) gamma[i] = rng.normal();
  LatentField field;
  if (sigma2 == 0.0) {
    field.values = Eigen::VectorXd::Constant(emb.size(), mu);
  } else {
    field.values =
        (std::sqrt(sigma2) * spectral_matvec(emb, gamma, SpectralPower::Half)).array() + mu;
  }
  return field;
}

/// Expected number of points in the observation window: sum of A exp(y_i)
/// over window cells.
inline double expected_total_points(const LatentField& field, const GridSpec& grid,
                                    const TorusEmbedding& emb) {
  const double area = grid.cell_area();
  double total = 0.0;
  for (int ext : emb.window_to_ext()) total += area * std::exp(field.values[ext]);
  if (!std::isfinite(total))
    throw std::overflow_error("expected_total_points: intensity overflows");
  return total;
}

/// Poisson counts per window cell with rate A exp(y_i), points placed
/// uniformly inside their cell. Off-window cells generate nothing. The drawn
/// per-cell counts can be captured for verification.
inline PointPattern sample_pattern(const LatentField& field, const GridSpec& grid,
                                   const TorusEmbedding& emb, RngStream& rng,
                                   CellCounts* drawn_counts = nullptr) {
  const double area = grid.cell_area();
  const double h = grid.spacing();
  const Domain& dom = grid.domain();
  const int n = grid.n();
  const int m = emb.m();

  PointPattern pattern;
  pattern.generator = "lgcp.sample_pattern";
  if (drawn_counts) {
    drawn_counts->counts = Eigen::VectorXi::Zero(emb.size());
    drawn_counts->total = 0;
  }
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const int ext = row * m + col;
      const double rate = area * std::exp(field.values[ext]);
      if (!std::isfinite(rate)) {
        std::ostringstream msg;
        msg << "sample_pattern: intensity overflow in cell (" << row << ", " << col << ")";
        throw std::overflow_error(msg.str());
      }
      const long count = rng.poisson(rate);
      for (long k = 0; k < count; ++k) {
        const double x = dom.x0 + (col + rng.uniform()) * h;
        const double y = dom.y0 + (row + rng.uniform()) * h;
        pattern.points.push_back({x, y});
      }
      if (drawn_counts) {
        drawn_counts->counts[ext] = static_cast<int>(count);
        drawn_counts->total += count;
      }
    }
  }
  return pattern;
}

}  // namespace lgcp
