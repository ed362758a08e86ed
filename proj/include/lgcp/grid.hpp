#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgcp {

/// Axis-aligned square observation window (cells are square, so rectangular
/// windows with unequal axis resolutions are out of scope).
struct Domain {
  double x0 = 0.0;
  double y0 = 0.0;
  double side = 1.0;

  double area() const { return side * side; }
  bool contains(double x, double y) const {
    return x >= x0 && x <= x0 + side && y >= y0 && y <= y0 + side;
  }
};

/// Uniform n x n discretization of the window. Cell (row, col) covers
/// [x0 + col*h, x0 + (col+1)*h) x [y0 + row*h, y0 + (row+1)*h) with the
/// upper boundary closed on the last cell.
class GridSpec {
 public:
  explicit GridSpec(int n, Domain domain = {}) : n_(n), domain_(domain) {
    if (n < 2) throw std::invalid_argument("GridSpec: n must be >= 2");
    if (!(domain.side > 0.0)) throw std::invalid_argument("GridSpec: domain side must be > 0");
  }

  int n() const { return n_; }
  int num_cells() const { return n_ * n_; }
  const Domain& domain() const { return domain_; }
  double spacing() const { return domain_.side / n_; }
  double cell_area() const { return spacing() * spacing(); }

  /// Window (row-major) index of the cell containing (x, y); upper
  /// boundaries clamp to the last cell in that axis.
  int cell_of(double x, double y) const {
    const double h = spacing();
    int col = static_cast<int>(std::floor((x - domain_.x0) / h));
    int row = static_cast<int>(std::floor((y - domain_.y0) / h));
    col = std::min(std::max(col, 0), n_ - 1);
    row = std::min(std::max(row, 0), n_ - 1);
    return row * n_ + col;
  }

  double centroid_x(int window_index) const {
    return domain_.x0 + (window_index % n_ + 0.5) * spacing();
  }
  double centroid_y(int window_index) const {
    return domain_.y0 + (window_index / n_ + 0.5) * spacing();
  }

 private:
  int n_;
  Domain domain_;
};

struct Point {
  double x;
  double y;
};

/// Observed or simulated locations, with provenance for reproducibility.
struct PointPattern {
  std::vector<Point> points;
  std::uint64_t seed = 0;
  std::string generator;

  std::size_t size() const { return points.size(); }
};

}  // namespace lgcp
