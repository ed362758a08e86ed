#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "lgcp/embedding.hpp"
#include "lgcp/random.hpp"
#include "support/oracles.hpp"

using namespace lgcp;

namespace {

Eigen::VectorXd random_vector(Eigen::Index size, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("grid invariants") {
  GridSpec grid(4);
  CHECK(grid.cell_area() == Catch::Approx(1.0 / 16.0));
  CHECK(grid.spacing() == Catch::Approx(0.25));
  // centroid of each cell lies strictly inside the cell
  for (int w = 0; w < grid.num_cells(); ++w) {
    const double x = grid.centroid_x(w), y = grid.centroid_y(w);
    CHECK(grid.cell_of(x, y) == w);
  }
  CHECK_THROWS_AS(GridSpec(1), std::invalid_argument);
}

TEST_CASE("bin_points basics") {
  GridSpec grid(4);
  TorusEmbedding emb(grid, PowerExponential{5.0, 1.0});

  SECTION("empty pattern gives all-zero counts") {
    const CellCounts counts = bin_points(PointPattern{}, grid, emb);
    CHECK(counts.total == 0);
    CHECK(counts.counts.sum() == 0);
  }

  SECTION("single point lands in its cell") {
    GridSpec grid2(2);
    TorusEmbedding emb2(grid2, PowerExponential{5.0, 1.0});
    PointPattern pattern;
    pattern.points.push_back({0.3, 0.7});
    const CellCounts counts = bin_points(pattern, grid2, emb2);
    CHECK(counts.total == 1);
    // cell covering [0, 0.5) x [0.5, 1): row 1, col 0
    CHECK(counts.counts[1 * emb2.m() + 0] == 1);
    CHECK(counts.counts.sum() == 1);
  }

  SECTION("upper boundary points clamp to the last cell") {
    PointPattern pattern;
    pattern.points.push_back({1.0, 1.0});
    pattern.points.push_back({1.0, 0.0});
    const CellCounts counts = bin_points(pattern, grid, emb);
    CHECK(counts.counts[3 * emb.m() + 3] == 1);
    CHECK(counts.counts[0 * emb.m() + 3] == 1);
  }

  SECTION("point outside the domain is rejected with its coordinate") {
    PointPattern pattern;
    pattern.points.push_back({1.25, 0.5});
    CHECK_THROWS_WITH(bin_points(pattern, grid, emb),
                      Catch::Matchers::ContainsSubstring("1.25"));
  }

  SECTION("counts sum to the pattern size and land on window cells only") {
    RngStream rng(7, 0);
    PointPattern pattern;
    for (int i = 0; i < 500; ++i) pattern.points.push_back({rng.uniform(), rng.uniform()});
    const CellCounts counts = bin_points(pattern, grid, emb);
    CHECK(counts.total == 500);
    CHECK(counts.counts.sum() == 500);
    const auto& mask = emb.window_mask();
    for (Eigen::Index i = 0; i < counts.counts.size(); ++i)
      if (!mask[i]) CHECK(counts.counts[i] == 0);
  }
}

TEST_CASE("embedding dimensions and base invariants") {
  SECTION("n=64 extends to m=128") {
    GridSpec grid(64);
    TorusEmbedding emb(grid, PowerExponential{50.0, 1.0});
    CHECK(emb.m() == 128);
  }
  SECTION("window mask has exactly n^2 ones") {
    GridSpec grid(5);
    TorusEmbedding emb(grid, PowerExponential{5.0, 1.0});
    CHECK(emb.m() == 8);
    long ones = 0;
    for (auto w : emb.window_mask()) ones += w;
    CHECK(ones == 25);
  }
  SECTION("base starts at 1 and eigenvalues are nonnegative") {
    GridSpec grid(4);
    TorusEmbedding emb(grid, PowerExponential{5.0, 1.0});
    CHECK(emb.base()[0] == 1.0);
    CHECK(emb.eigenvalues().minCoeff() >= 0.0);
  }
  SECTION("near-delta correlation gives an identity embedding") {
    GridSpec grid(4);
    TorusEmbedding emb(grid, PowerExponential{1e8, 1.0});
    CHECK(emb.base()[0] == 1.0);
    CHECK(emb.base().tail(emb.size() - 1).cwiseAbs().maxCoeff() < 1e-300);
    CHECK(emb.eigenvalues().minCoeff() == Catch::Approx(1.0).margin(1e-12));
    CHECK(emb.eigenvalues().maxCoeff() == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("eigenvalues match the dense eigendecomposition (n=4, rho=5, delta=1)") {
  GridSpec grid(4);
  TorusEmbedding emb(grid, PowerExponential{5.0, 1.0});
  REQUIRE(emb.m() == 8);
  const Eigen::MatrixXd dense = oracles::dense_embedding(emb);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
  Eigen::VectorXd expected = solver.eigenvalues();
  Eigen::VectorXd actual = emb.eigenvalues();
  std::sort(actual.data(), actual.data() + actual.size());
  std::sort(expected.data(), expected.data() + expected.size());
  REQUIRE(actual.size() == expected.size());
  for (Eigen::Index i = 0; i < actual.size(); ++i)
    CHECK(actual[i] == Catch::Approx(expected[i]).margin(1e-10 * expected.maxCoeff()));
}

TEST_CASE("spectral matvec agrees with dense oracles") {
  for (int n : {4, 8}) {
    GridSpec grid(n);
    const double delta = 1.3;
    TorusEmbedding emb(grid, PowerExponential{8.0, delta});
    REQUIRE(emb.clamp_report().clamped_count == 0);
    const Eigen::MatrixXd dense = oracles::dense_embedding(emb);
    const Eigen::VectorXd v = random_vector(emb.size(), 42 + n);

    SECTION("power +1, n=" + std::to_string(n)) {
      const Eigen::VectorXd fft_path = spectral_matvec(emb, v, SpectralPower::One);
      const Eigen::VectorXd dense_path = dense * v;
      CHECK((fft_path - dense_path).norm() <= 1e-10 * dense_path.norm());
    }
    SECTION("power +1/2, n=" + std::to_string(n)) {
      const Eigen::VectorXd fft_path = spectral_matvec(emb, v, SpectralPower::Half);
      const Eigen::VectorXd dense_path = oracles::dense_power(dense, 0.5) * v;
      CHECK((fft_path - dense_path).norm() <= 1e-10 * dense_path.norm());
    }
    SECTION("power -1/2, n=" + std::to_string(n)) {
      const Eigen::VectorXd fft_path = spectral_matvec(emb, v, SpectralPower::MinusHalf);
      const Eigen::VectorXd dense_path = oracles::dense_power(dense, -0.5) * v;
      CHECK((fft_path - dense_path).norm() <= 1e-10 * dense_path.norm());
    }
    SECTION("star, n=" + std::to_string(n)) {
      const Eigen::VectorXd fft_path = spectral_matvec(emb, v, SpectralPower::Star);
      const Eigen::VectorXd dense_path = oracles::dense_star(emb, delta) * v;
      CHECK((fft_path - dense_path).norm() <= 1e-10 * dense_path.norm());
    }
  }
}

TEST_CASE("square root composition and inverse composition") {
  GridSpec grid(8);
  TorusEmbedding emb(grid, PowerExponential{8.0, 1.0});
  REQUIRE(emb.clamp_report().clamped_count == 0);
  const Eigen::VectorXd v = random_vector(emb.size(), 3);

  const Eigen::VectorXd half_twice =
      spectral_matvec(emb, spectral_matvec(emb, v, SpectralPower::Half), SpectralPower::Half);
  const Eigen::VectorXd direct = spectral_matvec(emb, v, SpectralPower::One);
  CHECK((half_twice - direct).norm() <= 1e-10 * direct.norm());

  const Eigen::VectorXd round_trip = spectral_matvec(
      emb, spectral_matvec(emb, v, SpectralPower::Half), SpectralPower::MinusHalf);
  CHECK((round_trip - v).norm() <= 1e-10 * v.norm());
}

TEST_CASE("symmetry of the spectral operator") {
  GridSpec grid(4);
  TorusEmbedding emb(grid, PowerExponential{5.0, 1.5});
  const Eigen::VectorXd v = random_vector(emb.size(), 10);
  const Eigen::VectorXd u = random_vector(emb.size(), 11);
  const double vu = v.dot(spectral_matvec(emb, u, SpectralPower::One));
  const double uv = u.dot(spectral_matvec(emb, v, SpectralPower::One));
  CHECK(vu == Catch::Approx(uv).epsilon(1e-10));
}

TEST_CASE("window submatrix of dense E equals the direct correlation matrix") {
  GridSpec grid(4);
  const CorrelationModel model = PowerExponential{6.0, 1.2};
  TorusEmbedding emb(grid, model);
  const Eigen::MatrixXd dense = oracles::dense_embedding(emb);
  const Eigen::MatrixXd c = oracles::dense_window_correlation(grid, model);
  const auto& map = emb.window_to_ext();
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j)
      CHECK(dense(map[i], map[j]) == Catch::Approx(c(i, j)).margin(1e-14));
}

TEST_CASE("spectral matvec input validation") {
  GridSpec grid(4);
  TorusEmbedding emb(grid, PowerExponential{5.0, 1.0});
  Eigen::VectorXd wrong(emb.size() - 1);
  wrong.setZero();
  CHECK_THROWS_AS(spectral_matvec(emb, wrong, SpectralPower::One), std::invalid_argument);
  Eigen::VectorXd with_nan = Eigen::VectorXd::Zero(emb.size());
  with_nan[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(spectral_matvec(emb, with_nan, SpectralPower::One), std::invalid_argument);
  // star requires a power-exponential model
  TorusEmbedding matern_emb(grid, Matern{0.1, 1.0});
  Eigen::VectorXd v = Eigen::VectorXd::Ones(matern_emb.size());
  CHECK_THROWS_AS(spectral_matvec(matern_emb, v, SpectralPower::Star), std::invalid_argument);
}

TEST_CASE("clamping policy on crafted spectra") {
  // tiny negative eigenvalues are clamped and reported
  Eigen::VectorXd lambda(4);
  lambda << 2.0, 1.0, -1e-9, 0.5;
  ClampReport report;
  CHECK(detail::clamp_eigenvalues(lambda, report, false));
  CHECK(report.clamped_count == 1);
  CHECK(report.max_clamped_magnitude == Catch::Approx(1e-9));
  CHECK(lambda[2] == 0.0);

  // negatives beyond 1e-8 * lambda_max are a hard error
  Eigen::VectorXd bad(4);
  bad << 2.0, 1.0, -1e-3, 0.5;
  CHECK_THROWS_AS(detail::clamp_eigenvalues(bad, report, false), EmbeddingError);
  CHECK_FALSE(detail::clamp_eigenvalues(bad, report, true));
}
