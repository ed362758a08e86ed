#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "lgcp/diagnostics.hpp"
#include "support/oracles.hpp"

using namespace lgcp;

namespace {

PointPattern uniform_pattern(int count, std::uint64_t seed) {
  RngStream rng(seed, 0);
  PointPattern pattern;
  for (int i = 0; i < count; ++i) pattern.points.push_back({rng.uniform(), rng.uniform()});
  return pattern;
}

}  // namespace

TEST_CASE("quantile_type7 hand cases") {
  std::vector<double> values{1.0, 2.0, 3.0, 4.0};
  CHECK(quantile_type7(values, 0.5) == Catch::Approx(2.5));
  CHECK(quantile_type7(values, 0.25) == Catch::Approx(1.75));
  CHECK(quantile_type7(values, 0.0) == 1.0);
  CHECK(quantile_type7(values, 1.0) == 4.0);
  CHECK_THROWS_AS(quantile_type7({}, 0.5), std::invalid_argument);
}

TEST_CASE("delta_curve vanishes when the replicate equals the observation") {
  const PointPattern obs = uniform_pattern(120, 12);
  const Eigen::VectorXd rgrid = default_rgrid();
  const Eigen::VectorXd obs_l = k_hat(obs, rgrid, Domain{}).l();
  const Eigen::VectorXd delta = delta_curve(obs_l, obs, rgrid, Domain{});
  CHECK(delta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ppc_run") {
  GridSpec grid(8);
  TorusEmbedding emb(grid, PowerExponential{10.0, 1.0});
  RngStream field_rng(9, 0);
  const LatentField truth = sample_grf(emb, std::log(350.0), 0.8, field_rng);
  RngStream obs_rng(9, 1);
  const PointPattern observed = sample_pattern(truth, grid, emb, obs_rng);
  const Eigen::VectorXd rgrid = default_rgrid();

  // point mass at the truth: each draw only varies through replicate noise
  std::vector<PosteriorDraw> draws(
      200, PosteriorDraw{truth.window(emb), std::log(350.0), 0.8, 10.0});

  SECTION("basic shape and reproducibility") {
    const PpcResult a = ppc_run(draws, observed, grid, emb, rgrid, 2121);
    CHECK(a.rgrid.size() == 20);
    CHECK(a.n_draws == 200);
    CHECK(a.n_missing == 0);
    CHECK((a.upper - a.lower).minCoeff() >= 0.0);
    const PpcResult b = ppc_run(draws, observed, grid, emb, rgrid, 2121);
    CHECK((a.delta.array() == b.delta.array()).all());
    const PpcResult c = ppc_run(draws, observed, grid, emb, rgrid, 2122);
    CHECK((a.delta.array() != c.delta.array()).any());
  }

  SECTION("well-specified single trial: 0 inside the 95% band at most distances") {
    const PpcResult result = ppc_run(draws, observed, grid, emb, rgrid, 31);
    int covered = 0;
    for (Eigen::Index j = 0; j < rgrid.size(); ++j)
      if (result.lower[j] <= 0.0 && 0.0 <= result.upper[j]) ++covered;
    CHECK(covered >= 14);
  }

  SECTION("replicates with fewer than 2 points are recorded as missing") {
    std::vector<PosteriorDraw> sparse = draws;
    sparse[3].y_window.setConstant(std::log(1e-9));
    sparse[7].y_window.setConstant(std::log(1e-9));
    const PpcResult result = ppc_run(sparse, observed, grid, emb, rgrid, 5);
    CHECK(result.n_missing == 2);
    CHECK(!result.delta.row(3).allFinite());
    CHECK(result.mean.allFinite());
  }

  SECTION("at least one draw required") {
    CHECK_THROWS_AS(ppc_run({}, observed, grid, emb, rgrid, 1), std::invalid_argument);
  }
}

TEST_CASE("draw extraction") {
  SECTION("from chains with thinning") {
    ChainSamples samples;
    samples.n = 2;
    samples.cell_area = 0.25;
    samples.delta = 1.0;
    samples.theta.resize(6, 3);
    for (int k = 0; k < 6; ++k) samples.theta.row(k) << k, 1.0 + k, 2.0 + k;
    samples.y = Eigen::MatrixXd::Random(6, 4);
    const auto all = draws_from_chain(samples);
    CHECK(all.size() == 6);
    CHECK(all[2].mu == 2.0);
    const auto thinned = draws_from_chain(samples, 3);
    CHECK(thinned.size() == 2);
    CHECK(thinned[0].mu == 2.0);
    CHECK(thinned[1].mu == 5.0);
  }

  SECTION("from a variational state: moments approximately match q") {
    VbState state;
    state.mu_y = Eigen::VectorXd::Constant(3, 1.5);
    state.var_y = Eigen::VectorXd::Constant(3, 0.04);
    state.mu_mu_q = 0.7;
    state.sigma2_mu_q = 0.01;
    state.alpha_q = 30.0;
    state.beta_q = 60.0;
    state.model = PowerExponential{25.0, 1.0};
    const auto draws = draws_from_vb(state, 4000, 99);
    RunningStat y0, mu, prec;
    for (const auto& d : draws) {
      y0.add(d.y_window[0]);
      mu.add(d.mu);
      prec.add(1.0 / d.sigma2);
      CHECK(d.rho == 25.0);
    }
    CHECK(y0.mean() == Catch::Approx(1.5).margin(0.02));
    CHECK(y0.variance() == Catch::Approx(0.04).epsilon(0.1));
    CHECK(mu.mean() == Catch::Approx(0.7).margin(0.01));
    // E[1/sigma2] = alpha/beta
    CHECK(prec.mean() == Catch::Approx(0.5).margin(0.01));
  }
}

TEST_CASE("study_aggregate") {
  const std::vector<std::string> parameters{"mu", "sigma2_inv"};
  Eigen::VectorXd truth(2);
  truth << 5.0, 0.286;

  SECTION("estimates equal to the truth give zero bias, variance, MSE") {
    MethodEstimates hmc;
    hmc.estimates = Eigen::MatrixXd::Zero(4, 2);
    hmc.estimates.col(0).setConstant(5.0);
    hmc.estimates.col(1).setConstant(0.286);
    const StudyTable table = study_aggregate({{"hmc", hmc}}, parameters, truth, "hmc");
    CHECK(table.bias.cwiseAbs().maxCoeff() == 0.0);
    CHECK(table.variance.cwiseAbs().maxCoeff() == 0.0);
    CHECK(table.mse.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("baseline relative to itself is 1 in every finite cell") {
    MethodEstimates hmc, vb;
    hmc.estimates = Eigen::MatrixXd::Random(6, 2).array() + 5.0;
    vb.estimates = Eigen::MatrixXd::Random(6, 2).array() + 5.0;
    hmc.marginal_variances = Eigen::MatrixXd::Constant(6, 2, 0.5);
    vb.marginal_variances = Eigen::MatrixXd::Constant(6, 2, 0.25);
    const StudyTable table =
        study_aggregate({{"hmc", hmc}, {"vb", vb}}, parameters, truth, "hmc");
    const auto base =
        std::find(table.methods.begin(), table.methods.end(), "hmc") - table.methods.begin();
    for (Eigen::Index p = 0; p < 2; ++p) {
      CHECK(table.bias_rel(p, base) == Catch::Approx(1.0));
      CHECK(table.variance_rel(p, base) == Catch::Approx(1.0));
      CHECK(table.mse_rel(p, base) == Catch::Approx(1.0));
      CHECK(table.avg_marginal_var_rel(p, base) == Catch::Approx(1.0));
    }
    // marginal variance ratio for vb is 0.25 / 0.5
    const auto vb_col =
        std::find(table.methods.begin(), table.methods.end(), "vb") - table.methods.begin();
    CHECK(table.avg_marginal_var_rel(0, vb_col) == Catch::Approx(0.5));
  }

  SECTION("two-point oracle: truth +/- 1") {
    MethodEstimates m;
    m.estimates.resize(2, 2);
    m.estimates.row(0) = truth.transpose().array() + 1.0;
    m.estimates.row(1) = truth.transpose().array() - 1.0;
    const StudyTable table = study_aggregate({{"m", m}}, parameters, truth, "m");
    for (Eigen::Index p = 0; p < 2; ++p) {
      CHECK(table.bias(p, 0) == Catch::Approx(0.0).margin(1e-14));
      CHECK(table.variance(p, 0) == Catch::Approx(2.0));  // sample variance, 1/(n-1)
      CHECK(table.mse(p, 0) == Catch::Approx(1.0));       // population mean square
    }
  }

  SECTION("MSE identity: mse = bias^2 + (n-1)/n * variance") {
    RngStream rng(77, 0);
    MethodEstimates m;
    const int reps = 9;
    m.estimates.resize(reps, 2);
    for (int r = 0; r < reps; ++r)
      m.estimates.row(r) << 5.0 + rng.normal(), 0.286 + 0.1 * rng.normal();
    const StudyTable table = study_aggregate({{"m", m}}, parameters, truth, "m");
    for (Eigen::Index p = 0; p < 2; ++p) {
      const double identity = table.bias(p, 0) * table.bias(p, 0) +
                              (reps - 1.0) / reps * table.variance(p, 0);
      CHECK(table.mse(p, 0) == Catch::Approx(identity).epsilon(1e-10));
    }
  }

  SECTION("replicate-count mismatch is an error") {
    MethodEstimates a, b;
    a.estimates = Eigen::MatrixXd::Zero(3, 2);
    b.estimates = Eigen::MatrixXd::Zero(4, 2);
    CHECK_THROWS_AS(study_aggregate({{"a", a}, {"b", b}}, parameters, truth, "a"),
                    std::invalid_argument);
  }

  SECTION("missing baseline is an error") {
    MethodEstimates a;
    a.estimates = Eigen::MatrixXd::Zero(3, 2);
    CHECK_THROWS_AS(study_aggregate({{"a", a}}, parameters, truth, "hmc"),
                    std::invalid_argument);
  }
}
