#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fracsrc/forward.hpp"
#include "fracsrc/harness.hpp"
#include "fracsrc/verify.hpp"

using namespace fracsrc;

namespace {

Discretization make_disc(int n, int K, double alpha) {
  return Discretization::build(build_uniform_mesh(1, n), make_time_grid(1.0, K),
                               alpha);
}

}  // namespace

TEST_CASE("zero sources produce zero trajectories") {
  const Discretization disc = make_disc(12, 8, 0.4);
  const std::vector<double> mu = mu_samples_for("cos2pit", disc.grid);

  const Trajectory zero_f =
      forward_solve(disc, SourceSeparable{mu, FieldP1::Zero(disc.mesh.n_nodes())});
  for (const auto& u : zero_f.states) CHECK(u.cwiseAbs().maxCoeff() == 0.0);

  const std::vector<double> mu0(disc.grid.K + 1, 0.0);
  const Trajectory zero_mu = forward_solve(
      disc, SourceSeparable{mu0, FieldP1::Ones(disc.mesh.n_nodes())});
  for (const auto& u : zero_mu.states) CHECK(u.cwiseAbs().maxCoeff() == 0.0);

  CHECK(zero_f.states.front().size() == disc.mesh.n_nodes());
  CHECK(static_cast<int>(zero_f.states.size()) == disc.grid.K + 1);
}

TEST_CASE("forward solve is linear in the source field") {
  const Discretization disc = make_disc(15, 12, 0.6);
  const std::vector<double> mu = mu_samples_for("cos2pit", disc.grid);
  const FieldP1 f1 = verify::random_field(disc.mesh.n_nodes(), 100);
  const FieldP1 f2 = verify::random_field(disc.mesh.n_nodes(), 200);
  const double a = 2.25, b = -0.75;

  const Trajectory ta = forward_solve(disc, SourceSeparable{mu, f1});
  const Trajectory tb = forward_solve(disc, SourceSeparable{mu, f2});
  const Trajectory tc = forward_solve(disc, SourceSeparable{mu, a * f1 + b * f2});
  for (int k = 0; k <= disc.grid.K; ++k) {
    const FieldP1 expect = a * ta.states[k] + b * tb.states[k];
    CHECK((tc.states[k] - expect).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("every step satisfies its linear system to roundoff") {
  // 1e-12 in the normwise backward error, including on a fine mesh where
  // ||A|| ||x|| dominates ||b||
  for (int n : {20, 400}) {
    const Discretization disc = make_disc(n, 15, 0.3);
    const std::vector<double> mu = mu_samples_for("cos2pit", disc.grid);
    const FieldP1 f = verify::random_field(disc.mesh.n_nodes(), 5);
    const Trajectory traj = forward_solve(disc, SourceSeparable{mu, f});

    const Eigen::VectorXd mf = disc.mass * f;
    for (int k = 0; k < disc.grid.K; ++k) {
      FieldP1 history = FieldP1::Zero(disc.mesh.n_nodes());
      for (int j = 0; j < k; ++j)
        history += disc.scheme.beta(j) * traj.states[k - j];
      const Eigen::VectorXd rhs =
          disc.mass * history + disc.scheme.eta * mu[k + 1] * mf;
      CHECK(disc.system_factor.backward_error(traj.states[k + 1], rhs) < 1e-12);
    }
  }
}

TEST_CASE("manufactured solution converges in time at desk scale") {
  for (double alpha : {0.3, 0.8}) {
    const auto report = verify::mms_temporal_study(alpha, 100, {10, 20, 40});
    INFO("alpha=" << alpha << " errors " << report.errors[0] << " "
                  << report.errors[1] << " " << report.errors[2]);
    CHECK(report.min_order >= 0.9);
  }
}

TEST_CASE("stability ratio is bounded and homogeneous") {
  const std::vector<double> ratios = [] {
    std::vector<double> out;
    for (int n : {10, 20, 40, 80}) {
      const Discretization disc = make_disc(n, n, 0.3);
      const std::vector<double> mu = mu_samples_for("cos2pit", disc.grid);
      const FieldP1 f =
          build_true_source(disc.mesh, Box{{0.25, 0.0}, {0.75, 1.0}}, 0.5);
      const Trajectory traj = forward_solve(disc, SourceSeparable{mu, f});
      out.push_back(stability_check(disc, traj, f));
    }
    return out;
  }();
  const double lo = *std::min_element(ratios.begin(), ratios.end());
  const double hi = *std::max_element(ratios.begin(), ratios.end());
  CHECK(lo > 0.0);
  CHECK(hi / lo < 2.0);  // bounded, no growth trend across refinements

  // homogeneity: scaling f by 10 leaves the ratio unchanged
  const Discretization disc = make_disc(25, 25, 0.3);
  const std::vector<double> mu = mu_samples_for("cos2pit", disc.grid);
  const FieldP1 f =
      build_true_source(disc.mesh, Box{{0.25, 0.0}, {0.75, 1.0}}, 0.5);
  const Trajectory t1 = forward_solve(disc, SourceSeparable{mu, f});
  const FieldP1 f10 = 10.0 * f;
  const Trajectory t10 = forward_solve(disc, SourceSeparable{mu, f10});
  const double r1 = stability_check(disc, t1, f);
  const double r10 = stability_check(disc, t10, f10);
  CHECK(std::abs(r1 - r10) / r1 < 1e-10);
  CHECK(r1 > 0.0);

  CHECK_THROWS_AS(stability_check(disc, t1, FieldP1::Zero(disc.mesh.n_nodes())),
                  UndefinedRatioError);
}

TEST_CASE("size mismatches are rejected") {
  const Discretization disc = make_disc(10, 5, 0.5);
  const std::vector<double> short_mu(3, 1.0);
  CHECK_THROWS_AS(
      forward_solve(disc, SourceSeparable{short_mu, FieldP1::Zero(11)}),
      InvalidArgument);
  const std::vector<double> mu(6, 1.0);
  CHECK_THROWS_AS(forward_solve(disc, SourceSeparable{mu, FieldP1::Zero(7)}),
                  InvalidArgument);
  CHECK_THROWS_AS(forward_solve(disc, SourceGeneral{{FieldP1::Zero(11)}}),
                  InvalidArgument);
}
