#pragma once

#include <cmath>
#include <vector>

#include "fracsrc/harness.hpp"

namespace fracsrc::verify {

/// Random P1 field with entries in [-1, 1) from the counter stream.
inline FieldP1 random_field(int n, std::uint64_t seed) {
  FieldP1 f(n);
  for (int i = 0; i < n; ++i) f(i) = counter_uniform_sym(seed, i);
  return f;
}

// ---------------------------------------------------------------------------
// Discrete adjoint identity
// ---------------------------------------------------------------------------

struct AdjointIdentityReport {
  double max_rel_defect = 0.0;
  int pairs = 0;
};

/// Checks tau sum c_k (u^k(f) - u^d_k, u^k(z))_w = tau sum c_k mu^k (w^k, z)
/// for random (f, z, u^d) triples; the right side is assembled from the
/// transpose adjoint, so the defect should be at roundoff level.
inline AdjointIdentityReport adjoint_identity_study(
    int n, int K, const std::vector<double>& alphas, int pairs,
    std::uint64_t seed) {
  AdjointIdentityReport report;
  report.pairs = pairs * static_cast<int>(alphas.size());
  const Mesh mesh = build_uniform_mesh(1, n);
  const TimeGrid grid = make_time_grid(1.0, K);
  const ObservationDomain omega{{Box{{0.2, 0.0}, {0.6, 1.0}}}};
  RngStream salt(seed);

  for (double alpha : alphas) {
    const Discretization disc = Discretization::build(mesh, grid, alpha);
    const Observation obs = Observation::build(disc.mesh, omega);
    const std::vector<double> mu = mu_samples_for("cos2pit", grid);
    for (int p = 0; p < pairs; ++p) {
      const std::uint64_t s = salt.next_bits();
      const FieldP1 f = random_field(disc.mesh.n_nodes(), s);
      const FieldP1 z = random_field(disc.mesh.n_nodes(), s + 1);
      ObservedData data;
      data.u_delta.assign(K + 1, FieldP1::Zero(disc.mesh.n_nodes()));
      for (int k = 0; k <= K; ++k)
        data.u_delta[k] = 0.01 * random_field(disc.mesh.n_nodes(), s + 2 + k);

      const Trajectory uf = forward_solve(disc, SourceSeparable{mu, f});
      const Trajectory uz = forward_solve(disc, SourceSeparable{mu, z});
      double lhs = 0.0;
      for (int k = 0; k <= K; ++k)
        lhs += grid.c(k) * (uf.states[k] - data.u_delta[k])
                   .dot(obs.mass_omega * uz.states[k]);
      lhs *= grid.tau;

      const std::vector<FieldP1> lambda =
          adjoint_solve_transpose(disc, obs, residuals(uf, data));
      const FieldP1 g =
          gradient_from_adjoint(disc, mu, lambda, GradientMode::kTranspose);
      const double rhs = z.dot(disc.mass * g);

      const double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
      report.max_rel_defect =
          std::max(report.max_rel_defect, std::abs(lhs - rhs) / scale);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

struct GradientCheckReport {
  double max_rel_err = 0.0;
  int directions = 0;
};

inline GradientCheckReport gradient_fd_study(int n, int K, double alpha,
                                             GradientMode mode, int directions,
                                             double eps, std::uint64_t seed) {
  GradientCheckReport report;
  report.directions = directions;
  const Mesh mesh = build_uniform_mesh(1, n);
  const TimeGrid grid = make_time_grid(1.0, K);
  const Discretization disc = Discretization::build(mesh, grid, alpha);
  const Observation obs = Observation::build(
      disc.mesh, ObservationDomain{{Box{{0.1, 0.0}, {0.5, 1.0}}}});
  const std::vector<double> mu = mu_samples_for("cos2pit", grid);

  const FieldP1 f_star =
      build_true_source(disc.mesh, Box{{0.25, 0.0}, {0.75, 1.0}}, 0.5);
  const Trajectory exact = forward_solve(disc, SourceSeparable{mu, f_star});
  const ObservedData data = generate_noisy_data(disc, obs, exact, 0.01, seed);

  const FieldP1 f =
      FieldP1::Constant(disc.mesh.n_nodes(), 0.25) +
      0.1 * random_field(disc.mesh.n_nodes(), seed ^ 0xf00d);
  const GradientResult base = misfit_gradient(disc, obs, mu, f, data, mode);

  const auto objective = [&](const FieldP1& field) {
    const Trajectory traj = forward_solve(disc, SourceSeparable{mu, field});
    return 0.5 * misfit(disc, obs, traj, data);
  };

  for (int d = 0; d < directions; ++d) {
    FieldP1 z = random_field(disc.mesh.n_nodes(), seed + 17 * (d + 1));
    z /= disc.norm(z);
    const double fd = (objective(f + eps * z) - objective(f - eps * z)) / (2.0 * eps);
    const double analytic = z.dot(disc.mass * base.gradient);
    const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-300});
    report.max_rel_err =
        std::max(report.max_rel_err, std::abs(fd - analytic) / scale);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Manufactured-solution convergence (u* = t^2 cos(pi x))
// ---------------------------------------------------------------------------

struct OrderReport {
  std::vector<double> errors;
  std::vector<double> orders;  // between consecutive refinements
  double min_order = 0.0;
};

namespace detail {
inline SourceGeneral mms_source(const Discretization& disc, double alpha) {
  const double c_frac = 2.0 / gamma_fn(3.0 - alpha);
  const double c_elliptic = M_PI * M_PI + 1.0;
  SourceGeneral source;
  source.g.resize(disc.grid.K + 1);
  for (int k = 0; k <= disc.grid.K; ++k) {
    const double t = disc.grid.t(k);
    source.g[k] = l2_project(
        disc.mesh, disc.mass_factor, [&](const Eigen::RowVectorXd& x) {
          return (c_frac * std::pow(t, 2.0 - alpha) + c_elliptic * t * t) *
                 std::cos(M_PI * x(0));
        });
  }
  return source;
}

inline double mms_error_at_final_time(const Discretization& disc) {
  FieldP1 exact(disc.mesh.n_nodes());
  const double T = disc.grid.T;
  for (int i = 0; i < disc.mesh.n_nodes(); ++i)
    exact(i) = T * T * std::cos(M_PI * disc.mesh.nodes(i, 0));
  const Trajectory traj =
      forward_solve(disc, mms_source(disc, disc.scheme.alpha));
  return disc.norm(traj.states.back() - exact);
}

inline OrderReport orders_from_errors(std::vector<double> errors) {
  OrderReport report;
  report.errors = std::move(errors);
  for (std::size_t i = 0; i + 1 < report.errors.size(); ++i)
    report.orders.push_back(std::log2(report.errors[i] / report.errors[i + 1]));
  report.min_order = report.orders.empty()
                         ? 0.0
                         : *std::min_element(report.orders.begin(),
                                             report.orders.end());
  return report;
}
}  // namespace detail

/// Temporal refinement at fixed fine mesh; each halving of tau should shrink
/// the final-time error at observed order about 2 - alpha.
inline OrderReport mms_temporal_study(double alpha, int n,
                                      const std::vector<int>& Ks) {
  const Mesh mesh = build_uniform_mesh(1, n);
  std::vector<double> errors;
  for (int K : Ks) {
    const Discretization disc =
        Discretization::build(mesh, make_time_grid(1.0, K), alpha);
    errors.push_back(detail::mms_error_at_final_time(disc));
  }
  return detail::orders_from_errors(std::move(errors));
}

/// Spatial refinement at fixed fine time grid; observed order about 2.
inline OrderReport mms_spatial_study(double alpha, const std::vector<int>& ns,
                                     int K) {
  const TimeGrid grid = make_time_grid(1.0, K);
  std::vector<double> errors;
  for (int n : ns) {
    const Discretization disc =
        Discretization::build(build_uniform_mesh(1, n), grid, alpha);
    errors.push_back(detail::mms_error_at_final_time(disc));
  }
  return detail::orders_from_errors(std::move(errors));
}

// ---------------------------------------------------------------------------
// Operator-norm study
// ---------------------------------------------------------------------------

struct NormReport {
  double estimate = 0.0;      // power-iteration estimate of ||A||
  double rayleigh = 0.0;      // ||A f*|| / ||f*||, a lower bound
  double grad_norm = 0.0;     // sup ||grad f|| / ||f||
};

/// Example-1 layout with omega = Omega: the paper's ratio at f = f* is a
/// Rayleigh lower bound for the estimate.
inline NormReport norm_study(double alpha, int n, int K, int iters) {
  NormReport report;
  const Mesh mesh = build_uniform_mesh(1, n);
  const TimeGrid grid = make_time_grid(1.0, K);
  const Discretization disc = Discretization::build(mesh, grid, alpha);
  const Observation obs =
      Observation::build(disc.mesh, ObservationDomain::whole());
  const std::vector<double> mu = mu_samples_for("cos2pit", grid);

  const FieldP1 f_star =
      build_true_source(disc.mesh, Box{{0.25, 0.0}, {0.75, 1.0}}, 0.5);
  const Trajectory traj = forward_solve(disc, SourceSeparable{mu, f_star});
  double acc = 0.0;
  for (int k = 0; k <= grid.K; ++k)
    acc += grid.c(k) * traj.states[k].dot(obs.mass_omega * traj.states[k]);
  report.rayleigh = std::sqrt(grid.tau * acc) / disc.norm(f_star);
  report.estimate = estimate_forward_norm(disc, obs, mu, iters);
  report.grad_norm =
      estimate_grad_norm(disc.mesh, disc.mass, disc.stiffness, 200);
  return report;
}

}  // namespace fracsrc::verify
