#pragma once

#include <utility>
#include <vector>

#include "fracsrc/errors.hpp"
#include "fracsrc/forward.hpp"

namespace fracsrc {

/// Observation subdomain with its restricted mass matrix and node set.
struct Observation {
  ObservationDomain domain;
  SparseSpd mass_omega;
  std::vector<char> element_mask;
  std::vector<int> nodes;

  static Observation build(const Mesh& mesh, ObservationDomain domain) {
    Observation obs;
    obs.mass_omega = assemble_mass_omega(mesh, domain);
    obs.element_mask = omega_element_mask(mesh, domain);
    obs.nodes = omega_node_list(mesh, obs.element_mask);
    obs.domain = std::move(domain);
    return obs;
  }
};

/// Measured data u^delta at every time level plus the noise level delta.
/// Values on nodes outside omega are carried but never enter any norm.
struct ObservedData {
  std::vector<FieldP1> u_delta;
  double delta = 0.0;
};

inline std::vector<FieldP1> residuals(const Trajectory& traj,
                                      const ObservedData& data) {
  if (data.u_delta.size() != traj.states.size())
    throw InvalidArgument("residuals: data and trajectory level counts differ");
  std::vector<FieldP1> r(traj.states.size());
  for (std::size_t k = 0; k < r.size(); ++k)
    r[k] = traj.states[k] - data.u_delta[k];
  return r;
}

/// res(f, u^delta) = tau sum_k c_k ||u^k - u^delta_k||^2_{L2(omega)}.
/// This is the unscaled residue reported in result tables; the objective
/// carries an extra factor 1/2.
inline double misfit(const Discretization& disc, const Observation& obs,
                     const Trajectory& traj, const ObservedData& data) {
  const std::vector<FieldP1> r = residuals(traj, data);
  double acc = 0.0;
  for (int k = 0; k <= disc.grid.K; ++k)
    acc += disc.grid.c(k) * r[k].dot(obs.mass_omega * r[k]);
  return disc.grid.tau * acc;
}

/// Exact transpose of the forward recurrence applied to the weighted,
/// omega-restricted residues: solves backwards
///   A lambda^i = tau c_i M_w r_i + M sum_{m>i} (b_{m-1-i} - b_{m-i}) lambda^m
/// for i = K..1 (lambda^0 = 0). The misfit gradient assembled from these
/// multipliers differentiates the discrete objective to machine precision.
inline std::vector<FieldP1> adjoint_solve_transpose(
    const Discretization& disc, const Observation& obs,
    const std::vector<FieldP1>& residual) {
  const int K = disc.grid.K;
  const int n = disc.mesh.n_nodes();
  if (static_cast<int>(residual.size()) != K + 1)
    throw InvalidArgument("adjoint_solve_transpose: need K + 1 residues");

  std::vector<FieldP1> lambda(K + 1, FieldP1::Zero(n));
  for (int i = K; i >= 1; --i) {
    FieldP1 history = FieldP1::Zero(n);
    for (int m = i + 1; m <= K; ++m)
      history += disc.scheme.beta(m - 1 - i) * lambda[m];
    const Eigen::VectorXd rhs = disc.grid.tau * disc.grid.c(i) *
                                    (obs.mass_omega * residual[i]) +
                                disc.mass * history;
    lambda[i] = disc.system_factor.solve(rhs);
  }
  return lambda;
}

/// Time-reversed adjoint problem of the paper: steps w-tilde forward with the
/// same L1 scheme from w-tilde^0 = 0 against the reversed omega-restricted
/// residue loads, then unreverses. Returns w^k = w-tilde^{K-k}.
inline std::vector<FieldP1> adjoint_solve_paper(
    const Discretization& disc, const Observation& obs,
    const std::vector<FieldP1>& residual) {
  const int K = disc.grid.K;
  if (static_cast<int>(residual.size()) != K + 1)
    throw InvalidArgument("adjoint_solve_paper: need K + 1 residues");

  std::vector<Eigen::VectorXd> loads(K + 1);
  for (int k = 0; k <= K; ++k) loads[k] = obs.mass_omega * residual[K - k];
  const Trajectory reversed = forward_solve_loads(disc, loads);

  std::vector<FieldP1> w(K + 1);
  for (int k = 0; k <= K; ++k) w[k] = reversed.states[K - k];
  return w;
}

enum class GradientMode { kTranspose, kPaper };

/// Gradient of the (1/2)-scaled discrete misfit with respect to the source
/// field, as a nodal P1 function: g = tau sum_k c_k mu^k w_h^k.
struct GradientResult {
  FieldP1 gradient;
  Trajectory trajectory;  // forward solve at f, reusable by callers
  double res = 0.0;       // unscaled misfit of that trajectory
};

inline FieldP1 gradient_from_adjoint(const Discretization& disc,
                                     const std::vector<double>& mu,
                                     const std::vector<FieldP1>& adjoint_states,
                                     GradientMode mode) {
  const int K = disc.grid.K;
  FieldP1 g = FieldP1::Zero(disc.mesh.n_nodes());
  if (mode == GradientMode::kTranspose) {
    // tau c_k mu^k w^k with w^k = eta lambda^k / (tau c_k) collapses to
    // eta sum_k mu^k lambda^k.
    for (int k = 1; k <= K; ++k) g += mu[k] * adjoint_states[k];
    g *= disc.scheme.eta;
  } else {
    for (int k = 0; k <= K; ++k)
      g += disc.grid.c(k) * mu[k] * adjoint_states[k];
    g *= disc.grid.tau;
  }
  return g;
}

inline GradientResult misfit_gradient(const Discretization& disc,
                                      const Observation& obs,
                                      const std::vector<double>& mu,
                                      const FieldP1& f, const ObservedData& data,
                                      GradientMode mode = GradientMode::kTranspose) {
  GradientResult out;
  out.trajectory = forward_solve(disc, SourceSeparable{mu, f});
  out.res = misfit(disc, obs, out.trajectory, data);
  const std::vector<FieldP1> r = residuals(out.trajectory, data);
  const std::vector<FieldP1> adj = (mode == GradientMode::kTranspose)
                                       ? adjoint_solve_transpose(disc, obs, r)
                                       : adjoint_solve_paper(disc, obs, r);
  out.gradient = gradient_from_adjoint(disc, mu, adj, mode);
  return out;
}

}  // namespace fracsrc
