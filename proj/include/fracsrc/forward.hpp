#pragma once

#include <utility>
#include <vector>

#include "fracsrc/errors.hpp"
#include "fracsrc/fracstep.hpp"
#include "fracsrc/mesh_fem.hpp"

namespace fracsrc {

/// Separable right-hand side mu(t) f(x); mu is sampled at the grid times.
struct SourceSeparable {
  std::vector<double> mu;  // K + 1 samples
  FieldP1 f;
};

/// General right-hand side, one P1 field per time level (used by the
/// manufactured-solution studies).
struct SourceGeneral {
  std::vector<FieldP1> g;  // K + 1 fields
};

/// Discrete states u_h^0..u_h^{K}; u_h^0 = 0 always.
struct Trajectory {
  TimeGrid grid;
  std::vector<FieldP1> states;

  int K() const { return static_cast<int>(states.size()) - 1; }
};

/// Everything assembled once per (mesh, time grid, alpha): mass, stiffness,
/// the constant per-step system (1 + eta) M + eta S, and their factorizations.
/// Immutable after construction and safe to share between threads.
struct Discretization {
  Mesh mesh;
  TimeGrid grid;
  L1Scheme scheme;
  SparseSpd mass;
  SparseSpd stiffness;
  SparseSpd system;
  SpdFactor mass_factor;
  SpdFactor system_factor;

  static Discretization build(Mesh mesh, const TimeGrid& grid, double alpha) {
    Discretization d;
    d.mesh = std::move(mesh);
    d.grid = grid;
    d.scheme = make_l1_scheme(alpha, grid);
    d.mass = assemble_mass(d.mesh);
    d.stiffness = assemble_stiffness(d.mesh);
    d.system = (1.0 + d.scheme.eta) * d.mass + d.scheme.eta * d.stiffness;
    d.mass_factor = SpdFactor(d.mass);
    d.system_factor = SpdFactor(d.system);
    return d;
  }

  double norm(const FieldP1& f) const { return l2_norm(mass, f); }
};

/// Fully discrete forward solve with caller-supplied load functionals:
/// [(1+eta) M + eta S] u^{k+1} = M sum_j (b_j - b_{j+1}) u^{k-j}
///                               + M b_k u^0 + eta loads[k+1],
/// where loads[k] is already paired with the test functions (a load vector).
inline Trajectory forward_solve_loads(const Discretization& disc,
                                      const std::vector<Eigen::VectorXd>& loads) {
  const int K = disc.grid.K;
  const int n = disc.mesh.n_nodes();
  if (static_cast<int>(loads.size()) != K + 1)
    throw InvalidArgument("forward_solve: need one load per time level");

  Trajectory traj;
  traj.grid = disc.grid;
  traj.states.assign(K + 1, FieldP1::Zero(n));
  for (int k = 0; k < K; ++k) {
    FieldP1 history = FieldP1::Zero(n);
    for (int j = 0; j < k; ++j)
      history += disc.scheme.beta(j) * traj.states[k - j];
    history += disc.scheme.b[k] * traj.states[0];  // zero here; kept for nonzero u^0
    const Eigen::VectorXd rhs =
        disc.mass * history + disc.scheme.eta * loads[k + 1];
    traj.states[k + 1] = disc.system_factor.solve(rhs);
  }
  return traj;
}

inline Trajectory forward_solve(const Discretization& disc,
                                const SourceSeparable& source) {
  const int K = disc.grid.K;
  if (static_cast<int>(source.mu.size()) != K + 1)
    throw InvalidArgument("forward_solve: mu needs K + 1 samples");
  if (source.f.size() != disc.mesh.n_nodes())
    throw InvalidArgument("forward_solve: source field size mismatch");
  const Eigen::VectorXd mf = disc.mass * source.f;
  std::vector<Eigen::VectorXd> loads(K + 1);
  for (int k = 0; k <= K; ++k) loads[k] = source.mu[k] * mf;
  return forward_solve_loads(disc, loads);
}

inline Trajectory forward_solve(const Discretization& disc,
                                const SourceGeneral& source) {
  const int K = disc.grid.K;
  if (static_cast<int>(source.g.size()) != K + 1)
    throw InvalidArgument("forward_solve: general source needs K + 1 fields");
  std::vector<Eigen::VectorXd> loads(K + 1);
  for (int k = 0; k <= K; ++k) {
    if (source.g[k].size() != disc.mesh.n_nodes())
      throw InvalidArgument("forward_solve: general source field size mismatch");
    loads[k] = disc.mass * source.g[k];
  }
  return forward_solve_loads(disc, loads);
}

/// max_k (||u^k|| + ||grad u^k||) / ||f||, the quantity bounded by the
/// unconditional stability of the scheme.
inline double stability_check(const Discretization& disc, const Trajectory& traj,
                              const FieldP1& f) {
  const double denom = disc.norm(f);
  if (denom == 0.0)
    throw UndefinedRatioError("stability_check: source field has zero norm");
  double worst = 0.0;
  for (const FieldP1& u : traj.states) {
    const double value =
        l2_norm(disc.mass, u) + std::sqrt(std::max(0.0, u.dot(disc.stiffness * u)));
    worst = std::max(worst, value);
  }
  return worst / denom;
}

}  // namespace fracsrc
