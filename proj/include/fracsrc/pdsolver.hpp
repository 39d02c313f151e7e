#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fracsrc/adjoint.hpp"
#include "fracsrc/tvreg.hpp"

namespace fracsrc {

enum class DualPoint { kTilde, kExtrapolated };
enum class StopReason { kMaxIters, kRelChange, kMorozov };

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::kMaxIters: return "max-iters";
    case StopReason::kRelChange: return "rel-change";
    case StopReason::kMorozov: return "morozov";
  }
  return "unknown";
}

struct PDConfig {
  double gamma = 1e-9;   // TV regularization weight
  double sigma = 100.0;  // primal step
  double theta = 0.1;    // dual damping
  int n_max = 3000;
  double rel_change_tol = 1e-4;
  double morozov_factor = 1.1;
  GradientMode gradient_mode = GradientMode::kTranspose;
  DualPoint dual_point = DualPoint::kTilde;
};

/// Immutable problem context for one inversion.
struct PDProblem {
  const Discretization& disc;
  const Observation& obs;
  const std::vector<double>& mu;
  const ObservedData& data;
  BoxBounds box;
};

/// f_n is the running (extrapolated) iterate the solves are evaluated at;
/// f_tilde is the projected iterate and the reported reconstruction. f_n may
/// leave the box by construction, f_tilde never does.
struct PDState {
  FieldP1 f_n;
  FieldP1 f_tilde;
  FieldP0Vec p_n;
  int n = 0;
  std::vector<double> res_history;
  std::vector<double> er_history;
  StopReason stop_reason = StopReason::kMaxIters;
};

struct IterationRecord {
  int n = 0;
  double res = 0.0;
  std::optional<double> e_r;
  double tv = 0.0;
  double rel_change = 0.0;  // of the running iterate; 0 at n = 0
};

/// Certificate for the step condition (1/sigma - c^2)(theta/sigma) > gamma^2 ||grad||^2.
struct StepCertificate {
  double c_estimate = 0.0;
  double grad_norm_estimate = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
};

inline StepCertificate check_step_condition(const PDConfig& config,
                                            double c_estimate, double grad_norm) {
  StepCertificate cert;
  cert.c_estimate = c_estimate;
  cert.grad_norm_estimate = grad_norm;
  cert.lhs = (1.0 / config.sigma - c_estimate * c_estimate) *
             (config.theta / config.sigma);
  cert.rhs = config.gamma * config.gamma * grad_norm * grad_norm;
  cert.satisfied = cert.lhs > cert.rhs;
  return cert;
}

/// Norm of the forward map f -> u(f)|_omega by power iteration on A^T A.
/// The source space carries the mass inner product, the trajectory space the
/// (tau, c_k)-weighted L2(omega) product. One iteration costs one forward and
/// one adjoint solve; the estimate is nondecreasing in iters.
inline double estimate_forward_norm(const Discretization& disc,
                                    const Observation& obs,
                                    const std::vector<double>& mu, int iters,
                                    const FieldP1* start = nullptr) {
  if (iters < 1)
    throw InvalidArgument("estimate_forward_norm: iters must be >= 1");
  const int n = disc.mesh.n_nodes();
  FieldP1 v(n);
  if (start != nullptr) {
    if (start->size() != n)
      throw InvalidArgument("estimate_forward_norm: start vector size mismatch");
    v = *start;
  } else {
    for (int i = 0; i < n; ++i) v(i) = counter_uniform_sym(0x666e726du, i);
  }
  double norm = disc.norm(v);
  if (norm == 0.0)
    throw InvalidArgument("estimate_forward_norm: start vector is zero");
  v /= norm;

  double rayleigh = 0.0;
  for (int it = 0; it < iters; ++it) {
    const Trajectory traj = forward_solve(disc, SourceSeparable{mu, v});
    const std::vector<FieldP1> lambda =
        adjoint_solve_transpose(disc, obs, traj.states);
    const FieldP1 s =
        gradient_from_adjoint(disc, mu, lambda, GradientMode::kTranspose);
    rayleigh = v.dot(disc.mass * s);  // = ||A v||^2 in the trajectory norm
    norm = disc.norm(s);
    if (norm < 1e-300) break;
    v = s / norm;
  }
  return std::sqrt(std::max(0.0, rayleigh));
}

namespace detail {
inline void require_finite(const PDState& state, double res, double res0) {
  const bool finite = state.f_n.allFinite() && state.f_tilde.allFinite() &&
                      state.p_n.allFinite() && std::isfinite(res);
  const bool runaway = res0 > 0.0 && res > 1e6 * res0;
  if (finite && !runaway) return;
  std::ostringstream dump;
  dump << "primal-dual iteration diverged at n=" << state.n << ": res=" << res
       << " (initial " << res0 << "), f range [" << state.f_n.minCoeff() << ", "
       << state.f_n.maxCoeff() << "]";
  throw DivergenceError(dump.str());
}
}  // namespace detail

struct StepOutcome {
  PDState state;
  double res = 0.0;         // misfit of the pre-step running iterate
  double rel_change = 0.0;  // ||f^{n+1} - f^n|| / ||f^{n+1}||
};

/// One sweep of the linearized primal-dual updates: exactly one forward and
/// one adjoint solve, evaluated at the running iterate.
inline StepOutcome pd_step(const PDProblem& problem, const PDConfig& config,
                           const PDState& state) {
  const GradientResult grad_result =
      misfit_gradient(problem.disc, problem.obs, problem.mu, state.f_n,
                      problem.data, config.gradient_mode);

  // div p as a nodal P1 field; div_adjoint realizes -div against the mass pairing.
  const FieldP1 div_p =
      -problem.disc.mass_factor.solve(div_adjoint(problem.disc.mesh, state.p_n));

  StepOutcome out;
  out.res = grad_result.res;
  out.state.f_tilde = project_box(
      state.f_n + config.sigma * (config.gamma * div_p - grad_result.gradient),
      problem.box);
  out.state.f_n = 2.0 * out.state.f_tilde - state.f_n;
  const FieldP1& dual_at = (config.dual_point == DualPoint::kTilde)
                               ? out.state.f_tilde
                               : out.state.f_n;
  out.state.p_n = project_ball(
      state.p_n + (config.gamma * config.sigma / config.theta) *
                      grad(problem.disc.mesh, dual_at));
  out.state.n = state.n + 1;

  const FieldP1 diff = out.state.f_n - state.f_n;
  const double denom = std::max(problem.disc.norm(out.state.f_n), 1e-300);
  out.rel_change = problem.disc.norm(diff) / denom;
  return out;
}

struct PDRun {
  PDState state;
  std::vector<IterationRecord> log;
};

/// Full iteration with the three stopping rules: iteration cap, relative
/// change of the running iterate, and the Morozov discrepancy res <= factor * delta.
inline PDRun pd_run(const PDProblem& problem, const PDConfig& config,
                    const FieldP1& f0, const FieldP0Vec& p0,
                    const FieldP1* true_f = nullptr) {
  validate_box(problem.box);
  PDRun run;
  PDState& state = run.state;
  state.f_n = f0;
  state.f_tilde = project_box(f0, problem.box);
  state.p_n = project_ball(p0);
  state.n = 0;
  state.stop_reason = StopReason::kMaxIters;

  double res0 = -1.0;
  double last_rel_change = 0.0;
  while (true) {
    if (state.n >= config.n_max) {
      state.stop_reason = StopReason::kMaxIters;
      break;
    }
    const StepOutcome outcome = pd_step(problem, config, state);
    if (res0 < 0.0) res0 = outcome.res;
    detail::require_finite(state, outcome.res, res0);

    IterationRecord record;
    record.n = state.n;
    record.res = outcome.res;
    record.tv = tv_value(problem.disc.mesh, state.f_tilde);
    record.rel_change = last_rel_change;
    state.res_history.push_back(outcome.res);
    if (true_f != nullptr) {
      const double denom = problem.disc.norm(*true_f);
      if (denom == 0.0)
        throw UndefinedRatioError("pd_run: true source has zero norm");
      record.e_r = problem.disc.norm(state.f_tilde - *true_f) / denom;
      state.er_history.push_back(*record.e_r);
    }
    run.log.push_back(record);

    if (outcome.res <= config.morozov_factor * problem.data.delta) {
      state.stop_reason = StopReason::kMorozov;
      break;
    }

    last_rel_change = outcome.rel_change;
    state.f_n = outcome.state.f_n;
    state.f_tilde = outcome.state.f_tilde;
    state.p_n = outcome.state.p_n;
    state.n = outcome.state.n;
    detail::require_finite(state, outcome.res, res0);

    if (outcome.rel_change <= config.rel_change_tol) {
      state.stop_reason = StopReason::kRelChange;
      break;
    }
  }
  return run;
}

}  // namespace fracsrc
