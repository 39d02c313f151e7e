#pragma once

#include <cmath>
#include <vector>

#include "fracsrc/errors.hpp"
#include "fracsrc/mesh_fem.hpp"

namespace fracsrc {

/// Gamma function via the 9-term Lanczos series (g = 7). Accurate to better
/// than 1e-13 relative on the range used here (arguments in (0.5, 8)).
inline double gamma_fn(double x) {
  if (!(x > 0.5))
    throw InvalidArgument("gamma_fn is implemented for arguments > 0.5");
  static constexpr double kCoeffs[9] = {
      0.99999999999980993,      676.5203681218851,     -1259.1392167224028,
      771.32342877765313,       -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,     9.9843695780195716e-6, 1.5056327351493116e-7};
  const double z = x - 1.0;
  double acc = kCoeffs[0];
  for (int i = 1; i < 9; ++i) acc += kCoeffs[i] / (z + i);
  const double t = z + 7.5;
  return std::sqrt(2.0 * M_PI) * std::pow(t, z + 0.5) * std::exp(-t) * acc;
}

// ---------------------------------------------------------------------------
// Time grid
// ---------------------------------------------------------------------------

/// Uniform time grid on [0, T] with the composite trapezoid weights
/// c_0 = c_K = 1/2 and c_k = 1 in between.
struct TimeGrid {
  double T = 1.0;
  int K = 1;
  double tau = 1.0;

  double t(int k) const { return k * tau; }
  double c(int k) const { return (k == 0 || k == K) ? 0.5 : 1.0; }
};

inline TimeGrid make_time_grid(double T, int K) {
  if (!(T > 0.0)) throw InvalidArgument("time grid needs T > 0");
  if (K < 1) throw InvalidArgument("time grid needs at least one step");
  return TimeGrid{T, K, T / K};
}

// ---------------------------------------------------------------------------
// L1 scheme
// ---------------------------------------------------------------------------

/// L1 weights b_j = (j+1)^{1-alpha} - j^{1-alpha}, j = 0..K-1.
inline std::vector<double> l1_weights(double alpha, int K) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidArgument("fractional order alpha must lie in (0, 1)");
  if (K < 1) throw InvalidArgument("l1_weights needs K >= 1");
  std::vector<double> b(K);
  const double p = 1.0 - alpha;
  for (int j = 0; j < K; ++j)
    b[j] = std::pow(j + 1.0, p) - std::pow(static_cast<double>(j), p);
  return b;
}

/// eta = Gamma(2 - alpha) * tau^alpha, the L1 scaling factor.
inline double eta_coeff(double alpha, double tau) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidArgument("fractional order alpha must lie in (0, 1)");
  if (!(tau > 0.0)) throw InvalidArgument("eta_coeff needs tau > 0");
  return gamma_fn(2.0 - alpha) * std::pow(tau, alpha);
}

/// Precomputed L1 discretization of the Caputo derivative of order alpha.
struct L1Scheme {
  double alpha = 0.5;
  double tau = 1.0;
  double eta = 1.0;
  std::vector<double> b;

  /// b_j - b_{j+1}, the history coefficients of the time-stepping recurrence.
  double beta(int j) const { return b[j] - b[j + 1]; }
};

inline L1Scheme make_l1_scheme(double alpha, const TimeGrid& grid) {
  L1Scheme scheme;
  scheme.alpha = alpha;
  scheme.tau = grid.tau;
  scheme.eta = eta_coeff(alpha, grid.tau);
  scheme.b = l1_weights(alpha, grid.K);
  return scheme;
}

/// L1 approximation of the Caputo derivative at the last history time:
/// (1/eta) sum_j b_j (u^{k-j+1} - u^{k-j}) for history u^0..u^{k+1}.
inline FieldP1 caputo_apply(const L1Scheme& scheme,
                            const std::vector<FieldP1>& history) {
  if (history.size() < 2)
    throw InvalidArgument("caputo_apply needs at least two time levels");
  const int k = static_cast<int>(history.size()) - 2;
  if (k >= static_cast<int>(scheme.b.size()))
    throw InvalidArgument("caputo_apply: history longer than the weight table");
  FieldP1 acc = FieldP1::Zero(history[0].size());
  for (int j = 0; j <= k; ++j)
    acc += scheme.b[j] * (history[k - j + 1] - history[k - j]);
  return acc / scheme.eta;
}

}  // namespace fracsrc
