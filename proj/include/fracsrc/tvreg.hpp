#pragma once

#include <algorithm>
#include <cmath>

#include "fracsrc/mesh_fem.hpp"

namespace fracsrc {

/// Pointwise admissible bounds f_lower <= f <= f_upper.
struct BoxBounds {
  double lower = 0.0;
  double upper = 1.0;
};

inline void validate_box(const BoxBounds& box) {
  if (!(box.lower < box.upper))
    throw InvalidArgument("box bounds must satisfy lower < upper");
}

/// Discrete total variation: sum_K |K| |grad f|_K (exact for P1 fields).
inline double tv_value(const Mesh& mesh, const FieldP1& f) {
  const FieldP0Vec g = grad(mesh, f);
  double acc = 0.0;
  for (int e = 0; e < mesh.n_elements(); ++e)
    acc += mesh.element_measure(e) * g.row(e).norm();
  return acc;
}

/// Element-wise projection onto the dual unit ball: p_K / max(1, |p_K|).
inline FieldP0Vec project_ball(const FieldP0Vec& p) {
  FieldP0Vec out = p;
  for (int e = 0; e < p.rows(); ++e) {
    const double norm = p.row(e).norm();
    if (norm > 1.0) out.row(e) /= norm;
  }
  return out;
}

/// Node-wise clamp onto the admissible box.
inline FieldP1 project_box(const FieldP1& f, const BoxBounds& box) {
  validate_box(box);
  return f.cwiseMax(box.lower).cwiseMin(box.upper);
}

struct SubgradientCheck {
  bool in_ball = false;
  double defect = 0.0;  // TV(f) - (grad f, p), nonnegative when p is in the ball
  bool valid = false;
};

/// p is a TV subgradient at f iff p lies in the dual ball and the pairing
/// (grad f, p) attains TV(f). Elements with zero gradient cannot break the
/// equality and are implicitly unconstrained.
inline SubgradientCheck check_subgradient(const Mesh& mesh, const FieldP1& f,
                                          const FieldP0Vec& p,
                                          double ball_slack = 1e-12,
                                          double defect_rel_tol = 1e-10) {
  SubgradientCheck out;
  out.in_ball = true;
  for (int e = 0; e < p.rows(); ++e)
    if (p.row(e).norm() > 1.0 + ball_slack) {
      out.in_ball = false;
      break;
    }
  const FieldP0Vec g = grad(mesh, f);
  double tv = 0.0;
  double pairing = 0.0;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    tv += mesh.element_measure(e) * g.row(e).norm();
    pairing += mesh.element_measure(e) * g.row(e).dot(p.row(e));
  }
  out.defect = tv - pairing;
  const double scale = std::max(tv, 1e-300);
  out.valid = out.in_ball && (tv == 0.0 || std::abs(out.defect) / scale < defect_rel_tol);
  return out;
}

}  // namespace fracsrc
