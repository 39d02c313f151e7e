#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fracsrc/errors.hpp"
#include "fracsrc/rng.hpp"

namespace fracsrc {

/// Nodal coefficients of a continuous piecewise-linear (P1) function.
using FieldP1 = Eigen::VectorXd;

/// One constant d-vector per element (rows = elements, cols = dim).
using FieldP0Vec = Eigen::MatrixXd;

using SparseSpd = Eigen::SparseMatrix<double>;

// ---------------------------------------------------------------------------
// Mesh
// ---------------------------------------------------------------------------

/// Uniform mesh of the unit interval (dim = 1) or unit square (dim = 2).
/// The square is triangulated by cutting every grid cell along the
/// lower-left to upper-right diagonal, giving 2 n^2 equal triangles.
struct Mesh {
  int dim = 1;
  int n_per_axis = 0;
  double h = 0.0;                 // max element diameter
  Eigen::MatrixXd nodes;          // n_nodes x dim
  Eigen::MatrixXi elements;       // n_elements x (dim + 1)
  Eigen::VectorXd element_measure;

  int n_nodes() const { return static_cast<int>(nodes.rows()); }
  int n_elements() const { return static_cast<int>(elements.rows()); }
  int nodes_per_element() const { return dim + 1; }

  Eigen::RowVectorXd element_centroid(int e) const {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(dim);
    for (int j = 0; j < nodes_per_element(); ++j) c += nodes.row(elements(e, j));
    return c / nodes_per_element();
  }
};

inline Mesh build_uniform_mesh(int dim, int n) {
  if (dim != 1 && dim != 2) throw InvalidArgument("mesh dim must be 1 or 2");
  if (n < 2) throw InvalidArgument("mesh needs n >= 2 elements per axis");

  Mesh mesh;
  mesh.dim = dim;
  mesh.n_per_axis = n;
  const double dx = 1.0 / n;

  if (dim == 1) {
    mesh.h = dx;
    mesh.nodes.resize(n + 1, 1);
    for (int i = 0; i <= n; ++i) mesh.nodes(i, 0) = i * dx;
    mesh.elements.resize(n, 2);
    mesh.element_measure.resize(n);
    for (int e = 0; e < n; ++e) {
      mesh.elements(e, 0) = e;
      mesh.elements(e, 1) = e + 1;
      mesh.element_measure(e) = dx;
    }
  } else {
    mesh.h = std::sqrt(2.0) / n;
    const int nn = n + 1;
    mesh.nodes.resize(nn * nn, 2);
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        mesh.nodes(j * nn + i, 0) = i * dx;
        mesh.nodes(j * nn + i, 1) = j * dx;
      }
    mesh.elements.resize(2 * n * n, 3);
    mesh.element_measure.resize(2 * n * n);
    int e = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int a = j * nn + i;          // lower-left
        const int b = j * nn + i + 1;      // lower-right
        const int c = (j + 1) * nn + i + 1;  // upper-right
        const int d = (j + 1) * nn + i;    // upper-left
        mesh.elements.row(e) << a, b, c;
        mesh.element_measure(e++) = 0.5 * dx * dx;
        mesh.elements.row(e) << a, c, d;
        mesh.element_measure(e++) = 0.5 * dx * dx;
      }
  }
  return mesh;
}

/// Per-element gradients of the P1 basis functions: rows are the local
/// nodes, columns the spatial components.
inline Eigen::MatrixXd basis_gradients(const Mesh& mesh, int e) {
  if (mesh.dim == 1) {
    const double l = mesh.element_measure(e);
    Eigen::MatrixXd g(2, 1);
    g << -1.0 / l, 1.0 / l;
    return g;
  }
  const auto p0 = mesh.nodes.row(mesh.elements(e, 0));
  const auto p1 = mesh.nodes.row(mesh.elements(e, 1));
  const auto p2 = mesh.nodes.row(mesh.elements(e, 2));
  const double two_area = 2.0 * mesh.element_measure(e);
  Eigen::MatrixXd g(3, 2);
  g.row(0) << p1(1) - p2(1), p2(0) - p1(0);
  g.row(1) << p2(1) - p0(1), p0(0) - p2(0);
  g.row(2) << p0(1) - p1(1), p1(0) - p0(0);
  return g / two_area;
}

// ---------------------------------------------------------------------------
// Observation domain
// ---------------------------------------------------------------------------

/// Axis-aligned box; only the first `dim` components are meaningful.
struct Box {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};

  bool contains(const Eigen::RowVectorXd& x) const {
    for (int a = 0; a < x.size(); ++a)
      if (x(a) < lo[a] || x(a) > hi[a]) return false;
    return true;
  }
};

/// Union of mesh-aligned boxes inside the unit domain; realizes the
/// observation subdomain and its characteristic function.
struct ObservationDomain {
  std::vector<Box> boxes;

  static ObservationDomain whole() {
    return ObservationDomain{{Box{{0.0, 0.0}, {1.0, 1.0}}}};
  }
  bool empty() const { return boxes.empty(); }
};

namespace detail {
inline void require_aligned(double coord, int n, const std::string& what) {
  const double scaled = coord * n;
  if (std::abs(scaled - std::round(scaled)) > 1e-9)
    throw AlignmentError(what + " coordinate " + std::to_string(coord) +
                         " is not a multiple of 1/" + std::to_string(n));
}
}  // namespace detail

inline void validate_observation_domain(const Mesh& mesh,
                                        const ObservationDomain& omega) {
  for (const auto& box : omega.boxes)
    for (int a = 0; a < mesh.dim; ++a) {
      if (box.lo[a] < -1e-12 || box.hi[a] > 1.0 + 1e-12 || box.lo[a] > box.hi[a])
        throw AlignmentError("observation box exceeds the unit domain");
      detail::require_aligned(box.lo[a], mesh.n_per_axis, "observation box");
      detail::require_aligned(box.hi[a], mesh.n_per_axis, "observation box");
    }
}

/// An element belongs to omega iff its centroid lies inside some box.
inline std::vector<char> omega_element_mask(const Mesh& mesh,
                                            const ObservationDomain& omega) {
  std::vector<char> mask(mesh.n_elements(), 0);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::RowVectorXd c = mesh.element_centroid(e);
    for (const auto& box : omega.boxes)
      if (box.contains(c)) {
        mask[e] = 1;
        break;
      }
  }
  return mask;
}

/// Ascending indices of nodes touching at least one omega element.
inline std::vector<int> omega_node_list(const Mesh& mesh,
                                        const std::vector<char>& element_mask) {
  std::vector<char> seen(mesh.n_nodes(), 0);
  for (int e = 0; e < mesh.n_elements(); ++e)
    if (element_mask[e])
      for (int j = 0; j < mesh.nodes_per_element(); ++j)
        seen[mesh.elements(e, j)] = 1;
  std::vector<int> nodes;
  for (int i = 0; i < mesh.n_nodes(); ++i)
    if (seen[i]) nodes.push_back(i);
  return nodes;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

namespace detail {
inline void add_element_mass(const Mesh& mesh, int e,
                             std::vector<Eigen::Triplet<double>>& trips) {
  const double m = mesh.element_measure(e);
  const int k = mesh.nodes_per_element();
  const double off = (mesh.dim == 1) ? m / 6.0 : m / 12.0;
  const double diag = 2.0 * off;
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      trips.emplace_back(mesh.elements(e, a), mesh.elements(e, b),
                         a == b ? diag : off);
}
}  // namespace detail

/// Consistent mass matrix: g^T M g = ||g||_{L2}^2 for P1 fields g.
inline SparseSpd assemble_mass(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(mesh.n_elements()) * 9);
  for (int e = 0; e < mesh.n_elements(); ++e)
    detail::add_element_mass(mesh, e, trips);
  SparseSpd m(mesh.n_nodes(), mesh.n_nodes());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

/// Mass matrix restricted to the elements of omega: g^T M_w g = ||g||_{L2(w)}^2.
inline SparseSpd assemble_mass_omega(const Mesh& mesh,
                                     const ObservationDomain& omega) {
  validate_observation_domain(mesh, omega);
  const std::vector<char> mask = omega_element_mask(mesh, omega);
  std::vector<Eigen::Triplet<double>> trips;
  for (int e = 0; e < mesh.n_elements(); ++e)
    if (mask[e]) detail::add_element_mass(mesh, e, trips);
  SparseSpd m(mesh.n_nodes(), mesh.n_nodes());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

/// Stiffness matrix with natural (Neumann) boundary: g^T S g = ||grad g||^2.
inline SparseSpd assemble_stiffness(const Mesh& mesh) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(mesh.n_elements()) * 9);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::MatrixXd g = basis_gradients(mesh, e);
    const double m = mesh.element_measure(e);
    const int k = mesh.nodes_per_element();
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        trips.emplace_back(mesh.elements(e, a), mesh.elements(e, b),
                           m * g.row(a).dot(g.row(b)));
  }
  SparseSpd s(mesh.n_nodes(), mesh.n_nodes());
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

// ---------------------------------------------------------------------------
// Direct factorization
// ---------------------------------------------------------------------------

/// Sparse LDL^T factorization computed once and reused for every solve.
/// Solves are refined until the normwise backward error
/// ||A x - b|| / (||A|| ||x|| + ||b||) drops below 1e-12.
class SpdFactor {
 public:
  SpdFactor() = default;

  explicit SpdFactor(SparseSpd matrix)
      : matrix_(std::move(matrix)),
        ldlt_(std::make_unique<Eigen::SimplicialLDLT<SparseSpd>>()) {
    ldlt_->compute(matrix_);
    if (ldlt_->info() != Eigen::Success)
      throw InvalidArgument("SPD factorization failed: matrix is not positive definite");
    norm_ = infinity_norm(matrix_);
  }

  double backward_error(const Eigen::VectorXd& x, const Eigen::VectorXd& rhs) const {
    const double scale = norm_ * x.norm() + rhs.norm();
    if (scale == 0.0) return 0.0;
    return (rhs - matrix_ * x).norm() / scale;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (!ldlt_) throw InvalidArgument("SpdFactor used before initialization");
    if (rhs.norm() == 0.0) return Eigen::VectorXd::Zero(rhs.size());
    Eigen::VectorXd x = ldlt_->solve(rhs);
    for (int pass = 0; pass < 4; ++pass) {
      if (backward_error(x, rhs) <= 1e-12) return x;
      x += ldlt_->solve(rhs - matrix_ * x);
    }
    if (backward_error(x, rhs) > 1e-12)
      throw DivergenceError("sparse solve failed to reach backward error 1e-12");
    return x;
  }

  const SparseSpd& matrix() const { return matrix_; }
  double matrix_norm() const { return norm_; }

  static double infinity_norm(const SparseSpd& m) {
    Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(m.rows());
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseSpd::InnerIterator it(m, k); it; ++it)
        row_sums(it.row()) += std::abs(it.value());
    return row_sums.size() == 0 ? 0.0 : row_sums.maxCoeff();
  }

 private:
  SparseSpd matrix_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseSpd>> ldlt_;
  double norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Projection, gradient, divergence
// ---------------------------------------------------------------------------

namespace detail {
// 5-point Gauss-Legendre on [-1, 1].
inline constexpr std::array<double, 5> kGauss5X = {
    -0.9061798459386640, -0.5384693101056831, 0.0,
    0.5384693101056831, 0.9061798459386640};
inline constexpr std::array<double, 5> kGauss5W = {
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891};
}  // namespace detail

/// Element-wise quadrature of sampler * basis functions. 1D elements use the
/// 5-point Gauss rule; triangles use the collapsed (Duffy) 5x5 tensor rule.
inline FieldP1 assemble_load(const Mesh& mesh,
                             const std::function<double(const Eigen::RowVectorXd&)>& sampler) {
  FieldP1 load = FieldP1::Zero(mesh.n_nodes());
  if (mesh.dim == 1) {
    for (int e = 0; e < mesh.n_elements(); ++e) {
      const double a = mesh.nodes(mesh.elements(e, 0), 0);
      const double b = mesh.nodes(mesh.elements(e, 1), 0);
      const double half = 0.5 * (b - a);
      for (int q = 0; q < 5; ++q) {
        const double x = 0.5 * (a + b) + half * detail::kGauss5X[q];
        Eigen::RowVectorXd pt(1);
        pt << x;
        const double w = half * detail::kGauss5W[q] * sampler(pt);
        const double lam1 = (x - a) / (b - a);
        load(mesh.elements(e, 0)) += w * (1.0 - lam1);
        load(mesh.elements(e, 1)) += w * lam1;
      }
    }
    return load;
  }
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto p0 = mesh.nodes.row(mesh.elements(e, 0));
    const auto p1 = mesh.nodes.row(mesh.elements(e, 1));
    const auto p2 = mesh.nodes.row(mesh.elements(e, 2));
    const double jac = 2.0 * mesh.element_measure(e);
    for (int qu = 0; qu < 5; ++qu)
      for (int qv = 0; qv < 5; ++qv) {
        const double u = 0.5 * (1.0 + detail::kGauss5X[qu]);
        const double v = 0.5 * (1.0 + detail::kGauss5X[qv]);
        const double wq =
            0.25 * detail::kGauss5W[qu] * detail::kGauss5W[qv] * u * jac;
        const double xi = u * (1.0 - v);
        const double et = u * v;
        const Eigen::RowVectorXd pt =
            p0 + xi * (p1 - p0) + et * (p2 - p0);
        const double w = wq * sampler(pt);
        load(mesh.elements(e, 0)) += w * (1.0 - xi - et);
        load(mesh.elements(e, 1)) += w * xi;
        load(mesh.elements(e, 2)) += w * et;
      }
  }
  return load;
}

/// L2 projection P_h onto the P1 space: solves M f = (sampler, basis).
inline FieldP1 l2_project(const Mesh& mesh, const SpdFactor& mass_factor,
                          const std::function<double(const Eigen::RowVectorXd&)>& sampler) {
  return mass_factor.solve(assemble_load(mesh, sampler));
}

inline FieldP1 l2_project(const Mesh& mesh,
                          const std::function<double(const Eigen::RowVectorXd&)>& sampler) {
  return l2_project(mesh, SpdFactor(assemble_mass(mesh)), sampler);
}

/// Exact per-element gradient of a P1 field.
inline FieldP0Vec grad(const Mesh& mesh, const FieldP1& f) {
  if (f.size() != mesh.n_nodes())
    throw InvalidArgument("grad: field size does not match mesh");
  FieldP0Vec g = FieldP0Vec::Zero(mesh.n_elements(), mesh.dim);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::MatrixXd basis = basis_gradients(mesh, e);
    for (int j = 0; j < mesh.nodes_per_element(); ++j)
      g.row(e) += f(mesh.elements(e, j)) * basis.row(j);
  }
  return g;
}

/// Load vector r of the adjoint of grad: r . g = (q, grad g) for all P1 g.
/// The P1 representative of -div q is mass_factor.solve(r).
inline FieldP1 div_adjoint(const Mesh& mesh, const FieldP0Vec& q) {
  if (q.rows() != mesh.n_elements() || q.cols() != mesh.dim)
    throw InvalidArgument("div_adjoint: dual field shape does not match mesh");
  FieldP1 r = FieldP1::Zero(mesh.n_nodes());
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::MatrixXd basis = basis_gradients(mesh, e);
    const double m = mesh.element_measure(e);
    for (int j = 0; j < mesh.nodes_per_element(); ++j)
      r(mesh.elements(e, j)) += m * q.row(e).dot(basis.row(j));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

inline double l2_norm(const SparseSpd& mass, const FieldP1& f) {
  return std::sqrt(std::max(0.0, f.dot(mass * f)));
}

/// Power iteration for sqrt(lambda_max) of S g = lambda M g, i.e. the norm of
/// the discrete gradient sup ||grad f|| / ||f||. The constant mode (lambda = 0)
/// is deflated; a purely constant start vector is replaced by a deterministic
/// perturbation.
inline double estimate_grad_norm(const Mesh& mesh, const SparseSpd& mass,
                                 const SparseSpd& stiffness, int iters,
                                 const FieldP1* start = nullptr) {
  if (iters < 1) throw InvalidArgument("estimate_grad_norm: iters must be >= 1");
  const int n = mesh.n_nodes();
  const SpdFactor mass_factor(mass);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const double volume = ones.dot(mass * ones);

  const auto deflate = [&](FieldP1& v) {
    v -= (ones.dot(mass * v) / volume) * ones;
  };

  FieldP1 v(n);
  if (start != nullptr) {
    if (start->size() != n)
      throw InvalidArgument("estimate_grad_norm: start vector size mismatch");
    v = *start;
  } else {
    for (int i = 0; i < n; ++i) v(i) = counter_uniform_sym(0x67726164u, i);
  }
  deflate(v);
  if (l2_norm(mass, v) < 1e-14) {
    for (int i = 0; i < n; ++i) v(i) += static_cast<double>(i) / n;
    deflate(v);
  }
  v /= l2_norm(mass, v);

  double rayleigh = 0.0;
  for (int it = 0; it < iters; ++it) {
    rayleigh = v.dot(stiffness * v);
    FieldP1 w = mass_factor.solve(stiffness * v);
    deflate(w);
    const double norm = l2_norm(mass, w);
    if (norm < 1e-300) break;
    v = w / norm;
  }
  rayleigh = std::max(rayleigh, v.dot(stiffness * v));
  return std::sqrt(std::max(0.0, rayleigh));
}

}  // namespace fracsrc
