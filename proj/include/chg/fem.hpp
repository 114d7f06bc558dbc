#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/SparseCholesky>

#include "chg/field.hpp"
#include "chg/mesh.hpp"

namespace chg {

/// Quadrature on the reference simplex in barycentric coordinates.
/// Weights sum to the reference volume (1/2 for triangles, 1/6 for tetrahedra).
struct QuadratureRule {
  int dim = 2;
  int degree = 0;
  std::vector<std::array<double, 4>> points;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  double reference_volume() const { return dim == 2 ? 0.5 : 1.0 / 6.0; }

  /// The rule used for every nonlinear pairing in the library:
  /// 6-point degree-4 rule on triangles, 14-point degree-5 rule on tetrahedra.
  static const QuadratureRule& nonlinear(int dim);
};

/// Values of some quantity at every quadrature point, cell-major.
using QpValues = std::vector<double>;

/// P1 Lagrange space on a mesh. Owns the sparsity pattern and the per-cell
/// geometry so that repeated assembly only touches matrix values.
class P1Space {
 public:
  explicit P1Space(std::shared_ptr<const Mesh> mesh);

  const Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(mesh_->num_vertices()); }
  const QuadratureRule& rule() const { return *rule_; }
  std::size_t num_qp() const { return mesh_->num_cells() * rule_->size(); }

  /// Consistent mass matrix (exact element formula).
  const SparseMatrix& mass() const { return mass_; }
  /// Stiffness matrix of the Neumann Laplacian.
  const SparseMatrix& stiffness() const { return stiffness_; }
  /// Zero matrix with the P1 pattern; every assembled operator shares it.
  const SparseMatrix& pattern() const { return pattern_; }

  /// Interpolant of a nodal vector evaluated at every quadrature point.
  QpValues at_qp(const Vector& u) const;
  /// A_ij = Q[coeff chi_i chi_j].
  SparseMatrix weighted_mass(std::span<const double> coeff) const;
  /// b_i = Q[coeff chi_i].
  Vector load(std::span<const double> coeff) const;
  /// b_i = Q[g(u) chi_i]; its Jacobian in u is weighted_mass(g'(u)).
  Vector nonlinear_load(const std::function<double(double)>& g, const Vector& u) const;
  /// Q[coeff].
  double integrate(std::span<const double> coeff) const;

  /// Solves M x = b with a cached Cholesky factorisation.
  Vector solve_mass(const Vector& b) const;

  NodalField field(Vector values, FieldUnit unit = FieldUnit::dimensionless) const;

 private:
  std::shared_ptr<const Mesh> mesh_;
  const QuadratureRule* rule_;
  std::vector<double> jacobian_;  // |K| * d!
  std::vector<int> slots_;        // (d+1)^2 value indices per cell
  SparseMatrix pattern_;
  SparseMatrix mass_;
  SparseMatrix stiffness_;
  Eigen::SimplicialLLT<SparseMatrix> mass_factor_;
};

SparseMatrix mass_matrix(const P1Space& space);
SparseMatrix stiffness_matrix(const P1Space& space);
/// Coefficient g(u) evaluated through the interpolant of `u` at every quadrature point.
SparseMatrix weighted_mass(const P1Space& space, const std::function<double(double)>& g, const Vector& u);
Vector nonlinear_load(const P1Space& space, const std::function<double(double)>& g, const NodalField& field);

/// a^T M b.
double l2_inner(const SparseMatrix& m, const Vector& a, const Vector& b);
double l2_norm(const SparseMatrix& m, const Vector& a);

}  // namespace chg
