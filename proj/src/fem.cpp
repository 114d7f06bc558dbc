#include "chg/fem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/LU>

#include "chg/error.hpp"

namespace chg {

namespace {

QuadratureRule make_triangle_rule() {
  QuadratureRule q;
  q.dim = 2;
  q.degree = 4;
  const std::array<std::pair<double, double>, 2> orbits{{{0.44594849091596488632, 0.22338158967801146570},
                                                         {0.09157621350977074346, 0.10995174365532186764}}};
  for (const auto& [a, w] : orbits) {
    const double b = 1.0 - 2.0 * a;
    q.points.push_back({b, a, a, 0.0});
    q.points.push_back({a, b, a, 0.0});
    q.points.push_back({a, a, b, 0.0});
    for (int i = 0; i < 3; ++i) q.weights.push_back(0.5 * w);
  }
  return q;
}

QuadratureRule make_tetrahedron_rule() {
  QuadratureRule q;
  q.dim = 3;
  q.degree = 5;
  const std::array<std::pair<double, double>, 2> orbits{{{0.0927352503108912264, 0.0734930431163619495},
                                                         {0.3108859192633006097, 0.1126879257180158508}}};
  for (const auto& [a, w] : orbits) {
    const double b = 1.0 - 3.0 * a;
    for (int i = 0; i < 4; ++i) {
      std::array<double, 4> p{a, a, a, a};
      p[i] = b;
      q.points.push_back(p);
      q.weights.push_back(w / 6.0);
    }
  }
  const double c = 0.4544962958743503798, d = 0.0455037041256496202, w = 0.0425460207770814664;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      std::array<double, 4> p{d, d, d, d};
      p[i] = c;
      p[j] = c;
      q.points.push_back(p);
      q.weights.push_back(w / 6.0);
    }
  return q;
}

/// Gradients of the barycentric functions on a cell, one row per local vertex.
Eigen::Matrix<double, 4, 3> barycentric_gradients(const Mesh& mesh, std::size_t c) {
  const int d = mesh.dim();
  const auto cv = mesh.cell(c);
  const Point& v0 = mesh.vertex(cv[0]);
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) t(j, k) = mesh.vertex(cv[j + 1])[k] - v0[k];
  // grad(lambda_{j+1}) are the columns of t^{-1}
  Eigen::Matrix<double, 4, 3> g = Eigen::Matrix<double, 4, 3>::Zero();
  if (d == 2) {
    const Eigen::Matrix2d inv = t.topLeftCorner<2, 2>().inverse();
    for (int j = 0; j < 2; ++j) g.row(j + 1).head<2>() = inv.col(j).transpose();
  } else {
    const Eigen::Matrix3d inv = t.inverse();
    for (int j = 0; j < 3; ++j) g.row(j + 1) = inv.col(j).transpose();
  }
  g.row(0) = -(g.row(1) + g.row(2) + g.row(3));
  return g;
}

}  // namespace

const QuadratureRule& QuadratureRule::nonlinear(int dim) {
  static const QuadratureRule tri = make_triangle_rule();
  static const QuadratureRule tet = make_tetrahedron_rule();
  return dim == 2 ? tri : tet;
}

P1Space::P1Space(std::shared_ptr<const Mesh> mesh) : mesh_(std::move(mesh)), rule_(&QuadratureRule::nonlinear(mesh_->dim())) {
  const Mesh& m = *mesh_;
  const int d = m.dim();
  const int nl = d + 1;
  const double fact = d == 2 ? 2.0 : 6.0;
  const Eigen::Index n = size();

  jacobian_.resize(m.num_cells());
  for (std::size_t c = 0; c < m.num_cells(); ++c) {
    const double vol = m.cell_volume(c);
    if (!(vol > 0.0) || !std::isfinite(vol))
      fail(ErrorKind::assembly, "degenerate cell " + std::to_string(c) + " (volume " + std::to_string(vol) + ")");
    jacobian_[c] = vol * fact;
  }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m.num_cells() * nl * nl);
  for (std::size_t c = 0; c < m.num_cells(); ++c) {
    const auto cv = m.cell(c);
    for (int a = 0; a < nl; ++a)
      for (int b = 0; b < nl; ++b) trip.emplace_back(cv[a], cv[b], 0.0);
  }
  pattern_.resize(n, n);
  pattern_.setFromTriplets(trip.begin(), trip.end());
  pattern_.makeCompressed();

  slots_.resize(m.num_cells() * nl * nl);
  const int* outer = pattern_.outerIndexPtr();
  const int* inner = pattern_.innerIndexPtr();
  for (std::size_t c = 0; c < m.num_cells(); ++c) {
    const auto cv = m.cell(c);
    for (int a = 0; a < nl; ++a)
      for (int b = 0; b < nl; ++b) {
        // column cv[b], row cv[a]
        const int* first = inner + outer[cv[b]];
        const int* last = inner + outer[cv[b] + 1];
        const int* pos = std::lower_bound(first, last, cv[a]);
        slots_[(c * nl + a) * nl + b] = static_cast<int>(pos - inner);
      }
  }

  mass_ = pattern_;
  stiffness_ = pattern_;
  double* mv = mass_.valuePtr();
  double* kv = stiffness_.valuePtr();
  for (std::size_t c = 0; c < m.num_cells(); ++c) {
    const double vol = m.cell_volume(c);
    const double diag = vol * 2.0 / ((d + 1) * (d + 2));
    const double off = vol / ((d + 1) * (d + 2));
    const auto g = barycentric_gradients(m, c);
    for (int a = 0; a < nl; ++a)
      for (int b = 0; b < nl; ++b) {
        const int s = slots_[(c * nl + a) * nl + b];
        mv[s] += a == b ? diag : off;
        kv[s] += vol * g.row(a).dot(g.row(b));
      }
  }

  mass_factor_.compute(mass_);
  if (mass_factor_.info() != Eigen::Success) fail(ErrorKind::assembly, "mass matrix is not positive definite");
}

QpValues P1Space::at_qp(const Vector& u) const {
  if (u.size() != size()) fail(ErrorKind::assembly, "at_qp: vector size does not match the space");
  const Mesh& m = *mesh_;
  const int nl = m.dim() + 1;
  const std::size_t nq = rule_->size();
  QpValues out(m.num_cells() * nq);
  for (std::size_t c = 0; c < m.num_cells(); ++c) {
    const auto cv = m.cell(c);
    for (std::size_t q = 0; q < nq; ++q) {
      double s = 0.0;
      for (int a = 0; a < nl; ++a) s += rule_->points[q][a] * u[cv[a]];
      out[c * nq + q] = s;
    }
  }
  return out;
}

SparseMatrix P1Space::weighted_mass(std::span<const double> coeff) const {
  if (coeff.size() != num_qp()) fail(ErrorKind::assembly, "weighted_mass: coefficient count mismatch");
  const Mesh& m = *mesh_;
  const int nl = m.dim() + 1;
  const std::size_t nq = rule_->size();
  SparseMatrix a = pattern_;
  double* av = a.valuePtr();
  for (std::size_t c = 0; c < m.num_cells(); ++c) {
    double local[4][4] = {};
    for (std::size_t q = 0; q < nq; ++q) {
      const double cq = coeff[c * nq + q];
      if (!std::isfinite(cq))
        fail(ErrorKind::assembly, "weighted_mass: non-finite coefficient in cell " + std::to_string(c));
      const double wq = rule_->weights[q] * jacobian_[c] * cq;
      const auto& p = rule_->points[q];
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j) local[i][j] += wq * p[i] * p[j];
    }
    const int* s = &slots_[c * nl * nl];
    for (int i = 0; i < nl; ++i)
      for (int j = 0; j < nl; ++j) av[s[i * nl + j]] += local[i][j];
  }
  return a;
}

Vector P1Space::load(std::span<const double> coeff) const {
  if (coeff.size() != num_qp()) fail(ErrorKind::assembly, "load: coefficient count mismatch");
  const Mesh& m = *mesh_;
  const int nl = m.dim() + 1;
  const std::size_t nq = rule_->size();
  Vector b = Vector::Zero(size());
  for (std::size_t c = 0; c < m.num_cells(); ++c) {
    const auto cv = m.cell(c);
    for (std::size_t q = 0; q < nq; ++q) {
      const double cq = coeff[c * nq + q];
      if (!std::isfinite(cq)) fail(ErrorKind::assembly, "load: non-finite integrand in cell " + std::to_string(c));
      const double wq = rule_->weights[q] * jacobian_[c] * cq;
      for (int i = 0; i < nl; ++i) b[cv[i]] += wq * rule_->points[q][i];
    }
  }
  return b;
}

Vector P1Space::nonlinear_load(const std::function<double(double)>& g, const Vector& u) const {
  QpValues v = at_qp(u);
  for (double& x : v) x = g(x);
  return load(v);
}

double P1Space::integrate(std::span<const double> coeff) const {
  if (coeff.size() != num_qp()) fail(ErrorKind::assembly, "integrate: coefficient count mismatch");
  const std::size_t nq = rule_->size();
  double s = 0.0;
  for (std::size_t c = 0; c < mesh_->num_cells(); ++c) {
    double local = 0.0;
    for (std::size_t q = 0; q < nq; ++q) local += rule_->weights[q] * coeff[c * nq + q];
    s += local * jacobian_[c];
  }
  return s;
}

Vector P1Space::solve_mass(const Vector& b) const { return mass_factor_.solve(b); }

NodalField P1Space::field(Vector values, FieldUnit unit) const {
  if (values.size() != size()) fail(ErrorKind::assembly, "field: vector size does not match the space");
  return NodalField{mesh_->id(), std::move(values), unit};
}

SparseMatrix mass_matrix(const P1Space& space) { return space.mass(); }

SparseMatrix stiffness_matrix(const P1Space& space) { return space.stiffness(); }

SparseMatrix weighted_mass(const P1Space& space, const std::function<double(double)>& g, const Vector& u) {
  QpValues v = space.at_qp(u);
  for (double& x : v) x = g(x);
  return space.weighted_mass(v);
}

Vector nonlinear_load(const P1Space& space, const std::function<double(double)>& g, const NodalField& field) {
  require_on(space.mesh(), field, "nonlinear_load");
  return space.nonlinear_load(g, field.values);
}

double l2_inner(const SparseMatrix& m, const Vector& a, const Vector& b) {
  if (a.size() != m.rows() || b.size() != m.cols()) fail(ErrorKind::assembly, "l2_inner: size mismatch");
  return a.dot(m * b);
}

double l2_norm(const SparseMatrix& m, const Vector& a) { return std::sqrt(std::max(0.0, l2_inner(m, a, a))); }

}  // namespace chg
