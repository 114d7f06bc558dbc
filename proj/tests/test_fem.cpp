#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "chg/fem.hpp"
#include "chg/model.hpp"
#include "dense_oracle.hpp"

using namespace chg;

namespace {

std::shared_ptr<const Mesh> box(double lo, double hi, int n) {
  return std::make_shared<const Mesh>(make_box_mesh(2, {lo, lo, 0}, {hi, hi, 0}, {n, n, 1}));
}

std::shared_ptr<const Mesh> right_triangle() {
  return std::make_shared<const Mesh>(2, Point{0, 0, 0}, Point{1, 1, 0},
                                      std::vector<Point>{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}},
                                      std::vector<CellVertices>{{0, 1, 2, -1}});
}

Vector random_unit(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("quadrature rules") {
  for (int dim : {2, 3}) {
    const auto& q = QuadratureRule::nonlinear(dim);
    double s = 0;
    for (double w : q.weights) s += w;
    CHECK(s == doctest::Approx(q.reference_volume()).epsilon(1e-15));
    // integral of l0^2 l1^2 over the reference simplex is 2!2! d! / (d+4)! times its volume factor
    double v = 0;
    for (std::size_t k = 0; k < q.size(); ++k) v += q.weights[k] * std::pow(q.points[k][0] * q.points[k][1], 2);
    const double exact = dim == 2 ? 4.0 / 720.0 : 4.0 / 5040.0;
    CHECK(v == doctest::Approx(exact).epsilon(1e-13));
  }
  CHECK(QuadratureRule::nonlinear(2).size() == 6);
  CHECK(QuadratureRule::nonlinear(3).size() == 14);
}

TEST_CASE("element matrices on the unit right triangle") {
  const P1Space s(right_triangle());
  const Eigen::MatrixXd m(s.mass());
  Eigen::Matrix3d me;
  me << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  CHECK((m - me / 24.0).cwiseAbs().maxCoeff() < 1e-16);
  const Eigen::MatrixXd k(s.stiffness());
  Eigen::Matrix3d ke;
  ke << 1, -0.5, -0.5, -0.5, 0.5, 0, -0.5, 0, 0.5;
  CHECK((k - ke).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("mass and stiffness properties") {
  for (int dim : {2, 3}) {
    auto mesh = std::make_shared<const Mesh>(dim == 2 ? make_box_mesh(2, {-5, -5, 0}, {5, 5, 0}, {7, 5, 1})
                                                      : make_box_mesh(3, {0, 0, 0}, {1, 2, 1}, {2, 3, 2}));
    const P1Space s(mesh);
    CHECK(s.mass().sum() == doctest::Approx(mesh->total_volume()).epsilon(1e-13));
    const Vector ones = Vector::Ones(s.size());
    CHECK((s.stiffness() * ones).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(l2_inner(s.mass(), ones, ones) == doctest::Approx(mesh->total_volume()).epsilon(1e-13));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int t = 0; t < 100; ++t) {
      Vector x(s.size());
      for (auto& v : x) v = g(rng);
      CHECK(x.dot(s.stiffness() * x) >= -1e-12);
    }
  }
}

TEST_CASE("dense quadrature oracle") {
  auto mesh = box(0, 1, 1);
  const P1Space s(mesh);
  const oracle::Dense2D d(*mesh);
  CHECK((Eigen::MatrixXd(s.mass()) - d.mass()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((Eigen::MatrixXd(s.stiffness()) - d.stiffness()).cwiseAbs().maxCoeff() < 1e-15);

  auto big = box(-5, 5, 4);
  const P1Space sb(big);
  const oracle::Dense2D db(*big);
  std::mt19937_64 rng(5);
  const Vector a = random_unit(sb.size(), rng), b = random_unit(sb.size(), rng);
  CHECK(l2_inner(sb.mass(), a, b) == doctest::Approx(a.dot(db.mass() * b)).epsilon(1e-12));
  CHECK(l2_inner(sb.mass(), Vector::Ones(sb.size()), Vector::Ones(sb.size())) ==
        doctest::Approx(100.0).epsilon(1e-13));
  // hats at (-5,-5) and (5,5) have disjoint supports
  Vector h0 = Vector::Zero(sb.size()), h1 = Vector::Zero(sb.size());
  h0[0] = 1;
  h1[sb.size() - 1] = 1;
  CHECK(l2_inner(sb.mass(), h0, h1) == 0.0);
}

TEST_CASE("weighted mass and nonlinear load") {
  auto mesh = box(-5, 5, 5);
  const P1Space s(mesh);
  const std::vector<double> one(s.num_qp(), 1.0), zero(s.num_qp(), 0.0);
  CHECK((s.weighted_mass(one) - s.mass()).cwiseAbs().sum() < 1e-12);
  CHECK(s.weighted_mass(zero).cwiseAbs().sum() == 0.0);

  std::mt19937_64 rng(7);
  const Vector phi = random_unit(s.size(), rng);
  const SparseMatrix a = weighted_mass(s, proliferation, phi);
  const SparseMatrix b = weighted_mass(s, [](double v) { return v; }, phi);
  CHECK((a - b).cwiseAbs().sum() < 1e-13);

  const NodalField f = s.field(phi);
  const Vector lumped = nonlinear_load(s, [](double) { return 1.0; }, f);
  CHECK((lumped - s.mass() * Vector::Ones(s.size())).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((nonlinear_load(s, [](double v) { return v; }, f) - s.mass() * phi).cwiseAbs().maxCoeff() < 1e-14);

  // Jacobian of the F+' load is the F+'' weighted mass
  const Vector x = 1.4 * phi - 0.2 * Vector::Ones(s.size());
  const SparseMatrix jac = weighted_mass(s, potential_convex_d2, x);
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < s.size(); j += 4) {
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Vector fd = (s.nonlinear_load(potential_convex_d1, xp) - s.nonlinear_load(potential_convex_d1, xm)) / (2 * h);
    const Vector col = jac.col(j);
    CHECK((fd - col).norm() <= 1e-6 * col.norm());
  }
}

TEST_CASE("mass solve") {
  auto mesh = box(-5, 5, 6);
  const P1Space s(mesh);
  std::mt19937_64 rng(11);
  const Vector x = random_unit(s.size(), rng);
  CHECK((s.solve_mass(s.mass() * x) - x).cwiseAbs().maxCoeff() < 1e-12);
}
