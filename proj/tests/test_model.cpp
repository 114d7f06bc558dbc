#include <doctest.h>

#include <cmath>

#include "chg/error.hpp"
#include "chg/model.hpp"

using namespace chg;

TEST_CASE("double well and its splitting") {
  for (double r : {0.0, 0.5, 1.0}) CHECK(potential_prime(r) == 0.0);
  const auto s1 = potential_split(1.0);
  CHECK(s1.convex_d1 == 6.0);
  CHECK(s1.concave_d1 == -6.0);
  CHECK(s1.convex_d2 == 14.0);
  CHECK(s1.concave_d2 == -12.0);
  CHECK(s1.convex_d2 + s1.concave_d2 == 2.0);
  const auto sm = potential_split(-1.0);
  CHECK(sm.convex_d1 == -12.0);
  CHECK(sm.concave_d1 == 0.0);
  CHECK(potential_prime(-1.0) == -12.0);
  CHECK(potential(0.5) == 0.0625);

  for (double r = -1.5; r <= 2.5; r += 0.0625) {
    const auto s = potential_split(r);
    CHECK(s.convex_d1 + s.concave_d1 == doctest::Approx(potential_prime(r)).epsilon(1e-14));
    CHECK(s.convex_d2 >= 0.0);
    CHECK(s.concave_d2 <= 0.0);
    const double h = 1e-6;
    CHECK((potential(r + h) - potential(r - h)) / (2 * h) == doctest::Approx(potential_prime(r)).epsilon(1e-8));
  }
}

TEST_CASE("proliferation and death") {
  CHECK(proliferation(0.5) == 0.5);
  CHECK(proliferation_prime(0.5) == 1.0);
  CHECK(proliferation(-1.0) == 0.0);
  CHECK(proliferation(2.0) == 1.0);
  CHECK(proliferation_prime(2.0) == 0.0);
  CHECK(death_term(0.3) == 0.3);
  CHECK(death_prime(1.5) == 0.0);

  // P(s) - P(-2) against the midpoint rule for the integral of P'
  double integral = 0.0;
  const int n = 40000;
  const double h = 4.0 / n;
  for (int i = 0; i < n; ++i) {
    integral += h * proliferation_prime(-2.0 + (i + 0.5) * h);
    const double s = -2.0 + (i + 1) * h;
    if ((i + 1) % 1000 == 0) CHECK(std::abs(proliferation(s) - proliferation(-2.0) - integral) < 1e-12);
  }
}

TEST_CASE("Ginzburg-Landau energy of constants") {
  auto mesh = std::make_shared<const Mesh>(make_box_mesh(2, {-5, -5, 0}, {5, 5, 0}, {8, 8, 1}));
  const P1Space s(mesh);
  const ModelParams p;
  CHECK(gl_energy(s, p, Vector::Zero(s.size())) == 0.0);
  CHECK(gl_energy(s, p, Vector::Ones(s.size())) == doctest::Approx(0.0).scale(1e-12));
  CHECK(gl_energy(s, p, Vector::Constant(s.size(), 0.5)) == doctest::Approx(15.625).epsilon(1e-13));
}

TEST_CASE("parameter defaults and validation") {
  const ModelParams p;
  CHECK(p.P0 == 0.1);
  CHECK(p.delta == 0.001);
  CHECK(p.D_phi == 0.00053);
  CHECK(p.D_sigma == 0.001);
  CHECK(p.Gamma == 2.5);
  CHECK(p.chi == 0.5);
  CHECK(p.eps == 0.025);
  CHECK(p.c == 0.02);
  CHECK(p.kappa == 0.12);
  p.validate();
  ModelParams bad = p;
  bad.delta = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = p;
  bad.kappa = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("a-dimensionalisation") {
  Nondimensionalizer nd;
  nd.M_phi = 2.0;
  nd.M_sigma = 2.0;
  nd.P0 = 0.5;
  nd.Gamma = 1.0;
  const double ln = nd.penetration_length();
  CHECK(ln == doctest::Approx(2.0));
  nd.eps = ln * std::sqrt(nd.Gamma);
  nd.kappa = nd.P0;
  nd.chi = 0.0;
  const ModelParams s = nondimensionalize(nd);
  CHECK(s.eps == doctest::Approx(1.0));
  CHECK(s.kappa == doctest::Approx(1.0));
  CHECK(s.chi == 0.0);
  CHECK(s.P0 == 1.0);
  CHECK(s.Gamma == 1.0);
  CHECK(s.D_sigma == 1.0);
  CHECK(s.D_phi == doctest::Approx(1.0));

  nd.Gamma = 3.0;
  nd.chi = 1.5;
  nd.delta = 0.2;
  nd.c = 0.05;
  const ModelParams t = nondimensionalize(nd);
  const Nondimensionalizer back = dimensionalize(t, nd.P0, nd.Gamma, nd.M_sigma);
  CHECK(back.M_phi == doctest::Approx(nd.M_phi));
  CHECK(back.chi == doctest::Approx(nd.chi));
  CHECK(back.delta == doctest::Approx(nd.delta));
  CHECK(back.eps == doctest::Approx(nd.eps));
  CHECK(back.c == doctest::Approx(nd.c));
  CHECK(back.kappa == doctest::Approx(nd.kappa));
}
