// Brute-force dense reimplementation of one time step and its adjoint on
// small 2D meshes. Shares nothing with the library except the mesh geometry
// and the parameter struct.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "chg/mesh.hpp"
#include "chg/model.hpp"

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline double clamp01(double s) { return std::min(1.0, std::max(0.0, s)); }
inline double fp_convex(double r) { return 4 * r * r * r + 2 * r - 6 * std::pow(std::min(0.0, r), 2); }
inline double fp_concave(double r) { return -6 * std::pow(std::max(0.0, r), 2); }
inline double fpp_convex(double r) { return 12 * r * r + 2 - 12 * std::min(0.0, r); }

struct Dense2D {
  struct Cell {
    std::array<int, 3> v;
    double area;
    std::array<std::array<double, 2>, 3> grad;  // of the barycentric functions
  };
  int n = 0;
  std::vector<Cell> cells;
  // Strang-Fix / Dunavant degree-4 rule, weights relative to the area
  std::vector<std::array<double, 3>> qp;
  std::vector<double> qw;

  explicit Dense2D(const chg::Mesh& mesh) : n(static_cast<int>(mesh.num_vertices())) {
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
      Cell k;
      const auto cv = mesh.cell(c);
      for (int i = 0; i < 3; ++i) k.v[i] = cv[i];
      const auto& a = mesh.vertex(k.v[0]);
      const auto& b = mesh.vertex(k.v[1]);
      const auto& d = mesh.vertex(k.v[2]);
      const double det = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
      k.area = std::abs(det) / 2;
      // grad lambda_1 and lambda_2 from the inverse Jacobian; lambda_0 = 1 - both
      k.grad[1] = {(d[1] - a[1]) / det, -(d[0] - a[0]) / det};
      k.grad[2] = {-(b[1] - a[1]) / det, (b[0] - a[0]) / det};
      k.grad[0] = {-k.grad[1][0] - k.grad[2][0], -k.grad[1][1] - k.grad[2][1]};
      cells.push_back(k);
    }
    const double a1 = 0.445948490915965, w1 = 0.223381589678011;
    const double a2 = 0.091576213509771, w2 = 0.109951743655322;
    for (auto [a, w] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
      qp.push_back({1 - 2 * a, a, a});
      qp.push_back({a, 1 - 2 * a, a});
      qp.push_back({a, a, 1 - 2 * a});
      for (int i = 0; i < 3; ++i) qw.push_back(w);
    }
  }

  double at(const Cell& k, const std::array<double, 3>& l, const Vec& u) const {
    return l[0] * u[k.v[0]] + l[1] * u[k.v[1]] + l[2] * u[k.v[2]];
  }
  double dot_grad(const Cell& k, int i, int j) const {
    return k.grad[i][0] * k.grad[j][0] + k.grad[i][1] * k.grad[j][1];
  }
  std::array<double, 2> grad(const Cell& k, const Vec& u) const {
    std::array<double, 2> g{0, 0};
    for (int i = 0; i < 3; ++i)
      for (int d = 0; d < 2; ++d) g[d] += u[k.v[i]] * k.grad[i][d];
    return g;
  }

  Mat mass() const {
    Mat m = Mat::Zero(n, n);
    for (const auto& k : cells)
      for (std::size_t q = 0; q < qw.size(); ++q)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) m(k.v[i], k.v[j]) += k.area * qw[q] * qp[q][i] * qp[q][j];
    return m;
  }
  Mat stiffness() const {
    Mat m = Mat::Zero(n, n);
    for (const auto& k : cells)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(k.v[i], k.v[j]) += k.area * dot_grad(k, i, j);
    return m;
  }

  /// dt-scaled residual of one convex-split step, unknowns [phi; mu; sigma].
  Vec residual(const chg::ModelParams& p, double dt, const Vec& phi_p, const Vec& sigma_p, const Vec& x) const {
    const Vec phi = x.segment(0, n), mu = x.segment(n, n), sigma = x.segment(2 * n, n);
    Vec r = Vec::Zero(3 * n);
    for (const auto& k : cells) {
      const auto gphi = grad(k, phi), gmu = grad(k, mu), gsig = grad(k, sigma);
      for (std::size_t q = 0; q < qw.size(); ++q) {
        const double w = k.area * qw[q];
        const double f = at(k, qp[q], phi), m = at(k, qp[q], mu), s = at(k, qp[q], sigma);
        const double fp = at(k, qp[q], phi_p), sp = at(k, qp[q], sigma_p);
        const double react = p.delta * p.P0 * clamp01(fp) * (s / p.delta + p.chi * (1 - f) - m);
        for (int i = 0; i < 3; ++i) {
          const double chi_i = qp[q][i];
          r[k.v[i]] += w * chi_i * ((f - fp) - dt * react + dt * p.c * clamp01(fp));
          r[n + k.v[i]] += w * chi_i * dt * (-m + p.Gamma * (fp_convex(f) + fp_concave(fp)) - p.chi * s);
          r[2 * n + k.v[i]] += w * chi_i * ((s - sp) + dt * react + dt * p.kappa * (s - 1));
        }
      }
      for (int i = 0; i < 3; ++i) {
        const auto& gi = k.grad[i];
        auto dot = [&](const std::array<double, 2>& g) { return g[0] * gi[0] + g[1] * gi[1]; };
        r[k.v[i]] += k.area * dt * p.D_phi * dot(gmu);
        r[n + k.v[i]] += k.area * dt * p.eps * p.eps * dot(gphi);
        r[2 * n + k.v[i]] += k.area * dt * (p.D_sigma / p.delta * dot(gsig) - p.D_sigma * p.chi * dot(gphi));
      }
    }
    return r;
  }

  /// Derivative of `residual` in x.
  Mat jacobian(const chg::ModelParams& p, double dt, const Vec& phi_p, const Vec& x) const {
    const Vec phi = x.segment(0, n);
    Mat a = Mat::Zero(3 * n, 3 * n);
    for (const auto& k : cells) {
      for (std::size_t q = 0; q < qw.size(); ++q) {
        const double w = k.area * qw[q];
        const double P = clamp01(at(k, qp[q], phi_p));
        const double f = at(k, qp[q], phi);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            const double b = w * qp[q][i] * qp[q][j];
            const int I = k.v[i], J = k.v[j];
            a(I, J) += b * (1 + dt * p.delta * p.P0 * p.chi * P);
            a(I, n + J) += b * dt * p.delta * p.P0 * P;
            a(I, 2 * n + J) += -b * dt * p.P0 * P;
            a(n + I, J) += b * dt * p.Gamma * fpp_convex(f);
            a(n + I, n + J) += -b * dt;
            a(n + I, 2 * n + J) += -b * dt * p.chi;
            a(2 * n + I, J) += -b * dt * p.delta * p.P0 * p.chi * P;
            a(2 * n + I, n + J) += -b * dt * p.delta * p.P0 * P;
            a(2 * n + I, 2 * n + J) += b * (1 + dt * p.P0 * P + dt * p.kappa);
          }
      }
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double s = k.area * dot_grad(k, i, j);
          const int I = k.v[i], J = k.v[j];
          a(I, n + J) += dt * p.D_phi * s;
          a(n + I, J) += dt * p.eps * p.eps * s;
          a(2 * n + I, J) += -dt * p.D_sigma * p.chi * s;
          a(2 * n + I, 2 * n + J) += dt * p.D_sigma / p.delta * s;
        }
    }
    return a;
  }

  /// Newton with the dense analytic Jacobian, started from (phi_p, 0, sigma_p).
  Vec step(const chg::ModelParams& p, double dt, const Vec& phi_p, const Vec& sigma_p) const {
    Vec x(3 * n);
    x << phi_p, Vec::Zero(n), sigma_p;
    for (int it = 0; it < 50; ++it) {
      const Vec r = residual(p, dt, phi_p, sigma_p, x);
      if (r.lpNorm<Eigen::Infinity>() < 1e-15) break;
      x -= jacobian(p, dt, phi_p, x).fullPivLu().solve(r);
    }
    return x;
  }

  /// -(d residual_{n+1} / d (phi_n, sigma_n))^T lam by central differences in
  /// the previous level; the residual is at most quadratic there.
  Vec backward_rhs(const chg::ModelParams& p, double dt, const Vec& phi_n, const Vec& sigma_n, const Vec& x_next,
                   const Vec& lam) const {
    Vec out = Vec::Zero(3 * n);
    const double h = 1e-3;
    for (int j = 0; j < n; ++j) {
      Vec a = phi_n, b = phi_n;
      a[j] += h;
      b[j] -= h;
      out[j] = -lam.dot(residual(p, dt, a, sigma_n, x_next) - residual(p, dt, b, sigma_n, x_next)) / (2 * h);
      Vec c = sigma_n, d = sigma_n;
      c[j] += h;
      d[j] -= h;
      out[2 * n + j] =
          -lam.dot(residual(p, dt, phi_n, c, x_next) - residual(p, dt, phi_n, d, x_next)) / (2 * h);
    }
    return out;
  }
};

}  // namespace oracle
