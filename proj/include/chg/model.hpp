#pragma once

#include <algorithm>
#include <optional>

#include "chg/fem.hpp"

namespace chg {

/// Pointwise death function and its derivative.
struct DeathTerm {
  double (*value)(double) = nullptr;
  double (*derivative)(double) = nullptr;

  /// Same clamp to [0,1] as the proliferation function.
  static DeathTerm clamp();
};

/// Coefficients of the discrete tumour model. Defaults are the
/// biologically feasible values used by every preset (2D units).
struct ModelParams {
  double P0 = 0.1;         // 1/day
  double delta = 0.001;    // dimensionless
  double D_phi = 0.00053;  // mm^3/(N day)
  double D_sigma = 0.001;  // mm^3/(N day)
  double Gamma = 2.5;      // N/mm
  double chi = 0.5;        // dimensionless
  double eps = 0.025;      // (N/mm)^(1/2) mm
  double c = 0.02;         // 1/day, apoptosis + therapy
  double kappa = 0.12;     // 1/day
  /// Optional static nodal field overriding the constant `c`.
  std::optional<Vector> c_field;
  DeathTerm death = DeathTerm::clamp();

  void validate() const;
};

struct PotentialSplit {
  double convex_d1;   // F+'
  double concave_d1;  // F-'
  double convex_d2;   // F+''
  double concave_d2;  // F-''
};

/// Double well F(r) = r^2 (r-1)^2.
double potential(double r);
/// F'(r) = 2r(r-1)(2r-1).
double potential_prime(double r);
inline PotentialSplit potential_split(double r) {
  const double neg = std::min(0.0, r);
  const double pos = std::max(0.0, r);
  return PotentialSplit{4.0 * r * r * r + 2.0 * r - 6.0 * neg * neg, -6.0 * pos * pos, 12.0 * r * r + 2.0 - 12.0 * neg,
                        -12.0 * pos};
}
inline double potential_convex_d1(double r) { return potential_split(r).convex_d1; }
inline double potential_concave_d1(double r) { return potential_split(r).concave_d1; }
inline double potential_convex_d2(double r) { return potential_split(r).convex_d2; }
inline double potential_concave_d2(double r) { return potential_split(r).concave_d2; }

/// P(s) = clamp(s, 0, 1).
double proliferation(double s);
/// 1 on (0,1), 0 elsewhere (including the kinks).
double proliferation_prime(double s);
double death_term(double s);
double death_prime(double s);

/// Q[Gamma F(phi)] + eps^2/2 phi^T K phi.
double gl_energy(const P1Space& space, const ModelParams& params, const Vector& phi);

/// Physical coefficients of the four-phase mixture model, mapped to the
/// a-dimensional form through the nutrient penetration length.
struct Nondimensionalizer {
  double M_phi = 1.0;    // mm^2/(Pa day)
  double M_sigma = 1.0;  // mm^2/(Pa day)
  double P0 = 1.0;       // 1/day
  double Gamma = 1.0;    // Pa
  double chi = 0.0;      // Pa
  double eps = 1.0;      // sqrt(Pa) mm
  double delta = 1.0;    // 1/Pa
  double kappa = 1.0;    // 1/day
  double c = 0.0;        // 1/day

  double penetration_length() const;
  double scale_time(double t) const { return t * P0; }
  double scale_length(double x) const { return x / penetration_length(); }
};

/// Coefficients of the same discrete system written in scaled variables:
/// P0 = Gamma = D_sigma = 1, delta = delta Gamma, D_phi = M_phi / M_sigma,
/// chi = chi / Gamma, eps = eps / (sqrt(Gamma) l_n), c and kappa divided by P0.
ModelParams nondimensionalize(const Nondimensionalizer& nd);

/// Inverse of `nondimensionalize` given the three scales it removes.
Nondimensionalizer dimensionalize(const ModelParams& scaled, double P0, double Gamma, double M_sigma);

}  // namespace chg
