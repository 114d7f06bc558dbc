#include "chg/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chg/error.hpp"

namespace chg {

DeathTerm DeathTerm::clamp() { return DeathTerm{&proliferation, &proliferation_prime}; }

void ModelParams::validate() const {
  const std::pair<const char*, double> nonneg[] = {{"P0", P0},       {"delta", delta}, {"D_phi", D_phi},
                                                   {"D_sigma", D_sigma}, {"Gamma", Gamma}, {"chi", chi},
                                                   {"eps", eps},     {"c", c},         {"kappa", kappa}};
  for (const auto& [name, v] : nonneg)
    if (!(v >= 0.0) || !std::isfinite(v))
      fail(ErrorKind::config, std::string("model parameter ") + name + " must be finite and non-negative");
  if (!(delta > 0.0)) fail(ErrorKind::config, "model parameter delta must be positive");
  if (!(Gamma > 0.0)) fail(ErrorKind::config, "model parameter Gamma must be positive");
  if (!(eps > 0.0)) fail(ErrorKind::config, "model parameter eps must be positive");
  if (c_field && (!c_field->allFinite() || c_field->minCoeff() < 0.0))
    fail(ErrorKind::config, "death-rate field must be finite and non-negative");
  if (!death.value || !death.derivative) fail(ErrorKind::config, "death term is not set");
}

double potential(double r) { return r * r * (r - 1.0) * (r - 1.0); }

double potential_prime(double r) { return 2.0 * r * (r - 1.0) * (2.0 * r - 1.0); }

double proliferation(double s) { return std::clamp(s, 0.0, 1.0); }

double proliferation_prime(double s) { return s > 0.0 && s < 1.0 ? 1.0 : 0.0; }

double death_term(double s) { return proliferation(s); }

double death_prime(double s) { return proliferation_prime(s); }

double gl_energy(const P1Space& space, const ModelParams& params, const Vector& phi) {
  QpValues f = space.at_qp(phi);
  for (double& v : f) v = params.Gamma * potential(v);
  return space.integrate(f) + 0.5 * params.eps * params.eps * phi.dot(space.stiffness() * phi);
}

double Nondimensionalizer::penetration_length() const {
  if (!(P0 > 0.0)) fail(ErrorKind::config, "penetration length needs P0 > 0");
  if (!(M_sigma > 0.0)) fail(ErrorKind::config, "penetration length needs M_sigma > 0");
  return std::sqrt(M_sigma * Gamma / P0);
}

ModelParams nondimensionalize(const Nondimensionalizer& nd) {
  if (!(nd.Gamma > 0.0)) fail(ErrorKind::config, "nondimensionalize needs Gamma > 0");
  const double ln = nd.penetration_length();
  ModelParams p;
  p.P0 = 1.0;
  p.Gamma = 1.0;
  p.D_sigma = 1.0;
  p.delta = nd.delta * nd.Gamma;
  p.D_phi = nd.M_phi / nd.M_sigma;
  p.chi = nd.chi / nd.Gamma;
  p.eps = nd.eps / (std::sqrt(nd.Gamma) * ln);
  p.c = nd.c / nd.P0;
  p.kappa = nd.kappa / nd.P0;
  return p;
}

Nondimensionalizer dimensionalize(const ModelParams& scaled, double P0, double Gamma, double M_sigma) {
  Nondimensionalizer nd;
  nd.P0 = P0;
  nd.Gamma = Gamma;
  nd.M_sigma = M_sigma;
  const double ln = nd.penetration_length();
  nd.M_phi = scaled.D_phi * M_sigma;
  nd.delta = scaled.delta / Gamma;
  nd.chi = scaled.chi * Gamma;
  nd.eps = scaled.eps * std::sqrt(Gamma) * ln;
  nd.c = scaled.c * P0;
  nd.kappa = scaled.kappa * P0;
  return nd;
}

}  // namespace chg
