#include "chg/forward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chg/error.hpp"

namespace chg {

void TimeGrid::validate() const {
  if (N < 1) fail(ErrorKind::config, "time grid needs at least one step");
  if (!(T > 0.0) || !std::isfinite(T)) fail(ErrorKind::config, "final time must be positive");
}

TimeGrid TimeGrid::from_step(double T, double dt) {
  if (!(dt > 0.0)) fail(ErrorKind::config, "time step must be positive");
  const double steps = T / dt;
  const long n = std::lround(steps);
  if (n < 1 || std::abs(steps - static_cast<double>(n)) > 1e-8 * std::max(1.0, steps))
    fail(ErrorKind::config, "final time must be a whole number of time steps");
  TimeGrid g{T, static_cast<int>(n)};
  g.validate();
  return g;
}

namespace {

QpValues death_coefficient(const P1Space& space, const ModelParams& params, const QpValues& phi_qp) {
  QpValues out(phi_qp.size());
  if (params.c_field) {
    const QpValues c = space.at_qp(*params.c_field);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c[i] * params.death.value(phi_qp[i]);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = params.c * params.death.value(phi_qp[i]);
  }
  return out;
}

StepState extrapolate(const Trajectory& t, int s) {
  // levels s-1, s-2, s-3 that exist; mu counts from level 1
  auto lvl = [&](const std::vector<Vector>& v, int back) -> const Vector& { return v[s - 1 - back]; };
  const int real_mu = s - 1;
  const int order = std::min(s, 3);
  auto ex = [&](const std::vector<Vector>& v, int levels) -> Vector {
    if (levels >= 3) return 3.0 * lvl(v, 0) - 3.0 * lvl(v, 1) + lvl(v, 2);
    if (levels == 2) return 2.0 * lvl(v, 0) - lvl(v, 1);
    return lvl(v, 0);
  };
  return StepState{ex(t.phi, order), ex(t.mu, std::max(1, std::min(order, real_mu))), ex(t.sigma, order)};
}

}  // namespace

StepSystem::StepSystem(const P1Space& space, const ModelParams& params, const BlockLayout& layout,
                       const Vector& phi_prev, const Vector& sigma_prev, double dt)
    : space_(space), params_(params), layout_(layout), dt_(dt), n_(space.size()) {
  if (!(dt > 0.0)) fail(ErrorKind::config, "time step must be positive");
  const auto& p = params;
  const SparseMatrix& m = space.mass();
  const SparseMatrix& k = space.stiffness();

  const QpValues phi_prev_qp = space.at_qp(phi_prev);
  QpValues prolif(phi_prev_qp.size());
  QpValues concave(phi_prev_qp.size());
  for (std::size_t i = 0; i < prolif.size(); ++i) {
    prolif[i] = proliferation(phi_prev_qp[i]);
    concave[i] = potential_split(phi_prev_qp[i]).concave_d1;
  }
  const SparseMatrix wp = space.weighted_mass(prolif);
  const Vector wp_one = space.load(prolif);
  const Vector death = space.load(death_coefficient(space, params, phi_prev_qp));
  const Vector ones = Vector::Ones(n_);
  const Vector m_one = m * ones;

  // Every block lives on the mesh pattern, so combine the value arrays.
  const double rate = dt * p.delta * p.P0;
  const double* mv = m.valuePtr();
  const double* kv = k.valuePtr();
  const double* wv = wp.valuePtr();
  auto combine = [&](SparseMatrix& a, double cm, double ck, double cw) {
    a = m;
    double* av = a.valuePtr();
    for (Eigen::Index i = 0; i < a.nonZeros(); ++i) av[i] = cm * mv[i] + ck * kv[i] + cw * wv[i];
  };
  combine(a_pp_, 1.0, 0.0, rate * p.chi);
  combine(a_pm_, 0.0, dt * p.D_phi, rate);
  combine(a_ps_, 0.0, 0.0, -dt * p.P0);
  combine(a_mp_lin_, 0.0, dt * p.eps * p.eps, 0.0);
  combine(a_mm_, -dt, 0.0, 0.0);
  combine(a_ms_, -dt * p.chi, 0.0, 0.0);
  combine(a_sp_, 0.0, -dt * p.D_sigma * p.chi, -rate * p.chi);
  combine(a_sm_, 0.0, 0.0, -rate);
  combine(a_ss_, 1.0 + dt * p.kappa, dt * p.D_sigma / p.delta, dt * p.P0);

  c_phi_ = m * phi_prev + (rate * p.chi) * wp_one - dt * death;
  c_mu_ = -(dt * p.Gamma) * space.load(concave);
  c_sigma_ = m * sigma_prev - (rate * p.chi) * wp_one + (dt * p.kappa) * m_one;
}

Vector StepSystem::pack(const Vector& phi, const Vector& mu, const Vector& sigma) const {
  Vector x(3 * n_);
  x << phi, mu, sigma;
  return x;
}

StepState StepSystem::unpack(const Vector& x) const {
  return StepState{x.segment(0, n_), x.segment(n_, n_), x.segment(2 * n_, n_)};
}

Vector StepSystem::residual(const Vector& x) const {
  const auto phi = x.segment(0, n_);
  const auto mu = x.segment(n_, n_);
  const auto sigma = x.segment(2 * n_, n_);
  Vector r(3 * n_);
  r.segment(0, n_) = a_pp_ * phi + a_pm_ * mu + a_ps_ * sigma - c_phi_;
  QpValues convex = space_.at_qp(phi);
  for (double& v : convex) v = potential_split(v).convex_d1;
  r.segment(n_, n_) = a_mp_lin_ * phi + a_mm_ * mu + a_ms_ * sigma + (dt_ * params_.Gamma) * space_.load(convex) - c_mu_;
  r.segment(2 * n_, n_) = a_sp_ * phi + a_sm_ * mu + a_ss_ * sigma - c_sigma_;
  return r;
}

void StepSystem::fill(const Vector& phi, bool transpose) {
  QpValues convex = space_.at_qp(phi);
  for (double& v : convex) v = potential_split(v).convex_d2;
  a_mp_ = space_.weighted_mass(convex);
  const double g = dt_ * params_.Gamma;
  const double* lin = a_mp_lin_.valuePtr();
  double* out = a_mp_.valuePtr();
  for (Eigen::Index i = 0; i < a_mp_.nonZeros(); ++i) out[i] = lin[i] + g * out[i];
  layout_.fill({&a_pp_, &a_pm_, &a_ps_, &a_mp_, &a_mm_, &a_ms_, &a_sp_, &a_sm_, &a_ss_}, mono_, transpose);
}

const SparseMatrix& StepSystem::jacobian(const Vector& phi) {
  fill(phi.head(n_), false);
  return mono_;
}

const SparseMatrix& StepSystem::jacobian_transposed(const Vector& phi) {
  fill(phi.head(n_), true);
  return mono_;
}

ForwardSolver::ForwardSolver(std::shared_ptr<const P1Space> space, ModelParams params, SolverConfig linear,
                             NewtonConfig newton)
    : space_(std::move(space)),
      params_(std::move(params)),
      linear_(linear),
      newton_(newton),
      layout_(space_->pattern()) {
  params_.validate();
  linear_.validate();
  if (params_.c_field && params_.c_field->size() != space_->size())
    fail(ErrorKind::config, "death-rate field does not match the mesh");
}

ForwardSolver::StepResult ForwardSolver::step(const Vector& phi_prev, const Vector& sigma_prev, double dt,
                                              const StepState* guess, LinearSolver* solver) const {
  const Eigen::Index n = space_->size();
  if (phi_prev.size() != n || sigma_prev.size() != n) fail(ErrorKind::geometry, "forward step: field size mismatch");
  StepSystem sys(*space_, params_, layout_, phi_prev, sigma_prev, dt);
  const Vector x0 = guess ? sys.pack(guess->phi, guess->mu, guess->sigma)
                          : sys.pack(phi_prev, Vector::Zero(n), sigma_prev);
  LinearSolver local(linear_);
  auto result = newton_solve([&](const Vector& x) { return sys.residual(x); },
                             [&](const Vector& x) -> SparseMatrix { return sys.jacobian(x); },
                             x0, newton_.tol, newton_.max_iterations,
                             solver ? solver : &local);
  StepState state = sys.unpack(result.x);
  if (!state.phi.allFinite() || !state.mu.allFinite() || !state.sigma.allFinite())
    fail(ErrorKind::nonlinear_solver, "forward step produced non-finite values");
  return StepResult{std::move(state), std::move(result)};
}

Trajectory ForwardSolver::run(const NodalField& phi0, const NodalField& sigma0, const TimeGrid& grid) const {
  require_on(space_->mesh(), phi0, "run_forward (phi0)");
  require_on(space_->mesh(), sigma0, "run_forward (sigma0)");
  return run(phi0.values, sigma0.values, grid);
}

Trajectory ForwardSolver::run(const Vector& phi0, const Vector& sigma0, const TimeGrid& grid) const {
  grid.validate();
  const Eigen::Index n = space_->size();
  if (phi0.size() != n || sigma0.size() != n) fail(ErrorKind::geometry, "run_forward: initial data size mismatch");
  Trajectory traj;
  traj.mesh_id = space_->mesh().id();
  traj.grid = grid;
  traj.phi.reserve(grid.N + 1);
  traj.mu.reserve(grid.N + 1);
  traj.sigma.reserve(grid.N + 1);
  traj.phi.push_back(clamp_unit(phi0));
  traj.mu.push_back(Vector::Zero(n));
  traj.sigma.push_back(clamp_unit(sigma0));
  LinearSolver solver(linear_);
  const double dt = grid.dt();
  for (int s = 1; s <= grid.N; ++s) {
    try {
      // Polynomial extrapolation of the last levels (mu^0 is not a real
      // level); if Newton fails from there, retry from the previous level.
      const StepState guess = extrapolate(traj, s);
      StepResult r;
      try {
        r = step(traj.phi.back(), traj.sigma.back(), dt, &guess, &solver);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::nonlinear_solver && e.kind() != ErrorKind::linear_solver) throw;
        const StepState prev{traj.phi.back(), traj.mu.back(), traj.sigma.back()};
        r = step(traj.phi.back(), traj.sigma.back(), dt, &prev, &solver);
      }
      traj.newton_iterations += r.newton.iterations;
      traj.phi.push_back(std::move(r.state.phi));
      traj.mu.push_back(std::move(r.state.mu));
      traj.sigma.push_back(std::move(r.state.sigma));
    } catch (const Error& e) {
      std::string msg = "forward step " + std::to_string(s) + ": " + e.what();
      if (e.kind() == ErrorKind::nonlinear_solver) msg += " (try a smaller time step)";
      throw Error(e.kind(), msg);
    }
  }
  return traj;
}

NodalField make_smoothed_disc(const Mesh& mesh, const Point& center, double radius, double interface_width) {
  if (!(radius > 0.0) || !(interface_width > 0.0))
    fail(ErrorKind::config, "smoothed disc needs positive radius and interface width");
  NodalField f{mesh.id(), Vector(static_cast<Eigen::Index>(mesh.num_vertices())), FieldUnit::dimensionless};
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    const Point& x = mesh.vertex(i);
    double r2 = 0.0;
    for (int k = 0; k < mesh.dim(); ++k) r2 += (x[k] - center[k]) * (x[k] - center[k]);
    f.values[i] = 0.5 * (1.0 - std::tanh((std::sqrt(r2) - radius) / (std::sqrt(2.0) * interface_width)));
  }
  return f;
}

NodalField make_smoothed_square(const Mesh& mesh, const Point& center, double side, double plateau_value,
                                double interface_width) {
  if (!(side > 0.0) || !(interface_width > 0.0)) fail(ErrorKind::config, "smoothed square needs positive side and width");
  if (!(plateau_value > 0.0 && plateau_value <= 1.0)) fail(ErrorKind::config, "square plateau must lie in (0,1]");
  NodalField f{mesh.id(), Vector(static_cast<Eigen::Index>(mesh.num_vertices())), FieldUnit::dimensionless};
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    const Point& x = mesh.vertex(i);
    double v = plateau_value;
    for (int k = 0; k < mesh.dim(); ++k)
      v *= 0.5 * (1.0 - std::tanh((std::abs(x[k] - center[k]) - 0.5 * side) / (std::sqrt(2.0) * interface_width)));
    f.values[i] = v;
  }
  return f;
}

NodalField stationary_nutrient(const P1Space& space, const ModelParams& params, const NodalField& phi0,
                               const SolverConfig& cfg) {
  require_on(space.mesh(), phi0, "stationary_nutrient");
  params.validate();
  QpValues prolif = space.at_qp(phi0.values);
  for (double& v : prolif) v = proliferation(v);
  const SparseMatrix a = (params.D_sigma / params.delta) * space.stiffness() + params.P0 * space.weighted_mass(prolif) +
                         params.kappa * space.mass();
  const Vector rhs = params.kappa * (space.mass() * Vector::Ones(space.size())) +
                     (params.D_sigma * params.chi) * (space.stiffness() * phi0.values);
  LinearSolver solver(cfg);
  try {
    solver.factorize(a);
  } catch (const Error& e) {
    throw Error(ErrorKind::linear_solver, std::string("stationary nutrient system is singular: ") + e.what());
  }
  return space.field(clamp_unit(solver.solve(rhs)));
}

Vector clamp_unit(const Vector& v) { return v.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace chg
