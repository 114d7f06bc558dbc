#include "chg/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "chg/error.hpp"

namespace chg {

void OptimConfig::validate() const {
  const std::pair<const char*, double> nonneg[] = {
      {"lambda1", lambda1}, {"lambda2", lambda2}, {"alpha1", alpha1}, {"alpha2", alpha2}};
  for (const auto& [name, v] : nonneg)
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::config, std::string(name) + " must be finite and non-negative");
  if (lambda1 == 0.0 && lambda2 == 0.0 && alpha1 == 0.0 && alpha2 == 0.0)
    fail(ErrorKind::config, "lambda1, lambda2, alpha1 and alpha2 cannot all be zero");
  if (!(rho > 0.0 && rho < 1.0)) fail(ErrorKind::config, "rho must lie in (0,1)");
  if (!(iota > 0.0 && iota < 1.0)) fail(ErrorKind::config, "iota must lie in (0,1)");
  if (tol_v && !(*tol_v > 0.0)) fail(ErrorKind::config, "tol_v must be positive");
  if (max_iterations < 1) fail(ErrorKind::config, "max_iterations must be at least 1");
  if (m_max < 0) fail(ErrorKind::config, "m_max must be non-negative");
  if (!(theta > 0.0 && theta <= 1.0)) fail(ErrorKind::config, "theta must lie in (0,1]");
  if (max_generation < 0) fail(ErrorKind::config, "max_generation must be non-negative");
}

double OptimConfig::stopping_tolerance(double domain_volume) const {
  return tol_v ? *tol_v : 1e-4 * std::sqrt(domain_volume);
}

CostBreakdown cost(const P1Space& space, const ModelParams& params, const OptimConfig& cfg, const Trajectory& traj,
                   const Vector& phi0, const Vector& sigma0, const Targets& targets) {
  if (traj.mesh_id != space.mesh().id()) fail(ErrorKind::geometry, "cost: trajectory is on another mesh");
  require_on(space.mesh(), targets.phi, "cost (phi target)");
  const SparseMatrix& m = space.mass();
  const int N = traj.steps();
  CostBreakdown c;
  if (cfg.lambda1 != 0.0) {
    const Vector e = traj.phi[N] - targets.phi.values;
    c.data_phi = 0.5 * cfg.lambda1 * l2_inner(m, e, e);
  }
  if (cfg.lambda2 != 0.0) {
    if (!targets.sigma) fail(ErrorKind::config, "cost: lambda2 > 0 needs a sigma target");
    require_on(space.mesh(), *targets.sigma, "cost (sigma target)");
    const Vector e = traj.sigma[N] - targets.sigma->values;
    c.data_sigma = 0.5 * cfg.lambda2 * l2_inner(m, e, e);
  }
  if (cfg.alpha1 != 0.0) c.reg_phi = cfg.alpha1 * gl_energy(space, params, phi0);
  if (cfg.alpha2 != 0.0) c.reg_sigma = 0.5 * cfg.alpha2 * l2_inner(m, sigma0, sigma0);
  return c;
}

NodalField gradient_phi(const P1Space& space, const ModelParams& params, const OptimConfig& cfg,
                        const AdjointTrajectory& adj, const Trajectory& traj) {
  if (adj.mesh_id != traj.mesh_id || traj.mesh_id != space.mesh().id())
    fail(ErrorKind::geometry, "gradient_phi: trajectories are on another mesh");
  if (adj.steps() != traj.steps()) fail(ErrorKind::config, "gradient_phi: adjoint and forward lengths differ");
  const Vector& phi0 = traj.phi[0];
  Vector g = backward_coupling(space, params, traj.grid.dt(), traj, 0, adj.at(1));
  if (cfg.alpha1 != 0.0)
    g += cfg.alpha1 * (params.Gamma * space.nonlinear_load(potential_prime, phi0) +
                       params.eps * params.eps * (space.stiffness() * phi0));
  return space.field(space.solve_mass(g));
}

NodalField gradient_sigma(const P1Space& space, const OptimConfig& cfg, const AdjointTrajectory& adj,
                          const Vector& sigma0) {
  if (adj.mesh_id != space.mesh().id()) fail(ErrorKind::geometry, "gradient_sigma: adjoint is on another mesh");
  if (sigma0.size() != space.size()) fail(ErrorKind::geometry, "gradient_sigma: field size mismatch");
  return space.field(adj.r.at(1) + cfg.alpha2 * sigma0);
}

Vector project_step(const Vector& field, const Vector& grad, double rho) {
  if (field.size() != grad.size()) fail(ErrorKind::geometry, "project_step: size mismatch");
  if (!(rho > 0.0)) fail(ErrorKind::config, "project_step: rho must be positive");
  return clamp_unit(field - rho * grad);
}

BacktrackResult backtrack(const std::function<double(double)>& value, double value0, double slope, double rho,
                          double iota, int m_max) {
  if (slope > 0.0) {
    std::ostringstream os;
    os << "line search: direction is not a descent direction (pairing " << slope << ")";
    fail(ErrorKind::line_search, os.str());
  }
  for (int m = 0; m <= m_max; ++m) {
    const double t = std::pow(rho, m);
    const double v = value(t);
    if (v <= value0 + t * iota * slope) return BacktrackResult{m, t, v};
  }
  std::ostringstream os;
  os << "line search failed after " << m_max << " reductions (pairing " << slope << ", J " << value0 << ")";
  fail(ErrorKind::line_search, os.str());
}

ArmijoResult armijo_search(const ForwardSolver& fwd, const OptimConfig& cfg, const TimeGrid& grid,
                           const Targets& targets, const Vector& phi0, const Vector& sigma0, const Vector& v_phi,
                           const Vector& v_sigma, double slope, double J0) {
  ArmijoResult best;
  int newton = 0;
  auto value = [&](double t) {
    Vector phi = phi0 + t * v_phi;
    Vector sigma = sigma0 + t * v_sigma;
    Trajectory traj = fwd.run(phi, sigma, grid);
    newton += traj.newton_iterations;
    const CostBreakdown c = cost(fwd.space(), fwd.params(), cfg, traj, phi, sigma, targets);
    best.phi0 = std::move(phi);
    best.sigma0 = std::move(sigma);
    best.traj = std::move(traj);
    best.cost = c;
    return c.total();
  };
  const BacktrackResult r = backtrack(value, J0, slope, cfg.rho, cfg.iota, cfg.m_max);
  best.m = r.m;
  best.step = r.step;
  best.newton_iterations = newton;
  return best;
}

bool ConvergenceRecord::monotone() const {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (!rows[i].mesh_changed && rows[i].cost.total() > rows[i - 1].cost.total()) return false;
  return true;
}

namespace {

struct Discretisation {
  std::shared_ptr<const Mesh> mesh;
  std::shared_ptr<const P1Space> space;
  std::unique_ptr<ForwardSolver> fwd;
};

Discretisation make_discretisation(std::shared_ptr<const Mesh> mesh, const ModelParams& params,
                                   const ReconstructOptions& opts) {
  Discretisation d;
  d.mesh = std::move(mesh);
  d.space = std::make_shared<const P1Space>(d.mesh);
  d.fwd = std::make_unique<ForwardSolver>(d.space, params, opts.linear, opts.newton);
  return d;
}

void check_admissible(const Vector& v, const char* what) {
  if (v.size() > 0 && (v.minCoeff() < 0.0 || v.maxCoeff() > 1.0))
    fail(ErrorKind::nonlinear_solver, std::string(what) + " left the admissible box");
}

}  // namespace

Reconstruction reconstruct(std::shared_ptr<const Mesh> mesh, const NodalField& phi0_in, const NodalField& sigma0_in,
                           const Targets& targets_in, const ModelParams& params_in, const TimeGrid& grid,
                           const OptimConfig& cfg, const ReconstructOptions& opts) {
  cfg.validate();
  grid.validate();
  require_on(*mesh, phi0_in, "reconstruct (phi0)");
  require_on(*mesh, sigma0_in, "reconstruct (sigma0)");
  require_on(*mesh, targets_in.phi, "reconstruct (phi target)");
  if (cfg.lambda2 != 0.0 && !targets_in.sigma) fail(ErrorKind::config, "reconstruct: lambda2 > 0 needs a sigma target");
  if (targets_in.sigma) require_on(*mesh, *targets_in.sigma, "reconstruct (sigma target)");

  using clock = std::chrono::steady_clock;
  ModelParams params = params_in;
  Targets targets = targets_in;
  Discretisation d = make_discretisation(mesh, params, opts);
  Vector phi = clamp_unit(phi0_in.values);
  Vector sigma = clamp_unit(sigma0_in.values);
  const double tol = cfg.stopping_tolerance(d.mesh->total_volume());

  Trajectory traj = d.fwd->run(phi, sigma, grid);
  CostBreakdown J = cost(*d.space, params, cfg, traj, phi, sigma, targets);
  int pending_newton = traj.newton_iterations;

  Reconstruction out;
  ConvergenceRecord& rec = out.record;
  for (int k = 1;; ++k) {
    const auto start = clock::now();
    IterationRecord row;
    row.k = k;
    try {
      if (cfg.refine && d.mesh->dim() == 2) {
        const ErrorIndicator eta = jump_indicator(*d.mesh, d.space->field(phi));
        std::vector<int> marked = doerfler_mark(eta, cfg.theta);
        std::erase_if(marked, [&](int c) { return d.mesh->generation(c) >= cfg.max_generation; });
        if (!marked.empty()) {
          auto fine = std::make_shared<const Mesh>(refine(*d.mesh, marked));
          const Mesh& from = *d.mesh;
          phi = clamp_unit(transfer(d.space->field(phi), from, *fine).values);
          sigma = clamp_unit(transfer(d.space->field(sigma), from, *fine).values);
          targets.phi = transfer(targets.phi, from, *fine);
          if (targets.sigma) targets.sigma = transfer(*targets.sigma, from, *fine);
          if (params.c_field) params.c_field = transfer(d.space->field(*params.c_field), from, *fine).values;
          d = make_discretisation(fine, params, opts);
          traj = d.fwd->run(phi, sigma, grid);
          J = cost(*d.space, params, cfg, traj, phi, sigma, targets);
          pending_newton += traj.newton_iterations;
          row.mesh_changed = true;
        }
      }
      const P1Space& space = *d.space;
      const SparseMatrix& m = space.mass();

      const AdjointTrajectory adj = run_adjoint(*d.fwd, traj, targets.phi.values,
                                                targets.sigma ? &targets.sigma->values : nullptr, cfg.weights());
      const Vector g_phi = gradient_phi(space, params, cfg, adj, traj).values;
      const Vector v_phi = project_step(phi, g_phi, cfg.rho) - phi;
      Vector g_sigma = Vector::Zero(space.size());
      Vector v_sigma = Vector::Zero(space.size());
      if (cfg.update_sigma) {
        g_sigma = gradient_sigma(space, cfg, adj, sigma).values;
        v_sigma = project_step(sigma, g_sigma, cfg.rho) - sigma;
      }

      row.cost = J;
      row.v_phi_norm = l2_norm(m, v_phi);
      row.v_sigma_norm = l2_norm(m, v_sigma);
      row.cells = d.mesh->num_cells();

      if (row.v_phi_norm + row.v_sigma_norm < tol) {
        rec.converged = true;
        rec.stop_reason = "tol_v";
      } else {
        const double slope = l2_inner(m, v_phi, g_phi) + l2_inner(m, v_sigma, g_sigma);
        ArmijoResult a = armijo_search(*d.fwd, cfg, grid, targets, phi, sigma, v_phi, v_sigma, slope, J.total());
        phi = clamp_unit(a.phi0);
        sigma = clamp_unit(a.sigma0);
        if ((phi - a.phi0).lpNorm<Eigen::Infinity>() > 1e-12 || (sigma - a.sigma0).lpNorm<Eigen::Infinity>() > 1e-12)
          fail(ErrorKind::nonlinear_solver, "iterate left the admissible box");
        traj = std::move(a.traj);
        J = a.cost;
        row.m = a.m;
        row.step = a.step;
        pending_newton += a.newton_iterations;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "iteration " + std::to_string(k) + ": " + e.what());
    }
    check_admissible(phi, "phi0");
    check_admissible(sigma, "sigma0");
    row.newton_iterations = pending_newton;
    pending_newton = 0;
    if (cfg.record_timing) row.wall_s = std::chrono::duration<double>(clock::now() - start).count();
    rec.rows.push_back(row);
    if (opts.on_iterate) opts.on_iterate(rec.rows.back(), *d.mesh, phi, sigma);
    if (rec.converged) break;
    if (k >= cfg.max_iterations) {
      rec.stop_reason = "max_iterations";
      break;
    }
  }

  out.mesh = d.mesh;
  out.phi0 = d.space->field(phi);
  out.sigma0 = d.space->field(sigma);
  out.targets = std::move(targets);
  return out;
}

}  // namespace chg
