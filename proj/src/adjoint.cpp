#include "chg/adjoint.hpp"

#include <string>

#include "chg/error.hpp"

namespace chg {

namespace {

void check_trajectory(const ForwardSolver& fwd, const Trajectory& traj) {
  if (traj.mesh_id != fwd.space().mesh().id()) fail(ErrorKind::geometry, "adjoint: trajectory is on another mesh");
  if (traj.steps() < 1 || traj.steps() != traj.grid.N) fail(ErrorKind::config, "adjoint: incomplete trajectory");
}

AdjointState solve_transposed(const ForwardSolver& fwd, const Trajectory& traj, int n, const Vector& rhs,
                              LinearSolver* solver) {
  StepSystem sys(fwd.space(), fwd.params(), fwd.layout(), traj.phi[n - 1], traj.sigma[n - 1], traj.grid.dt());
  LinearSolver local(fwd.linear_config());
  LinearSolver& lin = solver ? *solver : local;
  lin.factorize(sys.jacobian_transposed(traj.phi[n]));
  const StepState s = sys.unpack(lin.solve(rhs));
  return AdjointState{s.phi, s.mu, s.sigma};
}

}  // namespace

Vector backward_coupling(const P1Space& space, const ModelParams& params, double dt, const Trajectory& traj, int n,
                         const AdjointState& next) {
  const auto& p = params;
  const QpValues phi = space.at_qp(traj.phi[n]);
  const QpValues phi1 = space.at_qp(traj.phi[n + 1]);
  const QpValues mu1 = space.at_qp(traj.mu[n + 1]);
  const QpValues sigma1 = space.at_qp(traj.sigma[n + 1]);
  const QpValues pn = space.at_qp(next.p);
  const QpValues qn = space.at_qp(next.q);
  const QpValues rn = space.at_qp(next.r);
  QpValues c;
  if (p.c_field) c = space.at_qp(*p.c_field);

  QpValues coeff(phi.size());
  for (std::size_t i = 0; i < coeff.size(); ++i) {
    const double g = sigma1[i] / p.delta + p.chi * (1.0 - phi1[i]) - mu1[i];
    const double ci = p.c_field ? c[i] : p.c;
    coeff[i] = p.delta * p.P0 * proliferation_prime(phi[i]) * g * (pn[i] - rn[i]) -
               ci * p.death.derivative(phi[i]) * pn[i] - p.Gamma * potential_split(phi[i]).concave_d2 * qn[i];
  }
  return space.mass() * next.p + dt * space.load(coeff);
}

AdjointState adjoint_init(const ForwardSolver& fwd, const Trajectory& traj, const Vector& phi_meas,
                          const Vector* sigma_meas, const DataWeights& w, LinearSolver* solver) {
  check_trajectory(fwd, traj);
  const Eigen::Index n = fwd.space().size();
  const int N = traj.steps();
  if (phi_meas.size() != n) fail(ErrorKind::geometry, "adjoint: phi target is on another mesh");
  if (w.lambda2 != 0.0 && (!sigma_meas || sigma_meas->size() != n))
    fail(ErrorKind::geometry, "adjoint: sigma target missing or on another mesh");
  const SparseMatrix& m = fwd.space().mass();
  Vector rhs = Vector::Zero(3 * n);
  rhs.segment(0, n) = w.lambda1 * (m * (traj.phi[N] - phi_meas));
  if (w.lambda2 != 0.0) rhs.segment(2 * n, n) = w.lambda2 * (m * (traj.sigma[N] - *sigma_meas));
  return solve_transposed(fwd, traj, N, rhs, solver);
}

AdjointState adjoint_step(const ForwardSolver& fwd, const Trajectory& traj, int n, const AdjointState& next,
                          LinearSolver* solver) {
  check_trajectory(fwd, traj);
  if (n < 1 || n >= traj.steps()) fail(ErrorKind::config, "adjoint_step: step index out of range");
  const Eigen::Index size = fwd.space().size();
  Vector rhs = Vector::Zero(3 * size);
  rhs.segment(0, size) = backward_coupling(fwd.space(), fwd.params(), traj.grid.dt(), traj, n, next);
  rhs.segment(2 * size, size) = fwd.space().mass() * next.r;
  return solve_transposed(fwd, traj, n, rhs, solver);
}

AdjointTrajectory run_adjoint(const ForwardSolver& fwd, const Trajectory& traj, const Vector& phi_meas,
                              const Vector* sigma_meas, const DataWeights& w) {
  check_trajectory(fwd, traj);
  const int N = traj.steps();
  AdjointTrajectory adj;
  adj.mesh_id = traj.mesh_id;
  adj.p.resize(N + 1);
  adj.q.resize(N + 1);
  adj.r.resize(N + 1);
  LinearSolver solver(fwd.linear_config());
  AdjointState s;
  for (int n = N; n >= 1; --n) {
    try {
      s = n == N ? adjoint_init(fwd, traj, phi_meas, sigma_meas, w, &solver) : adjoint_step(fwd, traj, n, s, &solver);
    } catch (const Error& e) {
      throw Error(e.kind(), "adjoint step " + std::to_string(n) + ": " + e.what());
    }
    adj.p[n] = s.p;
    adj.q[n] = s.q;
    adj.r[n] = s.r;
  }
  return adj;
}

}  // namespace chg
