#pragma once

#include <vector>

#include "chg/forward.hpp"

namespace chg {

struct AdjointState {
  Vector p, q, r;
};

/// Adjoint snapshots for n = 1..N. Index 0 is unused and left empty so that
/// p[n] pairs with the forward level n.
struct AdjointTrajectory {
  std::uint64_t mesh_id = 0;
  std::vector<Vector> p, q, r;

  int steps() const { return static_cast<int>(p.size()) - 1; }
  AdjointState at(int n) const { return AdjointState{p.at(n), q.at(n), r.at(n)}; }
};

/// Fit weights of the tracking terms.
struct DataWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.0;
};

/// Terminal solve: the transposed step-N Jacobian against the data misfit.
/// `sigma_meas` may be null when lambda2 is zero.
AdjointState adjoint_init(const ForwardSolver& fwd, const Trajectory& traj, const Vector& phi_meas,
                          const Vector* sigma_meas, const DataWeights& w, LinearSolver* solver = nullptr);

/// Backward step from level n+1 to level n, 1 <= n <= N-1.
AdjointState adjoint_step(const ForwardSolver& fwd, const Trajectory& traj, int n, const AdjointState& next,
                          LinearSolver* solver = nullptr);

AdjointTrajectory run_adjoint(const ForwardSolver& fwd, const Trajectory& traj, const Vector& phi_meas,
                              const Vector* sigma_meas, const DataWeights& w);

/// phi-row of -(dR_{n+1}/dx_n)^T lambda_{n+1}: how level n feeds the step
/// n -> n+1. Also the state part of the phi0 gradient for n = 0.
Vector backward_coupling(const P1Space& space, const ModelParams& params, double dt, const Trajectory& traj, int n,
                         const AdjointState& next);

}  // namespace chg
