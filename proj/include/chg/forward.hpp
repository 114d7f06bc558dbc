#pragma once

#include <memory>
#include <vector>

#include "chg/fem.hpp"
#include "chg/linalg.hpp"
#include "chg/model.hpp"

namespace chg {

struct TimeGrid {
  double T = 1.0;  // days
  int N = 1;

  double dt() const { return T / N; }
  void validate() const;
  /// N = round(T / dt); T must be a whole number of steps.
  static TimeGrid from_step(double T, double dt);
};

struct StepState {
  Vector phi, mu, sigma;
};

/// All time levels of a forward solve; index n runs over 0..N.
/// mu[0] is not part of the model and is stored as zeros.
struct Trajectory {
  std::uint64_t mesh_id = 0;
  TimeGrid grid;
  std::vector<Vector> phi, mu, sigma;
  int newton_iterations = 0;

  int steps() const { return static_cast<int>(phi.size()) - 1; }
};

struct NewtonConfig {
  double tol = 1e-10;
  int max_iterations = 25;
};

/// Residual and linearisation of one step of the convex-split scheme.
///
/// Unknowns are ordered x = [phi^n; mu^n; sigma^n]. The residual rows are
/// the three weak equations multiplied by dt, so that the adjoint variables
/// of the discrete Lagrangian are the plain multipliers of these rows.
/// Everything evaluated at the previous level (P(phi^{n-1}), the death term,
/// F-'(phi^{n-1})) is frozen at construction.
class StepSystem {
 public:
  StepSystem(const P1Space& space, const ModelParams& params, const BlockLayout& layout, const Vector& phi_prev,
             const Vector& sigma_prev, double dt);

  Vector residual(const Vector& x) const;
  /// Jacobian at x; the returned reference lives until the next call.
  const SparseMatrix& jacobian(const Vector& phi);
  const SparseMatrix& jacobian_transposed(const Vector& phi);

  Vector pack(const Vector& phi, const Vector& mu, const Vector& sigma) const;
  StepState unpack(const Vector& x) const;

 private:
  void fill(const Vector& phi, bool transpose);

  const P1Space& space_;
  const ModelParams& params_;
  const BlockLayout& layout_;
  double dt_;
  Eigen::Index n_;
  SparseMatrix a_pp_, a_pm_, a_ps_, a_mp_lin_, a_mm_, a_ms_, a_sp_, a_sm_, a_ss_, a_mp_;
  Vector c_phi_, c_mu_, c_sigma_;
  SparseMatrix mono_;
};

class ForwardSolver {
 public:
  ForwardSolver(std::shared_ptr<const P1Space> space, ModelParams params, SolverConfig linear = {},
                NewtonConfig newton = {});

  const P1Space& space() const { return *space_; }
  const ModelParams& params() const { return params_; }
  const BlockLayout& layout() const { return layout_; }
  const SolverConfig& linear_config() const { return linear_; }

  struct StepResult {
    StepState state;
    NewtonResult newton;
  };
  /// Newton starts from `guess`, or from (phi_prev, 0, sigma_prev) without one.
  StepResult step(const Vector& phi_prev, const Vector& sigma_prev, double dt, const StepState* guess = nullptr,
                  LinearSolver* solver = nullptr) const;

  /// Inputs are clamped to [0,1] nodewise before the first step.
  Trajectory run(const NodalField& phi0, const NodalField& sigma0, const TimeGrid& grid) const;
  Trajectory run(const Vector& phi0, const Vector& sigma0, const TimeGrid& grid) const;

 private:
  std::shared_ptr<const P1Space> space_;
  ModelParams params_;
  SolverConfig linear_;
  NewtonConfig newton_;
  BlockLayout layout_;
};

/// Values (1 - tanh((|x-center| - radius) / (sqrt(2) width))) / 2.
NodalField make_smoothed_disc(const Mesh& mesh, const Point& center, double radius, double interface_width);

/// plateau * prod_i (1 - tanh((|x_i-c_i| - side/2) / (sqrt(2) width))) / 2.
NodalField make_smoothed_square(const Mesh& mesh, const Point& center, double side, double plateau_value,
                                double interface_width);

/// Stationary nutrient for a given tumour field with the mu-coupling dropped,
/// clamped to [0,1].
NodalField stationary_nutrient(const P1Space& space, const ModelParams& params, const NodalField& phi0,
                               const SolverConfig& cfg = {});

/// Nodewise clamp to [0,1].
Vector clamp_unit(const Vector& v);

}  // namespace chg
