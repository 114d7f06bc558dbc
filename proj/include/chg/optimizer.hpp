#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chg/adjoint.hpp"
#include "chg/forward.hpp"

namespace chg {

struct OptimConfig {
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  double alpha1 = 0.01 / 2.5;  // alpha~ / Gamma
  double alpha2 = 0.0;
  double rho = 0.9;
  double iota = 1e-4;
  /// Stopping threshold on ||v_phi||_H + ||v_sigma||_H; unset means 1e-4 |Omega|^(1/2).
  std::optional<double> tol_v;
  int max_iterations = 150;
  int m_max = 30;
  bool refine = false;
  double theta = 0.5;
  int max_generation = 3;
  /// With false the nutrient initial datum stays at its starting value.
  bool update_sigma = true;
  /// Fill the wall-time column (off keeps records reproducible).
  bool record_timing = false;

  void validate() const;
  double stopping_tolerance(double domain_volume) const;
  DataWeights weights() const { return DataWeights{lambda1, lambda2}; }
};

struct Targets {
  NodalField phi;
  std::optional<NodalField> sigma;
};

struct CostBreakdown {
  double data_phi = 0.0;
  double data_sigma = 0.0;
  double reg_phi = 0.0;
  double reg_sigma = 0.0;

  double total() const { return data_phi + data_sigma + reg_phi + reg_sigma; }
};

CostBreakdown cost(const P1Space& space, const ModelParams& params, const OptimConfig& cfg, const Trajectory& traj,
                   const Vector& phi0, const Vector& sigma0, const Targets& targets);

/// Riesz representative of the phi0 derivative of the reduced cost.
NodalField gradient_phi(const P1Space& space, const ModelParams& params, const OptimConfig& cfg,
                        const AdjointTrajectory& adj, const Trajectory& traj);
/// r^1 + alpha2 sigma0.
NodalField gradient_sigma(const P1Space& space, const OptimConfig& cfg, const AdjointTrajectory& adj,
                          const Vector& sigma0);

/// Nodewise clamp(field - rho grad, 0, 1).
Vector project_step(const Vector& field, const Vector& grad, double rho);

struct BacktrackResult {
  int m = 0;
  double step = 1.0;
  double value = 0.0;
};

/// Smallest m in [0, m_max] with value(rho^m) <= value0 + rho^m iota slope.
/// `slope` must be non-positive.
BacktrackResult backtrack(const std::function<double(double)>& value, double value0, double slope, double rho,
                          double iota, int m_max);

struct ArmijoResult {
  int m = 0;
  double step = 1.0;
  Vector phi0, sigma0;
  Trajectory traj;
  CostBreakdown cost;
  int newton_iterations = 0;  // over all trials
};

/// Backtracking on the reduced cost; each trial gets its own forward solve.
ArmijoResult armijo_search(const ForwardSolver& fwd, const OptimConfig& cfg, const TimeGrid& grid,
                           const Targets& targets, const Vector& phi0, const Vector& sigma0, const Vector& v_phi,
                           const Vector& v_sigma, double slope, double J0);

struct IterationRecord {
  int k = 0;
  CostBreakdown cost;
  double v_phi_norm = 0.0;
  double v_sigma_norm = 0.0;
  int m = -1;  // -1: no step taken (converged or capped)
  double step = 0.0;
  std::size_t cells = 0;
  int newton_iterations = 0;
  double wall_s = 0.0;
  bool mesh_changed = false;
};

struct ConvergenceRecord {
  std::vector<IterationRecord> rows;
  bool converged = false;
  std::string stop_reason;

  /// J is non-increasing between consecutive iterations on the same mesh.
  bool monotone() const;
};

struct Reconstruction {
  std::shared_ptr<const Mesh> mesh;
  NodalField phi0, sigma0;
  Targets targets;  // transferred to the final mesh
  ConvergenceRecord record;
};

struct ReconstructOptions {
  SolverConfig linear;
  NewtonConfig newton;
  /// Called after every completed iteration with its record and the
  /// accepted initial data.
  std::function<void(const IterationRecord&, const Mesh&, const Vector& phi0, const Vector& sigma0)> on_iterate;
};

Reconstruction reconstruct(std::shared_ptr<const Mesh> mesh, const NodalField& phi0, const NodalField& sigma0,
                           const Targets& targets, const ModelParams& params, const TimeGrid& grid,
                           const OptimConfig& cfg, const ReconstructOptions& opts = {});

}  // namespace chg
