#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chg/config.hpp"
#include "chg/error.hpp"
#include "chg/field_io.hpp"

namespace chg {

/// field + level * A * xi with xi standard normal from a seeded generator;
/// A = max |field| (max_abs) or the nodal value itself (relative).
NodalField add_noise(const NodalField& field, double level, std::uint64_t seed,
                     NoiseScale scale = NoiseScale::max_abs);

std::shared_ptr<const Mesh> build_mesh(const MeshSpec& spec, bool generation_mesh);

NodalField initial_phi(const InitialSpec& spec, const Mesh& mesh);
/// `phi0` must already be on the space's mesh.
NodalField initial_sigma(const InitialSpec& spec, const P1Space& space, const ModelParams& params,
                         const NodalField& phi0, const SolverConfig& solver = {});

/// Ground truth and the synthetic measurements derived from it, all on the
/// generation mesh.
struct TargetSet {
  std::shared_ptr<const Mesh> mesh;
  NodalField phi0, sigma0;
  NodalField phi_meas;
  std::optional<NodalField> sigma_meas;
  /// phi_meas before noise
  NodalField phi_clean;
};

TargetSet make_target(const RunConfig& cfg);
/// Writes target.vtk (phi_meas[, sigma_meas]) and truth.vtk (phi0, sigma0).
void write_target(const TargetSet& t, const std::string& dir);

/// Area (volume in 3D) of {a >= level} xor {b >= level}, by subdividing
/// every triangle `samples` times per edge. Tetrahedra are sampled at the
/// 14 points of the nonlinear quadrature rule and ignore `samples`.
double superlevel_symmetric_difference(const Mesh& mesh, const Vector& a, const Vector& b, double level,
                                       int samples = 8);
double superlevel_measure(const Mesh& mesh, const Vector& a, double level, int samples = 8);
Point superlevel_centroid(const Mesh& mesh, const Vector& a, double level, int samples = 8);

/// Quality of a reconstruction against the ground truth.
struct ReconstructionErrors {
  double l2_error = 0.0;
  double truth_l2 = 0.0;
  double symmetric_difference = 0.0;
  double truth_area = 0.0;
  double centroid_error = 0.0;
  double cell_diameter = 0.0;
};

ReconstructionErrors compare_to_truth(const Mesh& mesh, const Vector& phi0, const Vector& truth);

struct ReconstructRun {
  Reconstruction result;
  /// Ground truth interpolated on the final mesh, if known.
  std::optional<NodalField> truth_phi0;
  std::optional<ReconstructionErrors> errors;
  /// (lambda1/2) ||noisy - clean||_M^2 on the reconstruction mesh; zero without noise.
  double noise_energy = 0.0;
};

/// Full reconstruct mode. With `write_outputs` the CSV and VTK checkpoints
/// go to cfg.output; `progress` gets one line per iteration.
ReconstructRun run_reconstruct(const RunConfig& cfg, bool write_outputs = true, std::ostream* progress = nullptr);

struct GradCheckRow {
  int direction = 0;
  double pairing = 0.0;
  double fd = 0.0;
  double step = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;  // best step per direction
  double worst() const;
};

/// Central differences of the reduced cost against the adjoint gradient at an
/// interior admissible point, for random admissible directions. `zero_direction`
/// replaces the first direction by zero.
GradCheckReport grad_check(const RunConfig& cfg, bool zero_direction = false);

/// Forward mode: snapshots every stride plus a per-step CSV of mass and energy.
Trajectory run_forward_mode(const RunConfig& cfg, bool write_outputs = true);

/// Process exit codes.
enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_solver = 3, exit_grad_check = 4, exit_line_search = 5 };

int exit_code_for(ErrorKind kind);

/// Runs cfg.mode, logging to `log`; returns the exit code.
int run_mode(const RunConfig& cfg, std::ostream& log);

}  // namespace chg
