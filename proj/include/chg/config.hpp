#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chg/forward.hpp"
#include "chg/optimizer.hpp"

namespace chg {

enum class Mode { forward, make_target, reconstruct, grad_check };

Mode parse_mode(const std::string& s);
const char* mode_name(Mode m);

struct MeshSpec {
  int dim = 2;
  Point lower{-5.0, -5.0, 0.0};
  Point upper{5.0, 5.0, 0.0};
  std::array<int, 3> n{32, 32, 1};      // reconstruction mesh
  std::array<int, 3> gen_n{48, 48, 1};  // target generation mesh
  /// Adaptive refinement: per iteration in reconstruct, and
  /// `max_generation` rounds on the ground truth in make-target.
  bool refine = false;
  double theta = 0.5;
  int max_generation = 3;
};

enum class Shape { zero, disc, two_discs, squares, file };
enum class SigmaInit { stationary, one, one_minus_phi, file };

/// Initial data: either analytic geometry or fields read from a VTK file.
struct InitialSpec {
  Shape shape = Shape::zero;
  Point center{0.0, 0.0, 0.0};
  double radius = 0.6;
  double width = 0.3;
  /// two_discs: centres at center -/+ (offset, 0, 0).
  double offset = 1.2;
  /// squares: second centre, side and the two plateau values.
  Point center2{0.0, 0.0, 0.0};
  double side = 0.25;
  double plateau = 1.0;
  double plateau2 = 1.0;
  SigmaInit sigma = SigmaInit::stationary;
  std::string file;

  static InitialSpec of(Shape s) {
    InitialSpec out;
    out.shape = s;
    return out;
  }
};

enum class NoiseScale { max_abs, relative };

struct RunConfig {
  Mode mode = Mode::forward;
  std::string preset;
  std::uint64_t seed = 1;
  std::string output = "out";
  /// Forward mode writes every `checkpoint_stride` steps; 0 means max(1, N/10).
  int checkpoint_stride = 0;

  MeshSpec mesh;
  double T = 5.0;
  double dt = 0.05;
  ModelParams model;
  OptimConfig optim;
  SolverConfig solver;
  NewtonConfig newton;

  InitialSpec truth = InitialSpec::of(Shape::disc);
  InitialSpec guess = InitialSpec::of(Shape::zero);

  /// Target file from a previous make-target run; empty means generate in-process.
  std::string target_file;
  bool sigma_target = false;
  double noise = 0.0;
  NoiseScale noise_scale = NoiseScale::max_abs;

  int gradcheck_directions = 5;

  TimeGrid grid() const { return TimeGrid::from_step(T, dt); }
  void validate() const;
};

/// Named presets: test_case_1 ... test_case_6 at paper scale and the same
/// names with a `_desk` suffix at desk scale.
RunConfig make_preset(const std::string& name);
std::vector<std::string> preset_names();

struct ConfigOverrides {
  std::optional<Mode> mode;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
};

/// Sections of key = value lines; '#' or ';' start comments. A preset named
/// in [run] or in the overrides is applied first, then the file's keys,
/// then the remaining overrides.
RunConfig parse_config_text(const std::string& text, const ConfigOverrides& overrides = {});
RunConfig parse_config(const std::string& path, const ConfigOverrides& overrides = {});

}  // namespace chg
