#include "chg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <random>

#include "chg/error.hpp"

namespace chg {

namespace fs = std::filesystem;

NodalField add_noise(const NodalField& field, double level, std::uint64_t seed, NoiseScale scale) {
  if (!(level >= 0.0 && level < 1.0)) fail(ErrorKind::config, "noise level must lie in [0,1)");
  NodalField out = field;
  if (level == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double amp = field.values.size() ? field.values.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    const double a = scale == NoiseScale::max_abs ? amp : std::abs(field.values[i]);
    out.values[i] += level * a * normal(rng);
  }
  return out;
}

std::shared_ptr<const Mesh> build_mesh(const MeshSpec& spec, bool generation_mesh) {
  return std::make_shared<const Mesh>(
      make_box_mesh(spec.dim, spec.lower, spec.upper, generation_mesh ? spec.gen_n : spec.n));
}

NodalField initial_phi(const InitialSpec& spec, const Mesh& mesh) {
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  switch (spec.shape) {
    case Shape::zero:
      return NodalField{mesh.id(), Vector::Zero(n), FieldUnit::dimensionless};
    case Shape::disc:
      return make_smoothed_disc(mesh, spec.center, spec.radius, spec.width);
    case Shape::two_discs: {
      Point a = spec.center, b = spec.center;
      a[0] -= spec.offset;
      b[0] += spec.offset;
      NodalField f = make_smoothed_disc(mesh, a, spec.radius, spec.width);
      f.values = clamp_unit(f.values + make_smoothed_disc(mesh, b, spec.radius, spec.width).values);
      return f;
    }
    case Shape::squares: {
      NodalField f = make_smoothed_square(mesh, spec.center, spec.side, spec.plateau, spec.width);
      const NodalField g = make_smoothed_square(mesh, spec.center2, spec.side, spec.plateau2, spec.width);
      f.values += g.values;
      if (f.values.maxCoeff() > std::max(spec.plateau, spec.plateau2) + 1e-6)
        fail(ErrorKind::config, "the two squares overlap");
      return f;
    }
    case Shape::file: {
      const FieldFile ff = read_vtk(spec.file);
      return transfer(ff.get("phi0"), *ff.mesh, mesh);
    }
  }
  fail(ErrorKind::config, "unknown initial shape");
}

NodalField initial_sigma(const InitialSpec& spec, const P1Space& space, const ModelParams& params,
                         const NodalField& phi0, const SolverConfig& solver) {
  require_on(space.mesh(), phi0, "initial_sigma");
  switch (spec.sigma) {
    case SigmaInit::stationary:
      return stationary_nutrient(space, params, phi0, solver);
    case SigmaInit::one:
      return space.field(Vector::Ones(space.size()));
    case SigmaInit::one_minus_phi:
      return space.field(clamp_unit(Vector::Ones(space.size()) - phi0.values));
    case SigmaInit::file: {
      const FieldFile ff = read_vtk(spec.file);
      return transfer(ff.get("sigma0"), *ff.mesh, space.mesh());
    }
  }
  fail(ErrorKind::config, "unknown sigma initialisation");
}

TargetSet make_target(const RunConfig& cfg) {
  auto mesh = build_mesh(cfg.mesh, true);
  NodalField phi0 = initial_phi(cfg.truth, *mesh);
  if (cfg.mesh.refine && cfg.mesh.dim == 2) {
    // resolve the ground truth interface before generating data
    for (int g = 0; g < cfg.mesh.max_generation; ++g) {
      const auto marked = doerfler_mark(jump_indicator(*mesh, phi0), cfg.mesh.theta);
      if (marked.empty()) break;
      auto fine = std::make_shared<const Mesh>(refine(*mesh, marked));
      phi0 = cfg.truth.shape == Shape::file ? transfer(phi0, *mesh, *fine) : initial_phi(cfg.truth, *fine);
      mesh = fine;
    }
  }
  phi0.values = clamp_unit(phi0.values);
  auto space = std::make_shared<const P1Space>(mesh);
  NodalField sigma0 = initial_sigma(cfg.truth, *space, cfg.model, phi0, cfg.solver);
  sigma0.values = clamp_unit(sigma0.values);

  TargetSet t{mesh, phi0, sigma0, phi0, std::nullopt, phi0};
  if (cfg.T > 0.0) {
    ForwardSolver fwd(space, cfg.model, cfg.solver, cfg.newton);
    const Trajectory traj = fwd.run(phi0, sigma0, cfg.grid());
    t.phi_meas = space->field(traj.phi.back());
    t.phi_clean = t.phi_meas;
    if (cfg.sigma_target) t.sigma_meas = space->field(traj.sigma.back());
  } else if (cfg.sigma_target) {
    t.sigma_meas = sigma0;
  }
  if (cfg.noise > 0.0) {
    t.phi_meas = add_noise(t.phi_meas, cfg.noise, cfg.seed, cfg.noise_scale);
    // independent stream for the nutrient target
    if (t.sigma_meas) t.sigma_meas = add_noise(*t.sigma_meas, cfg.noise, cfg.seed + 1, cfg.noise_scale);
  }
  return t;
}

void write_target(const TargetSet& t, const std::string& dir) {
  std::vector<NamedField> meas{{"phi_meas", &t.phi_meas.values}};
  if (t.sigma_meas) meas.emplace_back("sigma_meas", &t.sigma_meas->values);
  write_vtk(*t.mesh, meas, (fs::path(dir) / "target.vtk").string());
  write_vtk(*t.mesh, {{"phi0", &t.phi0.values}, {"sigma0", &t.sigma0.values}}, (fs::path(dir) / "truth.vtk").string());
}

namespace {

/// Calls f(barycentric, weight) on sample points covering each cell.
template <typename F>
void sample_cells(const Mesh& mesh, int s, F&& f) {
  if (s < 1) fail(ErrorKind::config, "samples must be positive");
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
    const double vol = mesh.cell_volume(c);
    if (mesh.dim() == 2) {
      const double w = vol / (s * s);
      for (int i = 0; i < s; ++i)
        for (int j = 0; i + j < s; ++j) {
          const double l1 = (i + 1.0 / 3.0) / s, l2 = (j + 1.0 / 3.0) / s;
          f(c, std::array<double, 4>{1.0 - l1 - l2, l1, l2, 0.0}, w);
          if (i + j < s - 1) {
            const double m1 = (i + 2.0 / 3.0) / s, m2 = (j + 2.0 / 3.0) / s;
            f(c, std::array<double, 4>{1.0 - m1 - m2, m1, m2, 0.0}, w);
          }
        }
    } else {
      const QuadratureRule& q = QuadratureRule::nonlinear(3);
      for (std::size_t k = 0; k < q.size(); ++k) f(c, q.points[k], vol * q.weights[k] / q.reference_volume());
    }
  }
}

double eval(const Mesh& mesh, std::size_t c, const std::array<double, 4>& l, const Vector& u) {
  double v = 0.0;
  const auto cell = mesh.cell(c);
  for (std::size_t i = 0; i < cell.size(); ++i) v += l[i] * u[cell[i]];
  return v;
}

Point eval_point(const Mesh& mesh, std::size_t c, const std::array<double, 4>& l) {
  Point x{0.0, 0.0, 0.0};
  const auto cell = mesh.cell(c);
  for (std::size_t i = 0; i < cell.size(); ++i)
    for (int k = 0; k < 3; ++k) x[k] += l[i] * mesh.vertex(cell[i])[k];
  return x;
}

}  // namespace

double superlevel_symmetric_difference(const Mesh& mesh, const Vector& a, const Vector& b, double level, int samples) {
  double area = 0.0;
  sample_cells(mesh, samples, [&](std::size_t c, const std::array<double, 4>& l, double w) {
    if ((eval(mesh, c, l, a) >= level) != (eval(mesh, c, l, b) >= level)) area += w;
  });
  return area;
}

double superlevel_measure(const Mesh& mesh, const Vector& a, double level, int samples) {
  double area = 0.0;
  sample_cells(mesh, samples, [&](std::size_t c, const std::array<double, 4>& l, double w) {
    if (eval(mesh, c, l, a) >= level) area += w;
  });
  return area;
}

Point superlevel_centroid(const Mesh& mesh, const Vector& a, double level, int samples) {
  double area = 0.0;
  Point m{0.0, 0.0, 0.0};
  sample_cells(mesh, samples, [&](std::size_t c, const std::array<double, 4>& l, double w) {
    if (eval(mesh, c, l, a) < level) return;
    const Point x = eval_point(mesh, c, l);
    area += w;
    for (int k = 0; k < 3; ++k) m[k] += w * x[k];
  });
  if (area == 0.0) return Point{NAN, NAN, NAN};
  for (double& v : m) v /= area;
  return m;
}

ReconstructionErrors compare_to_truth(const Mesh& mesh, const Vector& phi0, const Vector& truth) {
  const P1Space space(std::make_shared<const Mesh>(mesh));
  ReconstructionErrors e;
  e.l2_error = l2_norm(space.mass(), phi0 - truth);
  e.truth_l2 = l2_norm(space.mass(), truth);
  e.symmetric_difference = superlevel_symmetric_difference(mesh, phi0, truth, 0.5);
  e.truth_area = superlevel_measure(mesh, truth, 0.5);
  const Point a = superlevel_centroid(mesh, phi0, 0.5);
  const Point b = superlevel_centroid(mesh, truth, 0.5);
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
  e.centroid_error = std::sqrt(d2);  // NaN when either set is empty
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
    const auto cell = mesh.cell(c);
    for (std::size_t i = 0; i < cell.size(); ++i)
      for (std::size_t j = i + 1; j < cell.size(); ++j) {
        const Point& p = mesh.vertex(cell[i]);
        const Point& q = mesh.vertex(cell[j]);
        e.cell_diameter = std::max(e.cell_diameter, std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]));
      }
  }
  return e;
}

namespace {

std::string iterate_path(const std::string& dir, int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iterate_%04d.vtk", k);
  return (fs::path(dir) / buf).string();
}

}  // namespace

ReconstructRun run_reconstruct(const RunConfig& cfg, bool write_outputs, std::ostream* progress) {
  // targets: from file, or generated on the generation mesh
  std::shared_ptr<const Mesh> tmesh;
  NodalField phi_meas, clean_meas;
  std::optional<NodalField> sigma_meas, truth_phi0;
  std::shared_ptr<const Mesh> truth_mesh;
  if (!cfg.target_file.empty()) {
    const FieldFile tf = read_vtk(cfg.target_file);
    tmesh = tf.mesh;
    phi_meas = tf.get("phi_meas");
    if (tf.has("sigma_meas")) sigma_meas = tf.get("sigma_meas");
    const fs::path truth_file = fs::path(cfg.target_file).parent_path() / "truth.vtk";
    if (fs::exists(truth_file)) {
      const FieldFile truth = read_vtk(truth_file.string());
      truth_mesh = truth.mesh;
      truth_phi0 = truth.get("phi0");
    }
  } else {
    TargetSet t = make_target(cfg);
    if (write_outputs) write_target(t, cfg.output);
    tmesh = t.mesh;
    phi_meas = t.phi_meas;
    sigma_meas = t.sigma_meas;
    truth_mesh = t.mesh;
    truth_phi0 = t.phi0;
    if (cfg.noise > 0.0) clean_meas = t.phi_clean;
  }
  if (cfg.optim.lambda2 != 0.0 && !sigma_meas) fail(ErrorKind::config, "lambda2 > 0 needs a sigma target");

  auto mesh = build_mesh(cfg.mesh, false);
  auto space = std::make_shared<const P1Space>(mesh);
  Targets targets{transfer(phi_meas, *tmesh, *mesh), std::nullopt};
  if (sigma_meas) targets.sigma = transfer(*sigma_meas, *tmesh, *mesh);

  ReconstructRun run;
  if (clean_meas.size()) {
    const Vector e = targets.phi.values - transfer(clean_meas, *tmesh, *mesh).values;
    run.noise_energy = 0.5 * cfg.optim.lambda1 * l2_inner(space->mass(), e, e);
  }

  const NodalField phi0 = initial_phi(cfg.guess, *mesh);
  NodalField clamped = space->field(clamp_unit(phi0.values));
  const NodalField sigma0 = initial_sigma(cfg.guess, *space, cfg.model, clamped, cfg.solver);

  ReconstructOptions opts;
  opts.linear = cfg.solver;
  opts.newton = cfg.newton;
  if (write_outputs) {
    opts.on_iterate = [&](const IterationRecord& row, const Mesh& m, const Vector& phi, const Vector& sigma) {
      if (row.k == 1 || row.k % 10 == 0)
        write_vtk(m, {{"phi0", &phi}, {"sigma0", &sigma}}, iterate_path(cfg.output, row.k));
    };
  }
  if (progress) {
    auto write = opts.on_iterate;
    opts.on_iterate = [write, progress](const IterationRecord& row, const Mesh& m, const Vector& phi,
                                        const Vector& sigma) {
      if (write) write(row, m, phi, sigma);
      *progress << "  k " << row.k << "  J " << row.cost.total() << "  |v| " << row.v_phi_norm + row.v_sigma_norm
                << "  m " << row.m << "  cells " << row.cells << std::endl;
    };
  }
  run.result = reconstruct(mesh, clamped, sigma0, targets, cfg.model, cfg.grid(), cfg.optim, opts);

  const Mesh& final_mesh = *run.result.mesh;
  if (truth_phi0) {
    run.truth_phi0 = transfer(*truth_phi0, *truth_mesh, final_mesh);
    run.errors = compare_to_truth(final_mesh, run.result.phi0.values, run.truth_phi0->values);
  }
  if (write_outputs) {
    write_convergence_csv(run.result.record, (fs::path(cfg.output) / "convergence.csv").string());
    std::vector<NamedField> fields{{"phi0", &run.result.phi0.values},
                                   {"sigma0", &run.result.sigma0.values},
                                   {"phi_meas", &run.result.targets.phi.values}};
    if (run.truth_phi0) fields.emplace_back("phi0_true", &run.truth_phi0->values);
    write_vtk(final_mesh, fields, (fs::path(cfg.output) / "reconstruction.vtk").string());
    write_vtk(final_mesh, {{"phi0", &run.result.phi0.values}, {"sigma0", &run.result.sigma0.values}},
              iterate_path(cfg.output, run.result.record.rows.back().k));
  }
  return run;
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& r : rows) w = std::max(w, r.rel_error);
  return w;
}

GradCheckReport grad_check(const RunConfig& cfg, bool zero_direction) {
  RunConfig c = cfg;
  c.mode = Mode::grad_check;
  c.validate();
  auto mesh = build_mesh(c.mesh, false);
  auto space = std::make_shared<const P1Space>(mesh);
  ForwardSolver fwd(space, c.model, c.solver, c.newton);
  const TimeGrid grid = c.grid();

  // targets from the ground truth on the same mesh; no inverse-crime concern here
  const NodalField truth = initial_phi(c.truth, *mesh);
  const NodalField truth_sigma = initial_sigma(c.truth, *space, c.model, space->field(clamp_unit(truth.values)));
  const Trajectory ttraj = fwd.run(truth, truth_sigma, grid);
  Targets targets{space->field(ttraj.phi.back()), space->field(ttraj.sigma.back())};

  // interior base point so that every trial stays admissible
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::Index n = space->size();
  Vector phi(n), sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) phi[i] = 0.1 + 0.8 * (0.7 * truth.values[i] + 0.3 * unit(rng));
  for (Eigen::Index i = 0; i < n; ++i) sigma[i] = 0.1 + 0.8 * (0.7 * truth_sigma.values[i] + 0.3 * unit(rng));
  const bool with_sigma = c.optim.update_sigma || c.optim.lambda2 != 0.0 || c.optim.alpha2 != 0.0;

  auto J = [&](const Vector& p, const Vector& s) {
    const Trajectory t = fwd.run(p, s, grid);
    return cost(*space, c.model, c.optim, t, p, s, targets).total();
  };
  const Trajectory base = fwd.run(phi, sigma, grid);
  const AdjointTrajectory adj = run_adjoint(fwd, base, targets.phi.values, &targets.sigma->values, c.optim.weights());
  const Vector g_phi = gradient_phi(*space, c.model, c.optim, adj, base).values;
  const Vector g_sigma = gradient_sigma(*space, c.optim, adj, sigma).values;

  GradCheckReport report;
  for (int d = 0; d < c.gradcheck_directions; ++d) {
    Vector h(n), k = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) h[i] = unit(rng) - phi[i];
    if (with_sigma)
      for (Eigen::Index i = 0; i < n; ++i) k[i] = unit(rng) - sigma[i];
    if (zero_direction && d == 0) {
      h.setZero();
      k.setZero();
    }
    GradCheckRow best;
    best.direction = d;
    best.pairing = l2_inner(space->mass(), g_phi, h) + l2_inner(space->mass(), g_sigma, k);
    best.rel_error = INFINITY;
    for (double eps : {1e-4, 1e-5, 1e-6}) {
      const double fd = (J(phi + eps * h, sigma + eps * k) - J(phi - eps * h, sigma - eps * k)) / (2.0 * eps);
      const double scale = std::max(std::abs(fd), std::abs(best.pairing));
      const double rel = scale > 0.0 ? std::abs(best.pairing - fd) / scale : 0.0;
      if (rel < best.rel_error) {
        best.rel_error = rel;
        best.fd = fd;
        best.step = eps;
      }
    }
    report.rows.push_back(best);
  }
  return report;
}

Trajectory run_forward_mode(const RunConfig& cfg, bool write_outputs) {
  auto mesh = build_mesh(cfg.mesh, false);
  auto space = std::make_shared<const P1Space>(mesh);
  const NodalField phi0 = space->field(clamp_unit(initial_phi(cfg.truth, *mesh).values));
  const NodalField sigma0 = initial_sigma(cfg.truth, *space, cfg.model, phi0, cfg.solver);
  ForwardSolver fwd(space, cfg.model, cfg.solver, cfg.newton);
  const TimeGrid grid = cfg.grid();
  Trajectory traj = fwd.run(phi0, sigma0, grid);
  if (write_outputs) {
    const int stride = cfg.checkpoint_stride > 0 ? cfg.checkpoint_stride : std::max(1, grid.N / 10);
    std::string csv = "n,t,mass_phi,mass_sigma,gl_energy\n";
    const Vector ones = Vector::Ones(space->size());
    char buf[256];
    for (int s = 0; s <= grid.N; ++s) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", s, s * grid.dt(),
                    l2_inner(space->mass(), ones, traj.phi[s]), l2_inner(space->mass(), ones, traj.sigma[s]),
                    gl_energy(*space, cfg.model, traj.phi[s]));
      csv += buf;
      if (s % stride == 0 || s == grid.N) {
        std::snprintf(buf, sizeof buf, "forward_%05d.vtk", s);
        write_vtk(*mesh, {{"phi", &traj.phi[s]}, {"mu", &traj.mu[s]}, {"sigma", &traj.sigma[s]}},
                  (fs::path(cfg.output) / buf).string());
      }
    }
    write_file_atomic((fs::path(cfg.output) / "forward.csv").string(), csv);
  }
  return traj;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return exit_config;
    case ErrorKind::line_search:
      return exit_line_search;
    default:
      return exit_solver;
  }
}

int run_mode(const RunConfig& cfg, std::ostream& log) {
  try {
    cfg.validate();
    switch (cfg.mode) {
      case Mode::forward: {
        const Trajectory t = run_forward_mode(cfg);
        log << "forward: " << t.steps() << " steps, " << t.newton_iterations << " Newton iterations, output in "
            << cfg.output << "\n";
        return exit_ok;
      }
      case Mode::make_target: {
        const TargetSet t = make_target(cfg);
        write_target(t, cfg.output);
        log << "make-target: " << t.mesh->num_cells() << " cells, wrote target.vtk and truth.vtk to " << cfg.output
            << "\n";
        return exit_ok;
      }
      case Mode::reconstruct: {
        const ReconstructRun r = run_reconstruct(cfg, true, &log);
        const auto& rec = r.result.record;
        log << "reconstruct: " << rec.rows.size() << " iterations, stopped by " << rec.stop_reason
            << ", J = " << rec.rows.back().cost.total() << "\n";
        if (r.errors) {
          log << "  L2 error " << r.errors->l2_error << " (truth norm " << r.errors->truth_l2 << ")\n"
              << "  superlevel symmetric difference " << r.errors->symmetric_difference << " of truth area "
              << r.errors->truth_area << "\n"
              << "  centroid error " << r.errors->centroid_error << " (cell diameter " << r.errors->cell_diameter
              << ")\n";
        }
        return exit_ok;
      }
      case Mode::grad_check: {
        const GradCheckReport rep = grad_check(cfg);
        std::string csv = "direction,pairing,fd,step,rel_error\n";
        char buf[256];
        for (const auto& row : rep.rows) {
          std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%g,%.3e\n", row.direction, row.pairing, row.fd, row.step,
                        row.rel_error);
          csv += buf;
          log << "direction " << row.direction << ": pairing " << row.pairing << ", fd " << row.fd << ", rel error "
              << row.rel_error << " (step " << row.step << ")\n";
        }
        write_file_atomic((fs::path(cfg.output) / "grad_check.csv").string(), csv);
        if (rep.worst() > 1e-4) {
          log << "grad-check FAILED: worst relative error " << rep.worst() << "\n";
          return exit_grad_check;
        }
        log << "grad-check passed: worst relative error " << rep.worst() << "\n";
        return exit_ok;
      }
    }
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }
  return exit_config;
}

}  // namespace chg
