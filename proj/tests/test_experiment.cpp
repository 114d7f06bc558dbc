#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "chg/experiment.hpp"

using namespace chg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("chg_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string config_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    return e.what();
  }
  return "";
}

// small problem that every mode accepts
RunConfig tiny(Mode mode) {
  RunConfig c;
  c.mode = mode;
  c.mesh.n = {8, 8, 1};
  c.mesh.gen_n = {12, 12, 1};
  c.T = 0.25;
  c.dt = 0.05;
  c.optim.update_sigma = false;
  c.truth = InitialSpec::of(Shape::disc);
  c.truth.radius = 2.0;
  c.truth.width = 0.6;
  c.guess = InitialSpec::of(Shape::zero);
  return c;
}

}  // namespace

TEST_CASE("config: empty text gives the parameter table defaults") {
  ConfigOverrides ov;
  ov.mode = Mode::forward;
  const RunConfig c = parse_config_text("", ov);
  CHECK(c.mode == Mode::forward);
  CHECK(c.model.P0 == 0.1);
  CHECK(c.model.delta == 0.001);
  CHECK(c.model.D_phi == 0.00053);
  CHECK(c.model.D_sigma == 0.001);
  CHECK(c.model.Gamma == 2.5);
  CHECK(c.model.chi == 0.5);
  CHECK(c.model.eps == 0.025);
  CHECK(c.model.c == 0.02);
  CHECK(c.model.kappa == 0.12);
  CHECK(c.optim.rho == 0.9);
  CHECK(c.optim.m_max == 30);
}

TEST_CASE("config: keys, sections and comments") {
  const RunConfig c = parse_config_text(
      "# comment\n[run]\nmode = reconstruct\nseed = 7\n\n[mesh]\nn = 16, 16 ; trailing\n[optim]\nrho = 0.5\n"
      "alpha1_tilde = 0.05\n[truth]\ncenter = 1, -1\n");
  CHECK(c.mode == Mode::reconstruct);
  CHECK(c.seed == 7);
  CHECK(c.mesh.n[0] == 16);
  CHECK(c.optim.rho == 0.5);
  CHECK(c.optim.alpha1 == doctest::Approx(0.02));
  CHECK(c.truth.center[1] == -1.0);
}

TEST_CASE("config: errors name the key and the line") {
  const std::string rho = config_error("[optim]\nrho = 1.5\n");
  CHECK(rho.find("line 2") != std::string::npos);
  CHECK(rho.find("optim.rho") != std::string::npos);

  const std::string unknown = config_error("[model]\nP0 = 0.1\nbogus = 3\n");
  CHECK(unknown.find("line 3") != std::string::npos);
  CHECK(unknown.find("model.bogus") != std::string::npos);

  const std::string type = config_error("[time]\ndt = fast\n");
  CHECK(type.find("time.dt") != std::string::npos);

  CHECK(config_error("[optim]\nrho = 0.5\nrho = 0.6\n").find("duplicate") != std::string::npos);
  CHECK(config_error("[optim]\nalpha1 = 0.1\nalpha1_tilde = 0.1\n").find("exclusive") != std::string::npos);
  CHECK(config_error("[target]\nnoise = 1.0\n").find("target.noise") != std::string::npos);
  CHECK_FALSE(config_error("[mesh\n").empty());
  CHECK_FALSE(config_error("[run]\npreset = nope\n").empty());
  CHECK_THROWS_AS(parse_config("/nonexistent/chg.cfg"), Error);
}

TEST_CASE("presets") {
  const RunConfig tc2 = make_preset("test_case_2");
  CHECK(tc2.optim.lambda1 == 1.0);
  CHECK(tc2.optim.lambda2 == 0.0);
  CHECK(tc2.optim.alpha2 == 0.0);
  CHECK(tc2.truth.shape == Shape::disc);
  CHECK(tc2.truth.radius == 0.6);
  CHECK(tc2.truth.center == Point{0.0, 0.0, 0.0});
  CHECK(tc2.mesh.n[0] == 64);
  CHECK(tc2.mesh.gen_n[0] == 80);

  const RunConfig desk = make_preset("test_case_2_desk");
  CHECK(desk.mesh.n[0] == 32);
  CHECK(desk.mesh.gen_n[0] == 48);
  CHECK(desk.T == 5.0);
  CHECK(desk.dt == 0.05);
  CHECK(desk.optim.alpha1 * desk.model.Gamma == doctest::Approx(0.01));
  CHECK(desk.guess.shape == Shape::zero);

  const RunConfig tc1 = make_preset("test_case_1");
  CHECK(tc1.T == 30.0);
  CHECK(tc1.sigma_target);
  CHECK(tc1.optim.update_sigma);

  const RunConfig tc6 = make_preset("test_case_6");
  CHECK(tc6.mesh.dim == 3);
  CHECK(tc6.T == 40.0);
  CHECK(tc6.mesh.n == std::array<int, 3>{60, 60, 60});

  CHECK(preset_names().size() == 12);
  for (const auto& name : preset_names()) make_preset(name).validate();
  CHECK_THROWS_AS(make_preset("test_case_7"), Error);

  ConfigOverrides ov;
  ov.preset = "test_case_4_desk";
  const RunConfig over = parse_config_text("[optim]\nrho = 0.8\n", ov);
  CHECK(over.noise == 0.02);
  CHECK(over.optim.rho == 0.8);
}

TEST_CASE("add_noise") {
  const Mesh mesh = make_box_mesh(2, {-5, -5, 0}, {5, 5, 0}, {64, 64, 1});
  const NodalField clean = make_smoothed_disc(mesh, {0, 0, 0}, 2.0, 0.5);
  REQUIRE(clean.values.size() >= 4000);
  CHECK(add_noise(clean, 0.0, 3).values == clean.values);
  CHECK(add_noise(clean, 0.02, 3).values == add_noise(clean, 0.02, 3).values);
  CHECK(add_noise(clean, 0.02, 3).values != add_noise(clean, 0.02, 4).values);
  const double a = clean.values.cwiseAbs().maxCoeff();
  for (double level : {0.02, 0.10}) {
    const Vector d = (add_noise(clean, level, 11).values - clean.values) / a;
    const double mean = d.mean();
    const double sd = std::sqrt((d.array() - mean).square().sum() / static_cast<double>(d.size() - 1));
    CHECK(sd >= 0.9 * level);
    CHECK(sd <= 1.1 * level);
  }
  CHECK_THROWS_AS(add_noise(clean, 1.0, 1), Error);
  CHECK_THROWS_AS(add_noise(clean, -0.1, 1), Error);
}

TEST_CASE("make_target with T = 0 returns the truth") {
  RunConfig c = tiny(Mode::make_target);
  c.T = 0.0;
  const TargetSet t = make_target(c);
  CHECK(t.mesh->num_cells() == 2 * 12 * 12);
  CHECK(t.phi_meas.values == t.phi0.values);
  CHECK_FALSE(t.sigma_meas);
  CHECK(t.phi0.values.minCoeff() >= 0.0);
  CHECK(t.phi0.values.maxCoeff() <= 1.0);
}

TEST_CASE("make_target: forward run, sigma target and transfer range") {
  RunConfig c = tiny(Mode::make_target);
  c.sigma_target = true;
  const TargetSet t = make_target(c);
  REQUIRE(t.sigma_meas);
  CHECK(t.phi_meas.values != t.phi0.values);
  const auto dir = scratch_dir("target");
  write_target(t, dir.string());
  const FieldFile target = read_vtk((dir / "target.vtk").string());
  CHECK(target.has("phi_meas"));
  CHECK(target.has("sigma_meas"));
  const FieldFile truth = read_vtk((dir / "truth.vtk").string());
  CHECK(truth.get("phi0").values == t.phi0.values);

  // transfer to the coarser mesh stays inside the source range
  const Mesh coarse = make_box_mesh(2, c.mesh.lower, c.mesh.upper, c.mesh.n);
  const Vector moved = transfer(target.get("phi_meas"), *target.mesh, coarse).values;
  CHECK(moved.minCoeff() >= t.phi_meas.values.minCoeff() - 1e-14);
  CHECK(moved.maxCoeff() <= t.phi_meas.values.maxCoeff() + 1e-14);
}

TEST_CASE("initial data shapes") {
  const Mesh mesh = make_box_mesh(2, {-5, -5, 0}, {5, 5, 0}, {20, 20, 1});
  InitialSpec squares = InitialSpec::of(Shape::squares);
  squares.center = {-1, -1, 0};
  squares.center2 = {1, 1, 0};
  squares.side = 0.75;
  squares.plateau = 0.6;
  squares.plateau2 = 0.8;
  const Vector sq = initial_phi(squares, mesh).values;
  CHECK(sq.maxCoeff() <= 0.8 + 1e-6);
  CHECK(sq.minCoeff() >= 0.0);
  CHECK(initial_phi(InitialSpec::of(Shape::zero), mesh).values.isZero());

  InitialSpec two = InitialSpec::of(Shape::two_discs);
  two.radius = 0.4;
  two.offset = 1.2;
  const Vector td = initial_phi(two, mesh).values;
  // symmetric about x = 0 on the symmetric mesh
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i)
    if (std::abs(mesh.vertex(i)[0] - 1.0) < 1e-12 && std::abs(mesh.vertex(i)[1]) < 1e-12) CHECK(td[i] > 0.5);
  CHECK(td.maxCoeff() <= 1.0);
}

TEST_CASE("VTK: golden file for two triangles") {
  const Mesh mesh = make_box_mesh(2, {0, 0, 0}, {1, 1, 0}, {1, 1, 1});
  REQUIRE(mesh.num_cells() == 2);
  Vector f(4);
  for (int i = 0; i < 4; ++i) f[i] = mesh.vertex(i)[0] + 2.0 * mesh.vertex(i)[1] + 0.1;
  const std::string text = vtk_string(mesh, {{"f", &f}});
  CHECK(text == slurp(fs::path(CHG_TEST_DATA) / "two_triangles.vtk"));
}

TEST_CASE("VTK: empty field list, 3D cell types, round trip") {
  const Mesh mesh2 = make_box_mesh(2, {0, 0, 0}, {1, 1, 0}, {1, 1, 1});
  const std::string geo = vtk_string(mesh2, {});
  CHECK(geo.find("POINT_DATA") == std::string::npos);
  CHECK(geo.find("CELL_TYPES 2\n5\n5\n") != std::string::npos);

  const Mesh cube = make_box_mesh(3, {0, 0, 0}, {1, 1, 1}, {1, 1, 1});
  const std::string c3 = vtk_string(cube, {});
  const auto pos = c3.find("CELL_TYPES " + std::to_string(cube.num_cells()) + "\n");
  REQUIRE(pos != std::string::npos);
  std::istringstream types(c3.substr(pos));
  std::string word;
  std::size_t count = 0;
  types >> word >> count;
  for (std::size_t i = 0; i < count; ++i) {
    int t = 0;
    types >> t;
    CHECK(t == 10);
  }

  const Mesh mesh = make_box_mesh(2, {-1, -1, 0}, {1, 1, 0}, {3, 4, 1});
  const Vector a = Vector::Random(static_cast<Eigen::Index>(mesh.num_vertices()));
  const Vector b = a.array().exp();
  const auto dir = scratch_dir("vtk");
  const std::string path = (dir / "f.vtk").string();
  write_vtk(mesh, {{"a", &a}, {"b", &b}}, path);
  CHECK_FALSE(fs::exists(path + ".tmp"));
  const FieldFile back = read_vtk(path);
  CHECK(back.mesh->num_cells() == mesh.num_cells());
  CHECK(back.get("a").values == a);
  CHECK(back.get("b").values == b);
  CHECK(vtk_string(*back.mesh, {{"a", &a}, {"b", &b}}) == slurp(path));
  CHECK_THROWS_AS(back.get("c"), Error);

  const Vector wrong = Vector::Zero(3);
  CHECK_THROWS_AS(vtk_string(mesh, {{"w", &wrong}}), Error);
  CHECK_THROWS_AS(vtk_string(mesh, {{"two words", &a}}), Error);
  CHECK_THROWS_AS(parse_vtk("# vtk DataFile Version 3.0\nx\nBINARY\n"), Error);
  CHECK_THROWS_AS(read_vtk((dir / "missing.vtk").string()), Error);
}

TEST_CASE("superlevel set measures") {
  const Mesh mesh = make_box_mesh(2, {-1, -1, 0}, {1, 1, 0}, {4, 4, 1});
  const auto nv = static_cast<Eigen::Index>(mesh.num_vertices());
  Vector x(nv);
  for (Eigen::Index i = 0; i < nv; ++i) x[i] = mesh.vertex(i)[0];
  CHECK(superlevel_measure(mesh, Vector::Ones(nv), 0.5) == doctest::Approx(4.0));
  CHECK(superlevel_measure(mesh, Vector::Zero(nv), 0.5) == 0.0);
  // x = 0.5 is a grid line, so the sampled set is exact
  CHECK(superlevel_measure(mesh, x, 0.5) == doctest::Approx(1.0));
  const Point c = superlevel_centroid(mesh, x, 0.5);
  CHECK(c[0] == doctest::Approx(0.75));
  CHECK(c[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(superlevel_symmetric_difference(mesh, x, -x, 0.5) == doctest::Approx(2.0));
  CHECK(superlevel_symmetric_difference(mesh, x, x, 0.5) == 0.0);

  const ReconstructionErrors e = compare_to_truth(mesh, x, x);
  CHECK(e.l2_error == 0.0);
  CHECK(e.symmetric_difference == 0.0);
  CHECK(e.centroid_error == 0.0);
  CHECK(e.truth_area == doctest::Approx(1.0));
  CHECK(e.cell_diameter == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("convergence CSV") {
  ConvergenceRecord rec;
  IterationRecord r;
  r.k = 1;
  r.cost = CostBreakdown{0.25, 0.125, 0.0625, 0.03125};
  r.m = 2;
  r.step = 0.81;
  r.cells = 128;
  rec.rows.push_back(r);
  const std::string one = convergence_csv(rec);
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);
  CHECK(one.substr(0, one.find('\n')) ==
        "k,J,J_data_phi,J_data_sigma,J_reg_phi,J_reg_sigma,v_phi_norm,v_sigma_norm,m_k,step,cells,newton_iters,wall_s");
  CHECK_THROWS_AS(convergence_csv(ConvergenceRecord{}), Error);
}

TEST_CASE("reconstruct mode: outputs, bookkeeping and reproducibility") {
  RunConfig c = tiny(Mode::reconstruct);
  c.optim.max_iterations = 3;
  c.noise = 0.02;
  c.output = scratch_dir("reconstruct_a").string();
  const ReconstructRun a = run_reconstruct(c);
  const auto& rows = a.result.record.rows;
  REQUIRE_FALSE(rows.empty());
  for (const auto& r : rows) {
    CHECK(r.cost.total() ==
          doctest::Approx(r.cost.data_phi + r.cost.data_sigma + r.cost.reg_phi + r.cost.reg_sigma).epsilon(1e-12));
    CHECK(r.wall_s == 0.0);
  }
  CHECK(a.result.record.monotone());
  CHECK(a.noise_energy > 0.0);
  REQUIRE(a.errors);
  const fs::path out(c.output);
  const std::string csv = slurp(out / "convergence.csv");
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == rows.size() + 1);
  CHECK(fs::exists(out / "reconstruction.vtk"));
  CHECK(fs::exists(out / "iterate_0001.vtk"));
  CHECK(fs::exists(out / "target.vtk"));

  c.output = scratch_dir("reconstruct_b").string();
  run_reconstruct(c);
  CHECK(slurp(fs::path(c.output) / "convergence.csv") == csv);
  CHECK(slurp(fs::path(c.output) / "reconstruction.vtk") == slurp(out / "reconstruction.vtk"));

  // a stored target gives the same run
  RunConfig from_file = c;
  from_file.target_file = (out / "target.vtk").string();
  from_file.output = scratch_dir("reconstruct_c").string();
  const ReconstructRun f = run_reconstruct(from_file, false);
  CHECK(f.result.record.rows.back().cost.total() == rows.back().cost.total());
}

TEST_CASE("grad_check") {
  SUBCASE("desk parameters") {
    RunConfig c = tiny(Mode::grad_check);
    const GradCheckReport rep = grad_check(c);
    CHECK(rep.rows.size() == 5);
    CHECK(rep.worst() <= 1e-5);
  }
  SUBCASE("sigma variant") {
    RunConfig c = tiny(Mode::grad_check);
    c.optim.lambda2 = 1.0;
    c.optim.alpha2 = 0.01;
    c.optim.update_sigma = true;
    c.sigma_target = true;
    CHECK(grad_check(c).worst() <= 1e-5);
  }
  SUBCASE("quadratic functional") {
    RunConfig c = tiny(Mode::grad_check);
    c.optim.lambda1 = 0.0;
    c.optim.alpha1 = 0.0;
    c.optim.alpha2 = 0.5;
    c.optim.update_sigma = true;
    CHECK(grad_check(c).worst() <= 1e-8);
  }
  SUBCASE("zero direction") {
    const GradCheckReport rep = grad_check(tiny(Mode::grad_check), true);
    CHECK(rep.rows[0].pairing == 0.0);
    CHECK(rep.rows[0].fd == 0.0);
    CHECK(rep.rows[0].rel_error == 0.0);
  }
  SUBCASE("size limits") {
    RunConfig c = tiny(Mode::grad_check);
    c.mesh.n = {32, 32, 1};
    CHECK_THROWS_AS(grad_check(c), Error);
  }
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ErrorKind::config) == 2);
  CHECK(exit_code_for(ErrorKind::nonlinear_solver) == 3);
  CHECK(exit_code_for(ErrorKind::linear_solver) == 3);
  CHECK(exit_code_for(ErrorKind::line_search) == 5);

  std::ostringstream log;
  RunConfig bad = tiny(Mode::forward);
  bad.optim.rho = 1.5;
  CHECK(run_mode(bad, log) == exit_config);

  RunConfig missing = tiny(Mode::reconstruct);
  missing.target_file = "/nonexistent/target.vtk";
  CHECK(run_mode(missing, log) == exit_solver);

  RunConfig gc = tiny(Mode::grad_check);
  gc.output = scratch_dir("gc").string();
  CHECK(run_mode(gc, log) == exit_ok);
  CHECK(fs::exists(fs::path(gc.output) / "grad_check.csv"));

  RunConfig fw = tiny(Mode::forward);
  fw.output = scratch_dir("fw").string();
  CHECK(run_mode(fw, log) == exit_ok);
  const std::string csv = slurp(fs::path(fw.output) / "forward.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 + 1);
  CHECK(fs::exists(fs::path(fw.output) / "forward_00000.vtk"));
  CHECK(fs::exists(fs::path(fw.output) / "forward_00005.vtk"));
}
