#include "chg/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "chg/error.hpp"

namespace chg {

Mode parse_mode(const std::string& s) {
  if (s == "forward") return Mode::forward;
  if (s == "make-target") return Mode::make_target;
  if (s == "reconstruct") return Mode::reconstruct;
  if (s == "grad-check") return Mode::grad_check;
  fail(ErrorKind::config, "unknown mode '" + s + "' (forward, make-target, reconstruct, grad-check)");
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::forward:
      return "forward";
    case Mode::make_target:
      return "make-target";
    case Mode::reconstruct:
      return "reconstruct";
    case Mode::grad_check:
      return "grad-check";
  }
  return "?";
}

void RunConfig::validate() const {
  model.validate();
  optim.validate();
  solver.validate();
  if (mesh.dim != 2 && mesh.dim != 3) fail(ErrorKind::config, "mesh.dim must be 2 or 3");
  for (int k = 0; k < mesh.dim; ++k) {
    if (!(mesh.lower[k] < mesh.upper[k])) fail(ErrorKind::config, "mesh.lower must be below mesh.upper");
    if (mesh.n[k] < 1 || mesh.gen_n[k] < 1) fail(ErrorKind::config, "mesh.n and mesh.gen_n must be positive");
  }
  if (mesh.refine && mesh.dim == 3) fail(ErrorKind::config, "mesh.refine is only supported in 2D");
  if (!(mesh.theta > 0.0 && mesh.theta <= 1.0)) fail(ErrorKind::config, "mesh.theta must lie in (0,1]");
  if (mesh.max_generation < 0) fail(ErrorKind::config, "mesh.max_generation must be non-negative");
  if (!(T >= 0.0) || !std::isfinite(T)) fail(ErrorKind::config, "time.T must be non-negative");
  if (T == 0.0) {
    if (mode != Mode::make_target) fail(ErrorKind::config, "time.T = 0 is only allowed in make-target mode");
  } else {
    grid();
  }
  if (!(noise >= 0.0 && noise < 1.0)) fail(ErrorKind::config, "target.noise must lie in [0,1)");
  if (optim.lambda2 != 0.0 && !sigma_target && target_file.empty())
    fail(ErrorKind::config, "optim.lambda2 > 0 needs target.sigma = true");
  for (const InitialSpec* s : {&truth, &guess}) {
    if (s->shape == Shape::file && s->file.empty()) fail(ErrorKind::config, "shape = file needs a file key");
    if (s->sigma == SigmaInit::file && s->file.empty()) fail(ErrorKind::config, "sigma = file needs a file key");
    if (!(s->width > 0.0)) fail(ErrorKind::config, "width must be positive");
    if (!(s->radius > 0.0) || !(s->side > 0.0)) fail(ErrorKind::config, "radius and side must be positive");
    if (!(s->plateau > 0.0 && s->plateau <= 1.0) || !(s->plateau2 > 0.0 && s->plateau2 <= 1.0))
      fail(ErrorKind::config, "plateau values must lie in (0,1]");
  }
  if (checkpoint_stride < 0) fail(ErrorKind::config, "run.checkpoint_stride must be non-negative");
  if (gradcheck_directions < 1) fail(ErrorKind::config, "gradcheck.directions must be at least 1");
  if (mode == Mode::grad_check) {
    for (int k = 0; k < mesh.dim; ++k)
      if (mesh.n[k] > 16) fail(ErrorKind::config, "grad-check needs a mesh of at most 16 cells per axis");
    if (grid().N > 10) fail(ErrorKind::config, "grad-check needs at most 10 time steps");
  }
}

namespace {

RunConfig desk_base() {
  RunConfig c;
  c.optim.update_sigma = false;
  c.truth = InitialSpec::of(Shape::disc);
  c.guess = InitialSpec::of(Shape::zero);
  return c;
}

void make_paper_scale(RunConfig& c, double T) {
  c.mesh.n = {64, 64, 1};
  c.mesh.gen_n = {80, 80, 1};
  c.mesh.refine = true;
  c.T = T;
  c.dt = 0.01;
  const double w = c.model.eps / std::sqrt(c.model.Gamma);
  c.truth.width = w;
  c.guess.width = w;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (int i = 1; i <= 6; ++i) {
    out.push_back("test_case_" + std::to_string(i));
    out.push_back("test_case_" + std::to_string(i) + "_desk");
  }
  return out;
}

RunConfig make_preset(const std::string& name) {
  const bool desk = name.size() > 5 && name.ends_with("_desk");
  const std::string base = desk ? name.substr(0, name.size() - 5) : name;
  RunConfig c = desk_base();
  c.preset = name;
  double paper_T = 20.0;
  if (base == "test_case_1") {
    c.optim.lambda2 = 1.0;
    c.optim.alpha2 = 0.01;
    c.optim.update_sigma = true;
    c.sigma_target = true;
    c.truth.sigma = SigmaInit::one_minus_phi;
    c.guess.sigma = SigmaInit::one;
    paper_T = 30.0;
  } else if (base == "test_case_2") {
  } else if (base == "test_case_3") {
    c.truth.shape = Shape::squares;
    c.truth.center = {-1.0, -1.0, 0.0};
    c.truth.center2 = {1.0, 1.0, 0.0};
    c.truth.side = desk ? 0.75 : 0.25;
    c.truth.plateau = 0.6;
    c.truth.plateau2 = 0.8;
  } else if (base == "test_case_4") {
    c.noise = 0.02;
  } else if (base == "test_case_5") {
    c.guess.shape = Shape::two_discs;
    c.guess.radius = 0.4;
    c.guess.offset = 1.2;
  } else if (base == "test_case_6") {
    c.mesh.dim = 3;
    c.mesh.lower = {-5.0, -5.0, -5.0};
    c.mesh.upper = {5.0, 5.0, 5.0};
    c.mesh.n = {12, 12, 12};
    c.mesh.gen_n = {16, 16, 16};
    paper_T = 40.0;
  } else {
    std::string list;
    for (const auto& n : preset_names()) list += " " + n;
    fail(ErrorKind::config, "unknown preset '" + name + "'; available:" + list);
  }
  if (desk) {
    // about 1% of the first |v| from a null guess; the default stops far
    // past the point where the superlevel set has settled
    c.optim.tol_v = 1e-2;
    c.optim.max_iterations = 150;
  } else {
    make_paper_scale(c, paper_T);
    if (base == "test_case_6") {
      c.mesh.n = {60, 60, 60};
      c.mesh.gen_n = {80, 80, 80};
      c.mesh.refine = false;
    }
  }
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  int line;
};

class KeyError {
 public:
  KeyError(std::string key, int line) : key_(std::move(key)), line_(line) {}
  [[noreturn]] void operator()(const std::string& msg) const {
    fail(ErrorKind::config, "config line " + std::to_string(line_) + ": " + key_ + ": " + msg);
  }

 private:
  std::string key_;
  int line_;
};

double to_double(const std::string& v, const KeyError& err) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || ptr != end || !std::isfinite(x)) err("expected a number, got '" + v + "'");
  return x;
}

long long to_int(const std::string& v, const KeyError& err) {
  long long x = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || ptr != end) err("expected an integer, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& v, const KeyError& err) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || ptr != end) err("expected an unsigned integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& v, const KeyError& err) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  err("expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::string s = v;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

Point to_point(const std::string& v, const KeyError& err) {
  const auto parts = split_list(v);
  if (parts.empty() || parts.size() > 3) err("expected 1 to 3 coordinates");
  Point p{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < parts.size(); ++i) p[i] = to_double(parts[i], err);
  return p;
}

std::array<int, 3> to_counts(const std::string& v, const KeyError& err) {
  const auto parts = split_list(v);
  if (parts.empty() || parts.size() > 3) err("expected 1 to 3 cell counts");
  std::array<int, 3> n{1, 1, 1};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const long long x = to_int(parts[i], err);
    if (x < 1 || x > 100000) err("cell counts must be positive");
    n[i] = static_cast<int>(x);
  }
  // a single count applies to every axis
  if (parts.size() == 1) n = {n[0], n[0], n[0]};
  return n;
}

Shape to_shape(const std::string& v, const KeyError& err) {
  if (v == "zero") return Shape::zero;
  if (v == "disc") return Shape::disc;
  if (v == "two_discs") return Shape::two_discs;
  if (v == "squares") return Shape::squares;
  if (v == "file") return Shape::file;
  err("unknown shape '" + v + "' (zero, disc, two_discs, squares, file)");
}

SigmaInit to_sigma(const std::string& v, const KeyError& err) {
  if (v == "stationary") return SigmaInit::stationary;
  if (v == "one") return SigmaInit::one;
  if (v == "one_minus_phi") return SigmaInit::one_minus_phi;
  if (v == "file") return SigmaInit::file;
  err("unknown sigma initialisation '" + v + "' (stationary, one, one_minus_phi, file)");
}

using Setter = std::function<void(RunConfig&, const std::string&, const KeyError&)>;

#define CHG_INT(field) \
  [](RunConfig& c, const std::string& v, const KeyError& e) { c.field = static_cast<int>(to_int(v, e)); }
// number with a single-key constraint, reported against the key and line
#define CHG_NUM_IF(field, ok, what)                                          \
  [](RunConfig& c, const std::string& v, const KeyError& e) {             \
    const double x = to_double(v, e);                                     \
    if (!(ok)) e("must " what ", got " + v);                              \
    c.field = x;                                                          \
  }
#define CHG_INT_MIN(field, lo)                                               \
  [](RunConfig& c, const std::string& v, const KeyError& e) {             \
    const long long x = to_int(v, e);                                     \
    if (x < (lo) || x > 1000000000) e("must be at least " #lo ", got " + v); \
    c.field = static_cast<int>(x);                                        \
  }
#define CHG_BOOL(field) [](RunConfig& c, const std::string& v, const KeyError& e) { c.field = to_bool(v, e); }

void add_initial_keys(std::map<std::string, Setter>& t, const std::string& sec, InitialSpec RunConfig::*spec) {
  t[sec + ".shape"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) { (c.*spec).shape = to_shape(v, e); };
  t[sec + ".center"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) { (c.*spec).center = to_point(v, e); };
  t[sec + ".center2"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) {
    (c.*spec).center2 = to_point(v, e);
  };
  t[sec + ".radius"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) { (c.*spec).radius = to_double(v, e); };
  t[sec + ".width"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) { (c.*spec).width = to_double(v, e); };
  t[sec + ".offset"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) { (c.*spec).offset = to_double(v, e); };
  t[sec + ".side"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) { (c.*spec).side = to_double(v, e); };
  t[sec + ".plateau"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) {
    (c.*spec).plateau = to_double(v, e);
  };
  t[sec + ".plateau2"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) {
    (c.*spec).plateau2 = to_double(v, e);
  };
  t[sec + ".sigma"] = [spec](RunConfig& c, const std::string& v, const KeyError& e) { (c.*spec).sigma = to_sigma(v, e); };
  t[sec + ".file"] = [spec](RunConfig& c, const std::string& v, const KeyError&) { (c.*spec).file = v; };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["run.mode"] = [](RunConfig& c, const std::string& v, const KeyError& e) {
      try {
        c.mode = parse_mode(v);
      } catch (const Error& err) {
        e(err.what());
      }
    };
    t["run.preset"] = [](RunConfig&, const std::string&, const KeyError&) {};  // applied before the other keys
    t["run.seed"] = [](RunConfig& c, const std::string& v, const KeyError& e) { c.seed = to_u64(v, e); };
    t["run.output"] = [](RunConfig& c, const std::string& v, const KeyError&) { c.output = v; };
    t["run.checkpoint_stride"] = CHG_INT_MIN(checkpoint_stride, 0);
    t["run.timing"] = CHG_BOOL(optim.record_timing);

    t["mesh.dim"] = CHG_INT(mesh.dim);
    t["mesh.lower"] = [](RunConfig& c, const std::string& v, const KeyError& e) { c.mesh.lower = to_point(v, e); };
    t["mesh.upper"] = [](RunConfig& c, const std::string& v, const KeyError& e) { c.mesh.upper = to_point(v, e); };
    t["mesh.n"] = [](RunConfig& c, const std::string& v, const KeyError& e) { c.mesh.n = to_counts(v, e); };
    t["mesh.gen_n"] = [](RunConfig& c, const std::string& v, const KeyError& e) { c.mesh.gen_n = to_counts(v, e); };
    t["mesh.refine"] = CHG_BOOL(mesh.refine);
    t["mesh.theta"] = CHG_NUM_IF(mesh.theta, x > 0.0 && x <= 1.0, "lie in (0,1]");
    t["mesh.max_generation"] = CHG_INT_MIN(mesh.max_generation, 0);

    t["time.T"] = CHG_NUM_IF(T, x >= 0.0, "be non-negative");
    t["time.dt"] = CHG_NUM_IF(dt, x > 0.0, "be positive");

    t["model.P0"] = CHG_NUM_IF(model.P0, x >= 0.0, "be non-negative");
    t["model.delta"] = CHG_NUM_IF(model.delta, x > 0.0, "be positive");
    t["model.D_phi"] = CHG_NUM_IF(model.D_phi, x >= 0.0, "be non-negative");
    t["model.D_sigma"] = CHG_NUM_IF(model.D_sigma, x >= 0.0, "be non-negative");
    t["model.Gamma"] = CHG_NUM_IF(model.Gamma, x > 0.0, "be positive");
    t["model.chi"] = CHG_NUM_IF(model.chi, x >= 0.0, "be non-negative");
    t["model.eps"] = CHG_NUM_IF(model.eps, x > 0.0, "be positive");
    t["model.c"] = CHG_NUM_IF(model.c, x >= 0.0, "be non-negative");
    t["model.kappa"] = CHG_NUM_IF(model.kappa, x >= 0.0, "be non-negative");

    t["optim.lambda1"] = CHG_NUM_IF(optim.lambda1, x >= 0.0, "be non-negative");
    t["optim.lambda2"] = CHG_NUM_IF(optim.lambda2, x >= 0.0, "be non-negative");
    t["optim.alpha1"] = CHG_NUM_IF(optim.alpha1, x >= 0.0, "be non-negative");
    t["optim.alpha1_tilde"] = [](RunConfig&, const std::string&, const KeyError&) {};  // needs the final Gamma
    t["optim.alpha2"] = CHG_NUM_IF(optim.alpha2, x >= 0.0, "be non-negative");
    t["optim.rho"] = CHG_NUM_IF(optim.rho, x > 0.0 && x < 1.0, "lie in (0,1)");
    t["optim.iota"] = CHG_NUM_IF(optim.iota, x > 0.0 && x < 1.0, "lie in (0,1)");
    t["optim.tol_v"] = [](RunConfig& c, const std::string& v, const KeyError& e) {
      const double x = to_double(v, e);
      if (!(x > 0.0)) e("must be positive, got " + v);
      c.optim.tol_v = x;
    };
    t["optim.max_iterations"] = CHG_INT_MIN(optim.max_iterations, 1);
    t["optim.m_max"] = CHG_INT_MIN(optim.m_max, 0);
    t["optim.update_sigma"] = CHG_BOOL(optim.update_sigma);

    t["solver.method"] = [](RunConfig& c, const std::string& v, const KeyError& e) {
      if (v == "auto")
        c.solver.method = SolverConfig::Method::automatic;
      else if (v == "direct")
        c.solver.method = SolverConfig::Method::direct;
      else if (v == "iterative")
        c.solver.method = SolverConfig::Method::iterative;
      else
        e("expected auto, direct or iterative");
    };
    t["solver.rtol"] = CHG_NUM_IF(solver.rtol, x > 0.0, "be positive");
    t["solver.atol"] = CHG_NUM_IF(solver.atol, x > 0.0, "be positive");
    t["solver.max_iterations"] = CHG_INT(solver.max_iterations);
    t["solver.reuse"] = CHG_BOOL(solver.reuse_factorization);
    t["solver.newton_tol"] = CHG_NUM_IF(newton.tol, x > 0.0, "be positive");
    t["solver.newton_max_iterations"] = CHG_INT(newton.max_iterations);

    add_initial_keys(t, "truth", &RunConfig::truth);
    add_initial_keys(t, "guess", &RunConfig::guess);

    t["target.file"] = [](RunConfig& c, const std::string& v, const KeyError&) { c.target_file = v; };
    t["target.sigma"] = CHG_BOOL(sigma_target);
    t["target.noise"] = CHG_NUM_IF(noise, x >= 0.0 && x < 1.0, "lie in [0,1)");
    t["target.noise_scale"] = [](RunConfig& c, const std::string& v, const KeyError& e) {
      if (v == "max_abs")
        c.noise_scale = NoiseScale::max_abs;
      else if (v == "relative")
        c.noise_scale = NoiseScale::relative;
      else
        e("expected max_abs or relative");
    };

    t["gradcheck.directions"] = CHG_INT_MIN(gradcheck_directions, 1);
    return t;
  }();
  return table;
}

#undef CHG_INT
#undef CHG_BOOL
#undef CHG_NUM_IF
#undef CHG_INT_MIN

}  // namespace

RunConfig parse_config_text(const std::string& text, const ConfigOverrides& overrides) {
  std::vector<std::pair<std::string, Entry>> entries;
  std::map<std::string, int> seen;
  std::istringstream is(text);
  std::string section;
  int lineno = 0;
  for (std::string raw; std::getline(is, raw);) {
    ++lineno;
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorKind::config, "config line " + std::to_string(lineno) + ": malformed section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config, "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!setters().contains(key)) fail(ErrorKind::config, "config line " + std::to_string(lineno) + ": unknown key " + key);
    if (seen.contains(key))
      fail(ErrorKind::config, "config line " + std::to_string(lineno) + ": duplicate key " + key + " (first on line " +
                                  std::to_string(seen[key]) + ")");
    seen[key] = lineno;
    entries.push_back({key, Entry{value, lineno}});
  }

  std::string preset;
  for (const auto& [k, e] : entries)
    if (k == "run.preset") preset = e.value;
  if (overrides.preset) preset = *overrides.preset;
  RunConfig cfg = preset.empty() ? RunConfig{} : make_preset(preset);

  std::optional<Entry> alpha_tilde;
  for (const auto& [k, e] : entries) {
    setters().at(k)(cfg, e.value, KeyError(k, e.line));
    if (k == "optim.alpha1_tilde") alpha_tilde = e;
  }
  if (alpha_tilde) {
    if (seen.contains("optim.alpha1"))
      fail(ErrorKind::config, "config line " + std::to_string(alpha_tilde->line) +
                                  ": optim.alpha1_tilde and optim.alpha1 are mutually exclusive");
    cfg.optim.alpha1 = to_double(alpha_tilde->value, KeyError("optim.alpha1_tilde", alpha_tilde->line)) / cfg.model.Gamma;
  }

  if (overrides.mode) cfg.mode = *overrides.mode;
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.output) cfg.output = *overrides.output;
  cfg.optim.refine = cfg.mesh.refine;
  cfg.optim.theta = cfg.mesh.theta;
  cfg.optim.max_generation = cfg.mesh.max_generation;
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::string& path, const ConfigOverrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::config, "cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

}  // namespace chg
