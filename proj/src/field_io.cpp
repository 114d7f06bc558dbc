#include "chg/field_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "chg/error.hpp"

namespace chg {

namespace fs = std::filesystem;

bool FieldFile::has(const std::string& name) const {
  for (const auto& f : fields)
    if (f.first == name) return true;
  return false;
}

NodalField FieldFile::get(const std::string& name) const {
  for (const auto& f : fields)
    if (f.first == name) return NodalField{mesh->id(), f.second, FieldUnit::dimensionless};
  fail(ErrorKind::io, "field '" + name + "' not found in file");
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

std::string vtk_string(const Mesh& mesh, const std::vector<NamedField>& fields) {
  for (const auto& [name, v] : fields) {
    if (!v || v->size() != static_cast<Eigen::Index>(mesh.num_vertices()))
      fail(ErrorKind::geometry, "write_vtk: field '" + name + "' does not match the mesh");
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
      fail(ErrorKind::io, "write_vtk: field names must be non-empty without whitespace");
  }
  const std::size_t nv = mesh.num_vertices();
  const std::size_t nc = mesh.num_cells();
  const int k = mesh.vertices_per_cell();
  std::string out;
  out.reserve(64 * nv * (1 + fields.size()));
  out += "# vtk DataFile Version 3.0\nchg\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out += "POINTS " + std::to_string(nv) + " double\n";
  for (std::size_t i = 0; i < nv; ++i) {
    const Point& x = mesh.vertex(i);
    append_number(out, x[0]);
    out += ' ';
    append_number(out, x[1]);
    out += ' ';
    append_number(out, x[2]);
    out += '\n';
  }
  out += "CELLS " + std::to_string(nc) + " " + std::to_string(nc * (k + 1)) + "\n";
  for (std::size_t c = 0; c < nc; ++c) {
    out += std::to_string(k);
    for (int v : mesh.cell(c)) out += " " + std::to_string(v);
    out += '\n';
  }
  out += "CELL_TYPES " + std::to_string(nc) + "\n";
  const std::string type = mesh.dim() == 2 ? "5\n" : "10\n";
  for (std::size_t c = 0; c < nc; ++c) out += type;
  if (!fields.empty()) {
    out += "POINT_DATA " + std::to_string(nv) + "\n";
    for (const auto& [name, v] : fields) {
      out += "SCALARS " + name + " double 1\nLOOKUP_TABLE default\n";
      for (Eigen::Index i = 0; i < v->size(); ++i) {
        append_number(out, (*v)[i]);
        out += '\n';
      }
    }
  }
  return out;
}

void write_vtk(const Mesh& mesh, const std::vector<NamedField>& fields, const std::string& path) {
  write_file_atomic(path, vtk_string(mesh, fields));
}

FieldFile parse_vtk(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  for (int i = 0; i < 3; ++i)
    if (!std::getline(is, line)) fail(ErrorKind::io, "VTK: truncated header");
  if (line != "ASCII") fail(ErrorKind::io, "VTK: only ASCII files are supported");
  auto expect = [&](const std::string& word) {
    std::string tok;
    if (!(is >> tok) || tok != word) fail(ErrorKind::io, "VTK: expected " + word);
  };
  auto read_count = [&]() {
    long long n = -1;
    if (!(is >> n) || n < 0) fail(ErrorKind::io, "VTK: bad count");
    return static_cast<std::size_t>(n);
  };
  expect("DATASET");
  expect("UNSTRUCTURED_GRID");
  expect("POINTS");
  const std::size_t nv = read_count();
  std::string type;
  is >> type;
  std::vector<Point> pts(nv);
  for (auto& p : pts)
    if (!(is >> p[0] >> p[1] >> p[2])) fail(ErrorKind::io, "VTK: truncated POINTS");
  expect("CELLS");
  const std::size_t nc = read_count();
  read_count();
  std::vector<CellVertices> cells(nc, CellVertices{-1, -1, -1, -1});
  int k_all = -1;
  for (auto& c : cells) {
    int k = 0;
    if (!(is >> k) || k < 3 || k > 4 || (k_all >= 0 && k != k_all)) fail(ErrorKind::io, "VTK: unsupported cell");
    k_all = k;
    for (int j = 0; j < k; ++j)
      if (!(is >> c[j]) || c[j] < 0 || static_cast<std::size_t>(c[j]) >= nv)
        fail(ErrorKind::io, "VTK: bad cell connectivity");
  }
  expect("CELL_TYPES");
  if (read_count() != nc) fail(ErrorKind::io, "VTK: CELL_TYPES count mismatch");
  for (std::size_t c = 0; c < nc; ++c) {
    int t = 0;
    is >> t;
    if (t != (k_all == 4 ? 10 : 5)) fail(ErrorKind::io, "VTK: unexpected cell type");
  }
  const int dim = k_all == 4 ? 3 : 2;
  Point lo{0.0, 0.0, 0.0}, hi{0.0, 0.0, 0.0};
  for (int d = 0; d < dim; ++d) {
    lo[d] = hi[d] = nv ? pts[0][d] : 0.0;
    for (const auto& p : pts) {
      lo[d] = std::min(lo[d], p[d]);
      hi[d] = std::max(hi[d], p[d]);
    }
  }
  FieldFile out;
  out.mesh = std::make_shared<const Mesh>(dim, lo, hi, std::move(pts), std::move(cells));
  std::string tok;
  if (is >> tok) {
    if (tok != "POINT_DATA" || read_count() != nv) fail(ErrorKind::io, "VTK: bad POINT_DATA");
    while (is >> tok) {
      if (tok != "SCALARS") fail(ErrorKind::io, "VTK: expected SCALARS");
      std::string name, ty;
      int comps = 0;
      is >> name >> ty >> comps;
      if (comps != 1) fail(ErrorKind::io, "VTK: only scalar fields are supported");
      expect("LOOKUP_TABLE");
      is >> tok;
      Vector v(static_cast<Eigen::Index>(nv));
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!(is >> tok)) fail(ErrorKind::io, "VTK: truncated field " + name);
        char* end = nullptr;
        v[i] = std::strtod(tok.c_str(), &end);
        if (*end != '\0') fail(ErrorKind::io, "VTK: bad number in field " + name);
      }
      out.fields.emplace_back(name, std::move(v));
    }
  }
  return out;
}

FieldFile read_vtk(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_vtk(ss.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

std::string convergence_csv(const ConvergenceRecord& record) {
  if (record.rows.empty()) fail(ErrorKind::io, "convergence record is empty");
  std::string out =
      "k,J,J_data_phi,J_data_sigma,J_reg_phi,J_reg_sigma,v_phi_norm,v_sigma_norm,m_k,step,cells,newton_iters,wall_s\n";
  char buf[512];
  for (const auto& r : record.rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g,%zu,%d,%.6f\n", r.k,
                  r.cost.total(), r.cost.data_phi, r.cost.data_sigma, r.cost.reg_phi, r.cost.reg_sigma, r.v_phi_norm,
                  r.v_sigma_norm, r.m, r.step, r.cells, r.newton_iterations, r.wall_s);
    out += buf;
  }
  return out;
}

void write_convergence_csv(const ConvergenceRecord& record, const std::string& path) {
  write_file_atomic(path, convergence_csv(record));
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) fail(ErrorKind::io, "cannot create directory " + target.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) fail(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::io, "cannot rename onto " + path);
  }
}

}  // namespace chg
