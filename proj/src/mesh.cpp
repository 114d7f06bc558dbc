#include "chg/mesh.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>

#include "chg/error.hpp"

namespace chg {

namespace {

std::uint64_t next_mesh_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

std::uint64_t facet_key(std::array<int, 3> v, int n) {
  std::sort(v.begin(), v.begin() + n);
  if (n == 2) return edge_key(v[0], v[1]);
  return (static_cast<std::uint64_t>(v[0]) << 42) | (static_cast<std::uint64_t>(v[1]) << 21) |
         static_cast<std::uint64_t>(v[2]);
}

double distance(const Point& a, const Point& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

Point sub(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Point cross(const Point& a, const Point& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Point& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

/// Measure of a facet and its unit normal (orientation arbitrary).
std::pair<double, Point> facet_geometry(const Mesh& mesh, const Facet& f) {
  if (mesh.dim() == 2) {
    const Point t = sub(mesh.vertex(f.vertices[1]), mesh.vertex(f.vertices[0]));
    const double len = norm(t);
    return {len, {t[1] / len, -t[0] / len, 0.0}};
  }
  const Point& a = mesh.vertex(f.vertices[0]);
  const Point c = cross(sub(mesh.vertex(f.vertices[1]), a), sub(mesh.vertex(f.vertices[2]), a));
  const double twice_area = norm(c);
  return {0.5 * twice_area, {c[0] / twice_area, c[1] / twice_area, c[2] / twice_area}};
}

double facet_diameter(const Mesh& mesh, const Facet& f) {
  if (mesh.dim() == 2) return distance(mesh.vertex(f.vertices[0]), mesh.vertex(f.vertices[1]));
  double h = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      h = std::max(h, distance(mesh.vertex(f.vertices[i]), mesh.vertex(f.vertices[j])));
  return h;
}

}  // namespace

double simplex_volume(int dim, std::span<const Point> pts) {
  if (dim == 2) {
    const Point a = sub(pts[1], pts[0]);
    const Point b = sub(pts[2], pts[0]);
    return 0.5 * (a[0] * b[1] - a[1] * b[0]);
  }
  const Point a = sub(pts[1], pts[0]);
  const Point b = sub(pts[2], pts[0]);
  const Point c = sub(pts[3], pts[0]);
  const Point axb = cross(a, b);
  return (axb[0] * c[0] + axb[1] * c[1] + axb[2] * c[2]) / 6.0;
}

Mesh::Mesh(int dim, Point lower, Point upper, std::vector<Point> vertices, std::vector<CellVertices> cells,
           std::vector<int> generation)
    : dim_(dim),
      id_(next_mesh_id()),
      lower_(lower),
      upper_(upper),
      vertices_(std::move(vertices)),
      cells_(std::move(cells)),
      generation_(std::move(generation)) {
  if (dim_ != 2 && dim_ != 3) fail(ErrorKind::geometry, "mesh dimension must be 2 or 3, got " + std::to_string(dim_));
  if (generation_.empty()) generation_.assign(cells_.size(), 0);
  if (generation_.size() != cells_.size()) fail(ErrorKind::geometry, "generation array size mismatch");
  const int nv = static_cast<int>(vertices_.size());
  volumes_.resize(cells_.size());
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    std::array<Point, 4> pts{};
    for (int i = 0; i <= dim_; ++i) {
      const int v = cells_[c][i];
      if (v < 0 || v >= nv) fail(ErrorKind::geometry, "cell " + std::to_string(c) + " references vertex out of range");
      pts[i] = vertices_[v];
    }
    if (dim_ == 2) cells_[c][3] = -1;
    volumes_[c] = simplex_volume(dim_, std::span<const Point>(pts.data(), dim_ + 1));
  }
  build_facets();
}

void Mesh::build_facets() {
  std::unordered_map<std::uint64_t, int> index;
  index.reserve(cells_.size() * (dim_ + 1));
  cell_facets_.assign(cells_.size(), {-1, -1, -1, -1});
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    for (int i = 0; i <= dim_; ++i) {
      std::array<int, 3> fv{-1, -1, -1};
      int k = 0;
      for (int j = 0; j <= dim_; ++j)
        if (j != i) fv[k++] = cells_[c][j];
      const auto key = facet_key(fv, dim_);
      auto [it, inserted] = index.try_emplace(key, static_cast<int>(facets_.size()));
      if (inserted) {
        Facet f;
        f.vertices = fv;
        f.cells = {static_cast<int>(c), -1};
        facets_.push_back(f);
      } else {
        Facet& f = facets_[it->second];
        if (f.cells[1] >= 0)
          fail(ErrorKind::geometry, "facet shared by more than two cells (cell " + std::to_string(c) + ")");
        f.cells[1] = static_cast<int>(c);
      }
      cell_facets_[c][i] = it->second;
    }
  }
}

int Mesh::neighbor(std::size_t c, int i) const {
  const Facet& f = facets_[cell_facets_[c][i]];
  return f.cells[0] == static_cast<int>(c) ? f.cells[1] : f.cells[0];
}

double Mesh::total_volume() const { return std::accumulate(volumes_.begin(), volumes_.end(), 0.0); }

double Mesh::diameter() const {
  double s = 0.0;
  for (int k = 0; k < dim_; ++k) s += (upper_[k] - lower_[k]) * (upper_[k] - lower_[k]);
  return std::sqrt(s);
}

std::array<double, 4> Mesh::barycentric(std::size_t c, const Point& x) const {
  const auto& cv = cells_[c];
  const Point& v0 = vertices_[cv[0]];
  std::array<double, 4> lam{0.0, 0.0, 0.0, 0.0};
  if (dim_ == 2) {
    Eigen::Matrix2d t;
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) t(k, j) = vertices_[cv[j + 1]][k] - v0[k];
    const Eigen::Vector2d l = t.partialPivLu().solve(Eigen::Vector2d(x[0] - v0[0], x[1] - v0[1]));
    lam = {1.0 - l.sum(), l[0], l[1], 0.0};
  } else {
    Eigen::Matrix3d t;
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) t(k, j) = vertices_[cv[j + 1]][k] - v0[k];
    const Eigen::Vector3d l =
        t.partialPivLu().solve(Eigen::Vector3d(x[0] - v0[0], x[1] - v0[1], x[2] - v0[2]));
    lam = {1.0 - l.sum(), l[0], l[1], l[2]};
  }
  return lam;
}

std::array<double, 3> cell_gradient(const Mesh& mesh, std::size_t c, const Vector& values) {
  const auto cv = mesh.cell(c);
  const Point& v0 = mesh.vertex(cv[0]);
  std::array<double, 3> out{0.0, 0.0, 0.0};
  // rows are edge vectors e_j; the gradient satisfies e_j . g = u_j - u_0
  if (mesh.dim() == 2) {
    Eigen::Matrix2d t;
    Eigen::Vector2d du;
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) t(j, k) = mesh.vertex(cv[j + 1])[k] - v0[k];
      du[j] = values[cv[j + 1]] - values[cv[0]];
    }
    const Eigen::Vector2d g = t.partialPivLu().solve(du);
    out = {g[0], g[1], 0.0};
  } else {
    Eigen::Matrix3d t;
    Eigen::Vector3d du;
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) t(j, k) = mesh.vertex(cv[j + 1])[k] - v0[k];
      du[j] = values[cv[j + 1]] - values[cv[0]];
    }
    const Eigen::Vector3d g = t.partialPivLu().solve(du);
    out = {g[0], g[1], g[2]};
  }
  return out;
}

void require_on(const Mesh& mesh, const NodalField& field, const char* what) {
  if (static_cast<std::size_t>(field.values.size()) != mesh.num_vertices())
    fail(ErrorKind::geometry, std::string(what) + ": field size " + std::to_string(field.values.size()) +
                                  " does not match mesh vertex count " + std::to_string(mesh.num_vertices()));
  if (field.mesh_id != 0 && field.mesh_id != mesh.id())
    fail(ErrorKind::geometry, std::string(what) + ": field is bound to a different mesh");
}

Mesh make_box_mesh(int dim, const Point& lower, const Point& upper, const std::array<int, 3>& n) {
  if (dim != 2 && dim != 3) fail(ErrorKind::config, "box mesh dimension must be 2 or 3");
  for (int k = 0; k < dim; ++k) {
    if (!(lower[k] < upper[k])) fail(ErrorKind::config, "invalid box: lower must be below upper on every axis");
    if (n[k] < 1) fail(ErrorKind::config, "box mesh needs at least one cell per axis");
  }
  std::vector<Point> verts;
  std::vector<CellVertices> cells;
  if (dim == 2) {
    const int nx = n[0], ny = n[1];
    verts.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        verts.push_back({lower[0] + (upper[0] - lower[0]) * i / nx, lower[1] + (upper[1] - lower[1]) * j / ny, 0.0});
    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int ll = id(i, j), lr = id(i + 1, j), ur = id(i + 1, j + 1), ul = id(i, j + 1);
        // diagonal first: it is the refinement edge, the right-angle vertex is newest
        cells.push_back({ur, ll, lr, -1});
        cells.push_back({ll, ur, ul, -1});
      }
    return Mesh(2, lower, upper, std::move(verts), std::move(cells));
  }

  const int nx = n[0], ny = n[1], nz = n[2];
  verts.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1));
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        verts.push_back({lower[0] + (upper[0] - lower[0]) * i / nx, lower[1] + (upper[1] - lower[1]) * j / ny,
                         lower[2] + (upper[2] - lower[2]) * k / nz});
  auto id = [nx, ny](int i, int j, int k) { return (k * (ny + 1) + j) * (nx + 1) + i; };
  std::array<int, 3> perm{0, 1, 2};
  std::vector<std::array<int, 3>> perms;
  do perms.push_back(perm);
  while (std::next_permutation(perm.begin(), perm.end()));
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        for (const auto& p : perms) {
          std::array<int, 3> off{0, 0, 0};
          CellVertices cv{id(i, j, k), -1, -1, id(i + 1, j + 1, k + 1)};
          for (int s = 0; s < 2; ++s) {
            off[p[s]] = 1;
            cv[s + 1] = id(i + off[0], j + off[1], k + off[2]);
          }
          std::array<Point, 4> pts{verts[cv[0]], verts[cv[1]], verts[cv[2]], verts[cv[3]]};
          if (simplex_volume(3, pts) < 0) std::swap(cv[2], cv[3]);
          cells.push_back(cv);
        }
  return Mesh(3, lower, upper, std::move(verts), std::move(cells));
}

bool is_conforming(const Mesh& mesh) {
  const double tol = 1e-12 * mesh.diameter();
  const int nfv = mesh.dim();
  for (const Facet& f : mesh.facets()) {
    if (!f.on_boundary()) continue;
    bool on_box = false;
    for (int k = 0; k < mesh.dim() && !on_box; ++k) {
      for (double plane : {mesh.lower()[k], mesh.upper()[k]}) {
        bool all = true;
        for (int i = 0; i < nfv; ++i) all = all && std::abs(mesh.vertex(f.vertices[i])[k] - plane) <= tol;
        if (all) {
          on_box = true;
          break;
        }
      }
    }
    if (!on_box) return false;
  }
  return true;
}

void check_mesh_invariants(const Mesh& mesh) {
  const double box = [&] {
    double v = 1.0;
    for (int k = 0; k < mesh.dim(); ++k) v *= mesh.upper()[k] - mesh.lower()[k];
    return v;
  }();
  for (std::size_t c = 0; c < mesh.num_cells(); ++c)
    if (!(mesh.cell_volume(c) > 1e-14 * box))
      fail(ErrorKind::geometry, "cell " + std::to_string(c) + " has non-positive volume");
  if (!is_conforming(mesh)) fail(ErrorKind::geometry, "mesh is not conforming (hanging vertex or interior hole)");
  if (std::abs(mesh.total_volume() - box) > 1e-12 * box)
    fail(ErrorKind::geometry, "cells do not tile the box");
}

ErrorIndicator jump_indicator(const Mesh& mesh, const NodalField& field) {
  require_on(mesh, field, "jump_indicator");
  std::vector<std::array<double, 3>> grads(mesh.num_cells());
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) grads[c] = cell_gradient(mesh, c, field.values);
  std::vector<double> eta2(mesh.num_cells(), 0.0);
  for (const Facet& f : mesh.facets()) {
    if (f.on_boundary()) continue;
    const auto [measure, n] = facet_geometry(mesh, f);
    const auto& g0 = grads[f.cells[0]];
    const auto& g1 = grads[f.cells[1]];
    double jump = 0.0;
    for (int k = 0; k < 3; ++k) jump += (g0[k] - g1[k]) * n[k];
    const double contrib = facet_diameter(mesh, f) * jump * jump * measure;
    eta2[f.cells[0]] += contrib;
    eta2[f.cells[1]] += contrib;
  }
  ErrorIndicator eta(mesh.num_cells());
  std::transform(eta2.begin(), eta2.end(), eta.begin(), [](double v) { return std::sqrt(v); });
  return eta;
}

std::vector<int> doerfler_mark(const ErrorIndicator& eta, double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) fail(ErrorKind::config, "Doerfler fraction must lie in (0,1]");
  std::vector<int> order(eta.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return eta[a] > eta[b]; });
  // summed in the same order as the accumulation below, so theta = 1 is exact
  double total = 0.0;
  for (int i : order) {
    if (eta[i] < 0.0) fail(ErrorKind::geometry, "error indicator must be non-negative");
    total += eta[i] * eta[i];
  }
  std::vector<int> marked;
  if (total == 0.0) return marked;
  double acc = 0.0;
  for (int i : order) {
    if (acc >= theta * total) break;
    marked.push_back(i);
    acc += eta[i] * eta[i];
  }
  std::sort(marked.begin(), marked.end());
  return marked;
}

Mesh refine(const Mesh& mesh, std::span<const int> marked) {
  if (marked.empty()) return mesh;
  if (mesh.dim() != 2) fail(ErrorKind::unsupported, "adaptive refinement is only available in 2D; use a uniform 3D mesh");

  std::unordered_set<std::uint64_t> marked_edges;
  for (int c : marked) {
    if (c < 0 || static_cast<std::size_t>(c) >= mesh.num_cells())
      fail(ErrorKind::geometry, "marked cell index out of range: " + std::to_string(c));
    const auto& cv = mesh.cell_array(c);
    marked_edges.insert(edge_key(cv[0], cv[1]));
  }
  // closure: any cell touching a marked edge must bisect its refinement edge first
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
      const auto& cv = mesh.cell_array(c);
      const auto ref = edge_key(cv[0], cv[1]);
      if (marked_edges.count(ref)) continue;
      if (marked_edges.count(edge_key(cv[1], cv[2])) || marked_edges.count(edge_key(cv[2], cv[0]))) {
        marked_edges.insert(ref);
        changed = true;
      }
    }
  }

  std::vector<Point> verts = mesh.vertices();
  std::unordered_map<std::uint64_t, int> midpoints;
  std::vector<CellVertices> cells;
  std::vector<int> gens;
  cells.reserve(mesh.num_cells() + 2 * marked_edges.size());
  gens.reserve(cells.capacity());

  struct Pending {
    CellVertices v;
    int gen;
  };
  std::vector<Pending> stack;
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
    stack.push_back({mesh.cell_array(c), mesh.generation(c)});
    while (!stack.empty()) {
      const Pending t = stack.back();
      stack.pop_back();
      const auto key = edge_key(t.v[0], t.v[1]);
      if (!marked_edges.count(key)) {
        cells.push_back(t.v);
        gens.push_back(t.gen);
        continue;
      }
      auto [it, inserted] = midpoints.try_emplace(key, static_cast<int>(verts.size()));
      if (inserted) {
        const Point& a = verts[t.v[0]];
        const Point& b = verts[t.v[1]];
        verts.push_back({0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.0});
      }
      const int m = it->second;
      // pushed in reverse so child (v2,v0,m) is emitted before (v1,v2,m)
      stack.push_back({{t.v[1], t.v[2], m, -1}, t.gen + 1});
      stack.push_back({{t.v[2], t.v[0], m, -1}, t.gen + 1});
    }
  }
  return Mesh(2, mesh.lower(), mesh.upper(), std::move(verts), std::move(cells), std::move(gens));
}

NodalField transfer(const NodalField& field, const Mesh& from, const Mesh& to) {
  require_on(from, field, "transfer");
  const double diam = from.diameter();
  for (int k = 0; k < from.dim(); ++k)
    if (from.dim() != to.dim() || std::abs(from.lower()[k] - to.lower()[k]) > 1e-10 * diam ||
        std::abs(from.upper()[k] - to.upper()[k]) > 1e-10 * diam)
      fail(ErrorKind::geometry, "transfer: meshes do not tile the same box");

  const int d = from.dim();
  const double inside_tol = 1e-12;
  const double outside_tol = 1e-10 * diam;
  NodalField out{to.id(), Vector(static_cast<Eigen::Index>(to.num_vertices())), field.unit};

  // distance from vertex i of cell c to its opposite facet
  auto height = [&](std::size_t c, int i) {
    const Facet& f = from.facets()[from.cell_facet(c, i)];
    return d * from.cell_volume(c) / facet_geometry(from, f).first;
  };

  auto evaluate = [&](std::size_t c, std::array<double, 4> lam) {
    double s = 0.0, v = 0.0;
    for (int i = 0; i <= d; ++i) lam[i] = std::max(lam[i], 0.0), s += lam[i];
    const auto cv = from.cell(c);
    for (int i = 0; i <= d; ++i) v += lam[i] / s * field.values[cv[i]];
    return v;
  };

  std::size_t cell = 0;
  for (std::size_t t = 0; t < to.num_vertices(); ++t) {
    const Point& x = to.vertex(t);
    bool found = false;
    for (std::size_t steps = 0; steps < from.num_cells() + 8 && !found; ++steps) {
      const auto lam = from.barycentric(cell, x);
      std::array<int, 4> idx{0, 1, 2, 3};
      std::sort(idx.begin(), idx.begin() + d + 1, [&](int a, int b) { return lam[a] < lam[b]; });
      int move_to = -1;
      for (int r = 0; r <= d; ++r) {
        const int i = idx[r];
        if (lam[i] >= -inside_tol) break;
        const int nb = from.neighbor(cell, i);
        if (nb >= 0) {
          move_to = nb;
          break;
        }
        if (-lam[i] * height(cell, i) > outside_tol)
          fail(ErrorKind::geometry, "transfer: target vertex " + std::to_string(t) + " lies outside the source mesh");
      }
      if (move_to < 0) {
        out.values[t] = evaluate(cell, lam);
        found = true;
      } else {
        cell = static_cast<std::size_t>(move_to);
      }
    }
    if (found) continue;
    // walk failed to settle; fall back to an exhaustive search
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_cell = 0;
    for (std::size_t c = 0; c < from.num_cells(); ++c) {
      const auto lam = from.barycentric(c, x);
      const double m = *std::min_element(lam.begin(), lam.begin() + d + 1);
      if (m > best) best = m, best_cell = c;
    }
    if (best < -1e-8)
      fail(ErrorKind::geometry, "transfer: target vertex " + std::to_string(t) + " lies outside the source mesh");
    out.values[t] = evaluate(best_cell, from.barycentric(best_cell, x));
    cell = best_cell;
  }
  return out;
}

}  // namespace chg
