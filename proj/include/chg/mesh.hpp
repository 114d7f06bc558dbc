#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "chg/field.hpp"

namespace chg {

using Point = std::array<double, 3>;
using CellVertices = std::array<int, 4>;

/// A facet (edge in 2D, triangle in 3D) with the one or two cells sharing it.
struct Facet {
  std::array<int, 3> vertices{-1, -1, -1};
  std::array<int, 2> cells{-1, -1};

  bool on_boundary() const { return cells[1] < 0; }
};

/// Conforming simplicial mesh of an axis-aligned box.
///
/// Cells are stored with positive orientation. In 2D the local vertex order
/// also carries the bisection data: edge (0,1) is the refinement edge and
/// vertex 2 is the newest vertex. The mesh is immutable after construction;
/// refinement produces a new object with a fresh id.
class Mesh {
 public:
  Mesh(int dim, Point lower, Point upper, std::vector<Point> vertices, std::vector<CellVertices> cells,
       std::vector<int> generation = {});

  int dim() const { return dim_; }
  std::uint64_t id() const { return id_; }
  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_cells() const { return cells_.size(); }
  int vertices_per_cell() const { return dim_ + 1; }

  const Point& vertex(std::size_t i) const { return vertices_[i]; }
  const std::vector<Point>& vertices() const { return vertices_; }
  std::span<const int> cell(std::size_t c) const {
    return {cells_[c].data(), static_cast<std::size_t>(dim_ + 1)};
  }
  const CellVertices& cell_array(std::size_t c) const { return cells_[c]; }
  int generation(std::size_t c) const { return generation_[c]; }

  const std::vector<Facet>& facets() const { return facets_; }
  /// Facet of cell `c` opposite its local vertex `i`.
  int cell_facet(std::size_t c, int i) const { return cell_facets_[c][i]; }
  /// Cell across the facet opposite local vertex `i`, or -1 on the boundary.
  int neighbor(std::size_t c, int i) const;

  double cell_volume(std::size_t c) const { return volumes_[c]; }
  double total_volume() const;
  const Point& lower() const { return lower_; }
  const Point& upper() const { return upper_; }
  double diameter() const;

  /// Barycentric coordinates of `x` with respect to cell `c`.
  std::array<double, 4> barycentric(std::size_t c, const Point& x) const;

 private:
  void build_facets();

  int dim_;
  std::uint64_t id_;
  Point lower_, upper_;
  std::vector<Point> vertices_;
  std::vector<CellVertices> cells_;
  std::vector<int> generation_;
  std::vector<double> volumes_;
  std::vector<Facet> facets_;
  std::vector<std::array<int, 4>> cell_facets_;
};

/// Signed volume of a simplex given by its vertex coordinates.
double simplex_volume(int dim, std::span<const Point> pts);

/// Structured mesh: squares split along the lower-left/upper-right diagonal,
/// cubes into six Kuhn tetrahedra.
Mesh make_box_mesh(int dim, const Point& lower, const Point& upper, const std::array<int, 3>& n);

/// Throws a geometry error if a cell has non-positive volume, a facet is
/// shared by more than two cells, or a boundary facet is not on the box.
void check_mesh_invariants(const Mesh& mesh);

/// True if every single-cell facet lies on the box boundary (no hanging vertices).
bool is_conforming(const Mesh& mesh);

/// Per-cell error indicator eta_K >= 0.
using ErrorIndicator = std::vector<double>;

ErrorIndicator jump_indicator(const Mesh& mesh, const NodalField& field);

/// Minimal greedy set carrying `theta` of the squared indicator mass.
/// Returned indices are sorted ascending.
std::vector<int> doerfler_mark(const ErrorIndicator& eta, double theta);

/// Newest-vertex bisection of the marked cells plus conforming closure (2D only).
Mesh refine(const Mesh& mesh, std::span<const int> marked);

/// Nodal interpolation of a P1 field onto another mesh of the same box.
NodalField transfer(const NodalField& field, const Mesh& from, const Mesh& to);

/// Gradient of a P1 field on cell `c` (constant per cell).
std::array<double, 3> cell_gradient(const Mesh& mesh, std::size_t c, const Vector& values);

void require_on(const Mesh& mesh, const NodalField& field, const char* what);

}  // namespace chg
