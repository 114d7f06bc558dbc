#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "chg/mesh.hpp"
#include "chg/optimizer.hpp"

namespace chg {

/// A mesh with named nodal fields, as stored on disk.
struct FieldFile {
  std::shared_ptr<const Mesh> mesh;
  std::vector<std::pair<std::string, Vector>> fields;

  bool has(const std::string& name) const;
  /// Field bound to `mesh`; throws an io error if absent.
  NodalField get(const std::string& name) const;
};

using NamedField = std::pair<std::string, const Vector*>;

/// Legacy VTK ASCII unstructured grid, values printed with %.17g.
std::string vtk_string(const Mesh& mesh, const std::vector<NamedField>& fields);
void write_vtk(const Mesh& mesh, const std::vector<NamedField>& fields, const std::string& path);
/// Reads files produced by `write_vtk`.
FieldFile read_vtk(const std::string& path);
FieldFile parse_vtk(const std::string& text);

std::string convergence_csv(const ConvergenceRecord& record);
void write_convergence_csv(const ConvergenceRecord& record, const std::string& path);

/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace chg
