#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace chg {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

enum class FieldUnit { dimensionless, chemical_potential };

/// P1 nodal values bound to a specific mesh (by id).
struct NodalField {
  std::uint64_t mesh_id = 0;
  Vector values;
  FieldUnit unit = FieldUnit::dimensionless;

  Eigen::Index size() const { return values.size(); }
  bool all_finite() const { return values.allFinite(); }
};

}  // namespace chg
