#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/SparseLU>

#include "chg/field.hpp"

namespace chg {

struct SolverConfig {
  enum class Method { automatic, direct, iterative };
  Method method = Method::automatic;
  double rtol = 1e-10;
  double atol = 1e-12;
  int max_iterations = 2000;
  /// `automatic` switches to the iterative method at this many unknowns.
  Eigen::Index direct_limit = 200000;
  /// Direct method only: a new matrix with the same pattern is first solved
  /// by BiCGSTAB preconditioned with the previous factorisation, and only
  /// refactorised if that takes more than `reuse_iterations` iterations.
  bool reuse_factorization = true;
  int reuse_iterations = 8;

  void validate() const;
};

/// 3x3 grid of equally sized blocks over an unknown ordering such as
/// (phi, mu, sigma). Missing blocks are zero.
struct BlockSystem {
  std::array<std::optional<SparseMatrix>, 9> blocks;
  Vector rhs;

  std::optional<SparseMatrix>& block(int row, int col) { return blocks[row * 3 + col]; }
  const std::optional<SparseMatrix>& block(int row, int col) const { return blocks[row * 3 + col]; }
  Eigen::Index block_size() const;
  SparseMatrix monolithic() const;
};

/// Scatters 3x3 blocks sharing one sparsity pattern into a monolithic
/// matrix whose pattern is fixed, so factorisations can reuse the symbolic
/// analysis.
class BlockLayout {
 public:
  explicit BlockLayout(const SparseMatrix& pattern);

  Eigen::Index block_size() const { return n_; }
  /// blocks[r*3+c] may be null (zero block). With `transpose` the block grid
  /// is transposed; blocks themselves must then be symmetric.
  void fill(const std::array<const SparseMatrix*, 9>& blocks, SparseMatrix& out, bool transpose = false) const;
  SparseMatrix make() const { return mono_; }

 private:
  Eigen::Index n_;
  SparseMatrix pattern_;
  SparseMatrix mono_;
  std::array<std::vector<int>, 9> slots_;
};

/// Sparse LU (or ILU-preconditioned BiCGSTAB) with symbolic-analysis reuse.
class LinearSolver {
 public:
  using LU = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;

  explicit LinearSolver(SolverConfig cfg = {});

  void factorize(const SparseMatrix& a);
  void factorize(SparseMatrix&& a);
  /// Solves to max(rtol ||b||, atol).
  Vector solve(const Vector& b);
  /// Solves until ||b - A x|| <= abs_target.
  Vector solve(const Vector& b, double abs_target);
  const SolverConfig& config() const { return cfg_; }
  /// Numeric factorisations performed so far.
  int factorizations() const { return factorizations_; }

 private:
  bool use_direct(Eigen::Index n) const;
  bool same_pattern(const SparseMatrix& a) const;
  void refactorize();
  Vector solve_direct(const Vector& b, double target);

  SolverConfig cfg_;
  SparseMatrix a_;
  bool analyzed_ = false;
  bool stale_ = false;  // lu_ belongs to an earlier matrix
  int factorizations_ = 0;
  std::vector<int> outer_, inner_;
  std::unique_ptr<LU> lu_;
};

Vector solve_linear(const BlockSystem& sys, const SolverConfig& cfg);

struct NewtonResult {
  Vector x;
  int iterations = 0;
  std::vector<double> residual_norms;
};

/// Newton iteration until ||r(x)|| <= tol * (1 + ||r(guess)||). Each linear
/// solve only needs to reach 1e-3 of that target, or rtol relative to the
/// current residual if that is looser.
NewtonResult newton_solve(const std::function<Vector(const Vector&)>& residual,
                          const std::function<SparseMatrix(const Vector&)>& jacobian, Vector guess, double tol,
                          int max_iter, LinearSolver* solver = nullptr);

}  // namespace chg
