#include "chg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>

#include "chg/error.hpp"

namespace chg {

void SolverConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) fail(ErrorKind::config, "solver tolerances must be positive");
  if (max_iterations < 1) fail(ErrorKind::config, "solver max_iterations must be at least 1");
}

Eigen::Index BlockSystem::block_size() const {
  for (const auto& b : blocks)
    if (b) return b->rows();
  return rhs.size() / 3;
}

SparseMatrix BlockSystem::monolithic() const {
  const Eigen::Index n = block_size();
  std::vector<Eigen::Triplet<double>> trip;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const auto& b = block(r, c);
      if (!b) continue;
      if (b->rows() != n || b->cols() != n) fail(ErrorKind::linear_solver, "block dimensions are inconsistent");
      for (int k = 0; k < b->outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(*b, k); it; ++it)
          trip.emplace_back(r * n + it.row(), c * n + it.col(), it.value());
    }
  SparseMatrix a(3 * n, 3 * n);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  return a;
}

BlockLayout::BlockLayout(const SparseMatrix& pattern) : n_(pattern.rows()), pattern_(pattern) {
  pattern_.makeCompressed();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * pattern_.nonZeros());
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < pattern_.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(pattern_, k); it; ++it)
          trip.emplace_back(r * n_ + it.row(), c * n_ + it.col(), 0.0);
  mono_.resize(3 * n_, 3 * n_);
  mono_.setFromTriplets(trip.begin(), trip.end());
  mono_.makeCompressed();

  const int* outer = mono_.outerIndexPtr();
  const int* inner = mono_.innerIndexPtr();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      auto& s = slots_[r * 3 + c];
      s.reserve(pattern_.nonZeros());
      for (int k = 0; k < pattern_.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(pattern_, k); it; ++it) {
          const int col = static_cast<int>(c * n_ + it.col());
          const int row = static_cast<int>(r * n_ + it.row());
          const int* pos = std::lower_bound(inner + outer[col], inner + outer[col + 1], row);
          s.push_back(static_cast<int>(pos - inner));
        }
    }
}

void BlockLayout::fill(const std::array<const SparseMatrix*, 9>& blocks, SparseMatrix& out, bool transpose) const {
  if (out.nonZeros() != mono_.nonZeros() || out.rows() != mono_.rows()) out = mono_;
  double* ov = out.valuePtr();
  std::fill(ov, ov + out.nonZeros(), 0.0);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const SparseMatrix* b = transpose ? blocks[c * 3 + r] : blocks[r * 3 + c];
      if (!b) continue;
      const auto& s = slots_[r * 3 + c];
      if (b->isCompressed() && b->nonZeros() == pattern_.nonZeros() &&
          std::equal(b->outerIndexPtr(), b->outerIndexPtr() + n_ + 1, pattern_.outerIndexPtr()) &&
          std::equal(b->innerIndexPtr(), b->innerIndexPtr() + b->nonZeros(), pattern_.innerIndexPtr())) {
        const double* bv = b->valuePtr();
        for (std::size_t k = 0; k < s.size(); ++k) ov[s[k]] = bv[k];
        continue;
      }
      // pattern differs (e.g. pruned): locate entries one by one
      for (int k = 0; k < b->outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(*b, k); it; ++it) {
          const int col = static_cast<int>(c * n_ + it.col());
          const int row = static_cast<int>(r * n_ + it.row());
          const int* first = out.innerIndexPtr() + out.outerIndexPtr()[col];
          const int* last = out.innerIndexPtr() + out.outerIndexPtr()[col + 1];
          const int* pos = std::lower_bound(first, last, row);
          if (pos == last || *pos != row) fail(ErrorKind::linear_solver, "block entry outside the P1 pattern");
          ov[pos - out.innerIndexPtr()] = it.value();
        }
    }
}

LinearSolver::LinearSolver(SolverConfig cfg) : cfg_(cfg) { cfg_.validate(); }

bool LinearSolver::use_direct(Eigen::Index n) const {
  switch (cfg_.method) {
    case SolverConfig::Method::direct:
      return true;
    case SolverConfig::Method::iterative:
      return false;
    case SolverConfig::Method::automatic:
      break;
  }
  return n < cfg_.direct_limit;
}

namespace {

/// Applies an existing LU factorisation as a preconditioner.
struct FactorPreconditioner {
  const LinearSolver::LU* lu = nullptr;

  FactorPreconditioner() = default;
  template <typename M>
  explicit FactorPreconditioner(const M&) {}
  template <typename M>
  FactorPreconditioner& analyzePattern(const M&) { return *this; }
  template <typename M>
  FactorPreconditioner& factorize(const M&) { return *this; }
  template <typename M>
  FactorPreconditioner& compute(const M&) { return *this; }
  template <typename Rhs>
  Vector solve(const Rhs& b) const { return lu->solve(Vector(b)); }
  Eigen::ComputationInfo info() const { return Eigen::Success; }
};

}  // namespace

bool LinearSolver::same_pattern(const SparseMatrix& a) const {
  return analyzed_ && outer_.size() == static_cast<std::size_t>(a.outerSize() + 1) &&
         inner_.size() == static_cast<std::size_t>(a.nonZeros()) &&
         std::equal(outer_.begin(), outer_.end(), a.outerIndexPtr()) &&
         std::equal(inner_.begin(), inner_.end(), a.innerIndexPtr());
}

void LinearSolver::factorize(const SparseMatrix& a) { factorize(SparseMatrix(a)); }

void LinearSolver::factorize(SparseMatrix&& a) {
  if (a.rows() != a.cols()) fail(ErrorKind::linear_solver, "linear operator must be square");
  a_ = std::move(a);
  a_.makeCompressed();
  if (!use_direct(a_.rows())) return;
  if (cfg_.reuse_factorization && same_pattern(a_)) {
    stale_ = true;
    return;
  }
  refactorize();
}

void LinearSolver::refactorize() {
  if (!same_pattern(a_)) {
    lu_ = std::make_unique<LU>();
    lu_->analyzePattern(a_);
    outer_.assign(a_.outerIndexPtr(), a_.outerIndexPtr() + a_.outerSize() + 1);
    inner_.assign(a_.innerIndexPtr(), a_.innerIndexPtr() + a_.nonZeros());
    analyzed_ = true;
  }
  lu_->factorize(a_);
  ++factorizations_;
  stale_ = false;
  if (lu_->info() != Eigen::Success) {
    analyzed_ = false;
    fail(ErrorKind::linear_solver, "sparse LU factorisation failed: " + lu_->lastErrorMessage());
  }
}

Vector LinearSolver::solve_direct(const Vector& b, double target) {
  Vector x = lu_->solve(b);
  Vector r = b - a_ * x;
  // one step of iterative refinement if the direct solve lands just short
  if (r.norm() > target) {
    x += lu_->solve(r);
    r = b - a_ * x;
  }
  if (!x.allFinite() || r.norm() > target) {
    std::ostringstream os;
    os << "direct solve did not reach tolerance: residual " << r.norm() << " > " << target;
    fail(ErrorKind::linear_solver, os.str());
  }
  return x;
}

Vector LinearSolver::solve(const Vector& b) { return solve(b, std::max(cfg_.rtol * b.norm(), cfg_.atol)); }

Vector LinearSolver::solve(const Vector& b, double target) {
  if (b.size() != a_.rows()) fail(ErrorKind::linear_solver, "right-hand side size mismatch");
  if (use_direct(a_.rows())) {
    if (!lu_) fail(ErrorKind::linear_solver, "solve called before factorize");
    if (stale_) {
      Eigen::BiCGSTAB<SparseMatrix, FactorPreconditioner> it;
      it.preconditioner().lu = lu_.get();
      it.setMaxIterations(cfg_.reuse_iterations);
      it.setTolerance(b.norm() > 0 ? target / b.norm() : cfg_.rtol);
      it.compute(a_);
      Vector x = it.solve(b);
      if (it.info() == Eigen::Success && x.allFinite() && (b - a_ * x).norm() <= target) return x;
      refactorize();
    }
    return solve_direct(b, target);
  }
  Eigen::BiCGSTAB<SparseMatrix, Eigen::IncompleteLUT<double>> it;
  it.preconditioner().setDroptol(1e-6);
  it.setMaxIterations(cfg_.max_iterations);
  it.setTolerance(b.norm() > 0 ? target / b.norm() : cfg_.rtol);
  it.compute(a_);
  Vector x = it.solve(b);
  const double res = (b - a_ * x).norm();
  if (it.info() != Eigen::Success || !x.allFinite() || res > target) {
    std::ostringstream os;
    os << "iterative solve did not converge after " << it.iterations() << " iterations: residual " << res;
    fail(ErrorKind::linear_solver, os.str());
  }
  return x;
}

Vector solve_linear(const BlockSystem& sys, const SolverConfig& cfg) {
  const SparseMatrix a = sys.monolithic();
  if (a.rows() != sys.rhs.size()) fail(ErrorKind::linear_solver, "block system right-hand side size mismatch");
  LinearSolver solver(cfg);
  solver.factorize(a);
  return solver.solve(sys.rhs);
}

NewtonResult newton_solve(const std::function<Vector(const Vector&)>& residual,
                          const std::function<SparseMatrix(const Vector&)>& jacobian, Vector guess, double tol,
                          int max_iter, LinearSolver* solver) {
  LinearSolver local;
  LinearSolver& lin = solver ? *solver : local;
  NewtonResult out;
  out.x = std::move(guess);
  Vector r = residual(out.x);
  double rn = r.norm();
  if (!std::isfinite(rn)) fail(ErrorKind::nonlinear_solver, "Newton: non-finite residual at the initial guess");
  out.residual_norms.push_back(rn);
  const double target = tol * (1.0 + rn);
  while (rn > target) {
    if (out.iterations >= max_iter) {
      std::ostringstream os;
      os << "Newton did not converge in " << max_iter << " iterations (residual " << rn << ")";
      fail(ErrorKind::nonlinear_solver, os.str());
    }
    lin.factorize(jacobian(out.x));
    out.x -= lin.solve(r, std::max(1e-3 * target, lin.config().rtol * rn));
    ++out.iterations;
    r = residual(out.x);
    rn = r.norm();
    if (!std::isfinite(rn)) fail(ErrorKind::nonlinear_solver, "Newton: residual became non-finite");
    out.residual_norms.push_back(rn);
  }
  return out;
}

}  // namespace chg
