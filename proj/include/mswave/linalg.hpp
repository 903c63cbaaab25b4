#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mswave/types.hpp"

namespace mswave {

/// Cholesky failure: the matrix that was required to be SPD is not.
class SpdError : public std::runtime_error {
 public:
  explicit SpdError(const std::string& what) : std::runtime_error(what) {}
};

/// An iteration failed to reach its tolerance within the iteration budget.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Dense symmetric matrix, packed lower triangle.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Eigen::Index n) : n_(n), data_(Vec::Zero(n * (n + 1) / 2)) {}

  Eigen::Index order() const { return n_; }

  double& at(Eigen::Index i, Eigen::Index j) { return data_[index(i, j)]; }
  double at(Eigen::Index i, Eigen::Index j) const { return data_[index(i, j)]; }

  Mat to_dense() const;
  static SymMatrix from_dense_lower(const Mat& a);

 private:
  Eigen::Index index(Eigen::Index i, Eigen::Index j) const {
    if (i < j) std::swap(i, j);
    return i * (i + 1) / 2 + j;
  }
  Eigen::Index n_ = 0;
  Vec data_;
};

struct GenEigResult {
  Vec eigenvalues;  // ascending
  Mat eigenvectors; // columns, B-orthonormal
};

/// Generalized symmetric eigenproblem A v = lambda B v with B SPD.
/// Cholesky reduction B = L L^T followed by cyclic Jacobi sweeps on
/// L^{-1} A L^{-T}. Deterministic; eigenvalues ascending with stable
/// tie ordering.
GenEigResult gen_eig_sym(const SymMatrix& a, const SymMatrix& b);

/// Direct SPD solve (sparse Cholesky).
Vec spd_solve(const SparseMat& m, const Vec& b);

/// Block-diagonal SPD operator with dense per-block Cholesky factors.
/// The index sets of the blocks must partition [0, dimension).
class BlockDiagonalOperator {
 public:
  void add_block(std::vector<int> dofs, const Mat& block);
  void finalize(Eigen::Index dimension);

  Vec apply_inverse(const Vec& b) const;
  Vec apply(const Vec& x) const;  // the assembled operator itself

  Eigen::Index dimension() const { return dim_; }
  size_t block_count() const { return blocks_.size(); }

 private:
  struct Block {
    std::vector<int> dofs;
    Eigen::LLT<Mat> factor;
    Mat dense;
  };
  std::vector<Block> blocks_;
  Eigen::Index dim_ = 0;
  bool finalized_ = false;
};

/// Largest eigenvalue of M^{-1} A for symmetric A and SPD M, by power
/// iteration with the A-metric Rayleigh quotient. Fixed policy: relative
/// change below 1e-6, at most 2000 iterations, error on non-convergence.
double estimate_spectral_radius(const std::function<Vec(const Vec&)>& apply_a,
                                const std::function<Vec(const Vec&)>& apply_m_inv,
                                Eigen::Index n);

}  // namespace mswave
