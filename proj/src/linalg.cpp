#include "mswave/linalg.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mswave {

Mat SymMatrix::to_dense() const {
  Mat a(n_, n_);
  for (Eigen::Index i = 0; i < n_; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) a(i, j) = a(j, i) = at(i, j);
  return a;
}

SymMatrix SymMatrix::from_dense_lower(const Mat& a) {
  SymMatrix s(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) s.at(i, j) = a(i, j);
  return s;
}

namespace {

// Cyclic Jacobi diagonalization of a symmetric matrix. Rotations accumulate
// into u; returns false if the off-diagonal mass does not reach the target.
bool jacobi_diagonalize(Mat& c, Mat& u, int max_sweeps) {
  const Eigen::Index n = c.rows();
  u = Mat::Identity(n, n);
  if (n < 2) return true;
  const double frob = std::max(c.norm(), 1e-300);
  const double target = 1e-14 * frob;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += c(p, q) * c(p, q);
    off = std::sqrt(2.0 * off);
    if (off <= target) return true;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        double apq = c(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        double tau = (c(q, q) - c(p, p)) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double cs = 1.0 / std::sqrt(1.0 + t * t);
        double sn = t * cs;
        // rotate rows/columns p and q
        for (Eigen::Index k = 0; k < n; ++k) {
          double ckp = c(k, p), ckq = c(k, q);
          c(k, p) = cs * ckp - sn * ckq;
          c(k, q) = sn * ckp + cs * ckq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          double cpk = c(p, k), cqk = c(q, k);
          c(p, k) = cs * cpk - sn * cqk;
          c(q, k) = sn * cpk + cs * cqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          double ukp = u(k, p), ukq = u(k, q);
          u(k, p) = cs * ukp - sn * ukq;
          u(k, q) = sn * ukp + cs * ukq;
        }
      }
    }
  }
  return false;
}

}  // namespace

GenEigResult gen_eig_sym(const SymMatrix& a, const SymMatrix& b) {
  if (a.order() != b.order()) throw std::invalid_argument("matrix orders differ");
  const Eigen::Index n = a.order();
  GenEigResult res;
  if (n == 0) {
    res.eigenvalues = Vec();
    res.eigenvectors = Mat(0, 0);
    return res;
  }
  Mat bd = b.to_dense();
  Eigen::LLT<Mat> llt(bd);
  if (llt.info() != Eigen::Success) throw SpdError("right-hand matrix is not SPD");
  Mat l = llt.matrixL();
  // C = L^{-1} A L^{-T}
  Mat c = a.to_dense();
  l.triangularView<Eigen::Lower>().solveInPlace(c);
  Mat ct = c.transpose();
  l.triangularView<Eigen::Lower>().solveInPlace(ct);
  c = 0.5 * (ct + ct.transpose());  // symmetrize roundoff

  Mat u;
  if (!jacobi_diagonalize(c, u, 60))
    throw ConvergenceError("Jacobi sweeps did not converge");

  Vec vals = c.diagonal();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return vals[i] < vals[j]; });

  Mat v = l.transpose().triangularView<Eigen::Upper>().solve(u);
  res.eigenvalues.resize(n);
  res.eigenvectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    res.eigenvalues[k] = vals[order[k]];
    res.eigenvectors.col(k) = v.col(order[k]);
  }
  return res;
}

Vec spd_solve(const SparseMat& m, const Vec& b) {
  Eigen::SparseMatrix<double> col = m;  // SimplicialLLT wants column storage
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(col);
  if (llt.info() != Eigen::Success) throw SpdError("sparse Cholesky factorization failed");
  Vec x = llt.solve(b);
  if (llt.info() != Eigen::Success) throw ConvergenceError("sparse triangular solve failed");
  return x;
}

void BlockDiagonalOperator::add_block(std::vector<int> dofs, const Mat& block) {
  if (block.rows() != block.cols() ||
      block.rows() != static_cast<Eigen::Index>(dofs.size()))
    throw std::invalid_argument("block shape does not match its index set");
  Block blk;
  blk.dofs = std::move(dofs);
  blk.dense = block;
  blk.factor.compute(block);
  if (blk.factor.info() != Eigen::Success) throw SpdError("block is not SPD");
  blocks_.push_back(std::move(blk));
}

void BlockDiagonalOperator::finalize(Eigen::Index dimension) {
  std::vector<char> seen(dimension, 0);
  Eigen::Index covered = 0;
  for (const auto& blk : blocks_)
    for (int d : blk.dofs) {
      if (d < 0 || d >= dimension || seen[d])
        throw std::invalid_argument("block index sets do not partition the dof range");
      seen[d] = 1;
      ++covered;
    }
  if (covered != dimension)
    throw std::invalid_argument("block index sets do not cover the dof range");
  dim_ = dimension;
  finalized_ = true;
}

Vec BlockDiagonalOperator::apply_inverse(const Vec& b) const {
  if (!finalized_ || b.size() != dim_)
    throw std::invalid_argument("operator not finalized or size mismatch");
  Vec x(dim_);
  Vec local, sol;
  for (const auto& blk : blocks_) {
    const Eigen::Index m = static_cast<Eigen::Index>(blk.dofs.size());
    local.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) local[i] = b[blk.dofs[i]];
    sol = blk.factor.solve(local);
    for (Eigen::Index i = 0; i < m; ++i) x[blk.dofs[i]] = sol[i];
  }
  return x;
}

Vec BlockDiagonalOperator::apply(const Vec& x) const {
  if (!finalized_ || x.size() != dim_)
    throw std::invalid_argument("operator not finalized or size mismatch");
  Vec y(dim_);
  Vec local;
  for (const auto& blk : blocks_) {
    const Eigen::Index m = static_cast<Eigen::Index>(blk.dofs.size());
    local.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) local[i] = x[blk.dofs[i]];
    Vec prod = blk.dense * local;
    for (Eigen::Index i = 0; i < m; ++i) y[blk.dofs[i]] = prod[i];
  }
  return y;
}

double estimate_spectral_radius(const std::function<Vec(const Vec&)>& apply_a,
                                const std::function<Vec(const Vec&)>& apply_m_inv,
                                Eigen::Index n) {
  std::mt19937_64 gen(0x5eedULL);
  Vec x(n);
  for (Eigen::Index i = 0; i < n; ++i)
    x[i] = 1.0 + static_cast<double>(gen() >> 11) * 0x1.0p-53;
  x /= x.norm();
  double lambda = 0.0;
  const int max_iter = 2000;
  for (int it = 0; it < max_iter; ++it) {
    Vec y = apply_a(x);
    double xay = x.dot(y);
    if (std::abs(xay) < 1e-300) return 0.0;  // x in the kernel of a zero-ish operator
    Vec z = apply_m_inv(y);
    double next = y.dot(z) / xay;  // Rayleigh quotient of M^{-1}A in the A-metric
    double nz = z.norm();
    if (nz < 1e-300) return 0.0;
    x = z / nz;
    if (it > 0 && std::abs(next - lambda) <= 1e-6 * std::max(std::abs(next), 1e-300)) {
      return next;
    }
    lambda = next;
  }
  throw ConvergenceError("power iteration did not converge");
}

}  // namespace mswave
