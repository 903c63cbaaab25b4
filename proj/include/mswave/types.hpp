#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>

namespace mswave {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Row-major sparse storage, i.e. compressed sparse row.
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

}  // namespace mswave
