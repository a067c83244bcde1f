// Shared scalar/linear-algebra typedefs used across the library.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace wbdrc {

using scalar_t = double;
using vector_t = Eigen::VectorXd;
using matrix_t = Eigen::MatrixXd;
using vector3_t = Eigen::Vector3d;
using matrix3_t = Eigen::Matrix3d;
using vector6_t = Eigen::Matrix<scalar_t, 6, 1>;
using sparse_matrix_t = Eigen::SparseMatrix<scalar_t>;
using triplet_t = Eigen::Triplet<scalar_t>;

}  // namespace wbdrc
