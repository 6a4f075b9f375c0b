#pragma once

#include <Eigen/Dense>

namespace voi {

// Principal square root of a symmetric positive semi-definite matrix via
// eigendecomposition. Rejects non-symmetric input and eigenvalues below
// -1e-10 * ||A||; eigenvalues inside that tolerance are clamped to zero.
Eigen::MatrixXd matrix_sqrt_spd(const Eigen::MatrixXd& a);

// Nearest PSD matrix in the eigenvalue sense: symmetrize, clip negative
// eigenvalues at zero.
Eigen::MatrixXd psd_project(const Eigen::MatrixXd& a);

// Unbiased (n-1 denominator) sample covariance of the rows.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& rows);

}  // namespace voi
