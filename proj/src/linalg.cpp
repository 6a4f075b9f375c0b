#include "voi/linalg.hpp"

#include <stdexcept>
#include <string>

namespace voi {

Eigen::MatrixXd matrix_sqrt_spd(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("matrix_sqrt_spd: matrix not square");
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("matrix_sqrt_spd: matrix not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw std::runtime_error("matrix_sqrt_spd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-10 * scale) {
      throw std::invalid_argument("matrix_sqrt_spd: negative eigenvalue " + std::to_string(ev[i]));
    }
    ev[i] = std::max(ev[i], 0.0);
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd psd_project(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("psd_project: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& rows) {
  const auto n = rows.rows();
  if (n < 2) throw std::invalid_argument("sample_covariance: need at least 2 rows");
  Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  return (centered.transpose() * centered) / static_cast<double>(n - 1);
}

}  // namespace voi
