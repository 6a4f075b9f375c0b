#include "voi/psa.hpp"

#include <stdexcept>

#include "voi/linalg.hpp"

namespace voi {

InbDraws compute_inb(const Eigen::MatrixXd& net_benefit, int reference_arm) {
  const auto t = net_benefit.cols();
  if (t < 2) throw std::invalid_argument("compute_inb: need at least two arms");
  if (reference_arm < 1 || reference_arm > t) {
    throw std::invalid_argument("compute_inb: reference arm out of range");
  }
  InbDraws inb;
  inb.reference_arm = reference_arm;
  inb.values.resize(net_benefit.rows(), t - 1);
  int col = 0;
  for (int arm = 1; arm <= t; ++arm) {
    if (arm == reference_arm) continue;
    inb.values.col(col) = net_benefit.col(arm - 1) - net_benefit.col(reference_arm - 1);
    inb.arm_order.push_back(arm);
    ++col;
  }
  return inb;
}

InbMoments inb_moments(const Eigen::MatrixXd& inb_values) {
  if (inb_values.rows() < 2) throw std::invalid_argument("inb_moments: need S >= 2");
  InbMoments m;
  m.mean = inb_values.colwise().mean();
  m.cov = sample_covariance(inb_values);
  return m;
}

InbMoments inb_moments(const InbDraws& inb) { return inb_moments(inb.values); }

}  // namespace voi
