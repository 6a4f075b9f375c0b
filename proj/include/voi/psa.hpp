#pragma once

#include <Eigen/Dense>
#include <vector>

namespace voi {

// Incremental net benefit against a reference arm. Column t holds
// NB_t - NB_ref for each non-reference arm, in ascending arm order.
struct InbDraws {
  Eigen::MatrixXd values;      // S x (T-1)
  int reference_arm = 0;       // 1-based
  std::vector<int> arm_order;  // 1-based labels of the non-reference arms
};

struct InbMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // 1x1 when T = 2
};

InbDraws compute_inb(const Eigen::MatrixXd& net_benefit, int reference_arm);

InbMoments inb_moments(const InbDraws& inb);
InbMoments inb_moments(const Eigen::MatrixXd& inb_values);

}  // namespace voi
