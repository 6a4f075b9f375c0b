#include <doctest.h>

#include <Eigen/Dense>

#include "voi/common.hpp"
#include "voi/psa.hpp"

using namespace voi;

TEST_CASE("compute_inb subtracts the reference arm") {
  Eigen::MatrixXd nb(1, 2);
  nb << 1.0, 3.0;
  const InbDraws inb = compute_inb(nb, 2);
  CHECK(inb.values(0, 0) == -2.0);
  CHECK(inb.arm_order == std::vector<int>{1});

  Eigen::MatrixXd same(5, 3);
  same.setRandom();
  same.col(1) = same.col(0);
  same.col(2) = same.col(0);
  CHECK(compute_inb(same, 2).values.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(compute_inb(Eigen::MatrixXd::Zero(3, 1), 1), std::invalid_argument);
  CHECK_THROWS_AS(compute_inb(nb, 3), std::invalid_argument);
}

TEST_CASE("compute_inb keeps stable arm order and reconstructs the input") {
  Eigen::MatrixXd nb(4, 3);
  nb << 1, 2, 3, 4, 6, 5, -1, 0, 1, 2, 2, 2;
  const InbDraws inb = compute_inb(nb, 2);
  CHECK(inb.arm_order == std::vector<int>{1, 3});
  // Adding the reference column back reproduces the original table.
  Eigen::MatrixXd rebuilt(4, 3);
  rebuilt.col(0) = inb.values.col(0) + nb.col(1);
  rebuilt.col(1) = nb.col(1);
  rebuilt.col(2) = inb.values.col(1) + nb.col(1);
  CHECK((rebuilt - nb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inb_moments matches the two-point sample variance") {
  Eigen::MatrixXd draws(2, 1);
  draws << 1.0, 3.0;
  const InbMoments m = inb_moments(draws);
  CHECK(m.mean(0) == 2.0);
  CHECK(m.cov(0, 0) == 2.0);

  CHECK(inb_moments(Eigen::MatrixXd::Constant(10, 1, 4.2)).cov(0, 0) == 0.0);
  CHECK_THROWS_AS(inb_moments(Eigen::MatrixXd::Zero(1, 1)), std::invalid_argument);
}

TEST_CASE("inb_moments covariance matches a brute-force double loop") {
  Rng rng(99);
  Eigen::MatrixXd draws(64, 2);
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    draws(i, 0) = rng.normal();
    draws(i, 1) = 0.5 * draws(i, 0) + rng.normal();
  }
  const InbMoments m = inb_moments(draws);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      double acc = 0.0;
      const double ma = draws.col(a).mean(), mb = draws.col(b).mean();
      for (Eigen::Index i = 0; i < draws.rows(); ++i) {
        acc += (draws(i, a) - ma) * (draws(i, b) - mb);
      }
      acc /= double(draws.rows() - 1);
      CHECK(m.cov(a, b) == doctest::Approx(acc).epsilon(1e-10));
    }
  }
}

TEST_CASE("inb_moments is invariant to row permutation") {
  Rng rng(7);
  Eigen::MatrixXd draws(33, 2);
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    draws(i, 0) = rng.normal();
    draws(i, 1) = rng.normal() - draws(i, 0);
  }
  Eigen::MatrixXd reversed = draws.colwise().reverse();
  const InbMoments a = inb_moments(draws);
  const InbMoments b = inb_moments(reversed);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.cov - b.cov).cwiseAbs().maxCoeff() < 1e-12);
}
