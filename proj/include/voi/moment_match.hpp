#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "voi/conditional_inb.hpp"
#include "voi/linalg.hpp"
#include "voi/model.hpp"
#include "voi/psa.hpp"

namespace voi {

// Q rows of decorrelated focal-parameter sample quantiles paired with
// sqrt-spaced sample sizes. Each dataset X_q is later generated from one
// (phi_q, N_q) row.
struct QuantileDesign {
  Eigen::MatrixXd phi_rows;          // Q x d, each column independently permuted
  std::vector<long long> n_values;   // Q, nondecreasing, N_1 = N_min, N_Q = N_max
  Eigen::VectorXd decorrelation;     // per column: |cor(N_q, phi column)| achieved

  int q() const { return static_cast<int>(n_values.size()); }
  int dim() const { return static_cast<int>(phi_rows.cols()); }
};

// Sample sizes are truncated squares of evenly spaced points on
// [sqrt(n_min), sqrt(n_max)]; each focal column holds the (1:Q)/(Q+1)
// empirical quantiles, re-permuted from the seeded stream until its
// correlation with N_q falls below 0.001 in absolute value.
QuantileDesign build_quantile_design(const Eigen::MatrixXd& phi_draws, int q,
                                     long long n_min, long long n_max, std::uint64_t seed);

struct PosteriorVariancePoint {
  int q = 0;                // 1-based design row
  long long n = 0;
  Eigen::MatrixXd sigma;    // posterior covariance of INB, 1x1 when T = 2
  std::uint64_t seed = 0;
};

struct SimulationBudget {
  long long posterior_updates = 0;
  long long posterior_draws = 0;
  long long model_evaluations = 0;
};

// One simulated dataset, one conjugate update and M posterior INB draws per
// design row: exactly Q posterior updates and Q*M draws in total, on
// independent per-q seed streams.
std::vector<PosteriorVariancePoint> estimate_posterior_variances(
    const QuantileDesign& design, const Model& model, const StudyDesign& study_template,
    long long m, std::uint64_t seed, SimulationBudget* budget = nullptr);

// Law-of-total-variance pooling at a single sample size: sigma_theta minus
// the average posterior variance, floored at zero (scalar) or projected to
// PSD (matrix) since Monte Carlo noise can push the difference negative.
double pooled_sigma_x(const InbMoments& moments, const std::vector<PosteriorVariancePoint>& points);
Eigen::MatrixXd pooled_sigma_x_matrix(const InbMoments& moments,
                                      const std::vector<PosteriorVariancePoint>& points);

struct RescaledDraws {
  Eigen::MatrixXd eta;        // S x (T-1), approximate draws of the preposterior mean
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma_phi;
  Eigen::MatrixXd sigma_x;
};

// eta_s = (INB^phi_s - mu) * sqrt(sigma2_x / sigma2_phi) + mu
RescaledDraws rescale_dual(const ConditionalInb& cond, double mu, double sigma2_phi, double sigma2_x);

// eta_s = (INB^phi_s - mu) Sigma_phi^{-1/2} Sigma_x^{1/2} + mu (row vectors)
RescaledDraws rescale_multi(const ConditionalInb& cond, const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& sigma_phi, const Eigen::MatrixXd& sigma_x);

// mean_s max(0, eta_s) - max(0, mu); multi takes the row-wise max over arms.
double evsi_dual(const RescaledDraws& draws);
double evsi_multi(const RescaledDraws& draws);

// Delimited export/import with header q,n,i,j,sigma (i = j = 1 in the
// scalar case); enables resuming expensive runs.
void write_variance_points(const std::string& path, const std::vector<PosteriorVariancePoint>& points);
std::vector<PosteriorVariancePoint> read_variance_points(const std::string& path);

}  // namespace voi
