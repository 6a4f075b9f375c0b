#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "voi/psa.hpp"

namespace voi {

struct SmootherConfig {
  int basis_per_dim = 8;        // marginal B-spline basis size
  int lambda_grid = 25;         // GCV grid resolution
  double lambda_min = 1e-7;     // relative ridge penalty range
  double lambda_max = 1e3;
  long long max_fit_draws = 20000;  // row cap applied for focal dimension >= 5; 0 disables
};

// E[INB | phi] estimated by penalized regression of the INB draws on the
// focal-parameter draws. The basis holds an unpenalized intercept and linear
// block plus a ridge-penalized smooth block: a tensor-product B-spline for
// d <= 2, additive marginal B-splines plus pairwise interactions for d <= 6.
// The ridge weight is chosen by generalized cross-validation, per response
// column.
struct ConditionalInb {
  Eigen::MatrixXd fitted;            // S x (T-1)
  Eigen::VectorXd mean;              // column means of fitted
  Eigen::MatrixXd cov;               // sample covariance of fitted (Sigma_phi)
  SmootherConfig config;
  std::vector<double> chosen_lambda; // per response column (relative scale)
  int basis_columns = 0;
};

ConditionalInb fit_conditional_inb(const InbDraws& inb, const Eigen::MatrixXd& phi_draws,
                                   const SmootherConfig& config = {});

// Wrap externally computed fitted values (the file-ingestion path).
ConditionalInb conditional_inb_from_fitted(Eigen::MatrixXd fitted);

// Delimited table, one row per PSA draw, one column per non-reference arm,
// header row required.
ConditionalInb read_fitted_values(const std::string& path);

// Dual: mean_s max(0, INB^phi_s) - max(0, mean). Multi: the row-wise max
// over arms inside both terms. Always >= 0.
double evppi(const ConditionalInb& cond);

}  // namespace voi
