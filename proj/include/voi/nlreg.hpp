#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voi/conditional_inb.hpp"
#include "voi/moment_match.hpp"

namespace voi {

// Pairs (N_q, y_q) with y_q = sigma2_theta - sigma2_q, the observed variance
// reduction, modelled as y_q ~ Normal(sigma2_phi * N_q / (N_q + h), sigma_eps^2).
struct VarianceObservations {
  std::vector<long long> n;
  Eigen::VectorXd y;
  double sigma2_phi = 0.0;
};

VarianceObservations make_variance_observations(const InbMoments& moments,
                                                const std::vector<PosteriorVariancePoint>& points,
                                                double sigma2_phi, int i = 0, int j = 0);

// Priors: h ~ Normal(h_mean, h_var) truncated at 0; sigma_eps ~ location-scale
// Student-t(sigma_df) truncated at 0. Defaults follow the data-dependent
// recipe: h_mean = N_max / 2, h_var = h_var_factor * N_max (factor 200 by
// default, 2000 selectable), sigma location sd(y)/2 and scale sd(y), df = 1
// (half-Cauchy).
struct NlregPriorConfig {
  double h_mean = 0.0;
  double h_var = 0.0;
  double sigma_loc = 0.0;
  double sigma_scale = 0.0;
  double sigma_df = 1.0;
};

NlregPriorConfig default_nlreg_priors(const VarianceObservations& obs, double h_var_factor = 200.0,
                                      double sigma_df = 1.0);

struct McmcConfig {
  int chains = 4;
  int burn_in = 1000;
  int keep = 3000;          // kept iterations per chain
  double target_accept = 0.4;  // step adaptation target, burn-in only
};

struct NlregPosterior {
  Eigen::VectorXd h;          // chains * keep draws, chain-major
  Eigen::VectorXd sigma_eps;
  int chains = 0;
  int keep = 0;
  std::vector<double> accept_rate;  // per chain, post burn-in
  double rhat_h = 0.0;              // split-Rhat
  double rhat_sigma_eps = 0.0;
  NlregPriorConfig priors;
  std::vector<std::string> warnings;
};

// Adaptive random-walk Metropolis on (log h, log sigma_eps) with the Jacobian
// correction; adaptation targets the configured acceptance rate during
// burn-in only. Rhat > 1.05 attaches a warning rather than failing.
NlregPosterior fit_variance_curve(const VarianceObservations& obs, const NlregPriorConfig& priors,
                                  const McmcConfig& mcmc, std::uint64_t seed);

// sigma2_phi * n / (n + h) per posterior draw, summarised at the requested
// quantile levels. Valid for any n >= 0, inside or outside the fitted grid.
std::vector<double> predict_sigma_x_quantiles(const NlregPosterior& post, double sigma2_phi,
                                              double n, const std::vector<double>& levels);

extern const std::vector<double> kDefaultCurveLevels;  // {0.025, 0.25, 0.5, 0.75, 0.975}

// EVSI across sample sizes at each variance-quantile level. The bands are
// posterior quantiles of sigma_x(n) pushed through the rescaling, not
// posterior credible intervals for the EVSI itself (see band_note).
struct EvsiCurve {
  std::vector<long long> n_grid;
  std::vector<double> levels;
  Eigen::MatrixXd sigma_x;  // grid x levels
  Eigen::MatrixXd evsi;     // grid x levels
  double evppi_ceiling = 0.0;
  std::string band_note;
};

EvsiCurve evsi_curve(const NlregPosterior& post, const ConditionalInb& cond, double mu,
                     const std::vector<long long>& n_grid,
                     const std::vector<double>& levels = kDefaultCurveLevels);

struct ResidualRow {
  long long n = 0;
  double y = 0.0;
  double fitted = 0.0;        // posterior-median fitted value
  double residual = 0.0;
  double std_residual = 0.0;  // residual / posterior-median sigma_eps
};

std::vector<ResidualRow> residual_diagnostics(const NlregPosterior& post,
                                              const VarianceObservations& obs);

// Multi-decision extension: one regression per unique element of the INB
// covariance matrix, (T-1)T/2 fits in total.
struct MultiVariancePosterior {
  int dim = 0;
  std::vector<std::array<int, 2>> elements;  // 0-based (i, j) with i <= j
  std::vector<NlregPosterior> fits;
  Eigen::MatrixXd sigma_phi;
};

MultiVariancePosterior fit_variance_surface_multi(const InbMoments& moments,
                                                  const std::vector<PosteriorVariancePoint>& points,
                                                  const Eigen::MatrixXd& sigma_phi,
                                                  const McmcConfig& mcmc, std::uint64_t seed,
                                                  double h_var_factor = 200.0, double sigma_df = 1.0);

// Sigma_x(n) assembled from matching per-element quantile levels and
// projected to PSD.
Eigen::MatrixXd sigma_x_matrix_at(const MultiVariancePosterior& multi, double n, double level);

void write_posterior_draws(const std::string& path, const NlregPosterior& post);
void write_evsi_curve(const std::string& path, const EvsiCurve& curve);
void write_residuals(const std::string& path, const std::vector<ResidualRow>& rows);

}  // namespace voi
