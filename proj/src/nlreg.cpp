#include "voi/nlreg.hpp"

#include <cmath>
#include <stdexcept>

#include "voi/common.hpp"
#include "voi/table.hpp"

namespace voi {

const std::vector<double> kDefaultCurveLevels = {0.025, 0.25, 0.5, 0.75, 0.975};

VarianceObservations make_variance_observations(const InbMoments& moments,
                                                const std::vector<PosteriorVariancePoint>& points,
                                                double sigma2_phi, int i, int j) {
  VarianceObservations obs;
  obs.sigma2_phi = sigma2_phi;
  obs.y.resize(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    obs.n.push_back(points[k].n);
    obs.y[k] = moments.cov(i, j) - points[k].sigma(i, j);
  }
  return obs;
}

NlregPriorConfig default_nlreg_priors(const VarianceObservations& obs, double h_var_factor,
                                      double sigma_df) {
  if (obs.n.empty()) throw std::invalid_argument("nlreg priors: no observations");
  const long long n_max = *std::max_element(obs.n.begin(), obs.n.end());
  const double mean = obs.y.mean();
  const double sd = obs.y.size() > 1
                        ? std::sqrt((obs.y.array() - mean).square().sum() / double(obs.y.size() - 1))
                        : 0.0;
  NlregPriorConfig cfg;
  cfg.h_mean = double(n_max) / 2.0;
  cfg.h_var = h_var_factor * double(n_max);
  cfg.sigma_loc = sd / 2.0;
  cfg.sigma_scale = sd;
  cfg.sigma_df = sigma_df;
  return cfg;
}

namespace {

struct LogPosterior {
  const VarianceObservations* obs;
  NlregPriorConfig priors;

  // Density of (log h, log sigma_eps) up to a constant: Gaussian likelihood,
  // truncated-normal h prior, truncated Student-t sigma prior, plus the
  // log-scale Jacobian. Truncation normalizers are parameter-free and drop.
  double operator()(double u, double v) const {
    const double h = std::exp(u);
    const double s = std::exp(v);
    double ll = 0.0;
    for (std::size_t q = 0; q < obs->n.size(); ++q) {
      const double f = obs->sigma2_phi * double(obs->n[q]) / (double(obs->n[q]) + h);
      const double r = (obs->y[static_cast<Eigen::Index>(q)] - f) / s;
      ll += -0.5 * r * r;
    }
    ll -= double(obs->n.size()) * v;
    const double dh = h - priors.h_mean;
    ll += -0.5 * dh * dh / priors.h_var;
    const double t = (s - priors.sigma_loc) / priors.sigma_scale;
    ll += -0.5 * (priors.sigma_df + 1.0) * std::log1p(t * t / priors.sigma_df);
    return ll + u + v;
  }
};

struct ChainResult {
  std::vector<double> h;
  std::vector<double> sigma_eps;
  double accept_rate = 0.0;
};

ChainResult run_chain(const LogPosterior& lp, const McmcConfig& mcmc, double u0, double v0,
                      std::uint64_t seed) {
  Rng rng(seed);
  double u = u0, v = v0;
  double lp_cur = lp(u, v);
  double step_u = 0.5, step_v = 0.5;
  long long accepted = 0, proposed = 0;
  ChainResult out;
  out.h.reserve(mcmc.keep);
  out.sigma_eps.reserve(mcmc.keep);

  const int total = mcmc.burn_in + mcmc.keep;
  for (int it = 0; it < total; ++it) {
    const bool adapting = it < mcmc.burn_in;
    const double gamma = adapting ? 1.0 / std::sqrt(1.0 + it) : 0.0;
    for (int coord = 0; coord < 2; ++coord) {
      double& x = coord == 0 ? u : v;
      double& step = coord == 0 ? step_u : step_v;
      const double old = x;
      x = old + step * rng.normal();
      const double lp_new = lp(u, v);
      const double alpha = std::isfinite(lp_new) ? std::min(1.0, std::exp(lp_new - lp_cur)) : 0.0;
      if (rng.uniform() < alpha) {
        lp_cur = lp_new;
        if (!adapting) ++accepted;
      } else {
        x = old;
      }
      if (!adapting) ++proposed;
      if (adapting) {
        step = std::clamp(step * std::exp(gamma * (alpha - mcmc.target_accept)), 1e-4, 20.0);
      }
    }
    if (!adapting) {
      out.h.push_back(std::exp(u));
      out.sigma_eps.push_back(std::exp(v));
    }
  }
  out.accept_rate = proposed > 0 ? double(accepted) / double(proposed) : 0.0;
  return out;
}

// Split-Rhat over the kept draws: each chain contributes two half sequences.
double split_rhat(const Eigen::VectorXd& draws, int chains, int keep) {
  const int half = keep / 2;
  if (half < 2) return 1.0;
  const int m = 2 * chains;
  std::vector<double> means(m), vars(m);
  for (int c = 0; c < chains; ++c) {
    for (int part = 0; part < 2; ++part) {
      const int offset = c * keep + part * half;
      double mean = 0.0;
      for (int i = 0; i < half; ++i) mean += draws[offset + i];
      mean /= half;
      double var = 0.0;
      for (int i = 0; i < half; ++i) var += (draws[offset + i] - mean) * (draws[offset + i] - mean);
      var /= (half - 1);
      means[c * 2 + part] = mean;
      vars[c * 2 + part] = var;
    }
  }
  double grand = 0.0;
  for (double x : means) grand += x;
  grand /= m;
  double b = 0.0;
  for (double x : means) b += (x - grand) * (x - grand);
  b *= double(half) / (m - 1);
  double w = 0.0;
  for (double x : vars) w += x;
  w /= m;
  if (w <= 0.0) return 1.0;
  const double var_plus = (double(half) - 1.0) / double(half) * w + b / double(half);
  return std::sqrt(var_plus / w);
}

NlregPosterior fit_curve_impl(const VarianceObservations& obs, NlregPriorConfig priors,
                              const McmcConfig& mcmc, std::uint64_t seed,
                              std::vector<std::string> warnings) {
  if (obs.n.size() < 3) throw std::invalid_argument("fit_variance_curve: need Q >= 3 observations");
  if (obs.y.size() != static_cast<Eigen::Index>(obs.n.size())) {
    throw std::invalid_argument("fit_variance_curve: N/y length mismatch");
  }
  for (long long n : obs.n) {
    if (n < 1) throw std::invalid_argument("fit_variance_curve: sample sizes must be >= 1");
  }
  if (!obs.y.allFinite()) throw std::invalid_argument("fit_variance_curve: non-finite observations");
  if (!(priors.h_var > 0.0) || !(priors.h_mean > 0.0)) {
    throw std::invalid_argument("fit_variance_curve: invalid h prior");
  }

  if (!(priors.sigma_scale > 0.0)) {
    // All-equal y values make the data-driven residual prior degenerate.
    const double floor = 1e-8 * std::max({std::abs(obs.sigma2_phi), obs.y.cwiseAbs().maxCoeff(), 1e-290});
    priors.sigma_scale = floor;
    priors.sigma_loc = floor / 2.0;
    warnings.push_back("residual-scale prior degenerate (all y equal); floored at " + fmt_g12(floor));
  }

  const LogPosterior lp{&obs, priors};
  NlregPosterior post;
  post.chains = mcmc.chains;
  post.keep = mcmc.keep;
  post.priors = priors;
  post.warnings = std::move(warnings);
  post.h.resize(static_cast<Eigen::Index>(mcmc.chains) * mcmc.keep);
  post.sigma_eps.resize(post.h.size());

  for (int c = 0; c < mcmc.chains; ++c) {
    Rng init(substream(seed, Stream::kNlregChain, 1000 + c));
    const double u0 = std::log(priors.h_mean * (0.5 + init.uniform()));
    const double v0 = std::log(priors.sigma_scale * (0.5 + init.uniform()));
    const ChainResult chain = run_chain(lp, mcmc, u0, v0, substream(seed, Stream::kNlregChain, c));
    for (int i = 0; i < mcmc.keep; ++i) {
      post.h[c * mcmc.keep + i] = chain.h[i];
      post.sigma_eps[c * mcmc.keep + i] = chain.sigma_eps[i];
    }
    post.accept_rate.push_back(chain.accept_rate);
  }

  post.rhat_h = split_rhat(post.h, mcmc.chains, mcmc.keep);
  post.rhat_sigma_eps = split_rhat(post.sigma_eps, mcmc.chains, mcmc.keep);
  if (post.rhat_h > 1.05) {
    post.warnings.push_back("Rhat(h) = " + fmt_g12(post.rhat_h) + " exceeds 1.05");
  }
  if (post.rhat_sigma_eps > 1.05) {
    post.warnings.push_back("Rhat(sigma_eps) = " + fmt_g12(post.rhat_sigma_eps) + " exceeds 1.05");
  }
  return post;
}

}  // namespace

NlregPosterior fit_variance_curve(const VarianceObservations& obs, const NlregPriorConfig& priors,
                                  const McmcConfig& mcmc, std::uint64_t seed) {
  if (!(obs.sigma2_phi > 0.0)) throw std::invalid_argument("fit_variance_curve: sigma2_phi must be positive");
  return fit_curve_impl(obs, priors, mcmc, seed, {});
}

std::vector<double> predict_sigma_x_quantiles(const NlregPosterior& post, double sigma2_phi,
                                              double n, const std::vector<double>& levels) {
  if (post.h.size() == 0) throw std::invalid_argument("predict_sigma_x_quantiles: empty posterior");
  if (n < 0.0) throw std::invalid_argument("predict_sigma_x_quantiles: negative sample size");
  std::vector<double> f(post.h.data(), post.h.data() + post.h.size());
  for (double& h : f) h = n == 0.0 ? 0.0 : sigma2_phi * n / (n + h);
  std::sort(f.begin(), f.end());
  std::vector<double> out;
  out.reserve(levels.size());
  for (double level : levels) out.push_back(quantile_sorted(f, level));
  return out;
}

EvsiCurve evsi_curve(const NlregPosterior& post, const ConditionalInb& cond, double mu,
                     const std::vector<long long>& n_grid, const std::vector<double>& levels) {
  if (n_grid.empty()) throw std::invalid_argument("evsi_curve: empty sample-size grid");
  if (cond.fitted.cols() != 1) throw std::invalid_argument("evsi_curve: needs a dual-decision conditional INB");
  EvsiCurve curve;
  curve.n_grid = n_grid;
  std::sort(curve.n_grid.begin(), curve.n_grid.end());
  curve.n_grid.erase(std::unique(curve.n_grid.begin(), curve.n_grid.end()), curve.n_grid.end());
  curve.levels = levels;
  curve.evppi_ceiling = evppi(cond);
  curve.band_note =
      "bands are posterior quantiles of sigma_x(n) propagated through the EVSI "
      "formula, not posterior credible intervals for the EVSI";
  const auto rows = static_cast<Eigen::Index>(curve.n_grid.size());
  const auto cols = static_cast<Eigen::Index>(levels.size());
  curve.sigma_x.resize(rows, cols);
  curve.evsi.resize(rows, cols);
  const double sigma2_phi = cond.cov(0, 0);
  const double slack = 1e-9 * (1.0 + std::abs(curve.evppi_ceiling));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto q = predict_sigma_x_quantiles(post, sigma2_phi, double(curve.n_grid[r]), levels);
    for (Eigen::Index c = 0; c < cols; ++c) {
      curve.sigma_x(r, c) = q[c];
      double value = evsi_dual(rescale_dual(cond, mu, sigma2_phi, q[c]));
      if (value < 0.0 && value > -slack) value = 0.0;
      curve.evsi(r, c) = value;
      if (value < 0.0 || value > curve.evppi_ceiling + 1e-9) {
        throw std::runtime_error("evsi_curve: value outside [0, EVPPI] at n=" +
                                 std::to_string(curve.n_grid[r]));
      }
      if (r > 0 && curve.evsi(r, c) < curve.evsi(r - 1, c) - slack) {
        throw std::runtime_error("evsi_curve: non-monotone level at n=" +
                                 std::to_string(curve.n_grid[r]));
      }
    }
  }
  return curve;
}

std::vector<ResidualRow> residual_diagnostics(const NlregPosterior& post,
                                              const VarianceObservations& obs) {
  if (post.h.size() == 0) throw std::invalid_argument("residual_diagnostics: empty posterior");
  std::vector<double> sigma(post.sigma_eps.data(), post.sigma_eps.data() + post.sigma_eps.size());
  const double sigma_med = quantile(std::move(sigma), 0.5);
  std::vector<ResidualRow> rows;
  rows.reserve(obs.n.size());
  for (std::size_t q = 0; q < obs.n.size(); ++q) {
    ResidualRow row;
    row.n = obs.n[q];
    row.y = obs.y[static_cast<Eigen::Index>(q)];
    row.fitted = predict_sigma_x_quantiles(post, obs.sigma2_phi, double(obs.n[q]), {0.5})[0];
    row.residual = row.y - row.fitted;
    row.std_residual = sigma_med > 0.0 ? row.residual / sigma_med : 0.0;
    rows.push_back(row);
  }
  return rows;
}

MultiVariancePosterior fit_variance_surface_multi(const InbMoments& moments,
                                                  const std::vector<PosteriorVariancePoint>& points,
                                                  const Eigen::MatrixXd& sigma_phi,
                                                  const McmcConfig& mcmc, std::uint64_t seed,
                                                  double h_var_factor, double sigma_df) {
  const auto dim = moments.cov.rows();
  if (sigma_phi.rows() != dim || sigma_phi.cols() != dim) {
    throw std::invalid_argument("fit_variance_surface_multi: sigma_phi dimension mismatch");
  }
  if (points.empty()) throw std::invalid_argument("fit_variance_surface_multi: no variance points");
  for (const auto& p : points) {
    if (p.sigma.rows() != dim) {
      throw std::invalid_argument("fit_variance_surface_multi: variance point dimension mismatch");
    }
  }
  MultiVariancePosterior multi;
  multi.dim = static_cast<int>(dim);
  multi.sigma_phi = sigma_phi;
  std::uint64_t element = 0;
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      VarianceObservations obs = make_variance_observations(moments, points, sigma_phi(i, j), i, j);
      const NlregPriorConfig priors = default_nlreg_priors(obs, h_var_factor, sigma_df);
      multi.elements.push_back({i, j});
      // single-element surfaces reduce exactly to fit_variance_curve
      const std::uint64_t fit_seed = dim == 1 ? seed : substream(seed, Stream::kNlregElement, element);
      multi.fits.push_back(fit_curve_impl(obs, priors, mcmc, fit_seed, {}));
      ++element;
    }
  }
  return multi;
}

Eigen::MatrixXd sigma_x_matrix_at(const MultiVariancePosterior& multi, double n, double level) {
  Eigen::MatrixXd out(multi.dim, multi.dim);
  for (std::size_t e = 0; e < multi.elements.size(); ++e) {
    const auto [i, j] = multi.elements[e];
    const double v =
        predict_sigma_x_quantiles(multi.fits[e], multi.sigma_phi(i, j), n, {level})[0];
    out(i, j) = v;
    out(j, i) = v;
  }
  return psd_project(out);
}

void write_posterior_draws(const std::string& path, const NlregPosterior& post) {
  std::vector<std::vector<std::string>> rows;
  for (int c = 0; c < post.chains; ++c) {
    for (int i = 0; i < post.keep; ++i) {
      rows.push_back({std::to_string(c + 1), std::to_string(i + 1),
                      fmt_g12(post.h[c * post.keep + i]), fmt_g12(post.sigma_eps[c * post.keep + i])});
    }
  }
  write_table(path, {"chain", "iter", "h", "sigma_eps"}, rows);
}

void write_evsi_curve(const std::string& path, const EvsiCurve& curve) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 0; r < curve.n_grid.size(); ++r) {
    for (std::size_t c = 0; c < curve.levels.size(); ++c) {
      rows.push_back({std::to_string(curve.n_grid[r]), fmt_g12(curve.levels[c]),
                      fmt_g12(curve.sigma_x(r, c)), fmt_g12(curve.evsi(r, c))});
    }
  }
  write_table(path, {"n", "level", "sigma_x", "evsi"}, rows);
}

void write_residuals(const std::string& path, const std::vector<ResidualRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& row : rows) {
    out.push_back({std::to_string(row.n), fmt_g12(row.y), fmt_g12(row.fitted),
                   fmt_g12(row.residual), fmt_g12(row.std_residual)});
  }
  write_table(path, {"n", "y", "fitted", "residual", "std_residual"}, out);
}

}  // namespace voi
