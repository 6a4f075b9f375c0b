#include "voi/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "voi/common.hpp"
#include "voi/psa.hpp"

namespace voi {

OracleEstimate nested_mc_evsi(const Model& model, const StudyDesign& study, long long s_out,
                              long long m_in, std::uint64_t seed) {
  if (s_out < 2 || m_in < 2) throw std::invalid_argument("nested_mc_evsi: need S_out, M_in >= 2");

  const ParameterDraws outer = sample_prior(model, s_out, substream(seed, Stream::kPsa));
  const Eigen::MatrixXd outer_inb = compute_inb(net_benefit(outer, model),
                                                model.spec().reference_arm).values;
  const auto arms = outer_inb.cols();

  Eigen::VectorXd max_terms(s_out);
  Eigen::MatrixXd inner_means(s_out, arms);
  for (long long s = 0; s < s_out; ++s) {
    Eigen::VectorXd phi(study.data_dimension());
    for (int k = 0; k < study.data_dimension(); ++k) phi[k] = outer.values(s, study.focal_parameters[k]);
    const Dataset data = sample_data(study, phi, substream(seed, Stream::kOracleOuter, s));
    const PosteriorSampler posterior = posterior_update(model, study, data);
    const Eigen::MatrixXd inb =
        posterior_inb_draws(posterior, model, m_in, substream(seed, Stream::kOracleInner, s));
    inner_means.row(s) = inb.colwise().mean();
    max_terms[s] = std::max(0.0, inner_means.row(s).maxCoeff());
  }

  OracleEstimate est;
  est.s_out = s_out;
  est.m_in = m_in;
  est.total_evaluations = s_out * (m_in + 1);
  est.prior_mean_inb = inner_means.colwise().mean().maxCoeff();
  est.evsi = max_terms.mean() - std::max(0.0, est.prior_mean_inb);
  const double centered = (max_terms.array() - max_terms.mean()).square().sum() / double(s_out - 1);
  est.se = std::sqrt(centered / double(s_out));
  return est;
}

double closed_form_toy_evsi(double mu0, double sigma0, double sigma_d, double n) {
  if (sigma0 <= 0.0 || sigma_d <= 0.0) {
    throw std::invalid_argument("closed_form_toy_evsi: sigma0 and sigma_d must be positive");
  }
  if (n < 0.0) throw std::invalid_argument("closed_form_toy_evsi: negative sample size");
  const double h_star = (sigma_d * sigma_d) / (sigma0 * sigma0);
  const double s2 = sigma0 * sigma0 * n / (n + h_star);
  if (s2 <= 0.0) return 0.0;
  const double s = std::sqrt(s2);
  const double z = mu0 / s;
  return s * norm_pdf(z) + mu0 * norm_cdf(z) - std::max(0.0, mu0);
}

}  // namespace voi
