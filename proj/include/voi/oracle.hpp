#pragma once

#include <cstdint>

#include "voi/model.hpp"

namespace voi {

struct OracleEstimate {
  double evsi = 0.0;
  double se = 0.0;                 // naive SE of the outer max terms
  long long s_out = 0;
  long long m_in = 0;
  long long total_evaluations = 0;  // s_out * (m_in + 1), counted exactly
  double prior_mean_inb = 0.0;      // tower estimate used in the subtraction
};

// Nested Monte Carlo reference estimator: the outer loop draws parameters
// from the prior and a dataset from the sampling distribution, the inner
// loop estimates the posterior-mean INB per arm with m_in exact-conjugate
// posterior draws. The subtracted current-information term uses the mean of
// the inner means (an unbiased estimate of the prior mean INB), which keeps
// the estimate nonnegative pathwise.
OracleEstimate nested_mc_evsi(const Model& model, const StudyDesign& study, long long s_out,
                              long long m_in, std::uint64_t seed);

// Exact preposterior EVSI of the conjugate toy model: with
// s^2 = sigma0^2 * n / (n + sigma_d^2 / sigma0^2), the preposterior mean is
// N(mu0, s^2), so EVSI = s*pdf(mu0/s) + mu0*cdf(mu0/s) - max(0, mu0).
double closed_form_toy_evsi(double mu0, double sigma0, double sigma_d, double n);

}  // namespace voi
