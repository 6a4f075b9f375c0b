#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace voi {

// Jointly normal prior over the model parameters. Correlated parameters are
// expressed through the covariance matrix; independent parameters sit on the
// diagonal.
struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct ModelSpec {
  int arm_count = 2;                          // T >= 2
  std::vector<std::string> parameter_names;   // P identifiers
  double willingness_to_pay = 0.0;            // lambda, money per QALY
  GaussianPrior prior;
  int reference_arm = 1;                      // 1-based, in [1, T]
};

// Per-arm net benefit as a deterministic function of one parameter row.
using NetBenefitFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// A health-economic model: prior sampler, net-benefit evaluator, study-data
// sampler and posterior updater all hang off this. Built-ins:
//   "bk"         two-arm hypothetical-disease model, 19 normal parameters
//   "bk3"        the same model with a third arm duplicating arm 2
//   "normal-toy" one-parameter conjugate model with INB = theta, used as an
//                analytic oracle (theta ~ N(mu0, sigma0^2), x_i ~ N(theta, sigma_d^2))
struct ToyParams {
  double mu0 = 0.0;
  double sigma0 = 1.0;
  double data_sd = 1.0;
};

class Model {
 public:
  Model(std::string id, ModelSpec spec, NetBenefitFn nb);

  const std::string& id() const { return id_; }
  const ModelSpec& spec() const { return spec_; }
  int parameter_count() const { return static_cast<int>(spec_.parameter_names.size()); }
  Eigen::VectorXd net_benefit_row(const Eigen::VectorXd& params) const { return nb_(params); }
  const ToyParams& toy() const { return toy_; }

 private:
  std::string id_;
  ModelSpec spec_;
  NetBenefitFn nb_;
  ToyParams toy_;

  friend Model make_toy_model(const ToyParams&);
};

Model make_bk_model(int arm_count = 2, double lambda = 100000.0);
Model make_toy_model(const ToyParams& params = {});
Model make_model(const std::string& id, const ToyParams& toy = {});

// One proposed data collection exercise: which parameters the study observes
// directly, the per-outcome sampling SD, and the within-observation
// correlation structure (blocks of locally-indexed outcome positions).
struct StudyDesign {
  int exercise_id = 1;
  std::vector<int> focal_parameters;           // 0-based indices into parameter_names
  Eigen::VectorXd data_sd;                     // one per observed outcome
  double data_correlation = 0.0;
  std::vector<std::vector<int>> correlation_blocks;
  long long sample_size = 0;

  int data_dimension() const { return static_cast<int>(focal_parameters.size()); }
  Eigen::MatrixXd data_covariance() const;
  StudyDesign with_sample_size(long long n) const;
};

// Exercises 1-5 for "bk"/"bk3"; the toy model has a single study (id 1).
StudyDesign make_study(const Model& model, int exercise_id, long long sample_size);

struct ParameterDraws {
  Eigen::MatrixXd values;                      // S x P
  std::vector<std::string> parameter_names;
  std::uint64_t seed = 0;
};

struct Dataset {
  Eigen::MatrixXd observations;                // N x k
  StudyDesign design;
  Eigen::VectorXd generating_phi;
};

// Gaussian posterior (or prior, with no data) over the full parameter
// vector. Unobserved independent parameters keep their prior blocks; the
// draw method pushes seeded standard normals through a symmetric PSD square
// root of the covariance.
class PosteriorSampler {
 public:
  PosteriorSampler(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  Eigen::MatrixXd draw(long long m, std::uint64_t seed) const;  // m x P

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd sqrt_;
};

ParameterDraws sample_prior(const Model& model, long long s, std::uint64_t seed);

// S x T table of per-arm net benefit.
Eigen::MatrixXd net_benefit(const ParameterDraws& draws, const Model& model);

Dataset sample_data(const StudyDesign& design, const Eigen::VectorXd& phi_value, std::uint64_t seed);

PosteriorSampler posterior_update(const Model& model, const StudyDesign& design, const Dataset& data);

// M x (T-1) incremental net benefit draws from a posterior.
Eigen::MatrixXd posterior_inb_draws(const PosteriorSampler& sampler, const Model& model,
                                    long long m, std::uint64_t seed);

// Exact conditioning of the prior on a subset of coordinates (a zero-noise
// observation); realizes "perfect information" about those parameters.
PosteriorSampler condition_on_exact(const Model& model, const std::vector<int>& indices,
                                    const Eigen::VectorXd& values);

}  // namespace voi
