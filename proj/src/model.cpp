#include "voi/model.hpp"

#include <stdexcept>

#include "voi/common.hpp"
#include "voi/linalg.hpp"
#include "voi/psa.hpp"

namespace voi {

Model::Model(std::string id, ModelSpec spec, NetBenefitFn nb)
    : id_(std::move(id)), spec_(std::move(spec)), nb_(std::move(nb)) {
  if (spec_.arm_count < 2) throw std::invalid_argument("model: need at least two arms");
  if (spec_.willingness_to_pay < 0.0) throw std::invalid_argument("model: negative willingness to pay");
  if (spec_.reference_arm < 1 || spec_.reference_arm > spec_.arm_count) {
    throw std::invalid_argument("model: reference arm out of range");
  }
  const auto p = static_cast<Eigen::Index>(spec_.parameter_names.size());
  if (spec_.prior.mean.size() != p || spec_.prior.cov.rows() != p || spec_.prior.cov.cols() != p) {
    throw std::invalid_argument("model: prior dimensions do not match parameter names");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(spec_.prior.cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("model: prior covariance is not positive definite");
  }
}

namespace {

// Hypothetical two-treatment disease model: response, side effects and
// hospitalisation drive QALYs and costs for each arm. theta4 (hospital cost
// per day) is shared between arms. Parameter blocks (theta5, theta7,
// theta14, theta16) and (theta6, theta15) carry pairwise correlation 0.6.
constexpr double kBkRho = 0.6;

const double kBkMean[19] = {10000, 0.1, 5.2, 4000, 0.7,  0.3, 3,   0.25, -0.1, 0.5,
                            15000, 0.08, 6.1, 0.8,  0.3, 3,   0.2, -0.1, 0.5};
const double kBkSd[19] = {10, 0.02, 1, 2000, 0.1, 0.1, 0.5, 0.1, 0.02, 0.2,
                          10, 0.02, 1, 0.1,  0.05, 1,  0.05, 0.02, 0.2};

ModelSpec bk_spec(int arm_count, double lambda) {
  ModelSpec spec;
  spec.arm_count = arm_count;
  spec.willingness_to_pay = lambda;
  spec.reference_arm = 1;
  for (int i = 1; i <= 19; ++i) spec.parameter_names.push_back("theta" + std::to_string(i));
  Eigen::VectorXd mean(19), sd(19);
  for (int i = 0; i < 19; ++i) {
    mean[i] = kBkMean[i];
    sd[i] = kBkSd[i];
  }
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(19, 19);
  const int block1[4] = {4, 6, 13, 15};  // theta5, theta7, theta14, theta16
  const int block2[2] = {5, 14};         // theta6, theta15
  for (int a : block1)
    for (int b : block1)
      if (a != b) corr(a, b) = kBkRho;
  corr(block2[0], block2[1]) = corr(block2[1], block2[0]) = kBkRho;
  spec.prior.mean = mean;
  spec.prior.cov = sd.asDiagonal() * corr * sd.asDiagonal();
  return spec;
}

Eigen::VectorXd bk_net_benefit(const Eigen::VectorXd& t, int arm_count, double lambda) {
  Eigen::VectorXd nb(arm_count);
  nb[0] = lambda * (t[4] * t[5] * t[6] + t[7] * t[8] * t[9]) - (t[0] + t[1] * t[2] * t[3]);
  nb[1] = lambda * (t[13] * t[14] * t[15] + t[16] * t[17] * t[18]) - (t[10] + t[11] * t[12] * t[3]);
  for (int a = 2; a < arm_count; ++a) nb[a] = nb[1];
  return nb;
}

}  // namespace

Model make_bk_model(int arm_count, double lambda) {
  return Model(arm_count == 2 ? "bk" : "bk3", bk_spec(arm_count, lambda),
               [arm_count, lambda](const Eigen::VectorXd& t) { return bk_net_benefit(t, arm_count, lambda); });
}

Model make_toy_model(const ToyParams& params) {
  if (params.sigma0 <= 0.0 || params.data_sd <= 0.0) {
    throw std::invalid_argument("toy model: sigma0 and data_sd must be positive");
  }
  ModelSpec spec;
  spec.arm_count = 2;
  spec.parameter_names = {"theta"};
  spec.willingness_to_pay = 1.0;
  spec.reference_arm = 2;  // INB = NB1 - NB2 = theta
  spec.prior.mean = Eigen::VectorXd::Constant(1, params.mu0);
  spec.prior.cov = Eigen::MatrixXd::Constant(1, 1, params.sigma0 * params.sigma0);
  Model model("normal-toy", std::move(spec), [](const Eigen::VectorXd& t) {
    Eigen::VectorXd nb(2);
    nb << t[0], 0.0;
    return nb;
  });
  model.toy_ = params;
  return model;
}

Model make_model(const std::string& id, const ToyParams& toy) {
  if (id == "bk") return make_bk_model(2);
  if (id == "bk3") return make_bk_model(3);
  if (id == "normal-toy") return make_toy_model(toy);
  throw ConfigError("unknown model '" + id + "' (expected bk, bk3 or normal-toy)");
}

Eigen::MatrixXd StudyDesign::data_covariance() const {
  const int k = data_dimension();
  if (data_sd.size() != k) throw std::invalid_argument("study design: data_sd size mismatch");
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(k, k);
  for (const auto& block : correlation_blocks) {
    for (int a : block)
      for (int b : block)
        if (a != b) corr(a, b) = data_correlation;
  }
  return data_sd.asDiagonal() * corr * data_sd.asDiagonal();
}

StudyDesign StudyDesign::with_sample_size(long long n) const {
  StudyDesign copy = *this;
  copy.sample_size = n;
  return copy;
}

StudyDesign make_study(const Model& model, int exercise_id, long long sample_size) {
  if (sample_size < 0) throw std::invalid_argument("study: negative sample size");
  StudyDesign d;
  d.exercise_id = exercise_id;
  d.sample_size = sample_size;
  d.data_correlation = kBkRho;
  if (model.id() == "normal-toy") {
    if (exercise_id != 1) throw ConfigError("unknown exercise " + std::to_string(exercise_id) + " for normal-toy");
    d.data_correlation = 0.0;
    d.focal_parameters = {0};
    d.data_sd = Eigen::VectorXd::Constant(1, model.toy().data_sd);
    d.correlation_blocks = {{0}};
    return d;
  }
  // Exercises observe subsets of the correlated utility/response parameters;
  // the data correlation mirrors the prior's block structure.
  switch (exercise_id) {
    case 1:
      d.focal_parameters = {4, 13};
      d.data_sd = (Eigen::VectorXd(2) << 0.2, 0.2).finished();
      d.correlation_blocks = {{0, 1}};
      break;
    case 2:
      d.focal_parameters = {5, 14};
      d.data_sd = (Eigen::VectorXd(2) << 0.2, 0.2).finished();
      d.correlation_blocks = {{0, 1}};
      break;
    case 3:
      d.focal_parameters = {6, 15};
      d.data_sd = (Eigen::VectorXd(2) << 1.0, 2.0).finished();
      d.correlation_blocks = {{0, 1}};
      break;
    case 4:
      d.focal_parameters = {4, 5, 13, 14};
      d.data_sd = (Eigen::VectorXd(4) << 0.2, 0.2, 0.2, 0.2).finished();
      d.correlation_blocks = {{0, 2}, {1, 3}};
      break;
    case 5:
      d.focal_parameters = {4, 5, 6, 13, 14, 15};
      d.data_sd = (Eigen::VectorXd(6) << 0.2, 0.2, 1.0, 0.2, 0.2, 2.0).finished();
      d.correlation_blocks = {{0, 2, 3, 5}, {1, 4}};
      break;
    default:
      throw ConfigError("unknown exercise " + std::to_string(exercise_id));
  }
  return d;
}

PosteriorSampler::PosteriorSampler(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size()) {
    throw std::invalid_argument("posterior sampler: dimension mismatch");
  }
  sqrt_ = matrix_sqrt_spd(cov_);
}

Eigen::MatrixXd PosteriorSampler::draw(long long m, std::uint64_t seed) const {
  const auto p = mean_.size();
  Rng rng(seed);
  Eigen::MatrixXd z(m, p);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = rng.normal();
  Eigen::MatrixXd out = z * sqrt_.transpose();
  out.rowwise() += mean_.transpose();
  return out;
}

ParameterDraws sample_prior(const Model& model, long long s, std::uint64_t seed) {
  if (s < 2) throw std::invalid_argument("sample_prior: need S >= 2");
  PosteriorSampler prior(model.spec().prior.mean, model.spec().prior.cov);
  ParameterDraws draws;
  draws.values = prior.draw(s, seed);
  draws.parameter_names = model.spec().parameter_names;
  draws.seed = seed;
  return draws;
}

Eigen::MatrixXd net_benefit(const ParameterDraws& draws, const Model& model) {
  if (draws.values.cols() != model.parameter_count()) {
    throw std::invalid_argument("net_benefit: parameter column mismatch");
  }
  const auto s = draws.values.rows();
  Eigen::MatrixXd nb(s, model.spec().arm_count);
  for (Eigen::Index i = 0; i < s; ++i) {
    nb.row(i) = model.net_benefit_row(draws.values.row(i)).transpose();
  }
  return nb;
}

Dataset sample_data(const StudyDesign& design, const Eigen::VectorXd& phi_value, std::uint64_t seed) {
  const int k = design.data_dimension();
  if (phi_value.size() != k) throw std::invalid_argument("sample_data: phi dimension mismatch");
  if (design.sample_size < 0) throw std::invalid_argument("sample_data: negative sample size");
  if ((design.data_sd.array() <= 0.0).any()) throw std::invalid_argument("sample_data: data SD must be positive");
  Dataset data;
  data.design = design;
  data.generating_phi = phi_value;
  const Eigen::MatrixXd chol = matrix_sqrt_spd(design.data_covariance());
  Rng rng(seed);
  Eigen::MatrixXd z(design.sample_size, k);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (int j = 0; j < k; ++j) z(i, j) = rng.normal();
  data.observations = z * chol.transpose();
  data.observations.rowwise() += phi_value.transpose();
  return data;
}

namespace {

// Kalman-form conjugate update of the joint Gaussian prior given iid
// observations of the focal coordinates: the sample mean is an observation
// of H*theta with noise covariance R/N.
PosteriorSampler gaussian_condition(const GaussianPrior& prior, const std::vector<int>& observed,
                                    const Eigen::VectorXd& obs_mean, const Eigen::MatrixXd& obs_cov) {
  const auto p = prior.mean.size();
  const int k = static_cast<int>(observed.size());
  Eigen::MatrixXd cross(p, k);  // Sigma0 * H^T
  for (int j = 0; j < k; ++j) cross.col(j) = prior.cov.col(observed[j]);
  Eigen::MatrixXd gram(k, k);   // H * Sigma0 * H^T + R
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) gram(i, j) = prior.cov(observed[i], observed[j]) + obs_cov(i, j);
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("posterior_update: singular data covariance");
  }
  Eigen::VectorXd innov = obs_mean;
  for (int j = 0; j < k; ++j) innov[j] -= prior.mean[observed[j]];
  Eigen::MatrixXd gain = llt.solve(cross.transpose()).transpose();  // p x k
  Eigen::VectorXd mean = prior.mean + gain * innov;
  Eigen::MatrixXd cov = prior.cov - gain * cross.transpose();
  cov = 0.5 * (cov + cov.transpose());
  return PosteriorSampler(std::move(mean), std::move(cov));
}

}  // namespace

PosteriorSampler posterior_update(const Model& model, const StudyDesign& design, const Dataset& data) {
  if (data.observations.rows() != data.design.sample_size) {
    throw std::invalid_argument("posterior_update: dataset row count does not match its design");
  }
  if (data.observations.cols() != design.data_dimension()) {
    throw std::invalid_argument("posterior_update: dataset dimension mismatch");
  }
  for (int idx : design.focal_parameters) {
    if (idx < 0 || idx >= model.parameter_count()) {
      throw std::invalid_argument("posterior_update: focal parameter out of range");
    }
  }
  const long long n = data.observations.rows();
  if (n == 0) {
    return PosteriorSampler(model.spec().prior.mean, model.spec().prior.cov);
  }
  const Eigen::MatrixXd data_cov = design.data_covariance();
  if (Eigen::LLT<Eigen::MatrixXd>(data_cov).info() != Eigen::Success) {
    throw std::runtime_error("posterior_update: singular data covariance");
  }
  const Eigen::VectorXd xbar = data.observations.colwise().mean();
  const Eigen::MatrixXd mean_cov = data_cov / static_cast<double>(n);
  return gaussian_condition(model.spec().prior, design.focal_parameters, xbar, mean_cov);
}

Eigen::MatrixXd posterior_inb_draws(const PosteriorSampler& sampler, const Model& model,
                                    long long m, std::uint64_t seed) {
  if (m < 2) throw std::invalid_argument("posterior_inb_draws: need M >= 2");
  ParameterDraws draws;
  draws.values = sampler.draw(m, seed);
  draws.parameter_names = model.spec().parameter_names;
  draws.seed = seed;
  const Eigen::MatrixXd nb = net_benefit(draws, model);
  return compute_inb(nb, model.spec().reference_arm).values;
}

PosteriorSampler condition_on_exact(const Model& model, const std::vector<int>& indices,
                                    const Eigen::VectorXd& values) {
  if (static_cast<Eigen::Index>(indices.size()) != values.size()) {
    throw std::invalid_argument("condition_on_exact: dimension mismatch");
  }
  const int k = static_cast<int>(indices.size());
  return gaussian_condition(model.spec().prior, indices, values, Eigen::MatrixXd::Zero(k, k));
}

}  // namespace voi
