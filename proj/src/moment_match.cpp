#include "voi/moment_match.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "voi/common.hpp"
#include "voi/table.hpp"

namespace voi {

namespace {

constexpr long long kDecorrelationBudget = 100000;
constexpr double kDecorrelationLimit = 0.001;

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < n; ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

QuantileDesign build_quantile_design(const Eigen::MatrixXd& phi_draws, int q,
                                     long long n_min, long long n_max, std::uint64_t seed) {
  const int d = static_cast<int>(phi_draws.cols());
  if (q < 2) throw std::invalid_argument("quantile design: need Q >= 2");
  if (d >= 1 && q < 3) throw std::invalid_argument("quantile design: Q < 3 cannot be decorrelated from N");
  if (n_min < 1 || n_min >= n_max) throw std::invalid_argument("quantile design: need 1 <= N_min < N_max");
  if (d >= 1 && phi_draws.rows() < 2) throw std::invalid_argument("quantile design: need focal draws");

  QuantileDesign design;
  design.n_values.resize(q);
  const double lo = std::sqrt(double(n_min));
  const double hi = std::sqrt(double(n_max));
  for (int i = 0; i < q; ++i) {
    const double t = lo + (hi - lo) * double(i) / double(q - 1);
    design.n_values[i] = static_cast<long long>(t * t);
  }
  design.n_values.front() = n_min;  // pin the endpoints against truncation jitter
  design.n_values.back() = n_max;
  for (int i = 1; i < q; ++i) design.n_values[i] = std::max(design.n_values[i], design.n_values[i - 1]);

  design.phi_rows.resize(q, d);
  design.decorrelation = Eigen::VectorXd::Zero(d);
  std::vector<double> n_as_double(design.n_values.begin(), design.n_values.end());

  Rng rng(substream(seed, Stream::kDesign));
  for (int j = 0; j < d; ++j) {
    std::vector<double> sorted(phi_draws.col(j).data(), phi_draws.col(j).data() + phi_draws.rows());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> column(q);
    for (int i = 0; i < q; ++i) {
      column[i] = quantile_sorted(sorted, double(i + 1) / double(q + 1));
    }
    double cor = pearson(n_as_double, column);
    long long attempts = 0;
    while (!(std::abs(cor) < kDecorrelationLimit)) {
      if (std::isnan(cor)) {
        throw std::runtime_error("quantile design: focal column " + std::to_string(j + 1) +
                                 " has zero variance, cannot decorrelate");
      }
      if (++attempts > kDecorrelationBudget) {
        throw std::runtime_error("quantile design: failed to decorrelate focal column " +
                                 std::to_string(j + 1) + " within " +
                                 std::to_string(kDecorrelationBudget) + " attempts");
      }
      rng.shuffle(column);
      cor = pearson(n_as_double, column);
    }
    for (int i = 0; i < q; ++i) design.phi_rows(i, j) = column[i];
    design.decorrelation[j] = std::abs(cor);
  }
  return design;
}

std::vector<PosteriorVariancePoint> estimate_posterior_variances(
    const QuantileDesign& design, const Model& model, const StudyDesign& study_template,
    long long m, std::uint64_t seed, SimulationBudget* budget) {
  if (m < 2) throw std::invalid_argument("estimate_posterior_variances: need M >= 2");
  if (design.dim() != study_template.data_dimension()) {
    throw std::invalid_argument("estimate_posterior_variances: design/study dimension mismatch");
  }
  std::vector<PosteriorVariancePoint> points(design.q());
  for (int i = 0; i < design.q(); ++i) {
    try {
      const StudyDesign study = study_template.with_sample_size(design.n_values[i]);
      const Dataset data = sample_data(study, design.phi_rows.row(i).transpose(),
                                       substream(seed, Stream::kDataGen, i));
      const PosteriorSampler posterior = posterior_update(model, study, data);
      const std::uint64_t draw_seed = substream(seed, Stream::kPosteriorDraws, i);
      const Eigen::MatrixXd inb = posterior_inb_draws(posterior, model, m, draw_seed);
      points[i].q = i + 1;
      points[i].n = design.n_values[i];
      points[i].sigma = sample_covariance(inb);
      points[i].seed = draw_seed;
      if (budget) {
        budget->posterior_updates += 1;
        budget->posterior_draws += m;
        budget->model_evaluations += m;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("q=" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return points;
}

namespace {

Eigen::MatrixXd mean_sigma(const std::vector<PosteriorVariancePoint>& points, Eigen::Index dim) {
  if (points.empty()) throw std::invalid_argument("pooled_sigma_x: no variance points");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& p : points) {
    if (p.sigma.rows() != dim || p.sigma.cols() != dim) {
      throw std::invalid_argument("pooled_sigma_x: variance point dimension mismatch");
    }
    acc += p.sigma;
  }
  return acc / double(points.size());
}

}  // namespace

double pooled_sigma_x(const InbMoments& moments, const std::vector<PosteriorVariancePoint>& points) {
  if (moments.cov.rows() != 1) throw std::invalid_argument("pooled_sigma_x: scalar form needs T = 2");
  const double value = moments.cov(0, 0) - mean_sigma(points, 1)(0, 0);
  return std::max(0.0, value);
}

Eigen::MatrixXd pooled_sigma_x_matrix(const InbMoments& moments,
                                      const std::vector<PosteriorVariancePoint>& points) {
  return psd_project(moments.cov - mean_sigma(points, moments.cov.rows()));
}

RescaledDraws rescale_dual(const ConditionalInb& cond, double mu, double sigma2_phi, double sigma2_x) {
  if (cond.fitted.cols() != 1) throw std::invalid_argument("rescale_dual: needs a single INB column");
  if (sigma2_x < 0.0) throw std::invalid_argument("rescale_dual: negative sigma2_x");
  if (!(sigma2_phi > 0.0)) {
    if (sigma2_x > 0.0) throw std::invalid_argument("rescale_dual: sigma2_phi = 0 with sigma2_x > 0");
    RescaledDraws out;
    out.eta = Eigen::MatrixXd::Constant(cond.fitted.rows(), 1, mu);
    out.mu = Eigen::VectorXd::Constant(1, mu);
    out.sigma_phi = Eigen::MatrixXd::Constant(1, 1, sigma2_phi);
    out.sigma_x = Eigen::MatrixXd::Constant(1, 1, sigma2_x);
    return out;
  }
  const double scale = std::sqrt(sigma2_x / sigma2_phi);
  RescaledDraws out;
  out.eta = ((cond.fitted.col(0).array() - mu) * scale + mu).matrix();
  out.mu = Eigen::VectorXd::Constant(1, mu);
  out.sigma_phi = Eigen::MatrixXd::Constant(1, 1, sigma2_phi);
  out.sigma_x = Eigen::MatrixXd::Constant(1, 1, sigma2_x);
  return out;
}

RescaledDraws rescale_multi(const ConditionalInb& cond, const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& sigma_phi, const Eigen::MatrixXd& sigma_x) {
  const auto dim = cond.fitted.cols();
  if (mu.size() != dim || sigma_phi.rows() != dim || sigma_x.rows() != dim ||
      sigma_phi.cols() != dim || sigma_x.cols() != dim) {
    throw std::invalid_argument("rescale_multi: dimension mismatch");
  }
  const Eigen::MatrixXd phi_sqrt = matrix_sqrt_spd(sigma_phi);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(phi_sqrt);
  if (!lu.isInvertible()) throw std::invalid_argument("rescale_multi: singular sigma_phi");
  const Eigen::MatrixXd transform = lu.solve(matrix_sqrt_spd(sigma_x));
  RescaledDraws out;
  out.eta = (cond.fitted.rowwise() - mu.transpose()) * transform;
  out.eta.rowwise() += mu.transpose();
  out.mu = mu;
  out.sigma_phi = sigma_phi;
  out.sigma_x = sigma_x;
  return out;
}

double evsi_dual(const RescaledDraws& draws) {
  if (draws.eta.rows() == 0) throw std::invalid_argument("evsi_dual: empty rescaled draws");
  return evsi_multi(draws);
}

double evsi_multi(const RescaledDraws& draws) {
  if (draws.eta.rows() == 0) throw std::invalid_argument("evsi_multi: empty rescaled draws");
  double acc = 0.0;
  for (Eigen::Index r = 0; r < draws.eta.rows(); ++r) {
    acc += std::max(0.0, draws.eta.row(r).maxCoeff());
  }
  return acc / double(draws.eta.rows()) - std::max(0.0, draws.mu.maxCoeff());
}

void write_variance_points(const std::string& path, const std::vector<PosteriorVariancePoint>& points) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : points) {
    for (Eigen::Index i = 0; i < p.sigma.rows(); ++i) {
      for (Eigen::Index j = i; j < p.sigma.cols(); ++j) {
        rows.push_back({std::to_string(p.q), std::to_string(p.n), std::to_string(i + 1),
                        std::to_string(j + 1), fmt_g12(p.sigma(i, j))});
      }
    }
  }
  write_table(path, {"q", "n", "i", "j", "sigma"}, rows);
}

std::vector<PosteriorVariancePoint> read_variance_points(const std::string& path) {
  const Table t = read_table(path);
  const int cq = t.column("q"), cn = t.column("n"), ci = t.column("i"), cj = t.column("j"),
            cs = t.column("sigma");
  std::map<int, PosteriorVariancePoint> by_q;
  Eigen::Index dim = 0;
  for (const auto& row : t.rows) {
    const int q = static_cast<int>(parse_int(row[cq]));
    const Eigen::Index i = parse_int(row[ci]) - 1;
    const Eigen::Index j = parse_int(row[cj]) - 1;
    dim = std::max({dim, i + 1, j + 1});
    auto& p = by_q[q];
    p.q = q;
    p.n = parse_int(row[cn]);
    if (p.sigma.rows() < dim) {
      Eigen::MatrixXd grown = Eigen::MatrixXd::Constant(dim, dim, std::numeric_limits<double>::quiet_NaN());
      grown.topLeftCorner(p.sigma.rows(), p.sigma.cols()) = p.sigma;
      p.sigma = grown;
    }
    const double v = parse_double(row[cs]);
    p.sigma(i, j) = v;
    p.sigma(j, i) = v;
  }
  std::vector<PosteriorVariancePoint> points;
  for (auto& [q, p] : by_q) {
    if (p.sigma.rows() != dim || p.sigma.hasNaN()) {
      throw std::runtime_error("variance points: missing matrix elements for q=" + std::to_string(q));
    }
    points.push_back(std::move(p));
  }
  if (points.empty()) throw std::runtime_error("variance points: empty table " + path);
  return points;
}

}  // namespace voi
