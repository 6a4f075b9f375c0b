#include "voi/conditional_inb.hpp"

#include <cmath>
#include <stdexcept>

#include "voi/linalg.hpp"
#include "voi/table.hpp"

namespace voi {

namespace {

// Cubic B-spline basis on a clamped uniform knot vector spanning the data
// range. Evaluation only ever happens at the fitting points, so no
// extrapolation handling is needed.
class BsplineBasis {
 public:
  BsplineBasis(double lo, double hi, int nbasis) : nbasis_(nbasis) {
    if (nbasis < 4) throw std::invalid_argument("bspline basis needs at least 4 functions");
    if (!(hi > lo)) throw std::runtime_error("bspline basis: degenerate data range");
    knots_.resize(nbasis + 4);
    const int spans = nbasis - 3;
    for (int i = 0; i < 4; ++i) knots_[i] = lo;
    for (int i = 1; i < spans; ++i) knots_[3 + i] = lo + (hi - lo) * i / spans;
    for (int i = 0; i < 4; ++i) knots_[nbasis + i] = hi;
  }

  Eigen::MatrixXd evaluate(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.size(), nbasis_);
    double n[4], left[4], right[4];
    for (Eigen::Index r = 0; r < x.size(); ++r) {
      const double v = x[r];
      int span = find_span(v);
      n[0] = 1.0;
      for (int j = 1; j <= 3; ++j) {
        left[j] = v - knots_[span + 1 - j];
        right[j] = knots_[span + j] - v;
        double saved = 0.0;
        for (int k = 0; k < j; ++k) {
          const double temp = n[k] / (right[k + 1] + left[j - k]);
          n[k] = saved + right[k + 1] * temp;
          saved = left[j - k] * temp;
        }
        n[j] = saved;
      }
      for (int j = 0; j <= 3; ++j) out(r, span - 3 + j) = n[j];
    }
    return out;
  }

 private:
  int find_span(double v) const {
    if (v >= knots_[nbasis_]) return nbasis_ - 1;
    if (v <= knots_[3]) return 3;
    int lo = 3, hi = nbasis_;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      (v < knots_[mid] ? hi : lo) = mid;
    }
    return lo;
  }

  int nbasis_;
  std::vector<double> knots_;
};

Eigen::MatrixXd marginal_spline(const Eigen::VectorXd& z, int nbasis) {
  return BsplineBasis(z.minCoeff(), z.maxCoeff(), nbasis).evaluate(z);
}

struct DesignMatrix {
  Eigen::MatrixXd x;  // [unpenalized | smooth]
  int unpenalized = 0;
};

DesignMatrix build_design(const Eigen::MatrixXd& phi, const SmootherConfig& cfg) {
  const auto s = phi.rows();
  const int d = static_cast<int>(phi.cols());
  Eigen::MatrixXd z(s, d);
  for (int j = 0; j < d; ++j) {
    const double mean = phi.col(j).mean();
    const double sd = std::sqrt((phi.col(j).array() - mean).square().sum() / double(s - 1));
    if (!(sd > 0.0)) {
      throw std::runtime_error("rank-deficient basis: focal column " + std::to_string(j + 1) + " is constant");
    }
    z.col(j) = (phi.col(j).array() - mean) / sd;
  }

  const int m = cfg.basis_per_dim;
  std::vector<Eigen::MatrixXd> smooth;
  if (d <= 2) {
    if (d == 1) {
      smooth.push_back(marginal_spline(z.col(0), m));
    } else {
      const Eigen::MatrixXd b1 = marginal_spline(z.col(0), m);
      const Eigen::MatrixXd b2 = marginal_spline(z.col(1), m);
      Eigen::MatrixXd tensor(s, m * m);
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) tensor.col(a * m + b) = b1.col(a).cwiseProduct(b2.col(b));
      smooth.push_back(std::move(tensor));
    }
  } else {
    for (int j = 0; j < d; ++j) smooth.push_back(marginal_spline(z.col(j), m));
    Eigen::MatrixXd inter(s, d * (d - 1) / 2);
    int c = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) inter.col(c++) = z.col(i).cwiseProduct(z.col(j));
    smooth.push_back(std::move(inter));
  }

  int smooth_cols = 0;
  for (const auto& blk : smooth) smooth_cols += static_cast<int>(blk.cols());

  DesignMatrix dm;
  dm.unpenalized = 1 + d;
  dm.x.resize(s, dm.unpenalized + smooth_cols);
  dm.x.col(0).setOnes();
  dm.x.middleCols(1, d) = z;
  int at = dm.unpenalized;
  for (const auto& blk : smooth) {
    dm.x.middleCols(at, blk.cols()) = blk;
    at += static_cast<int>(blk.cols());
  }

  // Project the smooth block against the unpenalized block so the intercept
  // and linear terms are identifiable; the residual rank deficiency is
  // handled by the ridge floor in the GCV sweep.
  auto u = dm.x.leftCols(dm.unpenalized);
  Eigen::MatrixXd utu = u.transpose() * u;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(utu);
  if (es.eigenvalues().minCoeff() < 1e-12 * es.eigenvalues().maxCoeff()) {
    throw std::runtime_error("rank-deficient basis: linear block is singular");
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(utu);
  dm.x.rightCols(smooth_cols) -= u * ldlt.solve(u.transpose() * dm.x.rightCols(smooth_cols));
  return dm;
}

struct GcvFit {
  Eigen::VectorXd fitted;
  double lambda_rel = 0.0;
};

GcvFit gcv_fit(const DesignMatrix& dm, const Eigen::VectorXd& y, const SmootherConfig& cfg) {
  const auto s = dm.x.rows();
  const auto k = dm.x.cols();
  const int ks = static_cast<int>(k) - dm.unpenalized;

  const double ymean = y.mean();
  const double ysd = std::sqrt((y.array() - ymean).square().sum() / double(s - 1));
  GcvFit fit;
  if (!(ysd > 0.0)) {
    fit.fitted = Eigen::VectorXd::Constant(s, ymean);
    return fit;
  }
  const Eigen::VectorXd ystd = (y.array() - ymean) / ysd;

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(dm.x.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();
  const Eigen::VectorXd xty = dm.x.transpose() * ystd;
  const double yty = ystd.squaredNorm();

  const double pen_scale = gram.diagonal().tail(ks).mean();
  double best_gcv = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_beta;
  for (int g = 0; g < cfg.lambda_grid; ++g) {
    const double rel = cfg.lambda_grid == 1
                           ? cfg.lambda_min
                           : cfg.lambda_min * std::pow(cfg.lambda_max / cfg.lambda_min,
                                                       double(g) / double(cfg.lambda_grid - 1));
    Eigen::MatrixXd a = gram;
    a.diagonal().tail(ks).array() += rel * pen_scale;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) continue;
    const Eigen::VectorXd beta = ldlt.solve(xty);
    const double edf = ldlt.solve(gram).trace();
    if (!(edf < double(s) - 1.0)) continue;
    const double rss = std::max(0.0, yty - 2.0 * beta.dot(xty) + beta.dot(gram * beta));
    const double gcv = double(s) * rss / ((double(s) - edf) * (double(s) - edf));
    if (gcv < best_gcv) {
      best_gcv = gcv;
      best_beta = beta;
      fit.lambda_rel = rel;
    }
  }
  if (best_beta.size() == 0) throw std::runtime_error("smoother: GCV sweep found no usable penalty");
  fit.fitted = (ymean + (ysd * (dm.x * best_beta).array())).matrix();
  fit.fitted.array() += y.mean() - fit.fitted.mean();  // exact intercept absorption
  return fit;
}

}  // namespace

ConditionalInb fit_conditional_inb(const InbDraws& inb, const Eigen::MatrixXd& phi_draws,
                                   const SmootherConfig& config) {
  if (phi_draws.cols() < 1) throw std::invalid_argument("fit_conditional_inb: need focal dimension >= 1");
  if (inb.values.rows() != phi_draws.rows()) {
    throw std::invalid_argument("fit_conditional_inb: INB and focal draws disagree on row count");
  }
  if (inb.values.rows() < 2) throw std::invalid_argument("fit_conditional_inb: need at least 2 draws");

  Eigen::MatrixXd inb_rows = inb.values;
  Eigen::MatrixXd phi_rows = phi_draws;
  if (config.max_fit_draws > 0 && phi_draws.cols() >= 5 && inb_rows.rows() > config.max_fit_draws) {
    inb_rows = inb_rows.topRows(config.max_fit_draws).eval();
    phi_rows = phi_rows.topRows(config.max_fit_draws).eval();
  }

  const DesignMatrix dm = build_design(phi_rows, config);
  ConditionalInb cond;
  cond.config = config;
  cond.basis_columns = static_cast<int>(dm.x.cols());
  cond.fitted.resize(inb_rows.rows(), inb_rows.cols());
  for (Eigen::Index c = 0; c < inb_rows.cols(); ++c) {
    GcvFit fit = gcv_fit(dm, inb_rows.col(c), config);
    cond.fitted.col(c) = fit.fitted;
    cond.chosen_lambda.push_back(fit.lambda_rel);
  }
  cond.mean = cond.fitted.colwise().mean();
  cond.cov = sample_covariance(cond.fitted);
  return cond;
}

ConditionalInb conditional_inb_from_fitted(Eigen::MatrixXd fitted) {
  if (fitted.rows() < 2 || fitted.cols() < 1) {
    throw std::invalid_argument("conditional INB: need at least 2 rows and 1 column");
  }
  if (!fitted.allFinite()) throw std::invalid_argument("conditional INB: non-finite fitted values");
  ConditionalInb cond;
  cond.fitted = std::move(fitted);
  cond.mean = cond.fitted.colwise().mean();
  cond.cov = sample_covariance(cond.fitted);
  return cond;
}

ConditionalInb read_fitted_values(const std::string& path) {
  const Table t = read_table(path);
  if (t.rows.empty()) throw std::runtime_error("fitted-values file has no data rows: " + path);
  Eigen::MatrixXd fitted(t.rows.size(), t.header.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.header.size(); ++c) fitted(r, c) = parse_double(t.rows[r][c]);
  return conditional_inb_from_fitted(std::move(fitted));
}

double evppi(const ConditionalInb& cond) {
  if (cond.fitted.rows() == 0) throw std::invalid_argument("evppi: no fitted values");
  double acc = 0.0;
  for (Eigen::Index r = 0; r < cond.fitted.rows(); ++r) {
    acc += std::max(0.0, cond.fitted.row(r).maxCoeff());
  }
  const double value = acc / double(cond.fitted.rows()) - std::max(0.0, cond.mean.maxCoeff());
  return value;
}

}  // namespace voi
