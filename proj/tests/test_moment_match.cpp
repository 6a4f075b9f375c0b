#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "voi/common.hpp"
#include "voi/moment_match.hpp"

using namespace voi;

namespace {
constexpr std::uint64_t kSeed = 0xfeedULL;

ConditionalInb fitted_from(std::initializer_list<double> xs) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return conditional_inb_from_fitted(std::move(m));
}

double corr_with_n(const QuantileDesign& d, int col) {
  Eigen::ArrayXd n(d.q()), p(d.q());
  for (int i = 0; i < d.q(); ++i) {
    n[i] = double(d.n_values[i]);
    p[i] = d.phi_rows(i, col);
  }
  n -= n.mean();
  p -= p.mean();
  return (n * p).sum() / std::sqrt(n.square().sum() * p.square().sum());
}

}  // namespace

TEST_CASE("quantile design: endpoints, spacing, probabilities, decorrelation") {
  Rng rng(kSeed);
  Eigen::MatrixXd phi(20000, 2);
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    phi(i, 0) = rng.normal();
    phi(i, 1) = 3.0 * rng.normal() + 1.0;
  }
  const int q = 50;
  const QuantileDesign d = build_quantile_design(phi, q, 10, 200, kSeed);
  REQUIRE(d.q() == q);
  CHECK(d.n_values.front() == 10);
  CHECK(d.n_values.back() == 200);
  CHECK(std::is_sorted(d.n_values.begin(), d.n_values.end()));

  // sqrt spacing concentrates the design at small sample sizes
  int below_mid = 0;
  for (long long n : d.n_values) below_mid += n <= 105;
  CHECK(below_mid >= q * 6 / 10);

  // each column is a permutation of the (1:Q)/(Q+1) sample quantiles
  for (int col = 0; col < 2; ++col) {
    std::vector<double> sorted_phi(phi.col(col).data(), phi.col(col).data() + phi.rows());
    std::sort(sorted_phi.begin(), sorted_phi.end());
    std::vector<double> column(d.q());
    for (int i = 0; i < d.q(); ++i) column[i] = d.phi_rows(i, col);
    std::sort(column.begin(), column.end());
    for (int i = 0; i < q; ++i) {
      CHECK(column[i] == doctest::Approx(quantile_sorted(sorted_phi, double(i + 1) / double(q + 1)))
                             .epsilon(1e-12));
    }
    CHECK(std::abs(corr_with_n(d, col)) < 0.001);
    CHECK(d.decorrelation[col] < 0.001);
  }

  // deterministic given the seed
  const QuantileDesign d2 = build_quantile_design(phi, q, 10, 200, kSeed);
  CHECK(d.phi_rows == d2.phi_rows);
  CHECK(d.n_values == d2.n_values);
}

TEST_CASE("quantile design reports undecorrelatable columns") {
  // Q = 3 has only six permutations; none of them is uncorrelated with N.
  Rng rng(kSeed + 21);
  Eigen::MatrixXd phi(1000, 1);
  for (Eigen::Index i = 0; i < phi.rows(); ++i) phi(i, 0) = rng.normal();
  CHECK_THROWS_WITH_AS(build_quantile_design(phi, 3, 10, 200, kSeed),
                       doctest::Contains("column 1"), std::runtime_error);

  // a constant focal column can never be decorrelated
  Eigen::MatrixXd flat = Eigen::MatrixXd::Ones(1000, 1);
  CHECK_THROWS_WITH_AS(build_quantile_design(flat, 50, 10, 200, kSeed),
                       doctest::Contains("zero variance"), std::runtime_error);
}

TEST_CASE("posterior variance errors carry the design row") {
  const Model toy = make_toy_model();
  const StudyDesign study = make_study(toy, 1, 0);
  QuantileDesign design;
  design.n_values = {4, -5};
  design.phi_rows = Eigen::MatrixXd::Zero(2, 1);
  design.decorrelation = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_WITH_AS(estimate_posterior_variances(design, toy, study, 100, kSeed, nullptr),
                       doctest::Contains("q=2"), std::runtime_error);
}

TEST_CASE("quantile design rejects degenerate sizes") {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Random(100, 1);
  CHECK_THROWS_AS(build_quantile_design(phi, 1, 10, 200, kSeed), std::invalid_argument);
  CHECK_THROWS_AS(build_quantile_design(phi, 2, 10, 200, kSeed), std::invalid_argument);
  CHECK_THROWS_AS(build_quantile_design(phi, 10, 10, 10, kSeed), std::invalid_argument);

  // d = 0: no decorrelation needed, endpoints only
  const QuantileDesign d = build_quantile_design(Eigen::MatrixXd(0, 0), 2, 7, 31, kSeed);
  CHECK(d.n_values == std::vector<long long>{7, 31});
}

TEST_CASE("posterior variances on the toy model are data independent") {
  const Model toy = make_toy_model();  // sigma0 = sigma_d = 1, so sigma2_q = 1/(1+N)
  const StudyDesign study = make_study(toy, 1, 0);

  QuantileDesign design;
  design.n_values = {4};
  design.phi_rows = Eigen::MatrixXd::Constant(1, 1, 0.3);
  design.decorrelation = Eigen::VectorXd::Zero(1);

  const long long m = 1000000;
  SimulationBudget budget;
  const auto points = estimate_posterior_variances(design, toy, study, m, kSeed, &budget);
  REQUIRE(points.size() == 1);
  const double se = 0.2 * std::sqrt(2.0 / double(m - 1));
  CHECK(std::abs(points[0].sigma(0, 0) - 0.2) < 4.0 * se);
  CHECK(points[0].n == 4);
  CHECK(budget.posterior_updates == 1);
  CHECK(budget.posterior_draws == m);
  CHECK(budget.model_evaluations == m);
}

TEST_CASE("zero-sample-size design rows return the prior variance") {
  const Model toy = make_toy_model();
  const StudyDesign study = make_study(toy, 1, 0);
  QuantileDesign design;
  design.n_values = {0};
  design.phi_rows = Eigen::MatrixXd::Constant(1, 1, 0.0);
  design.decorrelation = Eigen::VectorXd::Zero(1);
  const auto points = estimate_posterior_variances(design, toy, study, 200000, kSeed, nullptr);
  CHECK(std::abs(points[0].sigma(0, 0) - 1.0) < 4.0 * std::sqrt(2.0 / 199999.0));
}

TEST_CASE("estimate_posterior_variances is deterministic") {
  const Model toy = make_toy_model();
  const StudyDesign study = make_study(toy, 1, 0);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Random(5000, 1);
  const QuantileDesign design = build_quantile_design(phi, 10, 2, 50, kSeed);
  const auto a = estimate_posterior_variances(design, toy, study, 1000, kSeed, nullptr);
  const auto b = estimate_posterior_variances(design, toy, study, 1000, kSeed, nullptr);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].sigma == b[i].sigma);
}

TEST_CASE("pooled variance arithmetic and flooring") {
  InbMoments moments;
  moments.mean = Eigen::VectorXd::Zero(1);
  moments.cov = Eigen::MatrixXd::Constant(1, 1, 10.0);
  auto with_sigma = [](double v) {
    PosteriorVariancePoint p;
    p.sigma = Eigen::MatrixXd::Constant(1, 1, v);
    return p;
  };
  CHECK(pooled_sigma_x(moments, {with_sigma(4.0)}) == 6.0);
  CHECK(pooled_sigma_x(moments, {with_sigma(10.0), with_sigma(10.0)}) == 0.0);
  CHECK(pooled_sigma_x(moments, {with_sigma(11.0)}) == 0.0);  // floored at zero
  CHECK_THROWS_AS(pooled_sigma_x(moments, {}), std::invalid_argument);
}

TEST_CASE("pooled variance matches the conjugate preposterior identity") {
  const Model toy = make_toy_model();
  const StudyDesign study = make_study(toy, 1, 0);
  const long long s = 200000, m = 200000;
  const ParameterDraws draws = sample_prior(toy, s, kSeed + 1);
  const Eigen::MatrixXd nb = net_benefit(draws, toy);
  const InbMoments moments = inb_moments(compute_inb(nb, 2).values);

  for (long long n : {5LL, 25LL, 100LL}) {
    QuantileDesign design;
    const int q = 10;
    design.n_values.assign(q, n);
    design.phi_rows = Eigen::VectorXd::LinSpaced(q, -1.0, 1.0);
    design.decorrelation = Eigen::VectorXd::Zero(1);
    const auto points = estimate_posterior_variances(design, toy, study, m, kSeed + n, nullptr);
    const double pooled = pooled_sigma_x(moments, points);
    const double truth = double(n) / double(n + 1);  // sigma0^2 N / (N + h*), h* = 1
    const double se = std::sqrt(2.0 / double(s - 1) + 2.0 / (double(m - 1) * q) / ((n + 1.0) * (n + 1.0)));
    INFO("n = ", n, " pooled = ", pooled, " truth = ", truth);
    CHECK(std::abs(pooled - truth) < 3.0 * se);
  }
}

TEST_CASE("rescale_dual formula and edge cases") {
  const ConditionalInb cond = fitted_from({-1.0, 0.0, 1.0});
  const RescaledDraws quarter = rescale_dual(cond, 0.0, 1.0, 0.25);
  CHECK(quarter.eta(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(quarter.eta(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(quarter.eta(2, 0) == doctest::Approx(0.5).epsilon(1e-12));

  const RescaledDraws identity = rescale_dual(cond, 0.0, 1.0, 1.0);
  CHECK((identity.eta - cond.fitted).cwiseAbs().maxCoeff() < 1e-12);

  const RescaledDraws collapsed = rescale_dual(cond, 0.25, 1.0, 0.0);
  CHECK((collapsed.eta.array() == 0.25).all());

  CHECK_THROWS_AS(rescale_dual(cond, 0.0, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(rescale_dual(cond, 0.0, 1.0, -0.5), std::invalid_argument);
}

TEST_CASE("rescale preserves the mean") {
  Rng rng(kSeed + 2);
  Eigen::MatrixXd f(20000, 1);
  for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, 0) = 4378.0 + 12000.0 * rng.normal();
  const ConditionalInb cond = conditional_inb_from_fitted(f);
  const double mu = cond.mean(0);
  const RescaledDraws draws = rescale_dual(cond, mu, cond.cov(0, 0), 0.37 * cond.cov(0, 0));
  CHECK(std::abs(draws.eta.col(0).mean() - mu) < 1e-8);
}

TEST_CASE("evsi_dual on fixed draws") {
  auto evsi_of = [](std::initializer_list<double> xs, double mu) {
    RescaledDraws d;
    d.eta.resize(static_cast<Eigen::Index>(xs.size()), 1);
    Eigen::Index i = 0;
    for (double x : xs) d.eta(i++, 0) = x;
    d.mu = Eigen::VectorXd::Constant(1, mu);
    return evsi_dual(d);
  };
  CHECK(evsi_of({-0.5, 0.0, 0.5}, 0.0) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(evsi_of({-2.0, -1.0}, -1.5) == 0.0);
  CHECK(evsi_of({2.0, 4.0}, 3.0) == 0.0);
}

TEST_CASE("evsi at sigma_x = sigma_phi equals the EVPPI exactly") {
  Rng rng(kSeed + 3);
  Eigen::MatrixXd f(5000, 1);
  for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, 0) = rng.normal() + 0.3;
  const ConditionalInb cond = conditional_inb_from_fitted(f);
  const RescaledDraws draws = rescale_dual(cond, cond.mean(0), cond.cov(0, 0), cond.cov(0, 0));
  CHECK(evsi_dual(draws) == doctest::Approx(evppi(cond)).epsilon(1e-12));
}

TEST_CASE("evsi is nondecreasing in sigma_x") {
  Rng rng(kSeed + 4);
  Eigen::MatrixXd f(8000, 1);
  for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, 0) = 2.0 * rng.normal() - 0.4;
  const ConditionalInb cond = conditional_inb_from_fitted(f);
  const double mu = cond.mean(0);
  const double s2phi = cond.cov(0, 0);
  double last = -1.0;
  for (double frac : {0.0, 0.05, 0.2, 0.5, 0.8, 1.0}) {
    const double value = evsi_dual(rescale_dual(cond, mu, s2phi, frac * s2phi));
    CHECK(value >= last - 1e-12);
    CHECK(value >= -1e-12);
    last = value;
  }
}

TEST_CASE("matrix square root") {
  CHECK((matrix_sqrt_spd(Eigen::MatrixXd::Identity(3, 3)) - Eigen::MatrixXd::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  Eigen::MatrixXd diag = Eigen::Vector2d(4.0, 9.0).asDiagonal();
  Eigen::MatrixXd root = matrix_sqrt_spd(diag);
  CHECK(root(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(root(1, 1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(std::abs(root(0, 1)) < 1e-12);

  Rng rng(kSeed + 5);
  Eigen::MatrixXd a(3, 5);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
  const Eigen::MatrixXd spd = a * a.transpose();
  const Eigen::MatrixXd b = matrix_sqrt_spd(spd);
  CHECK((b * b - spd).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((b - b.transpose()).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::MatrixXd skew(2, 2);
  skew << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(matrix_sqrt_spd(skew), std::invalid_argument);
  Eigen::MatrixXd negdef = -Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(matrix_sqrt_spd(negdef), std::invalid_argument);
}

TEST_CASE("rescale_multi: identity, scalar reduction, covariance transform") {
  Rng rng(kSeed + 6);
  Eigen::MatrixXd f(4000, 2);
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    f(i, 0) = rng.normal();
    f(i, 1) = 0.7 * f(i, 0) + rng.normal() + 0.5;
  }
  const ConditionalInb cond = conditional_inb_from_fitted(f);

  const RescaledDraws same = rescale_multi(cond, cond.mean, cond.cov, cond.cov);
  CHECK((same.eta - cond.fitted).cwiseAbs().maxCoeff() < 1e-8);

  // 1x1 matrices reduce to the dual rescaling
  const ConditionalInb scalar = conditional_inb_from_fitted(f.col(0).eval());
  const RescaledDraws multi1 = rescale_multi(scalar, scalar.mean, scalar.cov,
                                             Eigen::MatrixXd::Constant(1, 1, 0.4 * scalar.cov(0, 0)));
  const RescaledDraws dual1 = rescale_dual(scalar, scalar.mean(0), scalar.cov(0, 0), 0.4 * scalar.cov(0, 0));
  CHECK((multi1.eta - dual1.eta).cwiseAbs().maxCoeff() < 1e-12);

  // output covariance equals sigma_x when the input covariance is sigma_phi
  Eigen::MatrixXd target(2, 2);
  target << 0.5, 0.1, 0.1, 0.3;
  const RescaledDraws moved = rescale_multi(cond, cond.mean, cond.cov, target);
  CHECK((sample_covariance(moved.eta) - target).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((moved.eta.colwise().mean().transpose() - cond.mean).cwiseAbs().maxCoeff() < 1e-8);

  CHECK_THROWS_AS(rescale_multi(cond, cond.mean, Eigen::MatrixXd::Zero(2, 2), target),
                  std::invalid_argument);
}

TEST_CASE("evsi_multi: reduction, dominance, duplicated arm") {
  RescaledDraws d;
  d.eta.resize(3, 1);
  d.eta << -0.5, 0.0, 0.5;
  d.mu = Eigen::VectorXd::Zero(1);
  CHECK(evsi_multi(d) == doctest::Approx(evsi_dual(d)).epsilon(1e-15));

  RescaledDraws neg;
  neg.eta = -Eigen::MatrixXd::Ones(4, 3);
  neg.mu = Eigen::VectorXd::Constant(3, -1.0);
  CHECK(evsi_multi(neg) == 0.0);

  Rng rng(kSeed + 7);
  RescaledDraws two, three;
  two.eta.resize(2000, 2);
  for (Eigen::Index i = 0; i < two.eta.rows(); ++i) {
    two.eta(i, 0) = rng.normal();
    two.eta(i, 1) = rng.normal() + 0.2;
  }
  two.mu = two.eta.colwise().mean();
  three.eta.resize(2000, 3);
  three.eta << two.eta, two.eta.col(1);
  three.mu = three.eta.colwise().mean();
  CHECK(evsi_multi(three) == doctest::Approx(evsi_multi(two)).epsilon(1e-10));
}

TEST_CASE("variance points export/import round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "voi_points_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "points.csv").string();

  std::vector<PosteriorVariancePoint> points(3);
  Rng rng(kSeed + 8);
  for (int i = 0; i < 3; ++i) {
    points[i].q = i + 1;
    points[i].n = 10 * (i + 1);
    Eigen::MatrixXd a(2, 2);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) a(r, c) = rng.normal();
    points[i].sigma = a * a.transpose();
  }
  write_variance_points(path, points);
  const auto loaded = read_variance_points(path);
  REQUIRE(loaded.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(loaded[i].q == points[i].q);
    CHECK(loaded[i].n == points[i].n);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        CHECK(loaded[i].sigma(r, c) ==
              doctest::Approx(points[i].sigma(r, c)).epsilon(1e-11));
      }
  }
}
