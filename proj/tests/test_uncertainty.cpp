#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fcsd/uncertainty.hpp"
#include "oracles.hpp"

using namespace fcsd;
using namespace fcsd::uncertainty;

namespace {

// Phi^{-1}(0.05) to 16 digits.
constexpr double kZ05 = -1.6448536269514722;

Gmm two_farm_gmm() {
  Eigen::Vector2d m1(120.0, 80.0), m2(100.0, 95.0);
  Eigen::Matrix2d c1, c2;
  c1 << 100.0, 30.0, 30.0, 64.0;
  c2 << 225.0, -20.0, -20.0, 49.0;
  return Gmm({{0.6, m1, c1}, {0.4, m2, c2}});
}

UnivariateGmm random_mixture(rng::Stream& s) {
  std::vector<UnivariateComponent> c;
  const auto m = 1 + s.below(4);
  double tot = 0.0;
  for (std::uint64_t i = 0; i < m; ++i) {
    const double w = s.uniform(0.05, 1.0);
    tot += w;
    c.push_back({w, s.uniform(-50, 50), std::pow(s.uniform(0.1, 10.0), 2)});
  }
  for (auto& x : c) x.weight /= tot;
  return UnivariateGmm(c);
}

}  // namespace

TEST(Gmm, ValidatesInput) {
  Eigen::VectorXd m(1);
  m << 0.0;
  Eigen::MatrixXd neg(1, 1);
  neg << -1.0;
  EXPECT_THROW(Gmm({{1.0, m, neg}}), ValidationError);
  Eigen::MatrixXd ok(1, 1);
  ok << 1.0;
  EXPECT_THROW(Gmm({{0.5, m, ok}}), ValidationError);
  EXPECT_THROW(Gmm({{-1.0, m, ok}, {2.0, m, ok}}), ValidationError);
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(Gmm({{1.0, Eigen::VectorXd::Zero(2), asym}}), ValidationError);
}

TEST(Gmm, WeightsRenormalized) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(1, 1);
  const Gmm g({{0.3 + 1e-9, m, c}, {0.7, m, c}});
  EXPECT_NEAR(g[0].weight + g[1].weight, 1.0, 1e-12);
}

TEST(Projection, UnitVectorIsMarginal) {
  const auto g = two_farm_gmm();
  const auto u = affine_project(g, Eigen::Vector2d(0.0, 1.0), 0.0);
  ASSERT_EQ(u.size(), 2u);
  EXPECT_DOUBLE_EQ(u.components()[0].mean, 80.0);
  EXPECT_DOUBLE_EQ(u.components()[0].var, 64.0);
  EXPECT_DOUBLE_EQ(u.components()[1].mean, 95.0);
  EXPECT_DOUBLE_EQ(u.components()[1].var, 49.0);
}

TEST(Projection, ZeroVectorIsPointMass) {
  const auto u = affine_project(two_farm_gmm(), Eigen::Vector2d::Zero(), 5.0);
  EXPECT_TRUE(u.degenerate());
  for (double a : {0.01, 0.5, 0.99}) EXPECT_EQ(quantile(u, a), 5.0);
  EXPECT_EQ(cdf(u, 4.999), 0.0);
  EXPECT_EQ(cdf(u, 5.0), 1.0);
}

TEST(Projection, DimensionMismatch) {
  EXPECT_THROW(affine_project(two_farm_gmm(), Eigen::Vector3d::Ones(), 0.0), ValidationError);
}

TEST(Projection, MatchesMonteCarloCdf) {
  const auto g = two_farm_gmm();
  const Eigen::Vector2d a(0.7, -1.3);
  const auto u = affine_project(g, a, 10.0);
  auto xs = oracle::sample_projection(g, a, 10.0, 1000000, 42);
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < xs.size(); i += 97) {
    const double emp = static_cast<double>(i + 1) / static_cast<double>(xs.size());
    ks = std::max(ks, std::abs(emp - cdf(u, xs[i])));
  }
  EXPECT_LT(ks, 0.005);
}

TEST(Cdf, TailsAndSymmetry) {
  const UnivariateGmm sym({{0.5, -1.0, 0.25}, {0.5, 1.0, 0.25}});
  EXPECT_NEAR(cdf(sym, 0.0), 0.5, 1e-15);
  const double sd = std::sqrt(sym.variance());
  EXPECT_LT(cdf(sym, sym.mean() - 12 * sd), 1e-15);
  EXPECT_GT(cdf(sym, sym.mean() + 12 * sd), 1 - 1e-15);
}

TEST(Cdf, MonotoneOnGrid) {
  rng::Stream s(2, 0);
  for (int k = 0; k < 20; ++k) {
    const auto u = random_mixture(s);
    const double mu = u.mean(), sd = std::sqrt(u.variance());
    double prev = -1.0;
    for (int i = 0; i < 1000; ++i) {
      const double x = mu - 8 * sd + 16 * sd * i / 999.0;
      const double c = cdf(u, x);
      EXPECT_GE(c, prev);
      prev = c;
    }
  }
}

TEST(Cdf, DerivativeMatchesPdf) {
  rng::Stream s(6, 0);
  for (int k = 0; k < 10; ++k) {
    const auto u = random_mixture(s);
    const double mu = u.mean(), sd = std::sqrt(u.variance());
    double smin = sd;
    for (const auto& c : u.components()) smin = std::min(smin, std::sqrt(c.var));
    for (int i = 0; i < 200; ++i) {
      const double x = mu - 4 * sd + 8 * sd * i / 199.0;
      const double h = 1e-3 * smin;
      EXPECT_NEAR((cdf(u, x + h) - cdf(u, x - h)) / (2 * h), pdf(u, x), 1e-6);
    }
  }
}

TEST(Quantile, StandardNormal) {
  const UnivariateGmm n01({{1.0, 0.0, 1.0}});
  EXPECT_NEAR(quantile(n01, 0.05), kZ05, 1e-9);
  const UnivariateGmm shifted({{1.0, 3.0, 4.0}});
  EXPECT_NEAR(quantile(shifted, 0.05), 3.0 + 2.0 * kZ05, 1e-9);
}

TEST(Quantile, DomainErrors) {
  const UnivariateGmm n01({{1.0, 0.0, 1.0}});
  EXPECT_THROW(quantile(n01, 0.0), DomainError);
  EXPECT_THROW(quantile(n01, 1.0), DomainError);
  EXPECT_THROW(quantile(n01, NAN), DomainError);
}

TEST(Quantile, SymmetricCenter) {
  const UnivariateGmm sym({{0.5, 2.0, 1.0}, {0.5, 8.0, 1.0}});
  EXPECT_NEAR(quantile(sym, 0.5), 5.0, 1e-9);
}

TEST(Quantile, RoundTripOnRandomMixtures) {
  rng::Stream s(13, 0);
  for (int k = 0; k < 50; ++k) {
    const auto u = random_mixture(s);
    for (double a : {0.01, 0.05, 0.5, 0.95, 0.99}) EXPECT_LE(std::abs(cdf(u, quantile(u, a)) - a), 1e-10);
  }
}

TEST(Quantile, WellSeparatedComponents) {
  // Flat CDF plateau between the components forces the bisection safeguard.
  const UnivariateGmm u({{0.5, 0.0, 1e-4}, {0.5, 1000.0, 1e-4}});
  for (double a : {0.01, 0.3, 0.7, 0.99}) EXPECT_LE(std::abs(cdf(u, quantile(u, a)) - a), 1e-10);
}

TEST(Quantile, MixedDegenerateComponent) {
  const UnivariateGmm u({{0.4, 0.0, 0.0}, {0.6, 10.0, 1.0}});
  EXPECT_EQ(quantile(u, 0.2), 0.0);
  EXPECT_LE(std::abs(cdf(u, quantile(u, 0.7)) - 0.7), 1e-10);
}

TEST(Quantile, DiscreteLeftContinuousInverse) {
  const UnivariateGmm u({{0.25, 3.0, 0.0}, {0.75, 1.0, 0.0}});
  EXPECT_EQ(quantile(u, 0.5), 1.0);
  EXPECT_EQ(quantile(u, 0.75), 1.0);
  EXPECT_EQ(quantile(u, 0.76), 3.0);
}

TEST(Quantile, AffineInvariance) {
  const auto g = two_farm_gmm();
  const auto marg = affine_project(g, Eigen::Vector2d(1.0, 0.0), 0.0);
  const auto scaled = affine_project(g, Eigen::Vector2d(2.5, 0.0), -7.0);
  for (double a : {0.05, 0.5, 0.95}) EXPECT_NEAR(quantile(scaled, a), 2.5 * quantile(marg, a) - 7.0, 1e-9);
}

TEST(Quantile, PermutationInvariant) {
  const auto g = two_farm_gmm();
  const Gmm swapped({g[1], g[0]});
  const Eigen::Vector2d a(1.0, 1.0);
  EXPECT_NEAR(quantile(affine_project(g, a, 0), 0.05), quantile(affine_project(swapped, a, 0), 0.05), 1e-9);
}

TEST(Quantile, SumMatchesMonteCarlo) {
  const auto g = two_farm_gmm();
  const Eigen::Vector2d a(1.0, 1.0);
  const auto u = affine_project(g, a, 0.0);
  auto xs = oracle::sample_projection(g, a, 0.0, 1000000, 7);
  const auto k = static_cast<std::ptrdiff_t>(0.05 * static_cast<double>(xs.size()));
  std::nth_element(xs.begin(), xs.begin() + k, xs.end());
  EXPECT_LE(std::abs(quantile(u, 0.05) - xs[static_cast<std::size_t>(k)]), 0.005 * std::sqrt(u.variance()));
}

TEST(Sampling, MomentsMatch) {
  const auto g = two_farm_gmm();
  rng::Stream s(1, 0);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += g.sample(s);
  EXPECT_NEAR(sum[0] / n, g.mean()[0], 0.15);
  EXPECT_NEAR(sum[1] / n, g.mean()[1], 0.1);
}

TEST(Em, RecoversKnownMixture) {
  rng::Stream s(99, 0);
  const int n = 100000;
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = s.uniform() < 0.3 ? s.normal() : 10.0 + 2.0 * s.normal();
  EmOptions opt;
  opt.components = 2;
  opt.seed = 3;
  const auto r = fit_em(X, opt);
  std::vector<std::pair<double, double>> mw;
  for (const auto& c : r.model.components()) mw.emplace_back(c.mean[0], c.weight);
  std::sort(mw.begin(), mw.end());
  EXPECT_NEAR(mw[0].first, 0.0, 0.1);
  EXPECT_NEAR(mw[1].first, 10.0, 0.1);
  EXPECT_NEAR(mw[0].second, 0.3, 0.02);
  EXPECT_NEAR(mw[1].second, 0.7, 0.02);
  for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
    EXPECT_GE(r.log_likelihood[i], r.log_likelihood[i - 1] - 1e-12);
}

TEST(Em, SingleComponentIsSampleMoments) {
  rng::Stream s(5, 0);
  const int n = 500;
  Eigen::MatrixXd X(n, 2);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = s.normal();
    X(i, 1) = 0.5 * X(i, 0) + s.normal();
  }
  EmOptions opt;
  opt.components = 1;
  const auto r = fit_em(X, opt);
  const Eigen::VectorXd mu = X.colwise().mean().transpose();
  const Eigen::MatrixXd xc = X.rowwise() - mu.transpose();
  const Eigen::MatrixXd cov = xc.transpose() * xc / n;
  EXPECT_LT((r.model[0].mean - mu).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((r.model[0].cov - cov).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Em, TooFewSamples) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(10, 2);
  EmOptions opt;
  EXPECT_THROW(fit_em(X, opt), ValidationError);
}
