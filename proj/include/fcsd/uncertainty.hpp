#pragma once

// Gaussian mixtures for joint RES forecast errors: affine projection to one dimension,
// CDF/PDF, quantiles, and an EM fitter for synthetic data.

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "fcsd/error.hpp"
#include "fcsd/rng.hpp"

namespace fcsd::uncertainty {

struct GmmComponent {
  double weight = 1.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // full, row-major when serialized
};

class Gmm {
 public:
  Gmm() = default;
  explicit Gmm(std::vector<GmmComponent> comps) : comps_(std::move(comps)) { normalize_and_validate(); }

  std::size_t dim() const { return comps_.empty() ? 0 : static_cast<std::size_t>(comps_.front().mean.size()); }
  std::size_t size() const { return comps_.size(); }
  const std::vector<GmmComponent>& components() const { return comps_; }
  const GmmComponent& operator[](std::size_t m) const { return comps_[m]; }

  Eigen::VectorXd mean() const {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
    for (const auto& c : comps_) mu += c.weight * c.mean;
    return mu;
  }

  // Total covariance of the mixture.
  Eigen::MatrixXd covariance() const {
    const Eigen::VectorXd mu = mean();
    const auto n = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    for (const auto& c : comps_) {
      const Eigen::VectorXd dm = c.mean - mu;
      s += c.weight * (c.cov + dm * dm.transpose());
    }
    return s;
  }

  double log_pdf(const Eigen::VectorXd& x) const;

  // Draws one sample using the given stream.
  Eigen::VectorXd sample(rng::Stream& s) const {
    double u = s.uniform();
    std::size_t m = 0;
    for (; m + 1 < comps_.size(); ++m) {
      if (u < comps_[m].weight) break;
      u -= comps_[m].weight;
    }
    const auto& c = comps_[m];
    const auto n = c.mean.size();
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = s.normal();
    // LDLT tolerates singular PSD covariances.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(c.cov);
    Eigen::VectorXd dsqrt = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    Eigen::VectorXd y = ldlt.matrixL() * Eigen::VectorXd(dsqrt.cwiseProduct(z));
    return c.mean + ldlt.transpositionsP().transpose() * y;
  }

 private:
  void normalize_and_validate() {
    if (comps_.empty()) throw ValidationError("GMM needs at least one component");
    const auto n = comps_.front().mean.size();
    if (n == 0) throw ValidationError("GMM dimension must be positive");
    double total = 0.0;
    for (std::size_t m = 0; m < comps_.size(); ++m) {
      auto& c = comps_[m];
      const std::string tag = "GMM component " + std::to_string(m);
      if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw ValidationError(tag + ": weight must be positive");
      if (c.mean.size() != n) throw ValidationError(tag + ": mean dimension mismatch");
      if (c.cov.rows() != n || c.cov.cols() != n) throw ValidationError(tag + ": covariance dimension mismatch");
      if (!c.mean.allFinite() || !c.cov.allFinite()) throw ValidationError(tag + ": non-finite entries");
      const double scale = std::max(1.0, c.cov.cwiseAbs().maxCoeff());
      if ((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw ValidationError(tag + ": covariance is not symmetric");
      c.cov = 0.5 * (c.cov + c.cov.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.cov, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-9 * scale)
        throw ValidationError(tag + ": covariance is not positive semidefinite");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-6)
      throw ValidationError("GMM weights sum to " + std::to_string(total) + ", expected 1");
    for (auto& c : comps_) c.weight /= total;
  }

  std::vector<GmmComponent> comps_;
};

struct UnivariateComponent {
  double weight = 1.0;
  double mean = 0.0;
  double var = 0.0;
};

class UnivariateGmm {
 public:
  UnivariateGmm() = default;
  explicit UnivariateGmm(std::vector<UnivariateComponent> comps) : comps_(std::move(comps)) {
    if (comps_.empty()) throw ValidationError("univariate GMM needs at least one component");
    double total = 0.0;
    for (const auto& c : comps_) {
      if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw ValidationError("GMM weight must be positive");
      if (!std::isfinite(c.mean) || !std::isfinite(c.var) || c.var < 0.0)
        throw ValidationError("GMM component needs a finite mean and non-negative variance");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-6)
      throw ValidationError("GMM weights sum to " + std::to_string(total) + ", expected 1");
    for (auto& c : comps_) c.weight /= total;
  }

  const std::vector<UnivariateComponent>& components() const { return comps_; }
  std::size_t size() const { return comps_.size(); }

  double mean() const {
    double m = 0.0;
    for (const auto& c : comps_) m += c.weight * c.mean;
    return m;
  }
  double variance() const {
    const double mu = mean();
    double v = 0.0;
    for (const auto& c : comps_) v += c.weight * (c.var + (c.mean - mu) * (c.mean - mu));
    return v;
  }
  bool degenerate() const {
    return std::all_of(comps_.begin(), comps_.end(), [](const auto& c) { return c.var == 0.0; });
  }

 private:
  std::vector<UnivariateComponent> comps_;
};

namespace detail {

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

inline double norm_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

}  // namespace detail

// Projection of a W~ ~ g onto a.W~ + b.
inline UnivariateGmm affine_project(const Gmm& g, const Eigen::VectorXd& a, double b) {
  if (static_cast<std::size_t>(a.size()) != g.dim())
    throw ValidationError("projection vector has dimension " + std::to_string(a.size()) + ", GMM has " +
                          std::to_string(g.dim()));
  std::vector<UnivariateComponent> out;
  out.reserve(g.size());
  for (const auto& c : g.components()) {
    double v = a.dot(c.cov * a);
    if (v < 0.0) {
      const double scale = std::max(1.0, a.squaredNorm() * c.cov.cwiseAbs().maxCoeff());
      if (v < -1e-12 * scale) throw ValidationError("projected variance is negative; covariance not PSD");
      v = 0.0;
    }
    out.push_back({c.weight, a.dot(c.mean) + b, v});
  }
  return UnivariateGmm(std::move(out));
}

inline double cdf(const UnivariateGmm& u, double x) {
  double p = 0.0;
  for (const auto& c : u.components()) {
    if (c.var == 0.0)
      p += x >= c.mean ? c.weight : 0.0;
    else
      p += c.weight * detail::norm_cdf((x - c.mean) / std::sqrt(c.var));
  }
  return std::clamp(p, 0.0, 1.0);
}

// Degenerate components contribute no density.
inline double pdf(const UnivariateGmm& u, double x) {
  double d = 0.0;
  for (const auto& c : u.components()) {
    if (c.var == 0.0) continue;
    const double s = std::sqrt(c.var);
    d += c.weight * detail::norm_pdf((x - c.mean) / s) / s;
  }
  return d;
}

// Smallest x with cdf(x) >= alpha. Newton on cdf - alpha, kept inside a shrinking bracket.
inline double quantile(const UnivariateGmm& u, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("quantile level must lie in (0, 1), got " + std::to_string(alpha));
  const auto& comps = u.components();

  if (u.degenerate()) {
    std::vector<UnivariateComponent> sorted(comps.begin(), comps.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& l, const auto& r) { return l.mean < r.mean; });
    double cum = 0.0;
    for (const auto& c : sorted) {
      cum += c.weight;
      if (cum >= alpha) return c.mean;
    }
    return sorted.back().mean;
  }

  // A point mass whose jump straddles alpha is the answer exactly.
  for (const auto& c : comps) {
    if (c.var != 0.0) continue;
    const double right = cdf(u, c.mean);
    double left = right;
    for (const auto& d : comps)
      if (d.var == 0.0 && d.mean == c.mean) left -= d.weight;
    if (left < alpha && right >= alpha) return c.mean;
  }

  double mu_lo = std::numeric_limits<double>::infinity(), mu_hi = -mu_lo, sig_max = 0.0;
  for (const auto& c : comps) {
    mu_lo = std::min(mu_lo, c.mean);
    mu_hi = std::max(mu_hi, c.mean);
    sig_max = std::max(sig_max, std::sqrt(c.var));
  }
  double lo = mu_lo - 12.0 * sig_max;
  double hi = mu_hi + 12.0 * sig_max;
  double x = std::clamp(u.mean() + std::sqrt(u.variance()) * detail::norm_quantile(alpha), lo, hi);

  constexpr double tol = 1e-13;
  for (int it = 0; it < 300; ++it) {
    const double f = cdf(u, x) - alpha;
    if (std::abs(f) <= tol) return x;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max({1.0, std::abs(lo), std::abs(hi)})) break;
    const double d = pdf(u, x);
    double next = d > 1e-300 ? x - f / d : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  // Bracket collapsed onto a jump of the CDF (or rounding floor); hi is the left-continuous inverse.
  return cdf(u, x) >= alpha ? x : hi;
}

inline double Gmm::log_pdf(const Eigen::VectorXd& x) const {
  std::vector<double> terms;
  terms.reserve(comps_.size());
  for (const auto& c : comps_) {
    Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
    if (llt.info() != Eigen::Success) throw NumericError("log_pdf needs positive definite covariances");
    const Eigen::VectorXd z = llt.matrixL().solve(x - c.mean);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    terms.push_back(std::log(c.weight) - 0.5 * (z.squaredNorm() + logdet + x.size() * std::log(2.0 * std::numbers::pi)));
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

struct EmOptions {
  std::size_t components = 2;
  int max_iters = 500;
  double tol = 1e-8;  // relative log-likelihood change
  std::uint64_t seed = 1;
};

struct EmResult {
  Gmm model;
  std::vector<double> log_likelihood;  // per iteration, mean over samples
  int iterations = 0;
  bool converged = false;
};

// Standard EM. Samples are the rows of X. Initialization: k-means++ seeding plus a few
// Lloyd sweeps.
inline EmResult fit_em(const Eigen::MatrixXd& X, const EmOptions& opt) {
  const auto n = X.rows();
  const auto dim = X.cols();
  const auto M = static_cast<Eigen::Index>(opt.components);
  if (M < 1) throw ValidationError("EM needs at least one component");
  if (dim < 1 || n < 10 * M * dim)
    throw ValidationError("EM needs at least 10 * components * dim samples, got " + std::to_string(n));
  if (!X.allFinite()) throw ValidationError("EM samples must be finite");

  const Eigen::RowVectorXd gmean = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - gmean;
  const Eigen::MatrixXd gcov = centered.transpose() * centered / static_cast<double>(n);
  const Eigen::VectorXd floor = (1e-6 * gcov.diagonal()).cwiseMax(1e-300);
  rng::Stream stream(opt.seed, 0);

  Eigen::MatrixXd centers(M, dim);
  {
    centers.row(0) = X.row(static_cast<Eigen::Index>(stream.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd d2 = (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (Eigen::Index k = 1; k < M; ++k) {
      const double total = d2.sum();
      Eigen::Index pick = 0;
      if (total > 0.0) {
        double r = stream.uniform() * total;
        for (; pick + 1 < n; ++pick) {
          r -= d2[pick];
          if (r < 0.0) break;
        }
      } else {
        pick = static_cast<Eigen::Index>(stream.below(static_cast<std::uint64_t>(n)));
      }
      centers.row(k) = X.row(pick);
      d2 = d2.cwiseMin((X.rowwise() - centers.row(k)).rowwise().squaredNorm());
    }
  }
  std::vector<Eigen::Index> label(static_cast<std::size_t>(n), 0);
  for (int sweep = 0; sweep < 10; ++sweep) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
      label[static_cast<std::size_t>(i)] = best;
    }
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(M, dim);
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(M);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(label[static_cast<std::size_t>(i)]) += X.row(i);
      cnt[label[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Eigen::Index k = 0; k < M; ++k)
      centers.row(k) = cnt[k] > 0 ? Eigen::RowVectorXd(sum.row(k) / cnt[k])
                                  : Eigen::RowVectorXd(X.row(static_cast<Eigen::Index>(stream.below(static_cast<std::uint64_t>(n)))));
  }

  // Responsibilities start as hard k-means labels.
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, M);
  for (Eigen::Index i = 0; i < n; ++i) resp(i, label[static_cast<std::size_t>(i)]) = 1.0;

  std::vector<double> w(static_cast<std::size_t>(M));
  std::vector<Eigen::VectorXd> mu(static_cast<std::size_t>(M));
  std::vector<Eigen::MatrixXd> cov(static_cast<std::size_t>(M));

  auto m_step = [&] {
    for (Eigen::Index k = 0; k < M; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      double nk = resp.col(k).sum();
      if (nk < 1e-8 * static_cast<double>(n)) {
        // Empty cluster: restart it on a random sample with the global covariance.
        const auto pick = static_cast<Eigen::Index>(stream.below(static_cast<std::uint64_t>(n)));
        resp.col(k).setZero();
        resp(pick, k) = 1.0;
        nk = 1.0;
        mu[ks] = X.row(pick).transpose();
        cov[ks] = gcov;
        w[ks] = 1.0 / static_cast<double>(n);
        continue;
      }
      w[ks] = nk / static_cast<double>(n);
      mu[ks] = (resp.col(k).transpose() * X).transpose() / nk;
      const Eigen::MatrixXd xc = X.rowwise() - mu[ks].transpose();
      cov[ks] = xc.transpose() * resp.col(k).asDiagonal() * xc / nk;
      cov[ks] = 0.5 * (cov[ks] + cov[ks].transpose());
      for (Eigen::Index j = 0; j < dim; ++j) cov[ks](j, j) = std::max(cov[ks](j, j), floor[j]);
    }
    const double ws = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= ws;
  };

  // E step; returns the mean log-likelihood of the current parameters.
  auto e_step = [&] {
    Eigen::MatrixXd logp(n, M);
    for (Eigen::Index k = 0; k < M; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      Eigen::LLT<Eigen::MatrixXd> llt(cov[ks]);
      if (llt.info() != Eigen::Success) throw NumericError("EM covariance lost positive definiteness");
      const Eigen::MatrixXd L = llt.matrixL();
      const double logdet = 2.0 * L.diagonal().array().log().sum();
      const Eigen::MatrixXd xc = (X.rowwise() - mu[ks].transpose()).transpose();
      const Eigen::MatrixXd z = L.triangularView<Eigen::Lower>().solve(xc);
      logp.col(k) = (std::log(w[ks]) - 0.5 * (logdet + static_cast<double>(dim) * std::log(2.0 * std::numbers::pi))) -
                    0.5 * z.colwise().squaredNorm().transpose().array();
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = logp.row(i).maxCoeff();
      const Eigen::RowVectorXd e = (logp.row(i).array() - mx).exp().matrix();
      const double s = e.sum();
      resp.row(i) = e / s;
      ll += mx + std::log(s);
    }
    return ll / static_cast<double>(n);
  };

  EmResult r;
  m_step();
  for (int it = 0; it < opt.max_iters; ++it) {
    const double ll = e_step();
    r.log_likelihood.push_back(ll);
    r.iterations = it + 1;
    const auto sz = r.log_likelihood.size();
    if (sz >= 2 && std::abs(ll - r.log_likelihood[sz - 2]) <= opt.tol * std::max(1.0, std::abs(ll))) {
      r.converged = true;
      break;
    }
    m_step();
  }
  std::vector<GmmComponent> comps;
  for (Eigen::Index k = 0; k < M; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    comps.push_back({w[ks], mu[ks], cov[ks]});
  }
  r.model = Gmm(std::move(comps));
  return r;
}

}  // namespace fcsd::uncertainty
