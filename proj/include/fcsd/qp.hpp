#pragma once

// Convex QP:  minimize 1/2 x'Qx + c'x + c0
//             s.t.     A_eq x = b_eq,  A_in x <= b_in,  lower <= x <= upper.
//
// Solver: Mehrotra predictor-corrector primal-dual interior point on the Ruiz-equilibrated
// problem. Newton steps use the quasi-definite reduced KKT matrix
//   [ Q + G'WG + rho I   A'      ]
//   [ A                  -delta I]
// (G stacks A_in and the finite bound rows) factored by sparse LDL', with iterative
// refinement against the unregularized system.
//
// Dual sign convention: Q x + c + A_eq' y + A_in' z - nu = 0 with z >= 0 and nu the bound
// multipliers (nu_i > 0 at an active lower bound, < 0 at an active upper bound).

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fcsd/error.hpp"

namespace fcsd::qp {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

inline constexpr double inf = std::numeric_limits<double>::infinity();

struct QpProblem {
  SpMat Q;  // n x n, symmetric
  Vec c;
  double c0 = 0.0;
  SpMat A_eq;
  Vec b_eq;
  SpMat A_in;
  Vec b_in;
  Vec lower;
  Vec upper;
  std::vector<std::string> var_names;
  std::vector<std::string> eq_names;
  std::vector<std::string> in_names;

  Eigen::Index n() const { return c.size(); }

  double objective(const Vec& x) const { return 0.5 * x.dot(Q * x) + c.dot(x) + c0; }

  // Dimension, symmetry, finiteness and PSD checks. Throws ValidationError.
  void validate() const {
    const auto nv = n();
    auto fail = [](const std::string& m) { throw ValidationError("QP: " + m); };
    if (Q.rows() != nv || Q.cols() != nv) fail("Q must be n x n");
    if (A_eq.cols() != nv || A_eq.rows() != b_eq.size()) fail("A_eq/b_eq dimensions inconsistent");
    if (A_in.cols() != nv || A_in.rows() != b_in.size()) fail("A_in/b_in dimensions inconsistent");
    if (lower.size() != nv || upper.size() != nv) fail("bound vectors must have length n");
    if (!var_names.empty() && static_cast<Eigen::Index>(var_names.size()) != nv) fail("variable name table length");
    if (!eq_names.empty() && static_cast<Eigen::Index>(eq_names.size()) != b_eq.size()) fail("equality name table length");
    if (!in_names.empty() && static_cast<Eigen::Index>(in_names.size()) != b_in.size()) fail("inequality name table length");
    if (!c.allFinite() || !std::isfinite(c0) || !b_eq.allFinite()) fail("objective and equality data must be finite");
    for (Eigen::Index i = 0; i < b_in.size(); ++i)
      if (std::isnan(b_in[i]) || b_in[i] == -inf) fail("inequality right-hand side must not be NaN or -inf");
    for (Eigen::Index i = 0; i < nv; ++i) {
      if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] == inf || upper[i] == -inf)
        fail("bad bound on variable " + var_name(i));
      if (lower[i] > upper[i]) fail("lower bound above upper bound on variable " + var_name(i));
    }
    auto finite_matrix = [](const SpMat& m) {
      for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it)
          if (!std::isfinite(it.value())) return false;
      return true;
    };
    if (!finite_matrix(Q) || !finite_matrix(A_eq) || !finite_matrix(A_in)) fail("matrix entries must be finite");
    double qmax = 0.0;
    for (int k = 0; k < Q.outerSize(); ++k)
      for (SpMat::InnerIterator it(Q, k); it; ++it) qmax = std::max(qmax, std::abs(it.value()));
    const SpMat asym = Q - SpMat(Q.transpose());
    for (int k = 0; k < asym.outerSize(); ++k)
      for (SpMat::InnerIterator it(asym, k); it; ++it)
        if (std::abs(it.value()) > 1e-12 * std::max(1.0, qmax)) fail("Q is not symmetric");
    // PSD probe: LDL' of Q + shift I must have a non-negative diagonal.
    if (nv > 0) {
      const double shift = 1e-10 * std::max(1.0, qmax);
      SpMat I(nv, nv);
      I.setIdentity();
      Eigen::SimplicialLDLT<SpMat> ldlt(Q + shift * I);
      if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) fail("Q is not positive semidefinite");
    }
  }

  std::string var_name(Eigen::Index i) const {
    return i < static_cast<Eigen::Index>(var_names.size()) ? var_names[static_cast<std::size_t>(i)]
                                                            : "x" + std::to_string(i);
  }
  std::string eq_name(Eigen::Index i) const {
    return i < static_cast<Eigen::Index>(eq_names.size()) ? eq_names[static_cast<std::size_t>(i)]
                                                           : "eq" + std::to_string(i);
  }
  std::string in_name(Eigen::Index i) const {
    return i < static_cast<Eigen::Index>(in_names.size()) ? in_names[static_cast<std::size_t>(i)]
                                                           : "in" + std::to_string(i);
  }
};

// Incremental assembly by named variables and rows.
class QpBuilder {
 public:
  using Terms = std::vector<std::pair<int, double>>;

  int add_var(std::string name, double lo = -inf, double hi = inf) {
    names_.push_back(std::move(name));
    lo_.push_back(lo);
    hi_.push_back(hi);
    c_.push_back(0.0);
    return static_cast<int>(names_.size()) - 1;
  }
  int size() const { return static_cast<int>(names_.size()); }

  void set_bounds(int i, double lo, double hi) {
    lo_.at(static_cast<std::size_t>(i)) = lo;
    hi_.at(static_cast<std::size_t>(i)) = hi;
  }
  double lower(int i) const { return lo_.at(static_cast<std::size_t>(i)); }
  double upper(int i) const { return hi_.at(static_cast<std::size_t>(i)); }

  // Adds v * x_i * x_j to the objective (i == j gives v x_i^2).
  void add_quadratic(int i, int j, double v) {
    if (i == j) {
      q_.emplace_back(i, i, 2.0 * v);
    } else {
      q_.emplace_back(i, j, v);
      q_.emplace_back(j, i, v);
    }
  }
  void add_linear(int i, double v) { c_.at(static_cast<std::size_t>(i)) += v; }
  void add_constant(double v) { c0_ += v; }

  int add_eq(std::string name, const Terms& terms, double rhs) {
    const int r = static_cast<int>(beq_.size());
    for (const auto& [j, v] : terms) eq_.emplace_back(r, j, v);
    beq_.push_back(rhs);
    eq_names_.push_back(std::move(name));
    return r;
  }
  int add_le(std::string name, const Terms& terms, double rhs) {
    const int r = static_cast<int>(bin_.size());
    for (const auto& [j, v] : terms) in_.emplace_back(r, j, v);
    bin_.push_back(rhs);
    in_names_.push_back(std::move(name));
    return r;
  }
  int add_ge(std::string name, const Terms& terms, double rhs) {
    Terms neg = terms;
    for (auto& t : neg) t.second = -t.second;
    return add_le(std::move(name), neg, -rhs);
  }

  QpProblem build() const {
    const auto n = static_cast<Eigen::Index>(names_.size());
    QpProblem p;
    p.Q.resize(n, n);
    p.Q.setFromTriplets(q_.begin(), q_.end());
    p.c = Eigen::Map<const Vec>(c_.data(), n);
    p.c0 = c0_;
    p.A_eq.resize(static_cast<Eigen::Index>(beq_.size()), n);
    p.A_eq.setFromTriplets(eq_.begin(), eq_.end());
    p.b_eq = Eigen::Map<const Vec>(beq_.data(), static_cast<Eigen::Index>(beq_.size()));
    p.A_in.resize(static_cast<Eigen::Index>(bin_.size()), n);
    p.A_in.setFromTriplets(in_.begin(), in_.end());
    p.b_in = Eigen::Map<const Vec>(bin_.data(), static_cast<Eigen::Index>(bin_.size()));
    p.lower = Eigen::Map<const Vec>(lo_.data(), n);
    p.upper = Eigen::Map<const Vec>(hi_.data(), n);
    p.var_names = names_;
    p.eq_names = eq_names_;
    p.in_names = in_names_;
    p.Q.makeCompressed();
    p.A_eq.makeCompressed();
    p.A_in.makeCompressed();
    p.validate();
    return p;
  }

 private:
  std::vector<std::string> names_;
  std::vector<double> lo_, hi_, c_;
  double c0_ = 0.0;
  std::vector<Triplet> q_, eq_, in_;
  std::vector<double> beq_, bin_;
  std::vector<std::string> eq_names_, in_names_;
};

enum class QpStatus { optimal, reduced_accuracy, infeasible, iteration_limit };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::reduced_accuracy: return "reduced-accuracy";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::iteration_limit: return "iteration-limit";
  }
  return "?";
}

struct QpResult {
  QpStatus status = QpStatus::iteration_limit;
  Vec x;
  double objective = 0.0;
  Vec y_eq;   // equality duals
  Vec z_in;   // inequality duals, >= 0
  Vec nu;     // bound multipliers
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  int iterations = 0;
  std::vector<std::string> diagnostics;  // most-violated constraints when infeasible
};

struct QpOptions {
  double tol = 1e-6;
  int max_iter = 200;
  int ruiz_iters = 15;
  double reg_primal = 1e-9;
  double reg_dual = 1e-9;
  int refine_steps = 3;
  // When progress stalls (or the KKT system turns singular) before tol is met, the best
  // iterate is returned as reduced_accuracy if its residuals are within tol_reduced.
  double tol_reduced = 1e-7;
  int stall_iters = 10;
  std::FILE* log = nullptr;  // per-iteration trace when set
};

namespace detail {

inline double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline void row_abs_max(const SpMat& m, Vec& out) {
  out = Vec::Zero(m.rows());
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) out[it.row()] = std::max(out[it.row()], std::abs(it.value()));
}

inline void col_abs_max(const SpMat& m, Vec& out) {
  out = Vec::Zero(m.cols());
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) out[it.col()] = std::max(out[it.col()], std::abs(it.value()));
}

inline double max_step(const Vec& v, const Vec& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

// Which original object a row of the internal (A, G) system stands for.
struct RowTag {
  enum Kind { eq, fixed, in, upper, lower } kind;
  Eigen::Index index;
};

}  // namespace detail

inline QpResult solve_qp(const QpProblem& p, const QpOptions& opt = {}) {
  using detail::inf_norm;
  const Eigen::Index n = p.n();
  if (p.Q.rows() != n || p.A_eq.cols() != n || p.A_in.cols() != n || p.lower.size() != n || p.upper.size() != n)
    throw ValidationError("QP: inconsistent dimensions");

  // Internal form: A x = b (equalities and fixed variables), G x <= h (inequalities, bounds).
  std::vector<Triplet> ta, tg;
  std::vector<double> bv, hv;
  std::vector<detail::RowTag> atag, gtag;
  for (int k = 0; k < p.A_eq.outerSize(); ++k)
    for (SpMat::InnerIterator it(p.A_eq, k); it; ++it) ta.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index r = 0; r < p.b_eq.size(); ++r) {
    bv.push_back(p.b_eq[r]);
    atag.push_back({detail::RowTag::eq, r});
  }
  std::vector<Eigen::Index> in_row(static_cast<std::size_t>(p.b_in.size()), -1);
  {
    // Rows with rhs = +inf are vacuous.
    Eigen::Index g = 0;
    for (Eigen::Index r = 0; r < p.b_in.size(); ++r)
      if (p.b_in[r] < inf) in_row[static_cast<std::size_t>(r)] = g++;
    for (int k = 0; k < p.A_in.outerSize(); ++k)
      for (SpMat::InnerIterator it(p.A_in, k); it; ++it)
        if (in_row[static_cast<std::size_t>(it.row())] >= 0)
          tg.emplace_back(in_row[static_cast<std::size_t>(it.row())], it.col(), it.value());
    for (Eigen::Index r = 0; r < p.b_in.size(); ++r)
      if (in_row[static_cast<std::size_t>(r)] >= 0) {
        hv.push_back(p.b_in[r]);
        gtag.push_back({detail::RowTag::in, r});
      }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p.lower[i] == p.upper[i]) {
      ta.emplace_back(static_cast<Eigen::Index>(bv.size()), i, 1.0);
      bv.push_back(p.lower[i]);
      atag.push_back({detail::RowTag::fixed, i});
      continue;
    }
    if (p.upper[i] < inf) {
      tg.emplace_back(static_cast<Eigen::Index>(hv.size()), i, 1.0);
      hv.push_back(p.upper[i]);
      gtag.push_back({detail::RowTag::upper, i});
    }
    if (p.lower[i] > -inf) {
      tg.emplace_back(static_cast<Eigen::Index>(hv.size()), i, -1.0);
      hv.push_back(-p.lower[i]);
      gtag.push_back({detail::RowTag::lower, i});
    }
  }
  const auto me = static_cast<Eigen::Index>(bv.size());
  const auto mi = static_cast<Eigen::Index>(hv.size());
  SpMat A0(me, n), G0(mi, n);
  A0.setFromTriplets(ta.begin(), ta.end());
  G0.setFromTriplets(tg.begin(), tg.end());
  const Vec b0 = Eigen::Map<const Vec>(bv.data(), me);
  const Vec h0 = Eigen::Map<const Vec>(hv.data(), mi);

  // Ruiz equilibration.
  Vec dcol = Vec::Ones(n), ea = Vec::Ones(me), eg = Vec::Ones(mi);
  SpMat Q = p.Q, A = A0, G = G0;
  for (int it = 0; it < opt.ruiz_iters; ++it) {
    Vec cq, ca, cg, ra, rg;
    detail::col_abs_max(Q, cq);
    detail::col_abs_max(A, ca);
    detail::col_abs_max(G, cg);
    detail::row_abs_max(A, ra);
    detail::row_abs_max(G, rg);
    Vec dc(n), da(me), dg(mi);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double m = std::max({cq[j], ca[j], cg[j]});
      dc[j] = m > 0.0 ? 1.0 / std::sqrt(m) : 1.0;
    }
    for (Eigen::Index r = 0; r < me; ++r) da[r] = ra[r] > 0.0 ? 1.0 / std::sqrt(ra[r]) : 1.0;
    for (Eigen::Index r = 0; r < mi; ++r) dg[r] = rg[r] > 0.0 ? 1.0 / std::sqrt(rg[r]) : 1.0;
    Q = dc.asDiagonal() * Q * dc.asDiagonal();
    A = da.asDiagonal() * A * dc.asDiagonal();
    G = dg.asDiagonal() * G * dc.asDiagonal();
    dcol.array() *= dc.array();
    ea.array() *= da.array();
    eg.array() *= dg.array();
  }
  Vec c = dcol.cwiseProduct(p.c);
  const double sc = 1.0 / std::max(1.0, inf_norm(c));
  c *= sc;
  Q *= sc;
  const Vec b = ea.cwiseProduct(b0);
  const Vec h = eg.cwiseProduct(h0);
  const SpMat At = A.transpose();
  const SpMat Gt = G.transpose();

  // Unscaled-space norms for the stopping test.
  const double data_p = 1.0 + std::max(inf_norm(b0), inf_norm(h0));
  const double data_d = 1.0 + inf_norm(p.c);

  SpMat Id(n, n);
  Id.setIdentity();
  Eigen::SimplicialLDLT<SpMat> ldlt;
  const Eigen::Index nk = n + me;

  // Factor K(w) and return a solver for [dx; dy].
  SpMat K_true;
  auto factor = [&](const Vec& w) {
    const SpMat H = Q + SpMat(Gt * w.asDiagonal() * G);
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(H.nonZeros() + 2 * A.nonZeros() + nk));
    for (int k = 0; k < H.outerSize(); ++k)
      for (SpMat::InnerIterator it(H, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it) {
        t.emplace_back(n + it.row(), it.col(), it.value());
        t.emplace_back(it.col(), n + it.row(), it.value());
      }
    K_true.resize(nk, nk);
    K_true.setFromTriplets(t.begin(), t.end());
    const std::size_t base = t.size();
    // Zero pivots late in the run are cured by stronger regularization; refinement against
    // K_true removes its bias from the step.
    for (double boost = 1.0; boost <= 1e6; boost *= 100.0) {
      t.resize(base);
      for (Eigen::Index i = 0; i < nk; ++i) t.emplace_back(i, i, boost * (i < n ? opt.reg_primal : -opt.reg_dual));
      SpMat K(nk, nk);
      K.setFromTriplets(t.begin(), t.end());
      ldlt.compute(K);
      if (ldlt.info() == Eigen::Success) return;
    }
    throw NumericError("QP: KKT factorization failed");
  };
  auto kkt_solve = [&](const Vec& rhs) {
    Vec sol = ldlt.solve(rhs);
    for (int r = 0; r < opt.refine_steps; ++r) {
      const Vec res = rhs - K_true * sol;
      sol += ldlt.solve(res);
    }
    if (!sol.allFinite()) throw NumericError("QP: non-finite Newton direction");
    return sol;
  };

  // Starting point: least-squares-ish solve with W = I, then shift the slacks positive.
  Vec x(n), y(me), s(mi), z(mi);
  {
    factor(Vec::Ones(mi));
    Vec rhs(nk);
    rhs << -c + Gt * h, b;
    const Vec sol = kkt_solve(rhs);
    x = sol.head(n);
    y = sol.tail(me);
    s = h - G * x;
    const double smin = mi ? s.minCoeff() : 0.0;
    if (smin < 1.0) s.array() += 1.0 - smin;
    z = Vec::Ones(mi);
  }

  QpResult res;
  auto unscale = [&] {
    res.x = dcol.cwiseProduct(x);
    Vec yo = ea.cwiseProduct(y) / sc;
    Vec zo = eg.cwiseProduct(z) / sc;
    res.y_eq = Vec::Zero(p.b_eq.size());
    res.z_in = Vec::Zero(p.b_in.size());
    res.nu = Vec::Zero(n);
    for (Eigen::Index r = 0; r < me; ++r) {
      const auto& tg_ = atag[static_cast<std::size_t>(r)];
      if (tg_.kind == detail::RowTag::eq)
        res.y_eq[tg_.index] = yo[r];
      else
        res.nu[tg_.index] -= yo[r];
    }
    for (Eigen::Index r = 0; r < mi; ++r) {
      const auto& tg_ = gtag[static_cast<std::size_t>(r)];
      if (tg_.kind == detail::RowTag::in)
        res.z_in[tg_.index] = zo[r];
      else if (tg_.kind == detail::RowTag::upper)
        res.nu[tg_.index] -= zo[r];
      else
        res.nu[tg_.index] += zo[r];
    }
    res.objective = p.objective(res.x);
    const Vec so = s.cwiseQuotient(eg);
    const double rp = std::max(inf_norm(A0 * res.x - b0), inf_norm(G0 * res.x + so - h0));
    const Vec rd = p.Q * res.x + p.c + SpMat(A0.transpose()) * yo + SpMat(G0.transpose()) * zo;
    res.primal_residual = rp / data_p;
    res.dual_residual = inf_norm(rd) / std::max(data_d, 1.0 + inf_norm(p.Q * res.x));
    res.complementarity = mi ? std::abs(so.dot(zo)) / (1.0 + std::abs(res.objective)) : 0.0;
  };

  auto report_violations = [&] {
    std::vector<std::pair<double, std::string>> v;
    const Vec ax = p.A_eq * res.x;
    for (Eigen::Index r = 0; r < p.b_eq.size(); ++r) v.emplace_back(std::abs(ax[r] - p.b_eq[r]), p.eq_name(r));
    const Vec gx = p.A_in * res.x;
    for (Eigen::Index r = 0; r < p.b_in.size(); ++r) v.emplace_back(gx[r] - p.b_in[r], p.in_name(r));
    for (Eigen::Index i = 0; i < n; ++i) {
      v.emplace_back(p.lower[i] - res.x[i], p.var_name(i) + " >= lower");
      v.emplace_back(res.x[i] - p.upper[i], p.var_name(i) + " <= upper");
    }
    std::stable_sort(v.begin(), v.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
    for (std::size_t k = 0; k < v.size() && k < 10; ++k) {
      if (!(v[k].first > 0.0)) break;
      char buf[64];
      std::snprintf(buf, sizeof buf, " violated by %.6g", v[k].first);
      res.diagnostics.push_back(v[k].second + buf);
    }
  };

  QpResult best;
  double best_merit = std::numeric_limits<double>::infinity();
  int since_best = 0;
  auto finish_stalled = [&] {
    if (best_merit <= opt.tol_reduced) {
      best.status = QpStatus::reduced_accuracy;
      return best;
    }
    res.status = QpStatus::iteration_limit;
    return res;
  };

  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    res.iterations = iter;
    if (!x.allFinite() || !y.allFinite() || !s.allFinite() || !z.allFinite())
      throw NumericError("QP: iterate became non-finite");
    unscale();
    if (res.primal_residual <= opt.tol && res.dual_residual <= opt.tol && res.complementarity <= opt.tol) {
      res.status = QpStatus::optimal;
      return res;
    }
    const double merit = std::max({res.primal_residual, res.dual_residual, res.complementarity});
    if (merit < 0.9 * best_merit) {
      best_merit = merit;
      best = res;
      since_best = 0;
    } else if (++since_best >= opt.stall_iters) {
      return finish_stalled();
    }
    // Farkas test: A'y + G'z ~ 0 with b'y + h'z < 0 proves A x = b, G x <= h empty.
    const double ynorm = std::max(inf_norm(y), inf_norm(z));
    if (ynorm > 1e6) {
      const double cert = inf_norm(At * y + Gt * z) / ynorm;
      const double gap = (b.dot(y) + h.dot(z)) / ynorm;
      if (cert <= 1e-8 && gap < -1e-8) {
        res.status = QpStatus::infeasible;
        report_violations();
        return res;
      }
    }
    if (opt.log)
      std::fprintf(opt.log, "iter %3d  rp %.3e  rd %.3e  gap %.3e  |y,z| %.3e  min s %.3e  min z %.3e\n", iter,
                   res.primal_residual, res.dual_residual, res.complementarity, ynorm, mi ? s.minCoeff() : 0.0,
                   mi ? z.minCoeff() : 0.0);
    if (iter == opt.max_iter) break;

    const Vec rd = Q * x + c + At * y + Gt * z;
    const Vec rp = A * x - b;
    const Vec rg = G * x + s - h;
    const double mu = mi ? s.dot(z) / static_cast<double>(mi) : 0.0;
    const Vec w = z.cwiseQuotient(s);
    try {
      factor(w);
    } catch (const NumericError&) {
      if (best_merit <= opt.tol_reduced) return finish_stalled();
      throw;
    }

    // Solve for the direction given the complementarity right-hand side r_sz.
    auto direction = [&](const Vec& rsz, Vec& dx, Vec& dy, Vec& ds, Vec& dz) {
      const Vec t = (z.cwiseProduct(rg) - rsz).cwiseQuotient(s);
      Vec rhs(nk);
      rhs << -rd - Gt * t, -rp;
      const Vec sol = kkt_solve(rhs);
      dx = sol.head(n);
      dy = sol.tail(me);
      dz = w.cwiseProduct(G * dx) + t;
      ds = -rg - G * dx;
    };

    Vec dx, dy, ds, dz;
    const Vec rsz_aff = s.cwiseProduct(z);
    direction(rsz_aff, dx, dy, ds, dz);
    double sigma = 0.0;
    if (mi) {
      const double a_aff = std::min(detail::max_step(s, ds), detail::max_step(z, dz));
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(mi);
      sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      const Vec rsz = rsz_aff + ds.cwiseProduct(dz) - Vec::Constant(mi, sigma * mu);
      direction(rsz, dx, dy, ds, dz);
    }
    double alpha = 1.0;
    if (mi) alpha = std::min(1.0, 0.99 * std::min(detail::max_step(s, ds), detail::max_step(z, dz)));
    x += alpha * dx;
    y += alpha * dy;
    s += alpha * ds;
    z += alpha * dz;
    if (mi) {
      // Keep strictly interior.
      s = s.cwiseMax(1e-300);
      z = z.cwiseMax(1e-300);
    }
  }
  return finish_stalled();
}

// Plain-text dump: header "fcsd-qp n m_eq m_in", then sections of COO triplets and dense vectors.
inline void write_coo(const QpProblem& p, std::ostream& os) {
  os.precision(17);
  auto mat = [&](const char* tag, const SpMat& m) {
    os << tag << ' ' << m.nonZeros() << '\n';
    for (int k = 0; k < m.outerSize(); ++k)
      for (SpMat::InnerIterator it(m, k); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
  };
  auto vec = [&](const char* tag, const Vec& v) {
    os << tag << ' ' << v.size() << '\n';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::isinf(v[i]))
        os << (v[i] > 0 ? "inf" : "-inf");
      else
        os << v[i];
      os << '\n';
    }
  };
  os << "fcsd-qp " << p.n() << ' ' << p.b_eq.size() << ' ' << p.b_in.size() << '\n';
  mat("Q", p.Q);
  vec("c", p.c);
  os << "c0 " << p.c0 << '\n';
  mat("A_eq", p.A_eq);
  vec("b_eq", p.b_eq);
  mat("A_in", p.A_in);
  vec("b_in", p.b_in);
  vec("lower", p.lower);
  vec("upper", p.upper);
}

inline QpProblem read_coo(std::istream& is) {
  auto fail = [](const std::string& m) { throw ValidationError("QP dump: " + m); };
  auto expect = [&](const std::string& tag) {
    std::string t;
    if (!(is >> t) || t != tag) fail("expected section '" + tag + "'");
  };
  auto number = [&]() {
    std::string t;
    if (!(is >> t)) fail("unexpected end of input");
    if (t == "inf") return inf;
    if (t == "-inf") return -inf;
    try {
      std::size_t pos = 0;
      const double v = std::stod(t, &pos);
      if (pos != t.size()) fail("bad number '" + t + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad number '" + t + "'");
    }
    return 0.0;
  };
  Eigen::Index n = 0, me = 0, mi = 0;
  expect("fcsd-qp");
  if (!(is >> n >> me >> mi) || n < 0 || me < 0 || mi < 0) fail("bad header");
  auto mat = [&](const std::string& tag, Eigen::Index rows) {
    expect(tag);
    long long nnz = 0;
    if (!(is >> nnz) || nnz < 0) fail("bad nnz for " + tag);
    std::vector<Triplet> t;
    for (long long k = 0; k < nnz; ++k) {
      long long r = 0, col = 0;
      if (!(is >> r >> col)) fail("bad triplet in " + tag);
      const double v = number();
      if (r < 0 || r >= rows || col < 0 || col >= n) fail("index out of range in " + tag);
      t.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col), v);
    }
    SpMat m(rows, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  };
  auto vec = [&](const std::string& tag, Eigen::Index len) {
    expect(tag);
    Eigen::Index k = 0;
    if (!(is >> k) || k != len) fail("bad length for " + tag);
    Vec v(len);
    for (Eigen::Index i = 0; i < len; ++i) v[i] = number();
    return v;
  };
  QpProblem p;
  p.Q = mat("Q", n);
  p.c = vec("c", n);
  expect("c0");
  p.c0 = number();
  p.A_eq = mat("A_eq", me);
  p.b_eq = vec("b_eq", me);
  p.A_in = mat("A_in", mi);
  p.b_in = vec("b_in", mi);
  p.lower = vec("lower", n);
  p.upper = vec("upper", n);
  p.validate();
  return p;
}

}  // namespace fcsd::qp
