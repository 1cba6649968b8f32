// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fcsd/cha.hpp"
#include "fcsd/dispatch.hpp"
#include "fcsd/horizon.hpp"
#include "fcsd/io.hpp"
#include "fcsd/qp.hpp"
#include "fcsd/sfr.hpp"
#include "fcsd/uncertainty.hpp"
#include "oracles.hpp"
#include "qp_fixtures.hpp"
#include "toy_cases.hpp"

using namespace fcsd;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    o.pass = false;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += what;
  }
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Largest frequency drop of the physical model, located on a dt grid and refined with a
// parabola through the three samples around the discrete peak. Integration stops once
// the response has recovered well past the peak.
double ode_nadir(const sfr::AggregatedSfrParams& p, double dp, double f0, double dt) {
  const double H = p.inertia, D = p.damping, R = p.droop, F = p.turbine_fraction, T = p.time_constant;
  auto f = [&](double w, double pm, double& dw, double& dpm) {
    dw = (-dp - D * w + pm) / (2.0 * H);
    dpm = (-pm - R * w) / T - F * dw;
  };
  double w = 0.0, pm = 0.0, prev2 = 0.0, prev = 0.0, best = 0.0;
  double b_prev = 0.0, b_next = 0.0;
  bool found = false;
  const double ss = f0 * dp / (D + R);
  for (long k = 1; k < 50000000; ++k) {
    double k1w, k1p, k2w, k2p, k3w, k3p, k4w, k4p;
    f(w, pm, k1w, k1p);
    f(w + 0.5 * dt * k1w, pm + 0.5 * dt * k1p, k2w, k2p);
    f(w + 0.5 * dt * k2w, pm + 0.5 * dt * k2p, k3w, k3p);
    f(w + dt * k3w, pm + dt * k3p, k4w, k4p);
    w += dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w);
    pm += dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
    const double dev = -f0 * w;
    if (k >= 2 && prev >= prev2 && prev > dev && prev > best) {
      best = prev;
      b_prev = prev2;
      b_next = dev;
      found = true;
    }
    if (found && dev < best - 0.5 * (best - ss) && dev < ss + 1e-12) break;
    if (!found && std::abs(dev - ss) < 1e-13 * (1 + ss) && std::abs(k1w) < 1e-15) break;
    prev2 = prev;
    prev = dev;
  }
  if (!found) return std::max(prev, ss);
  const double den = b_prev - 2 * best + b_next;
  if (den >= 0.0) return best;
  const double s = 0.5 * (b_prev - b_next) / den;
  return best - 0.25 * (b_prev - b_next) * s;
}

sfr::AggregatedSfrParams random_params(std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  sfr::AggregatedSfrParams p;
  p.inertia = 0.5 + 11.5 * u(g);
  p.damping = 15.0 * u(g);
  p.time_constant = 0.5 + 19.5 * u(g);
  p.droop = 1.0 + 99.0 * u(g);
  p.turbine_fraction = 0.8 * u(g) * p.droop;
  return p;
}

// 1. Closed-form nadir, RoCoF and steady state against direct integration.
Outcome criterion_nadir() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 g(2024);
  const double dp = 0.1, f0 = 50.0;
  int sets = 0;
  double worst_n = 0.0, worst_r = 0.0, worst_s = 0.0;
  while (sets < 200) {
    const auto p = random_params(g);
    if (oracle::modes_from_roots(p).second >= 1.0) continue;
    ++sets;
    const auto m = sfr::metrics(p, dp, f0);
    worst_n = std::max(worst_n, std::abs(m.max_deviation - ode_nadir(p, dp, f0, 1e-3)));
    // Initial slope of one tiny RK4 step.
    const auto start = oracle::sfr_physical(p, dp, f0, 1e-7, 1e-7);
    worst_r = std::max(worst_r, std::abs(m.rocof_max - std::abs(start[1].second) / 1e-7));
    // Settled value: the oscillatory part decays as exp(-zeta wn t).
    const auto [wn, zeta] = oracle::modes_from_roots(p);
    const double settle = 40.0 / (zeta * wn);
    const auto tail = oracle::sfr_physical(p, dp, f0, settle, std::min(1e-2, settle / 2e4));
    worst_s = std::max(worst_s, std::abs(m.steady_state - std::abs(tail.back().second)));
  }
  const double secs = seconds_since(t0);
  require(o, worst_n <= 1e-3, fmt("nadir error %.3g Hz", worst_n));
  require(o, worst_r <= 1e-4, fmt("rocof error %.3g Hz/s", worst_r));
  require(o, worst_s <= 1e-4, fmt("steady-state error %.3g Hz", worst_s));
  require(o, secs <= 10.0, fmt("took %.1f s", secs));
  if (o.pass)
    o.detail = fmt("200 sets, max errors nadir %.2g, rocof %.2g", worst_n, worst_r) +
               fmt(", steady %.2g; %.2f s", worst_s, secs);
  return o;
}

// 2. Finite-difference Hessians of the nadir are positive semidefinite.
Outcome criterion_convexity() {
  Outcome o;
  const auto t0 = Clock::now();
  sfr::ConvexityOptions opt;
  opt.n_samples = 100000;
  opt.seed = 7;
  const auto r = sfr::certify_convexity(opt);
  const double secs = seconds_since(t0);
  require(o, r.n_samples == 100000, "sample count");
  require(o, r.n_violations == 0, fmt("%.0f PSD violations", static_cast<double>(r.n_violations)));
  require(o, secs <= 60.0, fmt("took %.1f s", secs));
  if (o.pass) o.detail = fmt("1e5 Hessians, min eigenvalue %.3g, 0 violations; %.2f s", r.min_eigenvalue, secs);
  return o;
}

// 3. Convex hull approximation of the nadir-feasible (H, D) region.
Outcome criterion_cha() {
  Outcome o;
  cha::NadirSystem sys;
  sys.droop = 25.0;
  sys.turbine_fraction = 0.15 * 25.0;
  sys.time_constant = 12.0;
  sys.disturbance = 0.13;
  sys.limit = 0.5;
  const cha::Bounds hb{4.0, 9.0}, db{2.0, 8.0};

  // Independent test set, labelled by integrating the ODE.
  std::mt19937_64 g(4242);
  std::uniform_real_distribution<double> uh(hb.lo, hb.hi), ud(db.lo, db.hi);
  std::vector<cha::Point2> test(10000);
  std::vector<char> truth(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    test[i] = {uh(g), ud(g)};
    truth[i] = ode_nadir(sys.at(test[i]), sys.disturbance, sys.nominal, 5e-3) <= sys.limit;
  }

  double prev_err = 1.0;
  std::string rows;
  for (std::size_t n : {10000u, 20000u, 50000u}) {
    cha::ChaConfig cfg;
    cfg.n_samples = n;
    cfg.h_bounds = hb;
    cfg.d_bounds = db;
    cfg.seed = 21;
    const auto hs = cha::build_nadir_halfspaces(sys, cfg);
    std::size_t fs = 0, wrong = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const bool pred = cha::classify(hs, test[i]);
      fs += pred && !truth[i];
      wrong += pred != static_cast<bool>(truth[i]);
    }
    const double err = static_cast<double>(wrong) / static_cast<double>(test.size());
    const std::string tag = "n=" + std::to_string(n) + ": ";
    require(o, fs == 0, tag + std::to_string(fs) + " false-safe");
    require(o, err <= prev_err, tag + "error rate rose");
    require(o, hs.size() <= 12, tag + std::to_string(hs.size()) + " hyperplanes");
    if (n == 50000) require(o, hs.info.build_seconds <= 0.1, fmt("build took %.3f s", hs.info.build_seconds));
    prev_err = err;
    rows += (rows.empty() ? "" : ", ") + std::to_string(n / 1000) + "k " + fmt("%.2f%%", 100 * err) + "/" +
            std::to_string(hs.size()) + "hp" + fmt("/%.3fs", hs.info.build_seconds);
  }
  if (o.pass) o.detail = "error/hyperplanes/build " + rows + ", 0 false-safe";
  return o;
}

// 4. Quickhull against brute force; half-space round trip.
Outcome criterion_quickhull() {
  Outcome o;
  auto lex = [](const cha::Point2& a, const cha::Point2& b) { return a.h < b.h || (a.h == b.h && a.d < b.d); };
  double worst_rt = 0.0;
  int mism = 0;
  for (std::uint64_t c = 0; c < 100; ++c) {
    std::mt19937_64 g(900 + c);
    std::uniform_int_distribution<int> un(3, 200);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    std::vector<cha::Point2> pts(static_cast<std::size_t>(un(g)));
    for (auto& p : pts) p = {u(g), 0.3 * u(g)};
    auto hull = cha::quickhull2d(pts);
    auto got = hull.vertices;
    std::sort(got.begin(), got.end(), lex);
    if (got != oracle::brute_force_hull(pts)) {
      ++mism;
      continue;
    }
    if (hull.degenerate) continue;
    const auto rec = oracle::enumerate_vertices(cha::polygon_to_halfspaces(hull));
    if (rec.size() != hull.vertices.size()) {
      ++mism;
      continue;
    }
    for (const auto& v : hull.vertices) {
      double best = INFINITY;
      for (const auto& r : rec) best = std::min(best, std::max(std::abs(r.h - v.h), std::abs(r.d - v.d)));
      worst_rt = std::max(worst_rt, best);
    }
  }
  require(o, mism == 0, std::to_string(mism) + " clouds disagree");
  require(o, worst_rt <= 1e-9, fmt("round trip error %.3g", worst_rt));
  if (o.pass) o.detail = fmt("100 clouds match, round trip error %.2g", worst_rt);
  return o;
}

double mixture_cdf(const uncertainty::UnivariateGmm& u, double x) {
  double s = 0.0;
  for (const auto& c : u.components())
    s += c.weight * (c.var > 0 ? 0.5 * std::erfc(-(x - c.mean) / std::sqrt(2.0 * c.var)) : (x >= c.mean));
  return s;
}

// 5. Mixture quantiles.
Outcome criterion_quantiles() {
  Outcome o;
  std::mt19937_64 g(55);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    std::vector<uncertainty::UnivariateComponent> comps;
    const int m = 1 + static_cast<int>(u(g) * 4);
    double tot = 0.0;
    for (int i = 0; i < m; ++i) {
      const double w = 0.05 + u(g);
      tot += w;
      comps.push_back({w, -100 + 200 * u(g), std::pow(0.1 + 20 * u(g), 2)});
    }
    for (auto& c : comps) c.weight /= tot;
    const uncertainty::UnivariateGmm mix(comps);
    for (double a : {0.01, 0.05, 0.2, 0.5, 0.8, 0.95, 0.99})
      worst = std::max(worst, std::abs(mixture_cdf(mix, uncertainty::quantile(mix, a)) - a));
  }
  require(o, worst <= 1e-10, fmt("cdf round trip %.3g", worst));

  double worst_g = 0.0;
  for (auto [mu, sd] : {std::pair{0.0, 1.0}, std::pair{3.0, 2.0}, std::pair{-40.0, 0.5}}) {
    const uncertainty::UnivariateGmm n({{1.0, mu, sd * sd}});
    worst_g = std::max(worst_g, std::abs(uncertainty::quantile(n, 0.05) - (-1.6449 * sd + mu)));
  }
  require(o, worst_g <= 1e-4, fmt("Gaussian 5%% quantile off by %.3g", worst_g));

  Eigen::Vector3d m1(120, 80, 60), m2(95, 100, 40);
  Eigen::Matrix3d c1, c2;
  c1 << 100, 30, 10, 30, 64, 5, 10, 5, 36;
  c2 << 225, -20, 15, -20, 49, 0, 15, 0, 81;
  const uncertainty::Gmm gm({{0.65, m1, c1}, {0.35, m2, c2}});
  const Eigen::Vector3d a = Eigen::Vector3d::Ones();
  const auto proj = uncertainty::affine_project(gm, a, 0.0);
  auto xs = oracle::sample_projection(gm, a, 0.0, 1000000, 11);
  std::sort(xs.begin(), xs.end());
  double mc_mean = 0.0, mc_var = 0.0;
  for (double x : xs) mc_mean += x;
  mc_mean /= static_cast<double>(xs.size());
  for (double x : xs) mc_var += (x - mc_mean) * (x - mc_mean);
  const double pooled = std::sqrt(mc_var / static_cast<double>(xs.size() - 1));
  double worst_mc = 0.0;
  for (double al : {0.05, 0.1, 0.5, 0.9, 0.95}) {
    const double emp = xs[static_cast<std::size_t>(al * static_cast<double>(xs.size()))];
    worst_mc = std::max(worst_mc, std::abs(uncertainty::quantile(proj, al) - emp) / pooled);
  }
  require(o, worst_mc <= 0.005, fmt("sum quantile off by %.3g sigma", worst_mc));
  if (o.pass)
    o.detail = fmt("cdf round trip %.2g, Gaussian %.2g, Monte Carlo %.2g sigma", worst, worst_g, worst_mc);
  return o;
}

// 6. QP solver accuracy.
Outcome criterion_qp() {
  Outcome o;
  qp::QpOptions opt;
  opt.tol = 1e-9;
  double worst_kkt = 0.0, worst_x = 0.0;
  int bad = 0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    const auto d = qpfix::random_qp(7000 + k);
    const auto ref = oracle::active_set_enumeration(d);
    const auto r = qp::solve_qp(qpfix::from_dense(d), opt);
    if (!ref || r.status != qp::QpStatus::optimal) {
      ++bad;
      continue;
    }
    // Residuals of the dense KKT system, computed here from x and the multipliers.
    const Eigen::VectorXd& x = r.x;
    Eigen::VectorXd grad = d.Q * x + d.c;
    if (d.Aeq.rows()) grad += d.Aeq.transpose() * r.y_eq;
    grad += d.Ain.transpose() * r.z_in;
    double kkt = grad.cwiseAbs().maxCoeff() / (1.0 + d.c.cwiseAbs().maxCoeff());
    if (d.Aeq.rows()) kkt = std::max(kkt, (d.Aeq * x - d.beq).cwiseAbs().maxCoeff());
    const Eigen::VectorXd slack = d.bin - d.Ain * x;
    kkt = std::max(kkt, std::max(0.0, -slack.minCoeff()));
    kkt = std::max(kkt, std::max(0.0, -r.z_in.minCoeff()));
    kkt = std::max(kkt, (slack.array() * r.z_in.array()).abs().maxCoeff());
    worst_kkt = std::max(worst_kkt, kkt);
    worst_x = std::max(worst_x, (x - *ref).cwiseAbs().maxCoeff());
  }
  require(o, bad == 0, std::to_string(bad) + " instances not solved");
  require(o, worst_kkt <= 1e-6, fmt("KKT residual %.3g", worst_kkt));
  require(o, worst_x <= 1e-5, fmt("distance to active-set solution %.3g", worst_x));

  const double rwc = 300.0, W1 = 180.0, W2 = 95.0, Rtot = 60.0;
  qp::QpBuilder b;
  const int r1 = b.add_var("Rw1", 0.0, W1), r2 = b.add_var("Rw2", 0.0, W2);
  b.add_quadratic(r1, r1, rwc / W1);
  b.add_quadratic(r2, r2, rwc / W2);
  b.add_eq("total", {{r1, 1.0}, {r2, 1.0}}, Rtot);
  const auto two = qp::solve_qp(b.build(), opt);
  const double gap = std::abs(two.x[0] / W1 - two.x[1] / W2);
  require(o, two.status == qp::QpStatus::optimal && gap <= 1e-6, fmt("two-RES ratio gap %.3g", gap));
  if (o.pass)
    o.detail = fmt("50 QPs, KKT %.2g, oracle distance %.2g, two-RES gap %.2g", worst_kkt, worst_x, gap);
  return o;
}

struct DayRun {
  dispatch::DispatchCase c;
  horizon::ScenarioTimeline tl;
  horizon::HorizonConfig cfg;
  horizon::ModeComparison cmp;
  double seconds = 0.0;
  std::string error;
};

DayRun run_day() {
  DayRun d;
  try {
    d.c = io::load_case(std::string(FCSD_DATA_PATH) + "/case24.json");
    d.tl = io::load_scenario(std::string(FCSD_DATA_PATH) + "/day1.json");
    const auto t0 = Clock::now();
    d.cmp = horizon::compare_modes(d.c, d.tl, d.cfg);
    d.seconds = seconds_since(t0);
  } catch (const std::exception& e) {
    d.error = e.what();
  }
  return d;
}

// 7. Every committed online period passes the audit and the loss relaxation is tight.
Outcome criterion_online_audit(const DayRun& d) {
  Outcome o;
  if (!d.error.empty() || !d.cmp.online) {
    require(o, false, d.error.empty() ? d.cmp.online_error : d.error);
    return o;
  }
  const auto& on = *d.cmp.online;
  require(o, on.periods.size() == 96, std::to_string(on.periods.size()) + " periods committed");
  require(o, on.audit.empty(), std::to_string(on.audit.size()) + " audit violations");
  double worst_gap = 0.0;
  for (const auto& p : on.periods)
    for (std::size_t k = 0; k < p.solution.loss.size(); ++k)
      worst_gap = std::max(worst_gap, p.solution.loss[k] - std::max(p.solution.loss_c[k], p.solution.loss_d[k]));
  require(o, worst_gap <= 1e-6, fmt("loss relaxation gap %.3g MW", worst_gap));
  if (o.pass) o.detail = fmt("96 periods, 0 violations, loss gap %.2g MW", worst_gap);
  return o;
}

// 8. Online against fixed allocation on the bundled day.
Outcome criterion_modes(const DayRun& d) {
  Outcome o;
  if (!d.error.empty() || !d.cmp.online || !d.cmp.fixed) {
    require(o, false, !d.error.empty() ? d.error : d.cmp.online_error + d.cmp.fixed_error);
    return o;
  }
  const auto &on = *d.cmp.online, &fx = *d.cmp.fixed;
  require(o, std::abs(d.c.disturbance.kappa - 0.15) < 1e-12, "case kappa is not 0.15");
  require(o, on.cost.total() <= fx.cost.total(), fmt("online cost %.6g > fixed %.6g", on.cost.total(), fx.cost.total()));
  require(o, on.curtailment_pct < fx.curtailment_pct,
          fmt("online curtailment %.3g%% not below %.3g%%", on.curtailment_pct, fx.curtailment_pct));
  require(o, on.frequency_failures() == 0, "online frequency failures");

  // Evening peak: the committed period with the largest load in the second half of the day.
  int peak = -1;
  double peak_load = -1.0;
  for (const auto& p : fx.periods) {
    double l = 0.0;
    for (double x : p.load) l += x;
    if (p.period >= 48 && l > peak_load) {
      peak_load = l;
      peak = p.period;
    }
  }
  bool at_peak = false;
  for (const auto& v : fx.audit) at_peak |= v.family == "nadir" && static_cast<int>(v.period) == peak;
  require(o, fx.failures("nadir") >= 1 && at_peak, "no fixed-mode nadir failure at evening peak period " +
                                                       std::to_string(peak));

  const auto again = horizon::compare_modes(d.c, d.tl, d.cfg);
  const bool same = again.online && again.fixed && io::committed_csv(*again.online, d.c) == io::committed_csv(on, d.c) &&
                    io::committed_csv(*again.fixed, d.c) == io::committed_csv(fx, d.c) &&
                    io::allocation_csv(*again.online, d.c) == io::allocation_csv(on, d.c);
  require(o, same, "second run differs");
  require(o, d.seconds <= 300.0, fmt("dual run took %.1f s", d.seconds));
  if (o.pass)
    o.detail = fmt("cost %.6g vs %.6g, curtailment %.3g%%", on.cost.total(), fx.cost.total(), on.curtailment_pct) +
               fmt(" vs %.3g%%, fixed nadir failures %.0f (peak period %.0f)", fx.curtailment_pct,
                   static_cast<double>(fx.failures("nadir")), peak) +
               fmt(", deterministic; %.1f s", d.seconds);
  return o;
}

// 9. Re-solving a wall period with a shorter lead never raises its RES reserve.
Outcome criterion_zigzag(const DayRun& d) {
  Outcome o;
  if (!d.error.empty() || !d.cmp.online) {
    require(o, false, d.error.empty() ? d.cmp.online_error : d.error);
    return o;
  }
  const auto& wins = d.cmp.online->windows;
  const auto step = static_cast<std::size_t>(d.cfg.resolve_every_steps);
  std::size_t pairs = 0, rises = 0;
  double worst = 0.0;
  for (std::size_t s = 1; s < wins.size(); ++s) {
    const auto& before = wins[s - 1].periods[step];
    const auto& after = wins[s].periods[0];
    for (std::size_t j = 0; j < before.rw.size(); ++j) {
      ++pairs;
      const double rise = after.rw[j] - before.rw[j];
      if (rise > 1e-6) ++rises;
      worst = std::max(worst, rise);
    }
  }
  require(o, pairs > 0, "no overlapping periods");
  require(o, rises == 0, std::to_string(rises) + " of " + std::to_string(pairs) + fmt(" rose, worst %.3g MW", worst));
  if (o.pass) o.detail = std::to_string(pairs) + " farm-periods compared, none rose";
  return o;
}

// 10. Reserve sharing among RES, and storage reserve taken before RES reserve.
Outcome criterion_sharing(const DayRun& d) {
  Outcome o;
  const auto c = toy::single_bus(3, 1);
  const auto w = toy::window(c, {100.0, 110.0}, {30.0, 20.0, 12.0});
  dispatch::SolveOptions so;
  dispatch::ChaSettings cs;
  const auto r = dispatch::solve_window(c, w, dispatch::window_halfspaces(c, w, cs), so);
  const auto diag = dispatch::sharing_diagnostics(r.solution, c, w);
  double worst = 0.0;
  std::size_t checked = 0;
  auto scan = [&](const dispatch::SharingDiagnostics& sd) {
    for (std::size_t t = 0; t < sd.res_ratio_spread.size(); ++t)
      if (std::count(sd.res_included[t].begin(), sd.res_included[t].end(), true) >= 2) {
        ++checked;
        worst = std::max(worst, sd.res_ratio_spread[t]);
      }
  };
  scan(diag);
  if (d.error.empty() && d.cmp.online)
    for (int s = 0; s < static_cast<int>(d.cmp.online->windows.size()); ++s)
      scan(dispatch::sharing_diagnostics(d.cmp.online->windows[static_cast<std::size_t>(s)], d.c,
                                         horizon::window_for(d.tl, s, d.cfg, d.cmp.online->initial)));
  require(o, checked > 0, "no period with slack bounds");
  require(o, worst <= 1e-6, fmt("Rw/W_fore spread %.3g", worst));

  // Raise the disturbance step by step: storage reserve must move before RES reserve.
  const auto c1 = toy::single_bus(1, 1);
  auto w1 = toy::window(c1, {70.0}, {20.0});
  std::vector<double> re, rw;
  for (double dp : {0.06, 0.08, 0.10, 0.12, 0.14, 0.16}) {
    w1.periods[0].disturbance = dp;
    const auto s = dispatch::solve_window(c1, w1, dispatch::window_halfspaces(c1, w1, cs), so);
    re.push_back(s.solution.periods[0].re[0]);
    rw.push_back(s.solution.periods[0].rw[0]);
  }
  std::size_t first_re = re.size(), first_rw = rw.size();
  for (std::size_t i = 1; i < re.size(); ++i) {
    if (first_re == re.size() && re[i] > re[0] + 1e-6) first_re = i;
    if (first_rw == rw.size() && rw[i] > rw[0] + 1e-6) first_rw = i;
  }
  require(o, first_re < re.size() && first_re < first_rw, "storage reserve did not rise first");
  if (o.pass) o.detail = std::to_string(checked) + fmt(" periods, spread %.2g; ESS reserve rises first", worst);
  return o;
}

}  // namespace

int main() {
  struct Item {
    const char* name;
    std::function<Outcome()> run;
  };
  DayRun day;
  bool day_done = false;
  auto with_day = [&](Outcome (*f)(const DayRun&)) {
    return [&, f] {
      if (!day_done) {
        day = run_day();
        day_done = true;
      }
      return f(day);
    };
  };
  const std::vector<Item> items = {
      {"nadir-vs-ode", criterion_nadir},
      {"convexity", criterion_convexity},
      {"cha", criterion_cha},
      {"quickhull", criterion_quickhull},
      {"quantiles", criterion_quantiles},
      {"qp", criterion_qp},
      {"online-audit", with_day(criterion_online_audit)},
      {"mode-comparison", with_day(criterion_modes)},
      {"zigzag", with_day(criterion_zigzag)},
      {"reserve-sharing", with_day(criterion_sharing)},
  };
  int failed = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Outcome o;
    try {
      o = items[i].run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, items[i].name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
