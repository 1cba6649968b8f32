#pragma once

// Frequency-constrained look-ahead dispatch: case data, QP assembly, decoding, audit and
// reserve-sharing diagnostics.
//
// Units: MW, MWh, hours for all QP quantities. Per-unit conversion through p_base happens
// only where the aggregated inertia/damping rows are assembled.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fcsd/cha.hpp"
#include "fcsd/error.hpp"
#include "fcsd/qp.hpp"
#include "fcsd/sfr.hpp"
#include "fcsd/uncertainty.hpp"

namespace fcsd::dispatch {

struct Generator {
  std::string name;
  int bus = 0;
  double a = 0.0;     // $/MW^2
  double b = 0.0;     // $/MW
  double c = 0.0;     // $
  double rgc = 0.0;   // $/MW reserve
  double p_max = 0.0;
  double p_min = 0.0;
  double ramp_up = 0.0;    // MW per step
  double ramp_down = 0.0;  // MW per step
  double beta = 0.0;       // affine participation factor
  double inertia = 0.0;    // H_i, s
  double inv_droop = 0.0;  // 1/R_i, p.u.
  double turbine_fraction = 0.0;  // F_i, p.u.
  double time_constant = 0.0;     // T_i, s
};

struct ResUnit {
  std::string name;
  int bus = 0;
  double cap = 0.0;  // MW
  double h_max = 5.0;
  double d_max = 10.0;
  double h_fixed = 2.0;
  double d_fixed = 5.0;
};

struct EssUnit {
  std::string name;
  int bus = 0;
  double eta_c = 1.0;
  double eta_d = 1.0;
  double p_max = 0.0;  // MW
  double e_min = 0.0;  // MWh
  double e_max = 0.0;
  double e_init = 0.0;
  double h_max = 5.0;
  double d_max = 15.0;
  double h_fixed = 4.0;
  double d_fixed = 10.0;
  double dt_pfr = 0.0;  // h of primary-frequency support
};

struct Line {
  std::string name;
  int from = 0;
  int to = 0;
  double limit = 0.0;        // MW
  std::vector<double> ptdf;  // one entry per bus
};

struct LoadPoint {
  std::string name;
  int bus = 0;
};

struct Probabilities {
  double gen_up = 0.05;
  double gen_down = 0.05;
  double res_reserve = 0.05;
  double line_plus = 0.05;
  double line_minus = 0.05;
};

enum class DisturbanceKind { load_fraction, largest_unit };

struct DisturbanceRule {
  DisturbanceKind kind = DisturbanceKind::load_fraction;
  double kappa = 0.15;
};

struct DispatchCase {
  std::string name;
  int n_bus = 1;
  std::vector<Generator> generators;
  std::vector<ResUnit> res;
  std::vector<EssUnit> ess;
  std::vector<LoadPoint> loads;
  std::vector<Line> lines;
  double p_base = 100.0;        // MVA
  double load_damping = 0.0;    // D0, p.u.
  sfr::FrequencyLimits limits{};
  Probabilities alpha{};
  DisturbanceRule disturbance{};
  double rwc = 0.0;  // RES reserve cost constant
  double rec = 0.0;  // ESS reserve cost constant
  double step_hours = 0.25;

  // Validates every field; with renormalize_beta a participation vector that does not sum
  // to 1 is rescaled (and a warning appended) instead of rejected.
  void validate(bool renormalize_beta = false, std::vector<std::string>* warnings = nullptr);
};

enum class Mode { online, fixed };

inline const char* to_string(Mode m) { return m == Mode::online ? "online" : "fixed"; }

// Thermal-only aggregates entering the frequency model.
struct ThermalAggregate {
  double inertia = 0.0;           // sum H_i Pmax_i / Pbase
  double droop = 0.0;             // R = sum (1/R_i) Pmax_i / Pbase
  double turbine_fraction = 0.0;  // F = sum F_i (1/R_i) Pmax_i / Pbase
  double time_constant = 0.0;     // capacity-weighted mean of T_i
};

inline ThermalAggregate thermal_aggregate(const DispatchCase& c) {
  ThermalAggregate a;
  double cap = 0.0, tw = 0.0;
  for (const auto& g : c.generators) {
    a.inertia += g.inertia * g.p_max / c.p_base;
    a.droop += g.inv_droop * g.p_max / c.p_base;
    a.turbine_fraction += g.turbine_fraction * g.inv_droop * g.p_max / c.p_base;
    cap += g.p_max;
    tw += g.time_constant * g.p_max;
  }
  a.time_constant = cap > 0.0 ? tw / cap : 0.0;
  return a;
}

inline sfr::AggregatedSfrParams system_params(const DispatchCase& c, double h_sys, double d_sys) {
  const auto th = thermal_aggregate(c);
  return {h_sys, d_sys, th.droop, th.turbine_fraction, th.time_constant};
}

inline double total_res_cap(const DispatchCase& c) {
  double s = 0.0;
  for (const auto& r : c.res) s += r.cap;
  return s;
}

// Disturbance in p.u. for a period with the given total load (MW).
inline double disturbance_pu(const DispatchCase& c, double total_load) {
  if (c.disturbance.kind == DisturbanceKind::largest_unit) {
    double m = 0.0;
    for (const auto& g : c.generators) m = std::max(m, g.p_max);
    return m / c.p_base;
  }
  return c.disturbance.kappa * total_load / c.p_base;
}

inline void DispatchCase::validate(bool renormalize_beta, std::vector<std::string>* warnings) {
  auto fail = [&](const std::string& m) { throw ValidationError("case: " + m); };
  auto finite = [](std::initializer_list<double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (n_bus < 1) fail("n_bus must be >= 1");
  if (!(p_base > 0.0) || !std::isfinite(p_base)) fail("p_base must be > 0");
  if (!(load_damping >= 0.0) || !std::isfinite(load_damping)) fail("load_damping must be >= 0");
  if (!(step_hours > 0.0) || !std::isfinite(step_hours)) fail("step_hours must be > 0");
  limits.validate();
  for (double a : {alpha.gen_up, alpha.gen_down, alpha.res_reserve, alpha.line_plus, alpha.line_minus})
    if (!(a > 0.0 && a < 0.5)) fail("all probabilities must lie in (0, 0.5)");
  if (!(disturbance.kappa >= 0.0) || !std::isfinite(disturbance.kappa)) fail("disturbance kappa must be >= 0");
  if (generators.empty()) fail("at least one generator is required");
  auto bus_ok = [&](int b) { return b >= 0 && b < n_bus; };

  double beta_sum = 0.0;
  for (std::size_t i = 0; i < generators.size(); ++i) {
    const auto& g = generators[i];
    const std::string tag = "generators[" + std::to_string(i) + "] (" + g.name + "): ";
    if (!finite({g.a, g.b, g.c, g.rgc, g.p_max, g.p_min, g.ramp_up, g.ramp_down, g.beta, g.inertia, g.inv_droop,
                 g.turbine_fraction, g.time_constant}))
      fail(tag + "non-finite field");
    if (!bus_ok(g.bus)) fail(tag + "bus out of range");
    if (g.p_min > g.p_max || g.p_min < 0.0) fail(tag + "need 0 <= p_min <= p_max");
    if (g.a < 0.0) fail(tag + "quadratic fuel coefficient must be >= 0");
    if (g.beta < 0.0) fail(tag + "beta must be >= 0");
    if (g.ramp_up < 0.0 || g.ramp_down < 0.0) fail(tag + "ramp limits must be >= 0");
    if (g.inertia < 0.0 || g.inv_droop < 0.0 || g.rgc < 0.0) fail(tag + "inertia, droop gain and rgc must be >= 0");
    if (g.turbine_fraction < 0.0 || g.turbine_fraction > 1.0) fail(tag + "turbine fraction must lie in [0, 1]");
    if (!(g.time_constant > 0.0)) fail(tag + "time constant must be > 0");
    beta_sum += g.beta;
  }
  if (std::abs(beta_sum - 1.0) > 1e-9) {
    if (!renormalize_beta || !(beta_sum > 0.0))
      fail("participation factors sum to " + std::to_string(beta_sum) + ", expected 1");
    for (auto& g : generators) g.beta /= beta_sum;
    if (warnings) warnings->push_back("participation factors summed to " + std::to_string(beta_sum) + "; renormalized");
  }
  for (std::size_t j = 0; j < res.size(); ++j) {
    const auto& r = res[j];
    const std::string tag = "res[" + std::to_string(j) + "] (" + r.name + "): ";
    if (!finite({r.cap, r.h_max, r.d_max, r.h_fixed, r.d_fixed})) fail(tag + "non-finite field");
    if (!bus_ok(r.bus)) fail(tag + "bus out of range");
    if (!(r.cap > 0.0)) fail(tag + "cap must be > 0");
    if (r.h_max < 0.0 || r.d_max < 0.0 || r.h_fixed < 0.0 || r.d_fixed < 0.0)
      fail(tag + "inertia/damping values must be >= 0");
  }
  for (std::size_t k = 0; k < ess.size(); ++k) {
    const auto& e = ess[k];
    const std::string tag = "ess[" + std::to_string(k) + "] (" + e.name + "): ";
    if (!finite({e.eta_c, e.eta_d, e.p_max, e.e_min, e.e_max, e.e_init, e.h_max, e.d_max, e.h_fixed, e.d_fixed, e.dt_pfr}))
      fail(tag + "non-finite field");
    if (!bus_ok(e.bus)) fail(tag + "bus out of range");
    if (!(e.eta_c > 0.0 && e.eta_c <= 1.0 && e.eta_d > 0.0 && e.eta_d <= 1.0)) fail(tag + "efficiencies must lie in (0, 1]");
    if (!(e.p_max > 0.0)) fail(tag + "p_max must be > 0");
    if (e.dt_pfr < 0.0) fail(tag + "dt_pfr must be >= 0");
    if (e.e_min < e.p_max * e.dt_pfr - 1e-9) fail(tag + "e_min must be >= p_max * dt_pfr");
    if (!(e.e_min <= e.e_init && e.e_init <= e.e_max)) fail(tag + "need e_min <= e_init <= e_max");
    if (e.h_max < 0.0 || e.d_max < 0.0 || e.h_fixed < 0.0 || e.d_fixed < 0.0)
      fail(tag + "inertia/damping values must be >= 0");
  }
  for (std::size_t d = 0; d < loads.size(); ++d)
    if (!bus_ok(loads[d].bus)) fail("loads[" + std::to_string(d) + "]: bus out of range");
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const auto& ln = lines[l];
    const std::string tag = "lines[" + std::to_string(l) + "] (" + ln.name + "): ";
    if (!(ln.limit > 0.0) || !std::isfinite(ln.limit)) fail(tag + "limit must be > 0");
    if (static_cast<int>(ln.ptdf.size()) != n_bus) fail(tag + "ptdf needs one entry per bus");
    for (double s : ln.ptdf)
      if (!std::isfinite(s) || std::abs(s) > 1.0 + 1e-9) fail(tag + "ptdf entries must satisfy |s| <= 1");
  }
  if (!res.empty() || !ess.empty()) {
    if (!(rwc > 0.0) || !(rec > 0.0) || !std::isfinite(rwc) || !std::isfinite(rec))
      fail("reserve cost constants rwc and rec must be > 0");
  }
  // rwc/W_fore >= rwc/cap, so ordering against cap covers every forecast.
  for (const auto& r : res)
    for (const auto& e : ess)
      if (!(rwc / r.cap > rec / e.p_max))
        fail("reserve cost ordering rwc/cap > rec/p_max violated for " + r.name + " and " + e.name);
  const auto th = thermal_aggregate(*this);
  if (th.turbine_fraction > th.droop) fail("aggregate turbine fraction exceeds aggregate droop gain");
}

// ---------------------------------------------------------------------------
// Per-solve inputs.

struct PeriodInput {
  std::vector<double> load;  // MW per load point
  uncertainty::Gmm wind;     // joint RES output, MW; its mean is the forecast
  double disturbance = 0.0;  // p.u.

  double total_load() const { return std::accumulate(load.begin(), load.end(), 0.0); }
};

struct InitialState {
  std::vector<double> gen_p;  // MW, previous committed output
  std::vector<double> ess_e;  // MWh, previous SoC
};

struct Window {
  std::vector<PeriodInput> periods;
  InitialState init;
};

inline InitialState default_initial_state(const DispatchCase& c) {
  InitialState s;
  for (const auto& g : c.generators) s.gen_p.push_back(0.5 * (g.p_min + g.p_max));
  for (const auto& e : c.ess) s.ess_e.push_back(e.e_init);
  return s;
}

inline std::vector<double> forecast(const PeriodInput& p) {
  const Eigen::VectorXd m = p.wind.mean();
  return {m.data(), m.data() + m.size()};
}

// ---------------------------------------------------------------------------
// Chance-constraint right-hand sides.

struct QuantileTable {
  double sum_gen_up = 0.0;    // Q(sum W | alpha_Gu)
  double sum_gen_down = 0.0;  // Q(sum W | 1 - alpha_Gd)
  std::vector<double> res_reserve;  // Q(W_j | alpha_Rw)
  std::vector<double> line_plus;    // Q(sum s_aff W | 1 - alpha_L+)
  std::vector<double> line_minus;   // Q(sum -s_aff W | 1 - alpha_L-)
};

struct LineFactors {
  std::vector<double> s_aff;  // per RES
  double m = 0.0;
};

inline LineFactors line_factors(const DispatchCase& c, const Line& ln) {
  LineFactors f;
  for (const auto& g : c.generators) f.m += ln.ptdf[static_cast<std::size_t>(g.bus)] * g.beta;
  for (const auto& r : c.res) f.s_aff.push_back(ln.ptdf[static_cast<std::size_t>(r.bus)] - f.m);
  return f;
}

inline QuantileTable reformulate_quantiles(const DispatchCase& c, const uncertainty::Gmm& g) {
  using uncertainty::affine_project;
  using uncertainty::quantile;
  QuantileTable q;
  const auto nw = static_cast<Eigen::Index>(c.res.size());
  if (nw == 0) {
    q.line_plus.assign(c.lines.size(), 0.0);
    q.line_minus.assign(c.lines.size(), 0.0);
    return q;
  }
  if (static_cast<Eigen::Index>(g.dim()) != nw)
    throw ValidationError("wind GMM has dimension " + std::to_string(g.dim()) + ", case has " +
                          std::to_string(nw) + " RES units");
  const auto sum = affine_project(g, Eigen::VectorXd::Ones(nw), 0.0);
  q.sum_gen_up = quantile(sum, c.alpha.gen_up);
  q.sum_gen_down = quantile(sum, 1.0 - c.alpha.gen_down);
  for (Eigen::Index j = 0; j < nw; ++j)
    q.res_reserve.push_back(quantile(affine_project(g, Eigen::VectorXd::Unit(nw, j), 0.0), c.alpha.res_reserve));
  for (const auto& ln : c.lines) {
    const auto f = line_factors(c, ln);
    const Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(f.s_aff.data(), nw);
    q.line_plus.push_back(quantile(affine_project(g, a, 0.0), 1.0 - c.alpha.line_plus));
    q.line_minus.push_back(quantile(affine_project(g, -a, 0.0), 1.0 - c.alpha.line_minus));
  }
  return q;
}

// ---------------------------------------------------------------------------
// Nadir half-spaces per period.

struct ChaSettings {
  std::size_t n_samples = 50000;
  std::uint64_t seed = 1;
  std::size_t max_hyperplanes = 12;
  unsigned threads = 1;
};

// Sampling box: thermal-only contributions up to every RES/ESS at its maximum.
inline std::pair<cha::Bounds, cha::Bounds> cha_box(const DispatchCase& c) {
  const auto th = thermal_aggregate(c);
  double h_hi = th.inertia, d_hi = c.load_damping;
  for (const auto& r : c.res) {
    h_hi += r.h_max * r.cap / c.p_base;
    d_hi += r.d_max * r.cap / c.p_base;
  }
  for (const auto& e : c.ess) {
    h_hi += e.h_max * e.p_max / c.p_base;
    d_hi += e.d_max * e.p_max / c.p_base;
  }
  return {{th.inertia, h_hi}, {c.load_damping, d_hi}};
}

inline cha::NadirSystem nadir_system(const DispatchCase& c, double disturbance) {
  const auto th = thermal_aggregate(c);
  cha::NadirSystem s;
  s.droop = th.droop;
  s.turbine_fraction = th.turbine_fraction;
  s.time_constant = th.time_constant;
  s.disturbance = disturbance;
  s.nominal = c.limits.nominal;
  s.limit = c.limits.max_deviation;
  return s;
}

// Half-spaces for one period, or nullptr when no constraint is needed (the box collapses to
// a single nadir-feasible point). Throws EmptyRegionError when no point is feasible.
inline std::shared_ptr<const cha::HalfspaceSet> period_halfspaces(const DispatchCase& c, double disturbance,
                                                                 const ChaSettings& s, cha::HalfspaceCache* cache) {
  auto [hb, db] = cha_box(c);
  const auto sys = nadir_system(c, disturbance);
  if (hb.hi - hb.lo <= 0.0 && db.hi - db.lo <= 0.0) {
    if (sys.feasible({hb.lo, db.lo})) return nullptr;
    throw EmptyRegionError("nadir limit violated with no adjustable inertia or damping");
  }
  // A box flat in one direction still needs a 2-D region for the hull.
  if (hb.hi - hb.lo <= 0.0) hb.hi = hb.lo + 1e-9 * std::max(1.0, hb.lo);
  if (db.hi - db.lo <= 0.0) db.hi = db.lo + 1e-9 * std::max(1.0, db.lo);
  cha::ChaConfig cfg;
  cfg.n_samples = s.n_samples;
  cfg.h_bounds = hb;
  cfg.d_bounds = db;
  cfg.seed = s.seed;
  cfg.max_hyperplanes = s.max_hyperplanes;
  cfg.threads = s.threads;
  if (cache) return cache->get(sys, cfg);
  return std::make_shared<const cha::HalfspaceSet>(cha::build_nadir_halfspaces(sys, cfg));
}

using HalfspaceList = std::vector<std::shared_ptr<const cha::HalfspaceSet>>;

inline HalfspaceList window_halfspaces(const DispatchCase& c, const Window& w, const ChaSettings& s,
                                       cha::HalfspaceCache* cache = nullptr) {
  HalfspaceList out;
  for (std::size_t t = 0; t < w.periods.size(); ++t) {
    try {
      out.push_back(period_halfspaces(c, w.periods[t].disturbance, s, cache));
    } catch (const EmptyRegionError& e) {
      throw EmptyRegionError("period " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// QP assembly.

struct PeriodIndex {
  std::vector<int> p, rg;                  // generators
  std::vector<int> w_sche, rw, h_res, d_res;  // RES
  std::vector<int> p_ess, re, e, loss, h_ess, d_ess;  // ESS
};

struct IndexMap {
  std::vector<PeriodIndex> periods;
  int n_vars = 0;
};

struct BuildOptions {
  Mode mode = Mode::online;
  // Adds the RoCoF, steady-state and nadir rows. Fixed-mode rolling runs switch this off
  // and audit the frequency metrics afterwards instead.
  bool enforce_frequency = true;
};

struct BuiltQp {
  qp::QpProblem problem;
  IndexMap index;
  std::vector<QuantileTable> quantiles;
};

namespace detail {

inline std::string tag(const char* what, const std::string& unit, std::size_t t) {
  return std::string(what) + "[" + unit + "," + std::to_string(t) + "]";
}

// Structural shortages that make a period infeasible regardless of prices.
inline void presolve_checks(const DispatchCase& c, const Window& w) {
  if (w.init.gen_p.size() != c.generators.size() || w.init.ess_e.size() != c.ess.size())
    throw ValidationError("initial state does not match the case");
  double gmax = 0.0, emax = 0.0;
  for (const auto& g : c.generators) gmax += g.p_max;
  for (const auto& e : c.ess) emax += e.p_max;
  double gmin = 0.0;
  for (const auto& g : c.generators) gmin += g.p_min;
  for (std::size_t t = 0; t < w.periods.size(); ++t) {
    const auto& p = w.periods[t];
    if (p.load.size() != c.loads.size()) throw ValidationError("period " + std::to_string(t) + ": load vector size");
    if (!c.res.empty() && p.wind.dim() != c.res.size())
      throw ValidationError("period " + std::to_string(t) + ": wind GMM dimension");
    if (!(p.disturbance >= 0.0) || !std::isfinite(p.disturbance))
      throw ValidationError("period " + std::to_string(t) + ": disturbance must be >= 0");
    const auto wf = c.res.empty() ? std::vector<double>{} : forecast(p);
    for (std::size_t j = 0; j < wf.size(); ++j)
      if (wf[j] < 0.0 || wf[j] > c.res[j].cap * (1.0 + 1e-9))
        throw ValidationError("period " + std::to_string(t) + ": forecast of " + c.res[j].name +
                              " outside [0, cap]");
    const double wsum = std::accumulate(wf.begin(), wf.end(), 0.0);
    const double load = p.total_load();
    if (gmax + wsum + emax < load) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "period %zu: load %.3f MW exceeds total capacity %.3f MW", t, load,
                    gmax + wsum + emax);
      throw InfeasibleError(buf);
    }
    if (gmin - emax > load) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "period %zu: load %.3f MW below thermal minimum less storage %.3f MW", t,
                    load, gmin - emax);
      throw InfeasibleError(buf);
    }
  }
}

}  // namespace detail

inline BuiltQp build_qp(const DispatchCase& c, const Window& w, const BuildOptions& opt,
                        const HalfspaceList& halfspaces) {
  using Terms = qp::QpBuilder::Terms;
  detail::presolve_checks(c, w);
  const std::size_t nt = w.periods.size();
  if (nt == 0) throw ValidationError("window has no periods");
  const bool need_cha = opt.enforce_frequency;
  if (need_cha && halfspaces.size() != nt) throw ValidationError("one half-space set per period is required");

  const auto th = thermal_aggregate(c);
  const double f0 = c.limits.nominal;
  const double phi = c.limits.max_deviation / f0;  // droop reserve per unit D
  const double rho = c.limits.rocof / f0;          // inertia reserve per unit 2H
  const double dt = c.step_hours;

  BuiltQp out;
  qp::QpBuilder b;
  out.index.periods.resize(nt);

  for (std::size_t t = 0; t < nt; ++t) {
    const auto& in = w.periods[t];
    auto& ix = out.index.periods[t];
    const auto q = reformulate_quantiles(c, in.wind);
    out.quantiles.push_back(q);
    const auto wf = c.res.empty() ? std::vector<double>{} : forecast(in);

    for (const auto& g : c.generators) {
      const int p = b.add_var(detail::tag("P", g.name, t), g.p_min, g.p_max);
      const double rg_floor = g.inv_droop * g.p_max * c.limits.steady_state / f0;
      const int rg = b.add_var(detail::tag("Rg", g.name, t), rg_floor, g.p_max);
      b.add_quadratic(p, p, g.a);
      b.add_linear(p, g.b);
      b.add_constant(g.c);
      b.add_linear(rg, g.rgc);
      ix.p.push_back(p);
      ix.rg.push_back(rg);
    }
    for (std::size_t j = 0; j < c.res.size(); ++j) {
      const auto& r = c.res[j];
      const double W = std::max(0.0, wf[j]);
      ix.w_sche.push_back(b.add_var(detail::tag("Wsche", r.name, t), 0.0, W));
      ix.rw.push_back(b.add_var(detail::tag("Rw", r.name, t), 0.0, W));
      const bool fixed = opt.mode == Mode::fixed;
      ix.h_res.push_back(b.add_var(detail::tag("H", r.name, t), fixed ? r.h_fixed : 0.0, fixed ? r.h_fixed : r.h_max));
      ix.d_res.push_back(b.add_var(detail::tag("D", r.name, t), fixed ? r.d_fixed : 0.0, fixed ? r.d_fixed : r.d_max));
      if (W > 0.0) b.add_quadratic(ix.rw[j], ix.rw[j], c.rwc / W);
    }
    for (const auto& e : c.ess) {
      const bool fixed = opt.mode == Mode::fixed;
      const int p = b.add_var(detail::tag("Pess", e.name, t), -e.p_max, e.p_max);
      const int re = b.add_var(detail::tag("Re", e.name, t), 0.0, e.p_max);
      const int en = b.add_var(detail::tag("E", e.name, t), e.e_min, e.e_max);
      const int loss = b.add_var(detail::tag("Loss", e.name, t));
      ix.h_ess.push_back(b.add_var(detail::tag("H", e.name, t), fixed ? e.h_fixed : 0.0, fixed ? e.h_fixed : e.h_max));
      ix.d_ess.push_back(b.add_var(detail::tag("D", e.name, t), fixed ? e.d_fixed : 0.0, fixed ? e.d_fixed : e.d_max));
      b.add_linear(loss, 1.0);
      b.add_quadratic(re, re, c.rec / e.p_max);
      ix.p_ess.push_back(p);
      ix.re.push_back(re);
      ix.e.push_back(en);
      ix.loss.push_back(loss);
    }

    // Power balance.
    Terms bal;
    for (int v : ix.p) bal.emplace_back(v, 1.0);
    for (int v : ix.w_sche) bal.emplace_back(v, 1.0);
    for (int v : ix.p_ess) bal.emplace_back(v, 1.0);
    b.add_eq("balance[" + std::to_string(t) + "]", bal, in.total_load());

    // Generator headroom and ramps.
    for (std::size_t i = 0; i < c.generators.size(); ++i) {
      const auto& g = c.generators[i];
      b.add_le(detail::tag("headroom", g.name, t), {{ix.p[i], 1.0}, {ix.rg[i], 1.0}}, g.p_max);
      if (t == 0) {
        b.add_le(detail::tag("ramp_up", g.name, t), {{ix.p[i], 1.0}}, w.init.gen_p[i] + g.ramp_up);
        b.add_le(detail::tag("ramp_down", g.name, t), {{ix.p[i], -1.0}}, g.ramp_down - w.init.gen_p[i]);
      } else {
        const int prev = out.index.periods[t - 1].p[i];
        b.add_le(detail::tag("ramp_up", g.name, t), {{ix.p[i], 1.0}, {prev, -1.0}}, g.ramp_up);
        b.add_le(detail::tag("ramp_down", g.name, t), {{prev, 1.0}, {ix.p[i], -1.0}}, g.ramp_down);
      }
    }

    // RES split and chance reserve.
    for (std::size_t j = 0; j < c.res.size(); ++j) {
      const auto& r = c.res[j];
      b.add_eq(detail::tag("res_split", r.name, t), {{ix.w_sche[j], 1.0}, {ix.rw[j], 1.0}}, std::max(0.0, wf[j]));
      b.add_le(detail::tag("res_reserve", r.name, t),
               {{ix.w_sche[j], 1.0}, {ix.d_res[j], r.cap * phi}, {ix.h_res[j], 2.0 * r.cap * rho}}, q.res_reserve[j]);
    }

    // Storage.
    for (std::size_t k = 0; k < c.ess.size(); ++k) {
      const auto& e = c.ess[k];
      Terms soc{{ix.e[k], 1.0}, {ix.p_ess[k], dt}, {ix.loss[k], dt}};
      double rhs = 0.0;
      if (t == 0)
        rhs = w.init.ess_e[k];
      else
        soc.emplace_back(out.index.periods[t - 1].e[k], -1.0);
      b.add_eq(detail::tag("soc", e.name, t), soc, rhs);
      b.add_le(detail::tag("ess_headroom", e.name, t), {{ix.p_ess[k], 1.0}, {ix.re[k], 1.0}}, e.p_max);
      b.add_ge(detail::tag("loss_discharge", e.name, t), {{ix.loss[k], 1.0}, {ix.p_ess[k], -(1.0 / e.eta_d - 1.0)}}, 0.0);
      b.add_ge(detail::tag("loss_charge", e.name, t), {{ix.loss[k], 1.0}, {ix.p_ess[k], -(e.eta_c - 1.0)}}, 0.0);
      b.add_ge(detail::tag("ess_reserve", e.name, t),
               {{ix.re[k], 1.0}, {ix.d_ess[k], -e.p_max * phi}, {ix.h_ess[k], -2.0 * e.p_max * rho}}, 0.0);
    }

    // Aggregated inertia and damping as expressions: H_sys = h0 + h_terms, D_sys = d0 + d_terms.
    Terms h_terms, d_terms;
    for (std::size_t j = 0; j < c.res.size(); ++j) {
      h_terms.emplace_back(ix.h_res[j], c.res[j].cap / c.p_base);
      d_terms.emplace_back(ix.d_res[j], c.res[j].cap / c.p_base);
    }
    for (std::size_t k = 0; k < c.ess.size(); ++k) {
      h_terms.emplace_back(ix.h_ess[k], c.ess[k].p_max / c.p_base);
      d_terms.emplace_back(ix.d_ess[k], c.ess[k].p_max / c.p_base);
    }
    const double h0 = th.inertia, d0 = c.load_damping;
    if (opt.enforce_frequency) {
      const std::string ts = std::to_string(t);
      b.add_ge("rocof[" + ts + "]", h_terms, f0 * in.disturbance / (2.0 * c.limits.rocof) - h0);
      b.add_ge("steady_state[" + ts + "]", d_terms, f0 * in.disturbance / c.limits.steady_state - th.droop - d0);
      if (const auto& hs = halfspaces[t]) {
        for (std::size_t pidx = 0; pidx < hs->planes.size(); ++pidx) {
          const auto& pl = hs->planes[pidx];
          Terms row;
          for (const auto& [v, k] : h_terms) row.emplace_back(v, pl.w_h * k);
          for (const auto& [v, k] : d_terms) row.emplace_back(v, pl.w_d * k);
          b.add_ge("nadir[" + ts + "," + std::to_string(pidx) + "]", row, -(pl.b + pl.w_h * h0 + pl.w_d * d0));
        }
      }
    }

    // Affine-regulation generator limits (rows multiplied through by beta_i).
    for (std::size_t i = 0; i < c.generators.size() && !c.res.empty(); ++i) {
      const auto& g = c.generators[i];
      if (!(g.beta > 0.0)) continue;
      Terms up{{ix.p[i], 1.0}, {ix.rg[i], 1.0}};
      Terms dn{{ix.p[i], 1.0}};
      for (std::size_t j = 0; j < c.res.size(); ++j) {
        up.emplace_back(ix.rw[j], g.beta);
        up.emplace_back(ix.w_sche[j], g.beta);
        dn.emplace_back(ix.rw[j], g.beta);
        dn.emplace_back(ix.w_sche[j], g.beta);
      }
      b.add_le(detail::tag("affine_up", g.name, t), up, g.p_max + g.beta * q.sum_gen_up);
      b.add_ge(detail::tag("affine_down", g.name, t), dn, g.p_min + g.beta * q.sum_gen_down);
    }

    // Line flows with affine recourse.
    for (std::size_t l = 0; l < c.lines.size(); ++l) {
      const auto& ln = c.lines[l];
      const auto f = line_factors(c, ln);
      Terms flow;
      for (std::size_t i = 0; i < c.generators.size(); ++i) {
        const double s = ln.ptdf[static_cast<std::size_t>(c.generators[i].bus)];
        if (s != 0.0) flow.emplace_back(ix.p[i], s);
      }
      for (std::size_t j = 0; j < c.res.size(); ++j) {
        if (f.s_aff[j] != 0.0) flow.emplace_back(ix.rw[j], -f.s_aff[j]);
        if (f.m != 0.0) flow.emplace_back(ix.w_sche[j], f.m);
      }
      for (std::size_t k = 0; k < c.ess.size(); ++k) {
        const double s = ln.ptdf[static_cast<std::size_t>(c.ess[k].bus)];
        if (s != 0.0) flow.emplace_back(ix.p_ess[k], s);
      }
      double load_flow = 0.0;
      for (std::size_t d = 0; d < c.loads.size(); ++d)
        load_flow += ln.ptdf[static_cast<std::size_t>(c.loads[d].bus)] * in.load[d];
      if (flow.empty()) continue;
      Terms neg = flow;
      for (auto& x : neg) x.second = -x.second;
      b.add_le(detail::tag("line_plus", ln.name, t), flow, ln.limit + load_flow - q.line_plus[l]);
      b.add_le(detail::tag("line_minus", ln.name, t), neg, ln.limit - load_flow - q.line_minus[l]);
    }
  }
  out.index.n_vars = b.size();
  out.problem = b.build();
  return out;
}

// ---------------------------------------------------------------------------
// Decoded solution.

struct PeriodSolution {
  std::vector<double> p, rg;
  std::vector<double> w_sche, rw, h_res, d_res;
  std::vector<double> p_ess, re, e, loss, loss_c, loss_d, h_ess, d_ess;
  double h_sys = 0.0;
  double d_sys = 0.0;
};

struct CostBreakdown {
  double fuel = 0.0;
  double gen_reserve = 0.0;
  double res_reserve = 0.0;
  double ess_reserve = 0.0;
  double ess_loss = 0.0;
  double total() const { return fuel + gen_reserve + res_reserve + ess_reserve + ess_loss; }
};

struct DispatchSolution {
  Mode mode = Mode::online;
  std::vector<PeriodSolution> periods;
  CostBreakdown cost;
  double objective = 0.0;  // as reported by the solver
};

inline double aggregate_inertia(const DispatchCase& c, const PeriodSolution& s) {
  double h = thermal_aggregate(c).inertia;
  for (std::size_t j = 0; j < c.res.size(); ++j) h += s.h_res[j] * c.res[j].cap / c.p_base;
  for (std::size_t k = 0; k < c.ess.size(); ++k) h += s.h_ess[k] * c.ess[k].p_max / c.p_base;
  return h;
}

inline double aggregate_damping(const DispatchCase& c, const PeriodSolution& s) {
  double d = c.load_damping;
  for (std::size_t j = 0; j < c.res.size(); ++j) d += s.d_res[j] * c.res[j].cap / c.p_base;
  for (std::size_t k = 0; k < c.ess.size(); ++k) d += s.d_ess[k] * c.ess[k].p_max / c.p_base;
  return d;
}

// Cost of one period re-evaluated from decision values.
inline CostBreakdown period_cost(const DispatchCase& c, const PeriodSolution& s, const std::vector<double>& w_fore) {
  CostBreakdown k;
  for (std::size_t i = 0; i < c.generators.size(); ++i) {
    const auto& g = c.generators[i];
    k.fuel += g.a * s.p[i] * s.p[i] + g.b * s.p[i] + g.c;
    k.gen_reserve += g.rgc * s.rg[i];
  }
  for (std::size_t j = 0; j < c.res.size(); ++j)
    if (w_fore[j] > 0.0) k.res_reserve += c.rwc / w_fore[j] * s.rw[j] * s.rw[j];
  for (std::size_t k2 = 0; k2 < c.ess.size(); ++k2) {
    k.ess_loss += s.loss[k2];
    k.ess_reserve += c.rec / c.ess[k2].p_max * s.re[k2] * s.re[k2];
  }
  return k;
}

inline void accumulate(CostBreakdown& into, const CostBreakdown& x) {
  into.fuel += x.fuel;
  into.gen_reserve += x.gen_reserve;
  into.res_reserve += x.res_reserve;
  into.ess_reserve += x.ess_reserve;
  into.ess_loss += x.ess_loss;
}

inline DispatchSolution decode_solution(const Eigen::VectorXd& x, const IndexMap& ix, const DispatchCase& c,
                                        const Window& w, Mode mode) {
  DispatchSolution sol;
  sol.mode = mode;
  auto pick = [&](const std::vector<int>& idx) {
    std::vector<double> v;
    v.reserve(idx.size());
    for (int i : idx) v.push_back(x[i]);
    return v;
  };
  for (std::size_t t = 0; t < ix.periods.size(); ++t) {
    const auto& pi = ix.periods[t];
    PeriodSolution s;
    s.p = pick(pi.p);
    s.rg = pick(pi.rg);
    s.w_sche = pick(pi.w_sche);
    s.rw = pick(pi.rw);
    s.h_res = pick(pi.h_res);
    s.d_res = pick(pi.d_res);
    s.p_ess = pick(pi.p_ess);
    s.re = pick(pi.re);
    s.e = pick(pi.e);
    s.loss = pick(pi.loss);
    s.h_ess = pick(pi.h_ess);
    s.d_ess = pick(pi.d_ess);
    for (std::size_t k = 0; k < c.ess.size(); ++k) {
      s.loss_d.push_back((1.0 / c.ess[k].eta_d - 1.0) * s.p_ess[k]);
      s.loss_c.push_back((c.ess[k].eta_c - 1.0) * s.p_ess[k]);
    }
    s.h_sys = aggregate_inertia(c, s);
    s.d_sys = aggregate_damping(c, s);
    accumulate(sol.cost, period_cost(c, s, c.res.empty() ? std::vector<double>{} : forecast(w.periods[t])));
    sol.periods.push_back(std::move(s));
  }
  return sol;
}

struct SolveOptions {
  BuildOptions build{};
  qp::QpOptions qp{};
  SolveOptions() {
    qp.tol = 1e-10;
    qp.max_iter = 300;
  }
};

struct SolveOutcome {
  DispatchSolution solution;
  qp::QpResult qp;
  BuiltQp built;
};

// Build, solve and decode one window. Infeasible -> InfeasibleError with the solver's
// most-violated constraints; no convergence -> NumericError.
inline SolveOutcome solve_window(const DispatchCase& c, const Window& w, const HalfspaceList& hs,
                                 const SolveOptions& opt = {}) {
  SolveOutcome out;
  out.built = build_qp(c, w, opt.build, hs);
  out.qp = qp::solve_qp(out.built.problem, opt.qp);
  if (out.qp.status == qp::QpStatus::infeasible) {
    std::string msg = "dispatch QP infeasible";
    for (const auto& d : out.qp.diagnostics) msg += "\n  " + d;
    throw InfeasibleError(msg);
  }
  if (out.qp.status != qp::QpStatus::optimal && out.qp.status != qp::QpStatus::reduced_accuracy)
    throw NumericError("dispatch QP did not converge in " + std::to_string(out.qp.iterations) + " iterations");
  out.solution = decode_solution(out.qp.x, out.built.index, c, w, opt.build.mode);
  out.solution.objective = out.qp.objective;
  return out;
}

// ---------------------------------------------------------------------------
// Independent audit.

struct Violation {
  std::size_t period = 0;
  std::string family;
  std::string name;
  double magnitude = 0.0;
};

struct PeriodFrequency {
  sfr::FrequencyMetrics metrics;
  sfr::LimitCheck check;
};

struct ViolationReport {
  std::vector<Violation> violations;
  std::vector<PeriodFrequency> frequency;
  double max_loss_gap = 0.0;  // max |Loss - max(LossD, LossC)|
  bool ok() const { return violations.empty(); }
  bool only_nadir() const {
    return !violations.empty() &&
           std::all_of(violations.begin(), violations.end(), [](const Violation& v) { return v.family == "nadir"; });
  }
  std::size_t count(const std::string& family) const {
    return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                  [&](const Violation& v) { return v.family == family; }));
  }
};

inline PeriodFrequency period_frequency(const DispatchCase& c, double h_sys, double d_sys, double disturbance) {
  PeriodFrequency f;
  f.metrics = sfr::metrics(system_params(c, h_sys, d_sys), disturbance, c.limits.nominal);
  f.check = sfr::check_limits(f.metrics, c.limits);
  return f;
}

// Re-evaluates every constraint family from raw data, including the exact nonlinear nadir
// at each period's aggregated inertia and damping. `tol` is in MW/MWh (and Hz, Hz/s for the
// frequency metrics, where it is capped at 1e-9).
inline ViolationReport verify_solution(const DispatchSolution& sol, const DispatchCase& c, const Window& w,
                                       double tol = 1e-6) {
  ViolationReport rep;
  if (sol.periods.size() != w.periods.size()) throw ValidationError("solution and window period counts differ");
  auto flag = [&](std::size_t t, const char* fam, const std::string& name, double excess, double lim) {
    if (excess > lim) rep.violations.push_back({t, fam, name, excess});
  };
  const double ftol = std::min(tol, 1e-9);
  const double f0 = c.limits.nominal;
  const double phi = c.limits.max_deviation / f0, rho = c.limits.rocof / f0;
  for (std::size_t t = 0; t < sol.periods.size(); ++t) {
    const auto& s = sol.periods[t];
    const auto& in = w.periods[t];
    const auto q = reformulate_quantiles(c, in.wind);
    const auto wf = c.res.empty() ? std::vector<double>{} : forecast(in);

    double gen = 0.0;
    for (double v : s.p) gen += v;
    for (double v : s.w_sche) gen += v;
    for (double v : s.p_ess) gen += v;
    flag(t, "balance", "balance", std::abs(gen - in.total_load()), tol);

    for (std::size_t i = 0; i < c.generators.size(); ++i) {
      const auto& g = c.generators[i];
      flag(t, "gen_limits", g.name + " headroom", s.p[i] + s.rg[i] - g.p_max, tol);
      flag(t, "gen_limits", g.name + " p_min", g.p_min - s.p[i], tol);
      const double prev = t == 0 ? w.init.gen_p[i] : sol.periods[t - 1].p[i];
      flag(t, "ramp", g.name + " up", s.p[i] - prev - g.ramp_up, tol);
      flag(t, "ramp", g.name + " down", prev - s.p[i] - g.ramp_down, tol);
      flag(t, "gen_reserve", g.name, g.inv_droop * g.p_max * c.limits.steady_state / f0 - s.rg[i], tol);
      if (g.beta > 0.0 && !c.res.empty()) {
        double sum = 0.0;
        for (std::size_t j = 0; j < c.res.size(); ++j) sum += s.rw[j] + s.w_sche[j];
        flag(t, "affine", g.name + " up", s.p[i] + s.rg[i] - g.p_max + g.beta * (sum - q.sum_gen_up), tol);
        flag(t, "affine", g.name + " down", g.p_min - s.p[i] - g.beta * (sum - q.sum_gen_down), tol);
      }
    }
    for (std::size_t j = 0; j < c.res.size(); ++j) {
      const auto& r = c.res[j];
      flag(t, "res_split", r.name, std::abs(s.w_sche[j] + s.rw[j] - wf[j]), tol);
      flag(t, "res_limits", r.name + " Wsche >= 0", -s.w_sche[j], tol);
      flag(t, "res_limits", r.name + " Wsche <= forecast", s.w_sche[j] - wf[j], tol);
      flag(t, "res_reserve", r.name,
           s.w_sche[j] + s.d_res[j] * r.cap * phi + 2.0 * s.h_res[j] * r.cap * rho - q.res_reserve[j], tol);
      flag(t, "param_box", r.name + " H", std::max(-s.h_res[j], s.h_res[j] - r.h_max), tol);
      flag(t, "param_box", r.name + " D", std::max(-s.d_res[j], s.d_res[j] - r.d_max), tol);
    }
    for (std::size_t k = 0; k < c.ess.size(); ++k) {
      const auto& e = c.ess[k];
      const double prev = t == 0 ? w.init.ess_e[k] : sol.periods[t - 1].e[k];
      flag(t, "soc", e.name + " recursion", std::abs(s.e[k] - (prev - c.step_hours * (s.p_ess[k] + s.loss[k]))), tol);
      flag(t, "soc", e.name + " bounds", std::max(e.e_min - s.e[k], s.e[k] - e.e_max), tol);
      flag(t, "ess_limits", e.name + " power", std::abs(s.p_ess[k]) - e.p_max, tol);
      flag(t, "ess_limits", e.name + " headroom", s.p_ess[k] + s.re[k] - e.p_max, tol);
      flag(t, "ess_loss", e.name, std::max(s.loss_d[k], s.loss_c[k]) - s.loss[k], tol);
      flag(t, "ess_reserve", e.name, s.d_ess[k] * e.p_max * phi + 2.0 * s.h_ess[k] * e.p_max * rho - s.re[k], tol);
      flag(t, "param_box", e.name + " H", std::max(-s.h_ess[k], s.h_ess[k] - e.h_max), tol);
      flag(t, "param_box", e.name + " D", std::max(-s.d_ess[k], s.d_ess[k] - e.d_max), tol);
      rep.max_loss_gap = std::max(rep.max_loss_gap, std::abs(s.loss[k] - std::max(s.loss_d[k], s.loss_c[k])));
    }
    for (std::size_t l = 0; l < c.lines.size(); ++l) {
      const auto& ln = c.lines[l];
      const auto f = line_factors(c, ln);
      double flow = 0.0;
      for (std::size_t i = 0; i < c.generators.size(); ++i)
        flow += ln.ptdf[static_cast<std::size_t>(c.generators[i].bus)] * s.p[i];
      for (std::size_t j = 0; j < c.res.size(); ++j) flow += -f.s_aff[j] * s.rw[j] + f.m * s.w_sche[j];
      for (std::size_t k = 0; k < c.ess.size(); ++k) flow += ln.ptdf[static_cast<std::size_t>(c.ess[k].bus)] * s.p_ess[k];
      for (std::size_t d = 0; d < c.loads.size(); ++d) flow -= ln.ptdf[static_cast<std::size_t>(c.loads[d].bus)] * in.load[d];
      flag(t, "line", ln.name + " +", flow + q.line_plus[l] - ln.limit, tol);
      flag(t, "line", ln.name + " -", -flow + q.line_minus[l] - ln.limit, tol);
    }

    const double h_sys = aggregate_inertia(c, s), d_sys = aggregate_damping(c, s);
    const auto pf = period_frequency(c, h_sys, d_sys, in.disturbance);
    flag(t, "rocof", "rocof", pf.metrics.rocof_max - c.limits.rocof, ftol);
    flag(t, "steady_state", "steady_state", pf.metrics.steady_state - c.limits.steady_state, ftol);
    flag(t, "nadir", "nadir", pf.metrics.max_deviation - c.limits.max_deviation, ftol);
    rep.frequency.push_back(pf);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Reserve-sharing diagnostics.

struct SharingDiagnostics {
  // Per period, max - min of Rw_j/W_fore,j over RES with slack bounds (0 if fewer than two).
  std::vector<double> res_ratio_spread;
  std::vector<double> ess_ratio_spread;
  // Per period: 2 a_i P_i + b_i per generator, -2 rwc_j (W_fore - W_sche) per RES.
  std::vector<std::vector<double>> gen_incremental;
  std::vector<std::vector<double>> res_incremental;
  std::vector<std::vector<bool>> res_included;
  std::vector<std::vector<bool>> ess_included;
};

// A RES enters the spread when its schedule is strictly between 0 and the forecast and at
// least one of its inertia/droop settings is off its bounds; an ESS when its headroom row
// is slack and one of its settings is interior.
inline SharingDiagnostics sharing_diagnostics(const DispatchSolution& sol, const DispatchCase& c, const Window& w,
                                              double tol = 1e-6) {
  SharingDiagnostics d;
  auto interior = [&](double v, double hi) { return v > tol && v < hi - tol; };
  for (std::size_t t = 0; t < sol.periods.size(); ++t) {
    const auto& s = sol.periods[t];
    const auto wf = c.res.empty() ? std::vector<double>{} : forecast(w.periods[t]);
    std::vector<double> gi, ri, rr, er;
    std::vector<bool> rin, ein;
    for (std::size_t i = 0; i < c.generators.size(); ++i)
      gi.push_back(2.0 * c.generators[i].a * s.p[i] + c.generators[i].b);
    for (std::size_t j = 0; j < c.res.size(); ++j) {
      const double rwcj = wf[j] > 0.0 ? c.rwc / wf[j] : 0.0;
      ri.push_back(-2.0 * rwcj * (wf[j] - s.w_sche[j]));
      const bool in = wf[j] > 0.0 && interior(s.w_sche[j], wf[j]) &&
                      (interior(s.h_res[j], c.res[j].h_max) || interior(s.d_res[j], c.res[j].d_max));
      rin.push_back(in);
      if (in) rr.push_back(s.rw[j] / wf[j]);
    }
    for (std::size_t k = 0; k < c.ess.size(); ++k) {
      const auto& e = c.ess[k];
      const bool in = s.p_ess[k] + s.re[k] < e.p_max - tol &&
                      (interior(s.h_ess[k], e.h_max) || interior(s.d_ess[k], e.d_max));
      ein.push_back(in);
      if (in) er.push_back(s.re[k] / e.p_max);
    }
    auto spread = [](const std::vector<double>& v) {
      if (v.size() < 2) return 0.0;
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      return *hi - *lo;
    };
    d.res_ratio_spread.push_back(spread(rr));
    d.ess_ratio_spread.push_back(spread(er));
    d.gen_incremental.push_back(std::move(gi));
    d.res_incremental.push_back(std::move(ri));
    d.res_included.push_back(std::move(rin));
    d.ess_included.push_back(std::move(ein));
  }
  return d;
}

}  // namespace fcsd::dispatch
