#pragma once

// Aggregated system frequency response (SFR) model.
//
// All generators, RES and ESS units are lumped into a single machine with inertia H,
// damping D, droop gain R, turbine fraction gain F and one governor-turbine time
// constant T. After a step generation loss dP (per unit on the system base) the
// frequency deviation obeys
//
//   df(s)/dP(s) = -1/(2HT) * (1 + Ts) / (s^2 + 2 zeta wn s + wn^2).
//
// Metrics are reported as magnitudes of an under-frequency event. Trajectories are
// signed (negative deviation for a generation loss).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fcsd/error.hpp"
#include "fcsd/parallel.hpp"
#include "fcsd/rng.hpp"

namespace fcsd::sfr {

struct AggregatedSfrParams {
  double inertia = 0.0;           // H, s on system base
  double damping = 0.0;           // D, p.u. (load damping + RES/ESS droop)
  double droop = 0.0;             // R, p.u. (sum of 1/R_i * Pmax_i / Pbase)
  double turbine_fraction = 0.0;  // F, p.u.
  double time_constant = 0.0;     // T, s

  void validate() const {
    const bool finite = std::isfinite(inertia) && std::isfinite(damping) && std::isfinite(droop) &&
                        std::isfinite(turbine_fraction) && std::isfinite(time_constant);
    if (!finite) throw ValidationError("SFR parameters must be finite");
    if (!(inertia > 0.0)) throw ValidationError("SFR inertia must be > 0");
    if (!(time_constant > 0.0)) throw ValidationError("SFR time constant must be > 0");
    if (droop < 0.0) throw ValidationError("SFR droop gain must be >= 0");
    if (damping < 0.0) throw ValidationError("SFR damping must be >= 0");
    if (turbine_fraction > droop)
      throw ValidationError("SFR turbine fraction F must not exceed droop gain R");
  }
};

struct FrequencyLimits {
  double nominal = 50.0;        // f0, Hz
  double max_deviation = 0.5;   // Hz
  double rocof = 0.5;           // Hz/s
  double steady_state = 0.25;   // Hz

  void validate() const {
    if (!(nominal > 0.0 && max_deviation > 0.0 && rocof > 0.0 && steady_state > 0.0))
      throw ValidationError("frequency limits must be strictly positive");
    if (steady_state > max_deviation)
      throw ValidationError("steady-state limit must not exceed the maximum deviation limit");
  }
};

struct Modes {
  double natural_frequency = 0.0;  // wn, rad/s
  double damping_ratio = 0.0;      // zeta
};

struct Nadir {
  double max_deviation = 0.0;  // Hz
  // Time of the first stationary point, s. +inf when the response creeps
  // monotonically towards its steady state (overdamped, no overshoot).
  double time = 0.0;
};

struct FrequencyMetrics {
  double rocof_max = 0.0;           // Hz/s
  double steady_state = 0.0;        // Hz
  double max_deviation = 0.0;       // Hz
  double nadir_time = 0.0;          // s
  double natural_frequency = 0.0;   // rad/s
  double damping_ratio = 0.0;
};

struct LimitCheck {
  bool rocof_ok = true;
  bool steady_state_ok = true;
  bool nadir_ok = true;
  bool all() const { return rocof_ok && steady_state_ok && nadir_ok; }
};

struct TrajectoryPoint {
  double time = 0.0;       // s
  double deviation = 0.0;  // Hz, signed
};

namespace detail {

inline Modes modes_unchecked(const AggregatedSfrParams& p) {
  const double sync = p.damping + p.droop;
  const double two_ht = 2.0 * p.inertia * p.time_constant;
  Modes m;
  m.natural_frequency = std::sqrt(sync / two_ht);
  m.damping_ratio =
      (2.0 * p.inertia + (p.damping + p.turbine_fraction) * p.time_constant) / (2.0 * std::sqrt(two_ht * sync));
  return m;
}

}  // namespace detail

inline Modes derived_modes(const AggregatedSfrParams& p) {
  p.validate();
  if (!(p.damping + p.droop > 0.0)) throw DegenerateSystemError("D + R = 0: no synchronizing gain");
  return detail::modes_unchecked(p);
}

inline double rocof_max(const AggregatedSfrParams& p, double dp, double f0) {
  p.validate();
  if (dp < 0.0) throw DomainError("disturbance must be >= 0");
  return f0 * dp / (2.0 * p.inertia);
}

inline double steady_state_deviation(const AggregatedSfrParams& p, double dp, double f0) {
  p.validate();
  if (dp < 0.0) throw DomainError("disturbance must be >= 0");
  const double sync = p.damping + p.droop;
  if (!(sync > 0.0)) throw DegenerateSystemError("D + R = 0: no synchronizing gain");
  return f0 * dp / sync;
}

namespace detail {

// Peak of the step response when zeta >= 1, from the exact modal solution.
// The impulse response (1+Ts)/((s+p1)(s+p2)) = A e^{-p1 t} + B e^{-p2 t} has at most
// one positive zero; if it has none the deviation rises monotonically to steady state.
inline Nadir overdamped_peak(const AggregatedSfrParams& p, const Modes& m, double scale) {
  const double T = p.time_constant;
  const double gain = scale / (2.0 * p.inertia * T);
  const double wn = m.natural_frequency;
  const double zeta = m.damping_ratio;
  const double q = wn * std::sqrt((zeta - 1.0) * (zeta + 1.0));
  const double p2 = zeta * wn + q;
  const double p1 = wn * wn / p2;
  const double steady = scale / (p.damping + p.droop);

  if (p2 - p1 <= 1e-9 * p2) {
    // Repeated pole: h(t) = (T + (1 - T p) t) e^{-p t}.
    const double pole = zeta * wn;
    if (T * pole <= 1.0) return {steady, std::numeric_limits<double>::infinity()};
    const double t = T / (T * pole - 1.0);
    const double e = std::exp(-pole * t);
    const double g = T * (-std::expm1(-pole * t)) / pole +
                     (1.0 - T * pole) * (1.0 - e * (1.0 + pole * t)) / (pole * pole);
    return {gain * g, t};
  }
  if (T * p1 <= 1.0) return {steady, std::numeric_limits<double>::infinity()};
  const double a = (1.0 - T * p1) / (p2 - p1);
  const double b = (T * p2 - 1.0) / (p2 - p1);
  const double t = std::log((T * p2 - 1.0) / (T * p1 - 1.0)) / (p2 - p1);
  const double g = a * (-std::expm1(-p1 * t)) / p1 + b * (-std::expm1(-p2 * t)) / p2;
  return {gain * g, t};
}

// Nadir without argument validation; requires D + R > 0, H > 0, T > 0 and F <= R.
// Used directly by the finite-difference stencils, which may step D slightly below 0.
inline Nadir nadir_unchecked(const AggregatedSfrParams& p, double dp, double f0) {
  const Modes m = modes_unchecked(p);
  const double scale = f0 * dp;
  const double zeta = m.damping_ratio;
  if (zeta < 1.0) {
    const double wn = m.natural_frequency;
    const double wr = wn * std::sqrt(1.0 - zeta * zeta);
    const double t = std::atan2(wr, zeta * wn - 1.0 / p.time_constant) / wr;
    const double overshoot =
        std::exp(-zeta * wn * t) *
        std::sqrt(p.time_constant * (p.droop - p.turbine_fraction) / (2.0 * p.inertia));
    return {scale / (p.damping + p.droop) * (1.0 + overshoot), t};
  }
  return overdamped_peak(p, m, scale);
}

}  // namespace detail

// Maximum frequency deviation and the time it occurs.
// zeta < 1 uses the closed form with atan2 picking the first positive stationary point;
// zeta >= 1 locates the peak of the exact step response.
inline Nadir delta_f_nadir(const AggregatedSfrParams& p, double dp, double f0) {
  derived_modes(p);
  if (dp < 0.0) throw DomainError("disturbance must be >= 0");
  return detail::nadir_unchecked(p, dp, f0);
}

inline FrequencyMetrics metrics(const AggregatedSfrParams& p, double dp, double f0) {
  const Modes m = derived_modes(p);
  const Nadir n = delta_f_nadir(p, dp, f0);
  FrequencyMetrics out;
  out.rocof_max = rocof_max(p, dp, f0);
  out.steady_state = steady_state_deviation(p, dp, f0);
  out.max_deviation = n.max_deviation;
  out.nadir_time = n.time;
  out.natural_frequency = m.natural_frequency;
  out.damping_ratio = m.damping_ratio;
  return out;
}

inline LimitCheck check_limits(const FrequencyMetrics& m, const FrequencyLimits& lim) {
  return {m.rocof_max <= lim.rocof, m.steady_state <= lim.steady_state, m.max_deviation <= lim.max_deviation};
}

inline constexpr double kDefaultStep = 1e-3;
inline constexpr double kDefaultHorizon = 60.0;

// Fixed-step RK4 integration of the controllable canonical realization
//   x1' = x2,  x2' = -wn^2 x1 - 2 zeta wn x2 + dP,  y = -f0/(2HT) (x1 + T x2).
// Samples at t = 0, dt, 2dt, ..., t_end.
inline std::vector<TrajectoryPoint> simulate_step_response(const AggregatedSfrParams& p, double dp, double f0,
                                                           double t_end = kDefaultHorizon,
                                                           double dt = kDefaultStep) {
  const Modes m = derived_modes(p);
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw DomainError("simulation needs dt > 0 and t_end >= 0");
  const double w2 = m.natural_frequency * m.natural_frequency;
  const double c = 2.0 * m.damping_ratio * m.natural_frequency;
  const double out_gain = -f0 / (2.0 * p.inertia * p.time_constant);
  const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));

  auto rhs = [&](double x1, double x2) { return std::array<double, 2>{x2, -w2 * x1 - c * x2 + dp}; };

  std::vector<TrajectoryPoint> out;
  out.reserve(steps + 1);
  double x1 = 0.0, x2 = 0.0;
  out.push_back({0.0, 0.0});
  for (std::size_t k = 1; k <= steps; ++k) {
    const auto k1 = rhs(x1, x2);
    const auto k2 = rhs(x1 + 0.5 * dt * k1[0], x2 + 0.5 * dt * k1[1]);
    const auto k3 = rhs(x1 + 0.5 * dt * k2[0], x2 + 0.5 * dt * k2[1]);
    const auto k4 = rhs(x1 + dt * k3[0], x2 + dt * k3[1]);
    x1 += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    x2 += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    if (!std::isfinite(x1) || !std::isfinite(x2))
      throw NumericError("step-response integration produced a non-finite state at t = " +
                         std::to_string(static_cast<double>(k) * dt));
    out.push_back({static_cast<double>(k) * dt, out_gain * (x1 + p.time_constant * x2)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Numerical convexity certificate of the nadir in (H, D).

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
};

// Realistic parameter box; F is sampled as a fraction of R.
struct ParameterBox {
  Range inertia{0.1, 20.0};
  Range damping{0.0, 15.0};
  Range time_constant{0.1, 20.0};
  Range droop{1.0, 100.0};
  Range turbine_ratio{0.0, 0.8};
};

struct ConvexityOptions {
  ParameterBox box{};
  std::size_t n_samples = 100000;
  std::uint64_t seed = 7;
  double fd_step = 1e-3;  // relative to each coordinate's range width; 1e-4 is roundoff-dominated
  double psd_tol = 1e-8;  // relative to |max eigenvalue|
  double disturbance = 0.1;
  double nominal = 50.0;
  unsigned threads = 1;
};

struct ConvexityReport {
  std::size_t n_samples = 0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  std::size_t n_violations = 0;
  // Sample attaining the most negative relative eigenvalue (for diagnostics).
  double worst_relative = std::numeric_limits<double>::infinity();
  AggregatedSfrParams worst{};
};

// f(params) evaluated at params with (inertia, damping) perturbed by the FD stencil.
using NadirFunction = std::function<double(const AggregatedSfrParams&)>;

inline ConvexityReport certify_convexity(const ConvexityOptions& opt, const NadirFunction& f) {
  if (opt.n_samples == 0) throw DomainError("certify_convexity needs at least one sample");
  const double hh = opt.fd_step * opt.box.inertia.width();
  const double hd = opt.fd_step * opt.box.damping.width();
  if (!(hh > 0.0 && hd > 0.0)) throw DomainError("finite-difference step must be positive");

  struct Local {
    double min_eig = std::numeric_limits<double>::infinity();
    double worst_rel = std::numeric_limits<double>::infinity();
    std::size_t violations = 0;
    AggregatedSfrParams worst{};
  };
  const unsigned workers = std::max(1u, opt.threads);
  std::vector<Local> partial(workers);
  const std::size_t chunk = (opt.n_samples + workers - 1) / workers;

  parallel_for(workers, workers, [&](std::size_t wb, std::size_t we) {
    for (std::size_t w = wb; w < we; ++w) {
      Local& acc = partial[w];
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(opt.n_samples, begin + chunk);
      for (std::size_t i = begin; i < end; ++i) {
        rng::Stream s(opt.seed, i);
        AggregatedSfrParams p;
        p.inertia = s.uniform(opt.box.inertia.lo, opt.box.inertia.hi);
        p.damping = s.uniform(opt.box.damping.lo, opt.box.damping.hi);
        p.time_constant = s.uniform(opt.box.time_constant.lo, opt.box.time_constant.hi);
        p.droop = s.uniform(opt.box.droop.lo, opt.box.droop.hi);
        p.turbine_fraction = s.uniform(opt.box.turbine_ratio.lo, opt.box.turbine_ratio.hi) * p.droop;

        auto at = [&](double dh, double dd) {
          AggregatedSfrParams q = p;
          q.inertia += dh;
          q.damping += dd;
          return f(q);
        };
        const double f00 = at(0, 0);
        const double fhh = (at(hh, 0) - 2.0 * f00 + at(-hh, 0)) / (hh * hh);
        const double fdd = (at(0, hd) - 2.0 * f00 + at(0, -hd)) / (hd * hd);
        const double fhd = (at(hh, hd) - at(hh, -hd) - at(-hh, hd) + at(-hh, -hd)) / (4.0 * hh * hd);

        const double mean = 0.5 * (fhh + fdd);
        const double rad = std::hypot(0.5 * (fhh - fdd), fhd);
        const double lo = mean - rad;
        const double hi = mean + rad;
        const double mag = std::max(std::abs(lo), std::abs(hi));
        acc.min_eig = std::min(acc.min_eig, lo);
        const double rel = mag > 0.0 ? lo / mag : 0.0;
        if (rel < acc.worst_rel) {
          acc.worst_rel = rel;
          acc.worst = p;
        }
        if (lo < -opt.psd_tol * std::abs(hi)) ++acc.violations;
      }
    }
  });

  ConvexityReport r;
  r.n_samples = opt.n_samples;
  for (const auto& acc : partial) {
    r.min_eigenvalue = std::min(r.min_eigenvalue, acc.min_eig);
    r.n_violations += acc.violations;
    if (acc.worst_rel < r.worst_relative) {
      r.worst_relative = acc.worst_rel;
      r.worst = acc.worst;
    }
  }
  return r;
}

// Certificate for the analytic nadir itself.
inline ConvexityReport certify_convexity(const ConvexityOptions& opt) {
  return certify_convexity(opt, [&](const AggregatedSfrParams& q) {
    return detail::nadir_unchecked(q, opt.disturbance, opt.nominal).max_deviation;
  });
}

}  // namespace fcsd::sfr
