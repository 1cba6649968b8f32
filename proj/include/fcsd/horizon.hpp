#pragma once

// Receding-horizon driver: hourly re-solve of a 4 h look-ahead window at 15 min
// resolution, committing the first hour of each solve.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fcsd/cha.hpp"
#include "fcsd/dispatch.hpp"
#include "fcsd/error.hpp"
#include "fcsd/parallel.hpp"
#include "fcsd/rng.hpp"
#include "fcsd/uncertainty.hpp"

namespace fcsd::horizon {

struct HorizonConfig {
  int step_minutes = 15;
  int horizon_steps = 16;
  int resolve_every_steps = 4;
  int commit_steps = 4;
  int day_steps = 96;

  void validate() const {
    if (step_minutes <= 0 || horizon_steps <= 0 || resolve_every_steps <= 0 || commit_steps <= 0 || day_steps <= 0)
      throw ValidationError("horizon: all step counts must be positive");
    if (!(commit_steps <= resolve_every_steps && resolve_every_steps <= horizon_steps))
      throw ValidationError("horizon: need commit_steps <= resolve_every_steps <= horizon_steps");
    if (day_steps % resolve_every_steps != 0)
      throw ValidationError("horizon: day_steps must be a multiple of resolve_every_steps");
  }
  int n_solves() const { return day_steps / resolve_every_steps; }
  double step_hours() const { return step_minutes / 60.0; }
};

// Data for one look-ahead step of one solve.
struct TimelineStep {
  std::vector<double> load;  // MW per load point
  uncertainty::Gmm wind;     // forecast distribution, MW
  double disturbance = 0.0;  // p.u.
};

struct ScenarioTimeline {
  std::uint64_t seed = 0;
  std::vector<std::vector<TimelineStep>> solves;  // [solve][lead step]

  void validate(const dispatch::DispatchCase& c, const HorizonConfig& cfg) const {
    if (solves.empty()) throw ValidationError("timeline: no solves");
    if (static_cast<int>(solves.size()) < cfg.n_solves())
      throw ValidationError("timeline: has " + std::to_string(solves.size()) + " solves, horizon needs " +
                            std::to_string(cfg.n_solves()));
    for (std::size_t s = 0; s < solves.size(); ++s) {
      const std::string tag = "timeline.solves[" + std::to_string(s) + "]";
      if (static_cast<int>(solves[s].size()) < cfg.horizon_steps)
        throw ValidationError(tag + ": fewer steps than the look-ahead window");
      for (std::size_t k = 0; k < solves[s].size(); ++k) {
        const auto& st = solves[s][k];
        if (st.load.size() != c.loads.size()) throw ValidationError(tag + ": load vector size");
        if (!c.res.empty() && st.wind.dim() != c.res.size()) throw ValidationError(tag + ": wind dimension");
        for (double l : st.load)
          if (!std::isfinite(l) || l < 0.0) throw ValidationError(tag + ": loads must be finite and >= 0");
        if (!std::isfinite(st.disturbance) || st.disturbance < 0.0)
          throw ValidationError(tag + ": disturbance must be finite and >= 0");
      }
    }
  }
};

// Daily shapes that the synthesizer turns into per-solve forecasts.
struct DayProfile {
  std::vector<double> load;                 // total MW per day step
  std::vector<double> load_share;           // per load point, sums to 1
  std::vector<std::vector<double>> wind;    // [farm][day step], capacity factor in [0, 1]

  void validate(const dispatch::DispatchCase& c, const HorizonConfig& cfg) const {
    if (static_cast<int>(load.size()) != cfg.day_steps) throw ValidationError("profile: load needs day_steps entries");
    if (load_share.size() != c.loads.size()) throw ValidationError("profile: one load share per load point");
    double s = 0.0;
    for (double v : load_share) {
      if (!(v >= 0.0)) throw ValidationError("profile: load shares must be >= 0");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("profile: load shares must sum to 1");
    for (double v : load)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("profile: loads must be finite and >= 0");
    if (wind.size() != c.res.size()) throw ValidationError("profile: one wind series per RES unit");
    for (const auto& w : wind) {
      if (static_cast<int>(w.size()) != cfg.day_steps) throw ValidationError("profile: wind needs day_steps entries");
      for (double v : w)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("profile: wind capacity factors must lie in [0, 1]");
    }
  }
};

struct SynthesisOptions {
  std::uint64_t seed = 1;
  double sigma_base = 0.03;   // forecast sd per unit of forecast at lead 0
  double growth = 0.15;       // sd multiplier 1 + growth * lead
  double correlation = 0.5;   // between farms
  double mean_noise = 0.02;   // seeded relative wobble of the forecast mean, scaled by lead
};

namespace detail {

// Zero-mean two-component mixture per unit sd: skewed toward under-production.
struct MixtureShape {
  double weight, offset, scale;
};
inline constexpr MixtureShape kShape[2] = {{0.7, 0.25, 0.8}, {0.3, -0.175 / 0.3, 1.2}};

}  // namespace detail

// Forecast distribution for one step: mean vector, per-farm sd and a fixed correlation.
inline uncertainty::Gmm forecast_gmm(const Eigen::VectorXd& mean, const Eigen::VectorXd& sd, double corr) {
  const auto n = mean.size();
  Eigen::MatrixXd base(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) base(i, j) = (i == j ? 1.0 : corr) * sd[i] * sd[j];
  std::vector<uncertainty::GmmComponent> comps;
  for (const auto& s : detail::kShape) {
    Eigen::MatrixXd cov = s.scale * s.scale * base;
    cov.diagonal().array() += 1e-9;
    comps.push_back({s.weight, mean + s.offset * sd, cov});
  }
  return uncertainty::Gmm(std::move(comps));
}

inline ScenarioTimeline synthesize_timeline(const dispatch::DispatchCase& c, const DayProfile& prof,
                                            const HorizonConfig& cfg, const SynthesisOptions& opt) {
  cfg.validate();
  prof.validate(c, cfg);
  if (!(opt.sigma_base >= 0.0) || !(opt.growth >= 0.0) || !(opt.mean_noise >= 0.0) ||
      !(opt.correlation > -1.0 && opt.correlation < 1.0))
    throw ValidationError("synthesis options out of range");
  ScenarioTimeline tl;
  tl.seed = opt.seed;
  const auto nw = static_cast<Eigen::Index>(c.res.size());
  for (int s = 0; s < cfg.n_solves(); ++s) {
    std::vector<TimelineStep> steps;
    for (int tau = 0; tau < cfg.horizon_steps; ++tau) {
      const int p = (s * cfg.resolve_every_steps + tau) % cfg.day_steps;
      TimelineStep st;
      for (double share : prof.load_share) st.load.push_back(share * prof.load[static_cast<std::size_t>(p)]);
      double total = 0.0;
      for (double l : st.load) total += l;
      st.disturbance = dispatch::disturbance_pu(c, total);
      if (nw > 0) {
        Eigen::VectorXd mean(nw), sd(nw);
        rng::Stream rs(opt.seed, static_cast<std::uint64_t>(s) * 4096u + static_cast<std::uint64_t>(tau));
        for (Eigen::Index j = 0; j < nw; ++j) {
          const double cap = c.res[static_cast<std::size_t>(j)].cap;
          const double cf = prof.wind[static_cast<std::size_t>(j)][static_cast<std::size_t>(p)];
          const double wobble = 1.0 + opt.mean_noise * (tau / static_cast<double>(cfg.horizon_steps)) * rs.normal();
          mean[j] = std::clamp(cf * cap * wobble, 0.0, cap);
          sd[j] = opt.sigma_base * mean[j] * (1.0 + opt.growth * tau);
        }
        st.wind = forecast_gmm(mean, sd, opt.correlation);
      }
      steps.push_back(std::move(st));
    }
    tl.solves.push_back(std::move(steps));
  }
  return tl;
}

// ---------------------------------------------------------------------------

struct CommittedPeriod {
  int solve = 0;
  int period = 0;  // wall-clock step index
  dispatch::PeriodSolution solution;
  std::vector<double> load;
  std::vector<double> w_fore;
  double disturbance = 0.0;
  dispatch::CostBreakdown cost;
  dispatch::PeriodFrequency frequency;
};

struct RunReport {
  dispatch::Mode mode = dispatch::Mode::online;
  dispatch::InitialState initial;
  std::vector<CommittedPeriod> periods;
  std::vector<dispatch::DispatchSolution> windows;  // full look-ahead schedule of every solve
  std::vector<double> objectives;                   // per solve
  std::vector<dispatch::Violation> audit;           // all violations found by verify_solution on committed steps
  dispatch::CostBreakdown cost;
  double curtailment_pct = 0.0;
  double max_loss_gap = 0.0;
  int n_solves = 0;
  std::size_t total_hyperplanes = 0;

  std::size_t failures(const std::string& family) const {
    return static_cast<std::size_t>(
        std::count_if(audit.begin(), audit.end(), [&](const dispatch::Violation& v) { return v.family == family; }));
  }
  std::size_t frequency_failures() const {
    return static_cast<std::size_t>(std::count_if(periods.begin(), periods.end(),
                                                  [](const CommittedPeriod& p) { return !p.frequency.check.all(); }));
  }
};

struct RollOptions {
  dispatch::ChaSettings cha{};
  dispatch::SolveOptions solve{};
  unsigned threads = 1;
  double audit_tol = 1e-6;
};

inline dispatch::Window window_for(const ScenarioTimeline& tl, int solve, const HorizonConfig& cfg,
                                   dispatch::InitialState init) {
  dispatch::Window w;
  const auto& steps = tl.solves.at(static_cast<std::size_t>(solve));
  for (int k = 0; k < cfg.horizon_steps; ++k) {
    const auto& st = steps[static_cast<std::size_t>(k)];
    w.periods.push_back({st.load, st.wind, st.disturbance});
  }
  w.init = std::move(init);
  return w;
}

// Half-spaces for every period of a window, built concurrently through a shared cache.
inline dispatch::HalfspaceList window_halfspaces(const dispatch::DispatchCase& c, const dispatch::Window& w,
                                                 const dispatch::ChaSettings& s, unsigned threads,
                                                 cha::HalfspaceCache& cache) {
  dispatch::HalfspaceList out(w.periods.size());
  parallel_for(w.periods.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; ++t) {
      try {
        out[t] = dispatch::period_halfspaces(c, w.periods[t].disturbance, s, &cache);
      } catch (const EmptyRegionError& err) {
        throw EmptyRegionError("period " + std::to_string(t) + ": " + err.what());
      }
    }
  });
  return out;
}

// Fixed mode drops the RoCoF/steady-state/nadir rows and relies on the audit instead.
inline RunReport run_rolling(const dispatch::DispatchCase& c, const ScenarioTimeline& tl, const HorizonConfig& cfg,
                             dispatch::Mode mode, const RollOptions& opt = {}, cha::HalfspaceCache* cache = nullptr) {
  cfg.validate();
  tl.validate(c, cfg);
  if (std::abs(cfg.step_hours() - c.step_hours) > 1e-12)
    throw ValidationError("case step_hours does not match the horizon step length");
  cha::HalfspaceCache local;
  cha::HalfspaceCache& hc = cache ? *cache : local;

  RunReport rep;
  rep.mode = mode;
  rep.initial = dispatch::default_initial_state(c);
  rep.n_solves = cfg.n_solves();
  auto state = rep.initial;
  double rw_sum = 0.0, wf_sum = 0.0;

  auto so = opt.solve;
  so.build.mode = mode;
  so.build.enforce_frequency = mode == dispatch::Mode::online;

  for (int s = 0; s < cfg.n_solves(); ++s) {
    const auto w = window_for(tl, s, cfg, state);
    const auto first_period = s * cfg.resolve_every_steps;
    dispatch::HalfspaceList hs;
    if (so.build.enforce_frequency) {
      try {
        hs = window_halfspaces(c, w, opt.cha, opt.threads, hc);
      } catch (const EmptyRegionError& e) {
        throw EmptyRegionError("solve " + std::to_string(s) + " (wall period " + std::to_string(first_period) +
                               "): " + e.what());
      }
      for (const auto& h : hs)
        if (h) rep.total_hyperplanes += h->size();
    }
    dispatch::SolveOutcome out;
    try {
      out = dispatch::solve_window(c, w, hs, so);
    } catch (const InfeasibleError& e) {
      throw InfeasibleError("solve " + std::to_string(s) + " (wall period " + std::to_string(first_period) +
                            "): " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("solve " + std::to_string(s) + ": " + e.what());
    }
    const auto audit = dispatch::verify_solution(out.solution, c, w, opt.audit_tol);
    rep.max_loss_gap = std::max(rep.max_loss_gap, audit.max_loss_gap);
    for (int k = 0; k < cfg.commit_steps; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      CommittedPeriod cp;
      cp.solve = s;
      cp.period = first_period + k;
      cp.solution = out.solution.periods[ku];
      cp.load = w.periods[ku].load;
      cp.w_fore = c.res.empty() ? std::vector<double>{} : dispatch::forecast(w.periods[ku]);
      cp.disturbance = w.periods[ku].disturbance;
      cp.cost = dispatch::period_cost(c, cp.solution, cp.w_fore);
      cp.frequency = audit.frequency[ku];
      dispatch::accumulate(rep.cost, cp.cost);
      for (std::size_t j = 0; j < c.res.size(); ++j) {
        rw_sum += cp.solution.rw[j];
        wf_sum += cp.w_fore[j];
      }
      for (const auto& v : audit.violations)
        if (v.period == ku) {
          auto vv = v;
          vv.period = static_cast<std::size_t>(cp.period);
          rep.audit.push_back(std::move(vv));
        }
      rep.periods.push_back(std::move(cp));
    }
    const auto& last = out.solution.periods[static_cast<std::size_t>(cfg.commit_steps - 1)];
    state.gen_p = last.p;
    state.ess_e = last.e;
    rep.objectives.push_back(out.solution.objective);
    rep.windows.push_back(std::move(out.solution));
  }
  rep.curtailment_pct = wf_sum > 0.0 ? 100.0 * rw_sum / wf_sum : 0.0;
  return rep;
}

struct FrequencyRow {
  int period = 0;
  double h_sys = 0.0;
  double d_sys = 0.0;
  double disturbance = 0.0;
  sfr::FrequencyMetrics metrics;
  sfr::LimitCheck check;
};

inline std::vector<FrequencyRow> frequency_timeline(const RunReport& rep, const dispatch::DispatchCase& c) {
  std::vector<FrequencyRow> rows;
  for (const auto& p : rep.periods) {
    const double h = dispatch::aggregate_inertia(c, p.solution), d = dispatch::aggregate_damping(c, p.solution);
    const auto f = dispatch::period_frequency(c, h, d, p.disturbance);
    rows.push_back({p.period, h, d, p.disturbance, f.metrics, f.check});
  }
  return rows;
}

struct ModeComparison {
  std::optional<RunReport> online;
  std::optional<RunReport> fixed;
  std::string online_error;
  std::string fixed_error;
};

// Runs both modes on the same timeline. A failure in one mode is recorded and does not
// stop the other.
inline ModeComparison compare_modes(const dispatch::DispatchCase& c, const ScenarioTimeline& tl,
                                    const HorizonConfig& cfg, const RollOptions& opt = {}) {
  ModeComparison out;
  cha::HalfspaceCache cache;
  try {
    out.fixed = run_rolling(c, tl, cfg, dispatch::Mode::fixed, opt, &cache);
  } catch (const InfeasibleError& e) {
    out.fixed_error = e.what();
  } catch (const NumericError& e) {
    out.fixed_error = e.what();
  }
  try {
    out.online = run_rolling(c, tl, cfg, dispatch::Mode::online, opt, &cache);
  } catch (const InfeasibleError& e) {
    out.online_error = e.what();
  } catch (const NumericError& e) {
    out.online_error = e.what();
  }
  return out;
}

}  // namespace fcsd::horizon
