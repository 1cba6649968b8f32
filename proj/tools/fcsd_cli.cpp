// fcsd: command-line front end for the frequency-constrained dispatch pipeline.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "fcsd/cha.hpp"
#include "fcsd/dispatch.hpp"
#include "fcsd/error.hpp"
#include "fcsd/horizon.hpp"
#include "fcsd/io.hpp"
#include "fcsd/sfr.hpp"
#include "fcsd/uncertainty.hpp"

#ifndef FCSD_DEFAULT_DATA_DIR
#define FCSD_DEFAULT_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace fcsd;
using ojson = nlohmann::ordered_json;

namespace {

struct Common {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool json_summary = false;
  std::string data_dir = FCSD_DEFAULT_DATA_DIR;
};

struct CaseArgs {
  std::string case_name;
  std::optional<double> kappa;
  std::optional<double> alpha;
  bool renormalize_beta = false;
};

// "case24" -> <data-dir>/case24.json unless the argument is an existing file.
fs::path resolve(const std::string& name, const Common& g) {
  if (fs::exists(name)) return name;
  fs::path p = fs::path(g.data_dir) / name;
  if (p.extension() != ".json") p += ".json";
  if (!fs::exists(p)) throw ValidationError("no such file: " + name + " (also tried " + p.string() + ")");
  return p;
}

dispatch::DispatchCase load_case(const CaseArgs& a, const Common& g) {
  std::vector<std::string> warnings;
  auto c = io::load_case(resolve(a.case_name, g), a.renormalize_beta, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (a.kappa) c.disturbance.kappa = *a.kappa;
  if (a.alpha) {
    c.alpha.gen_up = c.alpha.gen_down = c.alpha.res_reserve = c.alpha.line_plus = c.alpha.line_minus = *a.alpha;
  }
  c.validate(false, nullptr);
  return c;
}

// A --kappa override changes the disturbance attached to every step.
void apply_kappa(const CaseArgs& a, const dispatch::DispatchCase& c, horizon::ScenarioTimeline& tl) {
  if (!a.kappa) return;
  for (auto& s : tl.solves)
    for (auto& st : s) {
      double load = 0.0;
      for (double v : st.load) load += v;
      st.disturbance = dispatch::disturbance_pu(c, load);
    }
}

void add_case_flags(CLI::App* sub, CaseArgs& a) {
  sub->add_option("--case", a.case_name, "Case file, or a name looked up as <data-dir>/<name>.json")->required();
  sub->add_option("--kappa", a.kappa, "Override the disturbance fraction kappa of the case rule");
  sub->add_option("--alpha", a.alpha, "Override every chance-constraint violation probability");
  sub->add_flag("--renormalize-beta", a.renormalize_beta, "Rescale participation factors that do not sum to 1");
}

void emit(const Common& g, const ojson& j, const std::string& text) {
  if (g.json_summary)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << text;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

dispatch::ChaSettings cha_settings(std::size_t samples, const Common& g) {
  dispatch::ChaSettings s;
  s.n_samples = samples;
  s.seed = g.seed;
  s.threads = g.threads;
  return s;
}

// --- simulate-freq ---------------------------------------------------------

struct FreqArgs {
  sfr::AggregatedSfrParams p{6.0, 3.0, 25.0, 3.75, 12.0};
  double dp = 0.1;
  double f0 = 50.0;
  double t_end = sfr::kDefaultHorizon;
  double dt = sfr::kDefaultStep;
  std::string out;
};

int run_simulate(const FreqArgs& a, const Common& g) {
  a.p.validate();
  const auto m = sfr::metrics(a.p, a.dp, a.f0);
  const auto traj = sfr::simulate_step_response(a.p, a.dp, a.f0, a.t_end, a.dt);
  double peak = 0.0, t_peak = 0.0;
  for (const auto& pt : traj)
    if (std::abs(pt.deviation) > peak) {
      peak = std::abs(pt.deviation);
      t_peak = pt.time;
    }
  if (!a.out.empty()) {
    io::Csv csv(9);
    csv.header({"time_s", "deviation_hz"});
    for (const auto& pt : traj) csv.cell(pt.time).cell(pt.deviation).end();
    io::write_text(a.out, csv.str());
  }
  ojson j{{"rocof_hz_per_s", m.rocof_max},       {"steady_state_hz", m.steady_state},
          {"nadir_hz", m.max_deviation},         {"nadir_time_s", m.nadir_time},
          {"natural_frequency_rad_s", m.natural_frequency}, {"damping_ratio", m.damping_ratio},
          {"simulated_peak_hz", peak},           {"simulated_peak_time_s", t_peak}};
  std::string t;
  t += "rocof_hz_per_s     " + fmt("%.9g", m.rocof_max) + "\n";
  t += "steady_state_hz    " + fmt("%.9g", m.steady_state) + "\n";
  t += "nadir_hz           " + fmt("%.9g", m.max_deviation) + "\n";
  t += "nadir_time_s       " + fmt("%.9g", m.nadir_time) + "\n";
  t += "damping_ratio      " + fmt("%.9g", m.damping_ratio) + "\n";
  t += "simulated_peak_hz  " + fmt("%.9g", peak) + " at " + fmt("%.6g", t_peak) + " s\n";
  emit(g, j, t);
  return 0;
}

// --- check-convexity -------------------------------------------------------

int run_convexity(std::size_t samples, double dp, const Common& g) {
  sfr::ConvexityOptions o;
  o.n_samples = samples;
  o.seed = g.seed;
  o.threads = g.threads;
  o.disturbance = dp;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = sfr::certify_convexity(o);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ojson j{{"samples", r.n_samples}, {"min_eigenvalue", r.min_eigenvalue}, {"violations", r.n_violations},
          {"seconds", secs}};
  std::string t = "samples        " + std::to_string(r.n_samples) + "\nmin_eigenvalue " +
                  fmt("%.9g", r.min_eigenvalue) + "\nviolations     " + std::to_string(r.n_violations) + "\n";
  emit(g, j, t);
  return r.n_violations == 0 ? 0 : 3;
}

// --- cha -------------------------------------------------------------------

struct ChaArgs {
  std::size_t samples = 50000;
  std::size_t test_samples = 10000;
  std::uint64_t test_seed = 99;
  std::size_t max_hyperplanes = 12;
  std::string case_name;
  double droop = 25.0;
  double turbine_fraction = 3.75;
  double time_constant = 12.0;
  double limit = 0.5;
  double nominal = 50.0;
  double dp = 0.13;
  std::vector<double> h_box{4.0, 9.0};
  std::vector<double> d_box{2.0, 8.0};
  std::string out;
};

int run_cha(const ChaArgs& a, const Common& g) {
  cha::NadirSystem sys;
  cha::ChaConfig cfg;
  cfg.n_samples = a.samples;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.max_hyperplanes = a.max_hyperplanes;
  if (!a.case_name.empty()) {
    CaseArgs ca;
    ca.case_name = a.case_name;
    const auto c = load_case(ca, g);
    sys = dispatch::nadir_system(c, a.dp);
    std::tie(cfg.h_bounds, cfg.d_bounds) = dispatch::cha_box(c);
  } else {
    if (a.h_box.size() != 2 || a.d_box.size() != 2) throw ValidationError("--h-box and --d-box take two values");
    sys.droop = a.droop;
    sys.turbine_fraction = a.turbine_fraction;
    sys.time_constant = a.time_constant;
    sys.disturbance = a.dp;
    sys.nominal = a.nominal;
    sys.limit = a.limit;
    cfg.h_bounds = {a.h_box[0], a.h_box[1]};
    cfg.d_bounds = {a.d_box[0], a.d_box[1]};
  }
  cfg.validate();
  const auto hs = cha::build_nadir_halfspaces(sys, cfg);
  const auto rep = cha::classification_error(
      hs, [&](const cha::Point2& p) { return sys.feasible(p); }, cfg.h_bounds, cfg.d_bounds, a.test_samples,
      a.test_seed);
  if (!a.out.empty()) {
    io::Csv csv(17);
    csv.header({"w_h", "w_d", "b"});
    for (const auto& h : hs.planes) csv.cell(h.w_h).cell(h.w_d).cell(h.b).end();
    io::write_text(a.out, csv.str());
  }
  ojson j{{"training_samples", hs.info.n_samples}, {"feasible_samples", hs.info.n_feasible},
          {"hyperplanes", hs.size()},               {"hull_vertices", hs.info.hull_vertices},
          {"test_samples", rep.n_test},             {"error_rate_pct", 100.0 * rep.error_rate},
          {"false_safe", rep.false_safe},           {"false_unsafe", rep.false_unsafe},
          {"build_seconds", hs.info.build_seconds}};
  std::string t = "training_samples,hyperplanes,error_rate_pct,false_safe,false_unsafe,build_seconds\n";
  t += std::to_string(hs.info.n_samples) + "," + std::to_string(hs.size()) + "," +
       fmt("%.6g", 100.0 * rep.error_rate) + "," + std::to_string(rep.false_safe) + "," +
       std::to_string(rep.false_unsafe) + "," + fmt("%.6g", hs.info.build_seconds) + "\n";
  emit(g, j, t);
  return 0;
}

// --- quantile --------------------------------------------------------------

struct QuantileArgs {
  std::string gmm;
  std::vector<double> alphas{0.05};
  std::vector<double> coeffs;
  double offset = 0.0;
};

int run_quantile(const QuantileArgs& a, const Common& g) {
  const auto j = io::parse_file(resolve(a.gmm, g));
  io::Fields f(j, "$");
  const auto gmm = io::gmm_from_json(f);
  f.finish();
  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(gmm.dim()));
  if (!a.coeffs.empty()) {
    if (a.coeffs.size() != gmm.dim())
      throw ValidationError("--coeffs needs " + std::to_string(gmm.dim()) + " values");
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) w[static_cast<Eigen::Index>(i)] = a.coeffs[i];
  }
  const auto u = uncertainty::affine_project(gmm, w, a.offset);
  ojson out = ojson::array();
  std::string t = "alpha,quantile,cdf\n";
  for (double al : a.alphas) {
    const double q = uncertainty::quantile(u, al);
    const double cd = uncertainty::cdf(u, q);
    out.push_back(ojson{{"alpha", al}, {"quantile", q}, {"cdf", cd}});
    t += fmt("%.9g", al) + "," + fmt("%.17g", q) + "," + fmt("%.17g", cd) + "\n";
  }
  emit(g, ojson{{"quantiles", out}}, t);
  return 0;
}

// --- scenario --------------------------------------------------------------

struct ScenarioArgs {
  CaseArgs ca;
  std::string profile;
  std::string out;
  horizon::SynthesisOptions syn{};
};

int run_scenario(ScenarioArgs a, const Common& g) {
  const auto c = load_case(a.ca, g);
  const auto prof = io::load_profile(resolve(a.profile, g), c);
  a.syn.seed = g.seed;
  const horizon::HorizonConfig cfg;
  const auto tl = horizon::synthesize_timeline(c, prof, cfg, a.syn);
  io::save_scenario(tl, a.out);
  emit(g, ojson{{"scenario", a.out}, {"solves", tl.solves.size()}, {"seed", tl.seed}},
       "wrote " + a.out + " (" + std::to_string(tl.solves.size()) + " solves)\n");
  return 0;
}

// --- solve / verify --------------------------------------------------------

struct SolveArgs {
  CaseArgs ca;
  std::string scenario;
  int index = 0;
  std::string mode = "online";
  std::size_t samples = 50000;
  std::string out;
  std::string solution;
};

dispatch::Mode parse_mode(const std::string& m) {
  if (m == "online") return dispatch::Mode::online;
  if (m == "fixed") return dispatch::Mode::fixed;
  throw ValidationError("mode must be online or fixed, got " + m);
}

// The window of one solve index, started from the case's default initial state.
dispatch::Window one_window(const SolveArgs& a, const dispatch::DispatchCase& c, const Common& g) {
  auto tl = io::load_scenario(resolve(a.scenario, g));
  apply_kappa(a.ca, c, tl);
  const horizon::HorizonConfig cfg;
  tl.validate(c, cfg);
  if (a.index < 0 || a.index >= cfg.n_solves())
    throw ValidationError("--index must be in [0, " + std::to_string(cfg.n_solves()) + ")");
  return horizon::window_for(tl, a.index, cfg, dispatch::default_initial_state(c));
}

ojson audit_json(const dispatch::ViolationReport& v) {
  ojson fails = ojson::array();
  for (const auto& x : v.violations)
    fails.push_back(ojson{{"period", x.period}, {"family", x.family}, {"name", x.name}, {"magnitude", x.magnitude}});
  return ojson{{"violations", v.violations.size()}, {"max_loss_gap", v.max_loss_gap}, {"details", fails}};
}

std::string audit_text(const dispatch::ViolationReport& v) {
  std::string t = "violations     " + std::to_string(v.violations.size()) + "\n";
  t += "max_loss_gap   " + fmt("%.3g", v.max_loss_gap) + "\n";
  for (const auto& x : v.violations)
    t += "  t=" + std::to_string(x.period) + " " + x.family + " " + x.name + " by " + fmt("%.6g", x.magnitude) + "\n";
  return t;
}

int run_solve(const SolveArgs& a, const Common& g) {
  const auto c = load_case(a.ca, g);
  const auto w = one_window(a, c, g);
  dispatch::SolveOptions so;
  so.build.mode = parse_mode(a.mode);
  const auto hs = dispatch::window_halfspaces(c, w, cha_settings(a.samples, g));
  const auto out = dispatch::solve_window(c, w, hs, so);
  const auto v = dispatch::verify_solution(out.solution, c, w);
  if (!a.out.empty()) io::write_text(a.out, io::solution_csv(out.solution, c));
  dispatch::CostBreakdown cost;
  for (std::size_t t = 0; t < w.periods.size(); ++t)
    dispatch::accumulate(cost, dispatch::period_cost(c, out.solution.periods[t], dispatch::forecast(w.periods[t])));
  ojson j{{"mode", a.mode},
          {"status", qp::to_string(out.qp.status)},
          {"iterations", out.qp.iterations},
          {"objective", out.solution.objective},
          {"fuel_cost", cost.fuel},
          {"gen_reserve_cost", cost.gen_reserve},
          {"res_reserve_cost", cost.res_reserve},
          {"ess_reserve_cost", cost.ess_reserve},
          {"audit", audit_json(v)}};
  std::string t = "status         " + std::string(qp::to_string(out.qp.status)) + " (" +
                  std::to_string(out.qp.iterations) + " iterations)\nobjective      " +
                  fmt("%.9g", out.solution.objective) + "\n" + audit_text(v);
  emit(g, j, t);
  return 0;
}

int run_verify(const SolveArgs& a, const Common& g) {
  const auto c = load_case(a.ca, g);
  const auto w = one_window(a, c, g);
  const auto sol = io::solution_from_csv(io::read_file(a.solution), c, parse_mode(a.mode));
  const auto v = dispatch::verify_solution(sol, c, w);
  emit(g, audit_json(v), audit_text(v));
  return v.ok() ? 0 : 2;
}

// --- roll ------------------------------------------------------------------

struct RollArgs {
  CaseArgs ca;
  std::string scenario;
  std::string out = "results";
  std::string mode = "both";
  std::size_t samples = 50000;
};

int run_roll(const RollArgs& a, const Common& g) {
  const auto c = load_case(a.ca, g);
  auto tl = io::load_scenario(resolve(a.scenario, g));
  apply_kappa(a.ca, c, tl);
  const horizon::HorizonConfig cfg;
  horizon::RollOptions opt;
  opt.cha = cha_settings(a.samples, g);
  opt.threads = g.threads;
  const auto hash = io::config_hash(c, tl, cfg, opt);
  const fs::path out(a.out);

  horizon::ModeComparison cmp;
  if (a.mode == "both") {
    cmp = horizon::compare_modes(c, tl, cfg, opt);
  } else {
    const auto m = parse_mode(a.mode);
    auto r = horizon::run_rolling(c, tl, cfg, m, opt);
    (m == dispatch::Mode::online ? cmp.online : cmp.fixed) = std::move(r);
  }

  std::vector<const horizon::RunReport*> runs;
  ojson modes = ojson::object();
  std::string text;
  for (const auto* r : {cmp.fixed ? &*cmp.fixed : nullptr, cmp.online ? &*cmp.online : nullptr}) {
    if (!r) continue;
    const std::string name = dispatch::to_string(r->mode);
    io::save_report(*r, c, out / name);
    const auto meta = io::run_metadata(*r, c, hash, tl.seed, g.seed);
    io::write_text(out / name / "metadata.json", io::dump(meta));
    runs.push_back(r);
    modes[name] = ojson{{"total_cost", r->cost.total()},
                        {"fuel_cost", r->cost.fuel},
                        {"curtailment_pct", r->curtailment_pct},
                        {"frequency_failures", r->frequency_failures()},
                        {"nadir_failures", r->failures("nadir")},
                        {"audit_violations", r->audit.size()}};
    text += name + ": total " + fmt("%.9g", r->cost.total()) + ", curtailment " + fmt("%.4g", r->curtailment_pct) +
            "%, frequency failures " + std::to_string(r->frequency_failures()) + ", audit violations " +
            std::to_string(r->audit.size()) + "\n";
  }
  fs::create_directories(out);
  io::write_text(out / "summary.csv", io::summary_csv(runs));
  for (const auto& [name, err] : {std::pair{"fixed", cmp.fixed_error}, std::pair{"online", cmp.online_error}})
    if (!err.empty()) {
      std::cerr << name << " mode failed: " << err << "\n";
      modes[name] = ojson{{"error", err}};
    }
  if (cmp.online && cmp.fixed) {
    const double saving = cmp.fixed->cost.total() - cmp.online->cost.total();
    text += "online saves " + fmt("%.9g", saving) + " over fixed\n";
    modes["online_saving"] = saving;
  }
  modes["config_hash"] = hash;
  emit(g, modes, text);
  if (runs.empty() || !cmp.online_error.empty() || !cmp.fixed_error.empty()) return 2;
  return 0;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::validation: return 1;
    case ErrorKind::infeasible: return 2;
    case ErrorKind::numeric: return 3;
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-constrained look-ahead dispatch with online inertia and damping allocation", "fcsd"};
  app.require_subcommand(1);
  app.fallthrough();
  app.get_formatter()->column_width(36);
  Common g;
  app.add_option("--seed", g.seed, "Seed for every random draw (CHA sampling, scenarios, convexity test)")
      ->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for sampling and per-period CHA builds")
      ->capture_default_str();
  app.add_flag("--json-summary", g.json_summary, "Print a JSON summary on standard output instead of text");
  app.add_option("--data-dir", g.data_dir, "Directory searched for case, profile and scenario names (default: bundled data)");

  FreqArgs fa;
  auto* sim = app.add_subcommand("simulate-freq", "Step response and frequency metrics of the aggregated model");
  sim->add_option("--inertia", fa.p.inertia, "H, s")->capture_default_str();
  sim->add_option("--damping", fa.p.damping, "D, p.u.")->capture_default_str();
  sim->add_option("--droop", fa.p.droop, "R, aggregate droop gain, p.u.")->capture_default_str();
  sim->add_option("--turbine-fraction", fa.p.turbine_fraction, "F, p.u.")->capture_default_str();
  sim->add_option("--time-constant", fa.p.time_constant, "T, s")->capture_default_str();
  sim->add_option("--dp", fa.dp, "Step disturbance, p.u.")->capture_default_str();
  sim->add_option("--f0", fa.f0, "Nominal frequency, Hz")->capture_default_str();
  sim->add_option("--t-end", fa.t_end, "Simulated time, s")->capture_default_str();
  sim->add_option("--dt", fa.dt, "Integration step, s")->capture_default_str();
  sim->add_option("--out", fa.out, "Write the trajectory CSV here");

  std::size_t conv_samples = 100000;
  double conv_dp = 0.1;
  auto* conv = app.add_subcommand("check-convexity", "Finite-difference Hessian test of the nadir in (H, D)");
  conv->add_option("--samples", conv_samples, "Number of sampled parameter sets")->capture_default_str();
  conv->add_option("--dp", conv_dp, "Step disturbance, p.u.")->capture_default_str();

  ChaArgs cha_a;
  auto* chac = app.add_subcommand("cha", "Build nadir half-spaces and report classification error");
  chac->add_option("--samples", cha_a.samples, "Training samples")->capture_default_str();
  chac->add_option("--test-samples", cha_a.test_samples, "Test samples")->capture_default_str();
  chac->add_option("--test-seed", cha_a.test_seed, "Seed of the test sample stream")->capture_default_str();
  chac->add_option("--max-hyperplanes", cha_a.max_hyperplanes, "Cap on emitted half-spaces (0: no cap)")
      ->capture_default_str();
  chac->add_option("--case", cha_a.case_name, "Take R, F, T and the (H, D) box from this case");
  chac->add_option("--droop", cha_a.droop, "R, p.u. (without --case)")->capture_default_str();
  chac->add_option("--turbine-fraction", cha_a.turbine_fraction, "F, p.u. (without --case)")->capture_default_str();
  chac->add_option("--time-constant", cha_a.time_constant, "T, s (without --case)")->capture_default_str();
  chac->add_option("--dp", cha_a.dp, "Step disturbance, p.u.")->capture_default_str();
  chac->add_option("--limit", cha_a.limit, "Nadir limit, Hz (without --case)")->capture_default_str();
  chac->add_option("--f0", cha_a.nominal, "Nominal frequency, Hz (without --case)")->capture_default_str();
  chac->add_option("--h-box", cha_a.h_box, "H sampling range: lo hi (without --case)")->expected(2)->capture_default_str();
  chac->add_option("--d-box", cha_a.d_box, "D sampling range: lo hi (without --case)")->expected(2)->capture_default_str();
  chac->add_option("--out", cha_a.out, "Write the half-spaces (w_h, w_d, b) as CSV here");

  QuantileArgs qa;
  auto* qc = app.add_subcommand("quantile", "Quantiles of an affine projection of a Gaussian mixture");
  qc->add_option("--gmm", qa.gmm, "GMM file {weights, means, covariances}")->required();
  qc->add_option("--alpha", qa.alphas, "Probability levels in (0, 1)")->capture_default_str();
  qc->add_option("--coeffs", qa.coeffs, "Projection coefficients (default: all ones)");
  qc->add_option("--offset", qa.offset, "Projection offset")->capture_default_str();

  ScenarioArgs sa;
  auto* sc = app.add_subcommand("scenario", "Synthesize a day of forecasts from a load and wind profile");
  add_case_flags(sc, sa.ca);
  sc->add_option("--profile", sa.profile, "Profile file or name")->required();
  sc->add_option("--out", sa.out, "Scenario file to write")->required();
  sc->add_option("--sigma", sa.syn.sigma_base, "Forecast error sd as a fraction of the mean at lead 0")
      ->capture_default_str();
  sc->add_option("--growth", sa.syn.growth, "Relative sd growth per lead step")->capture_default_str();
  sc->add_option("--correlation", sa.syn.correlation, "Error correlation between farms")->capture_default_str();

  SolveArgs sv;
  auto* so = app.add_subcommand("solve", "Solve one look-ahead window from the default initial state");
  add_case_flags(so, sv.ca);
  so->add_option("--scenario", sv.scenario, "Scenario file or name")->required();
  so->add_option("--index", sv.index, "Solve index within the scenario")->capture_default_str();
  so->add_option("--mode", sv.mode, "online or fixed")->capture_default_str();
  so->add_option("--samples", sv.samples, "CHA training samples per period")->capture_default_str();
  so->add_option("--out", sv.out, "Write the full-precision solution CSV here");

  SolveArgs ve;
  auto* vc = app.add_subcommand("verify", "Audit a saved window solution against the exact constraints");
  add_case_flags(vc, ve.ca);
  vc->add_option("--scenario", ve.scenario, "Scenario file or name")->required();
  vc->add_option("--index", ve.index, "Solve index within the scenario")->capture_default_str();
  vc->add_option("--mode", ve.mode, "online or fixed")->capture_default_str();
  vc->add_option("--solution", ve.solution, "Solution CSV written by solve")->required();

  RollArgs ra;
  auto* rc = app.add_subcommand("roll", "Full-day receding-horizon run");
  add_case_flags(rc, ra.ca);
  rc->add_option("--scenario", ra.scenario, "Scenario file or name")->required();
  rc->add_option("--out", ra.out, "Output directory")->capture_default_str();
  rc->add_option("--mode", ra.mode, "online, fixed or both")->capture_default_str();
  rc->add_option("--samples", ra.samples, "CHA training samples per period")->capture_default_str();

  for (auto* sub : app.get_subcommands({}))
    sub->footer("Global options --seed, --threads, --json-summary and --data-dir may also follow the subcommand.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 1;
  }

  try {
    if (*sim) return run_simulate(fa, g);
    if (*conv) return run_convexity(conv_samples, conv_dp, g);
    if (*chac) return run_cha(cha_a, g);
    if (*qc) return run_quantile(qa, g);
    if (*sc) return run_scenario(sa, g);
    if (*so) return run_solve(sv, g);
    if (*vc) return run_verify(ve, g);
    if (*rc) return run_roll(ra, g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
