#pragma once

// Small dispatch systems shared by the dispatch, horizon and io tests.

#include <Eigen/Dense>

#include "fcsd/dispatch.hpp"

namespace toy {

using namespace fcsd;
using namespace fcsd::dispatch;

inline Generator gen(std::string name, int bus, double p_max, double p_min, double a, double b, double beta,
                     double h = 6.0, double inv_r = 25.0) {
  Generator g;
  g.name = std::move(name);
  g.bus = bus;
  g.p_max = p_max;
  g.p_min = p_min;
  g.a = a;
  g.b = b;
  g.c = 50.0;
  g.rgc = 2.0;
  g.ramp_up = g.ramp_down = p_max;
  g.beta = beta;
  g.inertia = h;
  g.inv_droop = inv_r;
  g.turbine_fraction = 0.15;
  g.time_constant = 12.0;
  return g;
}

// One bus, two generators, optional RES and ESS, no lines.
inline DispatchCase single_bus(int n_res = 2, int n_ess = 1) {
  DispatchCase c;
  c.name = "toy";
  c.n_bus = 1;
  c.p_base = 100.0;
  c.load_damping = 1.0;
  c.generators = {gen("G1", 0, 80.0, 10.0, 0.01, 20.0, 0.6, 6.0, 25.0),
                  gen("G2", 0, 60.0, 5.0, 0.02, 25.0, 0.4, 5.0, 20.0)};
  for (int j = 0; j < n_res; ++j) {
    ResUnit r;
    r.name = "W" + std::to_string(j + 1);
    r.cap = 40.0;
    c.res.push_back(r);
  }
  for (int k = 0; k < n_ess; ++k) {
    EssUnit e;
    e.name = "S" + std::to_string(k + 1);
    e.eta_c = 0.95;
    e.eta_d = 0.95;
    e.p_max = 20.0;
    e.dt_pfr = 0.25;
    e.e_min = 5.0;
    e.e_max = 80.0;
    e.e_init = 40.0;
    c.ess.push_back(e);
  }
  c.loads = {{"L1", 0}};
  c.rwc = 60.0;
  c.rec = 10.0;
  return c;
}

// Independent Gaussian wind with sd = rel * forecast per farm.
inline uncertainty::Gmm wind(const std::vector<double>& fore, double rel = 0.1, double corr = 0.0) {
  const auto n = static_cast<Eigen::Index>(fore.size());
  Eigen::VectorXd m(n);
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m[i] = fore[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      cov(i, j) = (i == j ? 1.0 : corr) * rel * rel * m[i] * m[j] + (i == j ? 1e-9 : 0.0);
  return uncertainty::Gmm({{1.0, m, cov}});
}

inline Window window(const DispatchCase& c, const std::vector<double>& loads, const std::vector<double>& fore,
                     double rel = 0.1) {
  Window w;
  for (double l : loads) {
    PeriodInput p{{l}, c.res.empty() ? uncertainty::Gmm{} : wind(fore, rel),
                  disturbance_pu(c, l)};
    w.periods.push_back(std::move(p));
  }
  w.init = default_initial_state(c);
  return w;
}

}  // namespace toy
