#pragma once

// Case, profile and scenario files (JSON, schema_version 1), report CSVs, solution dumps
// and the run configuration hash. Field units are listed in the README schema reference.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcsd/dispatch.hpp"
#include "fcsd/error.hpp"
#include "fcsd/horizon.hpp"
#include "fcsd/uncertainty.hpp"

namespace fcsd::io {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Strict reading helpers.

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline void reject_non_finite(const json& j, const std::string& path) {
  if (j.is_number_float() && !std::isfinite(j.get<double>()))
    throw ValidationError(path + ": non-finite number");
  if (j.is_object())
    for (const auto& [k, v] : j.items()) reject_non_finite(v, path + "." + k);
  if (j.is_array())
    for (std::size_t i = 0; i < j.size(); ++i) reject_non_finite(j[i], path + "[" + std::to_string(i) + "]");
}

}  // namespace detail

inline json parse_text(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    // Drop the library prefix; keep its description of what went wrong.
    if (const auto p = msg.find(": "); p != std::string::npos) msg = msg.substr(p + 2);
    throw ValidationError(source + ": parse error at " + detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + msg);
  } catch (const json::out_of_range& e) {
    // Overflowing literals such as 1e999.
    std::string msg = e.what();
    if (const auto p = msg.find("] "); p != std::string::npos) msg = msg.substr(p + 2);
    throw ValidationError(source + ": " + msg);
  }
  detail::reject_non_finite(j, "$");
  return j;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_file(const std::filesystem::path& p) { return parse_text(read_file(p), p.string()); }

// Reads the fields of one JSON object; finish() rejects anything left unread.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_ + ": expected an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  const json& raw(const std::string& k) {
    if (!j_.contains(k)) throw ValidationError(at(k) + ": missing required field");
    used_.insert(k);
    return j_.at(k);
  }
  double number(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_number()) throw ValidationError(at(k) + ": expected a number");
    return v.get<double>();
  }
  double number_or(const std::string& k, double def) { return has(k) ? number(k) : def; }
  std::int64_t integer(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_number_integer()) throw ValidationError(at(k) + ": expected an integer");
    return v.get<std::int64_t>();
  }
  std::uint64_t unsigned_integer(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ValidationError(at(k) + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::string string(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_string()) throw ValidationError(at(k) + ": expected a string");
    return v.get<std::string>();
  }
  const json& array(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_array()) throw ValidationError(at(k) + ": expected an array");
    return v;
  }
  std::vector<double> numbers(const std::string& k) { return number_array(array(k), at(k)); }
  Fields object(const std::string& k) { return Fields(raw(k), at(k)); }
  std::string at(const std::string& k) const { return path_ + "." + k; }
  const std::string& path() const { return path_; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ValidationError(at(k) + ": unknown field");
  }

  static std::vector<double> number_array(const json& a, const std::string& path) {
    if (!a.is_array()) throw ValidationError(path + ": expected an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_number()) throw ValidationError(path + "[" + std::to_string(i) + "]: expected a number");
      out.push_back(a[i].get<double>());
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline void check_schema(Fields& f) {
  const auto v = f.integer("schema_version");
  if (v != kSchemaVersion)
    throw ValidationError(f.at("schema_version") + ": unsupported version " + std::to_string(v));
}

template <typename Fn>
void each(Fields& f, const std::string& k, Fn&& fn) {
  const auto& a = f.array(k);
  for (std::size_t i = 0; i < a.size(); ++i) {
    Fields item(a[i], f.at(k) + "[" + std::to_string(i) + "]");
    fn(item);
    item.finish();
  }
}

inline int bus_index(Fields& f, int n_bus) {
  const auto b = f.integer("bus");
  if (b < 1 || b > n_bus) throw ValidationError(f.at("bus") + ": must lie in 1.." + std::to_string(n_bus));
  return static_cast<int>(b - 1);
}

// ---------------------------------------------------------------------------
// Case files.

inline dispatch::DispatchCase case_from_json(const json& j, bool renormalize_beta = false,
                                             std::vector<std::string>* warnings = nullptr) {
  using namespace dispatch;
  DispatchCase c;
  Fields f(j, "$");
  check_schema(f);
  c.name = f.string("name");
  const auto nb = f.integer("n_bus");
  if (nb < 1 || nb > 100000) throw ValidationError(f.at("n_bus") + ": out of range");
  c.n_bus = static_cast<int>(nb);
  c.p_base = f.number("p_base");
  c.load_damping = f.number("load_damping");
  c.step_hours = f.number("step_hours");
  {
    auto g = f.object("frequency_limits");
    c.limits.nominal = g.number("nominal");
    c.limits.max_deviation = g.number("max_deviation");
    c.limits.rocof = g.number("rocof");
    c.limits.steady_state = g.number("steady_state");
    g.finish();
  }
  {
    auto g = f.object("probabilities");
    c.alpha.gen_up = g.number("gen_up");
    c.alpha.gen_down = g.number("gen_down");
    c.alpha.res_reserve = g.number("res_reserve");
    c.alpha.line_plus = g.number("line_plus");
    c.alpha.line_minus = g.number("line_minus");
    g.finish();
  }
  {
    auto g = f.object("disturbance");
    const auto rule = g.string("rule");
    if (rule == "load_fraction")
      c.disturbance.kind = DisturbanceKind::load_fraction;
    else if (rule == "largest_unit")
      c.disturbance.kind = DisturbanceKind::largest_unit;
    else
      throw ValidationError(g.at("rule") + ": expected \"load_fraction\" or \"largest_unit\"");
    c.disturbance.kappa = g.number("kappa");
    g.finish();
  }
  {
    auto g = f.object("reserve_costs");
    c.rwc = g.number("rwc");
    c.rec = g.number("rec");
    g.finish();
  }
  each(f, "generators", [&](Fields& g) {
    Generator x;
    x.name = g.string("name");
    x.bus = bus_index(g, c.n_bus);
    x.a = g.number("a");
    x.b = g.number("b");
    x.c = g.number("c");
    x.rgc = g.number("rgc");
    x.p_max = g.number("p_max");
    x.p_min = g.number("p_min");
    x.ramp_up = g.number("ramp_up");
    x.ramp_down = g.number("ramp_down");
    x.beta = g.number("beta");
    x.inertia = g.number("inertia");
    x.inv_droop = g.number("inv_droop");
    x.turbine_fraction = g.number("turbine_fraction");
    x.time_constant = g.number("time_constant");
    c.generators.push_back(std::move(x));
  });
  each(f, "res", [&](Fields& g) {
    ResUnit x;
    x.name = g.string("name");
    x.bus = bus_index(g, c.n_bus);
    x.cap = g.number("cap");
    x.h_max = g.number("h_max");
    x.d_max = g.number("d_max");
    x.h_fixed = g.number("h_fixed");
    x.d_fixed = g.number("d_fixed");
    c.res.push_back(std::move(x));
  });
  each(f, "ess", [&](Fields& g) {
    EssUnit x;
    x.name = g.string("name");
    x.bus = bus_index(g, c.n_bus);
    x.eta_c = g.number("eta_c");
    x.eta_d = g.number("eta_d");
    x.p_max = g.number("p_max");
    x.e_min = g.number("e_min");
    x.e_max = g.number("e_max");
    x.e_init = g.number("e_init");
    x.h_max = g.number("h_max");
    x.d_max = g.number("d_max");
    x.h_fixed = g.number("h_fixed");
    x.d_fixed = g.number("d_fixed");
    x.dt_pfr = g.number("dt_pfr");
    c.ess.push_back(std::move(x));
  });
  each(f, "loads", [&](Fields& g) {
    LoadPoint x;
    x.name = g.string("name");
    x.bus = bus_index(g, c.n_bus);
    c.loads.push_back(std::move(x));
  });
  each(f, "lines", [&](Fields& g) {
    Line x;
    x.name = g.string("name");
    const auto from = g.integer("from"), to = g.integer("to");
    if (from < 1 || from > c.n_bus || to < 1 || to > c.n_bus)
      throw ValidationError(g.path() + ": from/to must lie in 1.." + std::to_string(c.n_bus));
    x.from = static_cast<int>(from - 1);
    x.to = static_cast<int>(to - 1);
    x.limit = g.number("limit");
    x.ptdf = g.numbers("ptdf");
    c.lines.push_back(std::move(x));
  });
  f.finish();
  std::set<std::string> names;
  auto unique = [&](const std::string& n) {
    if (!names.insert(n).second) throw ValidationError("$: duplicate unit name " + n);
  };
  for (const auto& x : c.generators) unique(x.name);
  for (const auto& x : c.res) unique(x.name);
  for (const auto& x : c.ess) unique(x.name);
  c.validate(renormalize_beta, warnings);
  return c;
}

inline ojson case_to_json(const dispatch::DispatchCase& c) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = c.name;
  j["n_bus"] = c.n_bus;
  j["p_base"] = c.p_base;
  j["load_damping"] = c.load_damping;
  j["step_hours"] = c.step_hours;
  j["frequency_limits"] = ojson{{"nominal", c.limits.nominal},
                                {"max_deviation", c.limits.max_deviation},
                                {"rocof", c.limits.rocof},
                                {"steady_state", c.limits.steady_state}};
  j["probabilities"] = ojson{{"gen_up", c.alpha.gen_up},
                             {"gen_down", c.alpha.gen_down},
                             {"res_reserve", c.alpha.res_reserve},
                             {"line_plus", c.alpha.line_plus},
                             {"line_minus", c.alpha.line_minus}};
  j["disturbance"] = ojson{
      {"rule", c.disturbance.kind == dispatch::DisturbanceKind::load_fraction ? "load_fraction" : "largest_unit"},
      {"kappa", c.disturbance.kappa}};
  j["reserve_costs"] = ojson{{"rwc", c.rwc}, {"rec", c.rec}};
  j["generators"] = ojson::array();
  for (const auto& g : c.generators)
    j["generators"].push_back(ojson{{"name", g.name},
                                    {"bus", g.bus + 1},
                                    {"a", g.a},
                                    {"b", g.b},
                                    {"c", g.c},
                                    {"rgc", g.rgc},
                                    {"p_max", g.p_max},
                                    {"p_min", g.p_min},
                                    {"ramp_up", g.ramp_up},
                                    {"ramp_down", g.ramp_down},
                                    {"beta", g.beta},
                                    {"inertia", g.inertia},
                                    {"inv_droop", g.inv_droop},
                                    {"turbine_fraction", g.turbine_fraction},
                                    {"time_constant", g.time_constant}});
  j["res"] = ojson::array();
  for (const auto& r : c.res)
    j["res"].push_back(ojson{{"name", r.name},
                             {"bus", r.bus + 1},
                             {"cap", r.cap},
                             {"h_max", r.h_max},
                             {"d_max", r.d_max},
                             {"h_fixed", r.h_fixed},
                             {"d_fixed", r.d_fixed}});
  j["ess"] = ojson::array();
  for (const auto& e : c.ess)
    j["ess"].push_back(ojson{{"name", e.name},
                             {"bus", e.bus + 1},
                             {"eta_c", e.eta_c},
                             {"eta_d", e.eta_d},
                             {"p_max", e.p_max},
                             {"e_min", e.e_min},
                             {"e_max", e.e_max},
                             {"e_init", e.e_init},
                             {"h_max", e.h_max},
                             {"d_max", e.d_max},
                             {"h_fixed", e.h_fixed},
                             {"d_fixed", e.d_fixed},
                             {"dt_pfr", e.dt_pfr}});
  j["loads"] = ojson::array();
  for (const auto& l : c.loads) j["loads"].push_back(ojson{{"name", l.name}, {"bus", l.bus + 1}});
  j["lines"] = ojson::array();
  for (const auto& l : c.lines)
    j["lines"].push_back(
        ojson{{"name", l.name}, {"from", l.from + 1}, {"to", l.to + 1}, {"limit", l.limit}, {"ptdf", l.ptdf}});
  return j;
}

inline std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << s;
  if (!out) throw ValidationError("write failed for " + p.string());
}

inline dispatch::DispatchCase load_case(const std::filesystem::path& p, bool renormalize_beta = false,
                                        std::vector<std::string>* warnings = nullptr) {
  const auto j = parse_file(p);
  try {
    return case_from_json(j, renormalize_beta, warnings);
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline void save_case(const dispatch::DispatchCase& c, const std::filesystem::path& p) {
  write_text(p, dump(case_to_json(c)));
}

// ---------------------------------------------------------------------------
// GMM, profile and scenario files.

inline uncertainty::Gmm gmm_from_json(Fields& f) {
  const auto w = f.numbers("weights");
  const auto& means = f.array("means");
  const auto& covs = f.array("covariances");
  if (means.size() != w.size() || covs.size() != w.size())
    throw ValidationError(f.path() + ": weights, means and covariances need the same length");
  std::vector<uncertainty::GmmComponent> comps;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const auto mp = f.at("means") + "[" + std::to_string(k) + "]";
    const auto m = Fields::number_array(means[k], mp);
    const auto n = static_cast<Eigen::Index>(m.size());
    const auto cp = f.at("covariances") + "[" + std::to_string(k) + "]";
    if (!covs[k].is_array() || covs[k].size() != m.size()) throw ValidationError(cp + ": expected an n x n array");
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto row = Fields::number_array(covs[k][static_cast<std::size_t>(r)], cp + "[" + std::to_string(r) + "]");
      if (row.size() != m.size()) throw ValidationError(cp + ": expected an n x n array");
      for (Eigen::Index col = 0; col < n; ++col) cov(r, col) = row[static_cast<std::size_t>(col)];
    }
    comps.push_back({w[k], Eigen::Map<const Eigen::VectorXd>(m.data(), n), cov});
  }
  try {
    return uncertainty::Gmm(std::move(comps));
  } catch (const ValidationError& e) {
    throw ValidationError(f.path() + ": " + e.what());
  }
}

inline ojson gmm_to_json(const uncertainty::Gmm& g) {
  ojson j;
  j["weights"] = ojson::array();
  j["means"] = ojson::array();
  j["covariances"] = ojson::array();
  for (const auto& c : g.components()) {
    j["weights"].push_back(c.weight);
    j["means"].push_back(std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size()));
    ojson cov = ojson::array();
    for (Eigen::Index r = 0; r < c.cov.rows(); ++r) {
      std::vector<double> row;
      for (Eigen::Index k = 0; k < c.cov.cols(); ++k) row.push_back(c.cov(r, k));
      cov.push_back(row);
    }
    j["covariances"].push_back(cov);
  }
  return j;
}

inline horizon::DayProfile profile_from_json(const json& j, const dispatch::DispatchCase& c) {
  horizon::DayProfile p;
  Fields f(j, "$");
  check_schema(f);
  const auto sm = f.integer("step_minutes");
  if (std::abs(static_cast<double>(sm) / 60.0 - c.step_hours) > 1e-12)
    throw ValidationError(f.at("step_minutes") + ": does not match the case step_hours");
  p.load = f.numbers("load");
  p.load_share = f.numbers("load_share");
  std::map<std::string, std::vector<double>> by_name;
  each(f, "wind", [&](Fields& w) {
    const auto name = w.string("name");
    if (!by_name.emplace(name, w.numbers("capacity_factor")).second)
      throw ValidationError(w.at("name") + ": duplicate entry " + name);
  });
  f.finish();
  for (const auto& r : c.res) {
    auto it = by_name.find(r.name);
    if (it == by_name.end()) throw ValidationError("$.wind: no series for RES unit " + r.name);
    p.wind.push_back(it->second);
    by_name.erase(it);
  }
  if (!by_name.empty()) throw ValidationError("$.wind: series for unknown RES unit " + by_name.begin()->first);
  return p;
}

inline horizon::DayProfile load_profile(const std::filesystem::path& p, const dispatch::DispatchCase& c) {
  const auto j = parse_file(p);
  try {
    return profile_from_json(j, c);
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline horizon::ScenarioTimeline scenario_from_json(const json& j) {
  horizon::ScenarioTimeline tl;
  Fields f(j, "$");
  check_schema(f);
  tl.seed = f.unsigned_integer("seed");
  const auto& solves = f.array("solves");
  if (solves.empty()) throw ValidationError(f.at("solves") + ": timeline is empty");
  for (std::size_t s = 0; s < solves.size(); ++s) {
    const auto sp = f.at("solves") + "[" + std::to_string(s) + "]";
    if (!solves[s].is_array() || solves[s].empty()) throw ValidationError(sp + ": expected a non-empty array");
    std::vector<horizon::TimelineStep> steps;
    for (std::size_t k = 0; k < solves[s].size(); ++k) {
      Fields st(solves[s][k], sp + "[" + std::to_string(k) + "]");
      horizon::TimelineStep x;
      x.load = st.numbers("load");
      x.disturbance = st.number("disturbance");
      if (st.has("wind")) {
        auto g = st.object("wind");
        x.wind = gmm_from_json(g);
        g.finish();
      }
      st.finish();
      steps.push_back(std::move(x));
    }
    tl.solves.push_back(std::move(steps));
  }
  f.finish();
  return tl;
}

inline ojson scenario_to_json(const horizon::ScenarioTimeline& tl) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = tl.seed;
  j["solves"] = ojson::array();
  for (const auto& s : tl.solves) {
    ojson arr = ojson::array();
    for (const auto& st : s) {
      ojson x;
      x["load"] = st.load;
      x["disturbance"] = st.disturbance;
      if (st.wind.size() > 0) x["wind"] = gmm_to_json(st.wind);
      arr.push_back(x);
    }
    j["solves"].push_back(arr);
  }
  return j;
}

inline horizon::ScenarioTimeline load_scenario(const std::filesystem::path& p) {
  const auto j = parse_file(p);
  try {
    return scenario_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

inline void save_scenario(const horizon::ScenarioTimeline& tl, const std::filesystem::path& p) {
  write_text(p, dump(scenario_to_json(tl)));
}

// ---------------------------------------------------------------------------
// CSV output.

class Csv {
 public:
  explicit Csv(int digits) : digits_(digits) {}
  Csv& header(std::initializer_list<std::string> cols) {
    std::vector<std::string> v(cols);
    return header(v);
  }
  Csv& header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
    out_ << "\n";
    return *this;
  }
  Csv& cell(const std::string& s) {
    sep();
    out_ << s;
    return *this;
  }
  Csv& cell(const char* s) { return cell(std::string(s)); }
  Csv& cell(double v) {
    sep();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", digits_, v == 0.0 ? 0.0 : v);
    out_ << buf;
    return *this;
  }
  Csv& cell(int v) {
    sep();
    out_ << v;
    return *this;
  }
  Csv& cell(std::size_t v) {
    sep();
    out_ << v;
    return *this;
  }
  Csv& cell(bool v) { return cell(v ? "1" : "0"); }
  Csv& end() {
    out_ << "\n";
    first_ = true;
    return *this;
  }
  std::string str() const { return out_.str(); }

 private:
  void sep() {
    if (!first_) out_ << ",";
    first_ = false;
  }
  std::ostringstream out_;
  int digits_;
  bool first_ = true;
};

inline const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{"mode", "fuel_cost", "res_reserve_cost", "ess_reserve_cost",
                                             "curtailment_pct"};
  return cols;
}

inline std::string committed_csv(const horizon::RunReport& r, const dispatch::DispatchCase& c) {
  Csv csv(9);
  csv.header({"period", "solve", "unit", "type", "power_mw", "reserve_mw", "energy_mwh", "loss_mw"});
  for (const auto& p : r.periods) {
    const auto& s = p.solution;
    for (std::size_t i = 0; i < c.generators.size(); ++i)
      csv.cell(p.period).cell(p.solve).cell(c.generators[i].name).cell("gen").cell(s.p[i]).cell(s.rg[i]).cell("").cell("").end();
    for (std::size_t j = 0; j < c.res.size(); ++j)
      csv.cell(p.period).cell(p.solve).cell(c.res[j].name).cell("res").cell(s.w_sche[j]).cell(s.rw[j]).cell("").cell("").end();
    for (std::size_t k = 0; k < c.ess.size(); ++k)
      csv.cell(p.period).cell(p.solve).cell(c.ess[k].name).cell("ess").cell(s.p_ess[k]).cell(s.re[k]).cell(s.e[k]).cell(s.loss[k]).end();
  }
  return csv.str();
}

inline std::string allocation_csv(const horizon::RunReport& r, const dispatch::DispatchCase& c) {
  Csv csv(9);
  csv.header({"period", "unit", "type", "inertia_s", "damping_pu"});
  for (const auto& p : r.periods) {
    const auto& s = p.solution;
    for (std::size_t j = 0; j < c.res.size(); ++j)
      csv.cell(p.period).cell(c.res[j].name).cell("res").cell(s.h_res[j]).cell(s.d_res[j]).end();
    for (std::size_t k = 0; k < c.ess.size(); ++k)
      csv.cell(p.period).cell(c.ess[k].name).cell("ess").cell(s.h_ess[k]).cell(s.d_ess[k]).end();
  }
  return csv.str();
}

inline std::string frequency_csv(const std::vector<horizon::FrequencyRow>& rows) {
  Csv csv(9);
  csv.header({"period", "h_sys_s", "d_sys_pu", "disturbance_pu", "rocof_hz_per_s", "steady_state_hz", "nadir_hz",
              "nadir_time_s", "rocof_ok", "steady_state_ok", "nadir_ok"});
  for (const auto& f : rows)
    csv.cell(f.period)
        .cell(f.h_sys)
        .cell(f.d_sys)
        .cell(f.disturbance)
        .cell(f.metrics.rocof_max)
        .cell(f.metrics.steady_state)
        .cell(f.metrics.max_deviation)
        .cell(f.metrics.nadir_time)
        .cell(f.check.rocof_ok)
        .cell(f.check.steady_state_ok)
        .cell(f.check.nadir_ok)
        .end();
  return csv.str();
}

inline std::string reserves_csv(const horizon::RunReport& r, const dispatch::DispatchCase& c) {
  Csv csv(9);
  csv.header({"period", "solve", "gen_reserve_mw", "res_reserve_mw", "ess_reserve_mw", "res_forecast_mw"});
  for (const auto& p : r.periods) {
    double rg = 0.0, rw = 0.0, re = 0.0, wf = 0.0;
    for (double v : p.solution.rg) rg += v;
    for (double v : p.solution.rw) rw += v;
    for (double v : p.solution.re) re += v;
    for (double v : p.w_fore) wf += v;
    csv.cell(p.period).cell(p.solve).cell(rg).cell(rw).cell(re).cell(wf).end();
  }
  (void)c;
  return csv.str();
}

inline void summary_row(Csv& csv, const horizon::RunReport& r) {
  csv.cell(dispatch::to_string(r.mode))
      .cell(r.cost.fuel)
      .cell(r.cost.res_reserve)
      .cell(r.cost.ess_reserve)
      .cell(r.curtailment_pct)
      .end();
}

inline std::string summary_csv(const std::vector<const horizon::RunReport*>& runs) {
  Csv csv(9);
  csv.header(summary_columns());
  for (const auto* r : runs) summary_row(csv, *r);
  return csv.str();
}

// Writes committed/allocation/frequency/reserves/summary CSVs for one run into dir.
inline void save_report(const horizon::RunReport& r, const dispatch::DispatchCase& c,
                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "committed.csv", committed_csv(r, c));
  write_text(dir / "allocation.csv", allocation_csv(r, c));
  write_text(dir / "frequency.csv", frequency_csv(horizon::frequency_timeline(r, c)));
  write_text(dir / "reserves.csv", reserves_csv(r, c));
  write_text(dir / "summary.csv", summary_csv({&r}));
}

// ---------------------------------------------------------------------------
// Full-precision solution dump, readable by the verifier.

inline std::string solution_csv(const dispatch::DispatchSolution& sol, const dispatch::DispatchCase& c) {
  Csv csv(17);
  csv.header({"period", "unit", "field", "value"});
  auto put = [&](std::size_t t, const std::string& u, const char* f, double v) {
    csv.cell(t).cell(u).cell(f).cell(v).end();
  };
  for (std::size_t t = 0; t < sol.periods.size(); ++t) {
    const auto& s = sol.periods[t];
    for (std::size_t i = 0; i < c.generators.size(); ++i) {
      put(t, c.generators[i].name, "P", s.p[i]);
      put(t, c.generators[i].name, "Rg", s.rg[i]);
    }
    for (std::size_t j = 0; j < c.res.size(); ++j) {
      put(t, c.res[j].name, "Wsche", s.w_sche[j]);
      put(t, c.res[j].name, "Rw", s.rw[j]);
      put(t, c.res[j].name, "H", s.h_res[j]);
      put(t, c.res[j].name, "D", s.d_res[j]);
    }
    for (std::size_t k = 0; k < c.ess.size(); ++k) {
      put(t, c.ess[k].name, "P", s.p_ess[k]);
      put(t, c.ess[k].name, "Re", s.re[k]);
      put(t, c.ess[k].name, "E", s.e[k]);
      put(t, c.ess[k].name, "Loss", s.loss[k]);
      put(t, c.ess[k].name, "H", s.h_ess[k]);
      put(t, c.ess[k].name, "D", s.d_ess[k]);
    }
  }
  return csv.str();
}

inline dispatch::DispatchSolution solution_from_csv(const std::string& text, const dispatch::DispatchCase& c,
                                                    dispatch::Mode mode = dispatch::Mode::online) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "period,unit,field,value")
    throw ValidationError("solution csv: unexpected header");
  std::map<std::string, std::pair<int, std::size_t>> unit;  // name -> (kind, index)
  for (std::size_t i = 0; i < c.generators.size(); ++i) unit[c.generators[i].name] = {0, i};
  for (std::size_t j = 0; j < c.res.size(); ++j) unit[c.res[j].name] = {1, j};
  for (std::size_t k = 0; k < c.ess.size(); ++k) unit[c.ess[k].name] = {2, k};
  dispatch::DispatchSolution sol;
  sol.mode = mode;
  auto period = [&](std::size_t t) -> dispatch::PeriodSolution& {
    while (sol.periods.size() <= t) {
      dispatch::PeriodSolution s;
      const auto ng = c.generators.size(), nr = c.res.size(), ne = c.ess.size();
      s.p.assign(ng, NAN), s.rg.assign(ng, NAN);
      s.w_sche.assign(nr, NAN), s.rw.assign(nr, NAN), s.h_res.assign(nr, NAN), s.d_res.assign(nr, NAN);
      s.p_ess.assign(ne, NAN), s.re.assign(ne, NAN), s.e.assign(ne, NAN), s.loss.assign(ne, NAN);
      s.h_ess.assign(ne, NAN), s.d_ess.assign(ne, NAN);
      sol.periods.push_back(std::move(s));
    }
    return sol.periods[t];
  };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "solution csv line " + std::to_string(lineno);
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 4) throw ValidationError(where + ": expected 4 fields");
    std::size_t t = 0;
    double v = 0.0;
    try {
      std::size_t pos = 0;
      t = std::stoul(f[0], &pos);
      if (pos != f[0].size()) throw std::invalid_argument("period");
      v = std::stod(f[3], &pos);
      if (pos != f[3].size()) throw std::invalid_argument("value");
    } catch (const std::exception&) {
      throw ValidationError(where + ": bad number");
    }
    if (!std::isfinite(v)) throw ValidationError(where + ": non-finite value");
    if (t > 100000) throw ValidationError(where + ": period out of range");
    const auto it = unit.find(f[1]);
    if (it == unit.end()) throw ValidationError(where + ": unknown unit " + f[1]);
    auto& s = period(t);
    const auto [kind, i] = it->second;
    const std::string& fld = f[2];
    double* dst = nullptr;
    if (kind == 0 && fld == "P") dst = &s.p[i];
    if (kind == 0 && fld == "Rg") dst = &s.rg[i];
    if (kind == 1 && fld == "Wsche") dst = &s.w_sche[i];
    if (kind == 1 && fld == "Rw") dst = &s.rw[i];
    if (kind == 1 && fld == "H") dst = &s.h_res[i];
    if (kind == 1 && fld == "D") dst = &s.d_res[i];
    if (kind == 2 && fld == "P") dst = &s.p_ess[i];
    if (kind == 2 && fld == "Re") dst = &s.re[i];
    if (kind == 2 && fld == "E") dst = &s.e[i];
    if (kind == 2 && fld == "Loss") dst = &s.loss[i];
    if (kind == 2 && fld == "H") dst = &s.h_ess[i];
    if (kind == 2 && fld == "D") dst = &s.d_ess[i];
    if (!dst) throw ValidationError(where + ": unknown field " + fld + " for " + f[1]);
    *dst = v;
  }
  if (sol.periods.empty()) throw ValidationError("solution csv: no rows");
  for (std::size_t t = 0; t < sol.periods.size(); ++t) {
    auto& s = sol.periods[t];
    for (const auto* v : {&s.p, &s.rg, &s.w_sche, &s.rw, &s.h_res, &s.d_res, &s.p_ess, &s.re, &s.e, &s.loss,
                          &s.h_ess, &s.d_ess})
      for (double x : *v)
        if (std::isnan(x)) throw ValidationError("solution csv: period " + std::to_string(t) + " is incomplete");
    for (std::size_t k = 0; k < c.ess.size(); ++k) {
      s.loss_d.push_back((1.0 / c.ess[k].eta_d - 1.0) * s.p_ess[k]);
      s.loss_c.push_back((c.ess[k].eta_c - 1.0) * s.p_ess[k]);
    }
    s.h_sys = dispatch::aggregate_inertia(c, s);
    s.d_sys = dispatch::aggregate_damping(c, s);
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Run metadata.

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Hash of everything that determines a run's output.
inline std::string config_hash(const dispatch::DispatchCase& c, const horizon::ScenarioTimeline& tl,
                               const horizon::HorizonConfig& cfg, const horizon::RollOptions& opt) {
  ojson j;
  j["case"] = case_to_json(c);
  j["scenario"] = scenario_to_json(tl);
  j["horizon"] = ojson{{"step_minutes", cfg.step_minutes},
                       {"horizon_steps", cfg.horizon_steps},
                       {"resolve_every_steps", cfg.resolve_every_steps},
                       {"commit_steps", cfg.commit_steps},
                       {"day_steps", cfg.day_steps}};
  j["cha"] = ojson{{"n_samples", opt.cha.n_samples}, {"seed", opt.cha.seed}, {"max_hyperplanes", opt.cha.max_hyperplanes}};
  j["qp"] = ojson{{"tol", opt.solve.qp.tol}, {"max_iter", opt.solve.qp.max_iter}};
  return hex(fnv1a(j.dump()));
}

inline ojson run_metadata(const horizon::RunReport& r, const dispatch::DispatchCase& c, const std::string& hash,
                          std::uint64_t seed, std::uint64_t cha_seed) {
  ojson j;
  j["mode"] = dispatch::to_string(r.mode);
  j["config_hash"] = hash;
  j["scenario_seed"] = seed;
  j["cha_seed"] = cha_seed;
  j["solves"] = r.n_solves;
  j["committed_periods"] = r.periods.size();
  j["aggregate_time_constant_s"] = dispatch::thermal_aggregate(c).time_constant;
  j["initial_generator_mw"] = r.initial.gen_p;
  j["initial_soc_mwh"] = r.initial.ess_e;
  j["total_cost"] = r.cost.total();
  j["frequency_failures"] = r.frequency_failures();
  j["nadir_failures"] = r.failures("nadir");
  j["audit_violations"] = r.audit.size();
  j["max_loss_gap"] = r.max_loss_gap;
  return j;
}

}  // namespace fcsd::io
