#include "curepinn/physics.hpp"

#include <nlohmann/json.hpp>

namespace curepinn {

CureCycle CureCycle::standard() {
  CureCycle c;
  c.breakpoints = {{0.0, 20.0},    {2700.0, 110.0},  {6300.0, 110.0},
                   {8400.0, 180.0}, {18000.0, 180.0}};
  c.t_end = 18000.0;
  return c;
}

CureCycle CureCycle::constant(double temp_c, double t_end_s) {
  CureCycle c;
  c.breakpoints = {{0.0, temp_c}, {t_end_s, temp_c}};
  c.t_end = t_end_s;
  return c;
}

void CureCycle::validate() const {
  if (breakpoints.empty())
    throw std::invalid_argument("CureCycle: needs at least one breakpoint");
  if (breakpoints.front().first != 0.0)
    throw std::invalid_argument("CureCycle: breakpoints must start at t=0");
  for (size_t i = 1; i < breakpoints.size(); ++i)
    if (breakpoints[i].first <= breakpoints[i - 1].first)
      throw std::invalid_argument("CureCycle: breakpoint times must strictly increase");
  if (t_end < breakpoints.back().first)
    throw std::invalid_argument("CureCycle: t_end precedes the last breakpoint");
}

double air_temperature(double t, const CureCycle& cycle) {
  if (!(t >= 0.0 && t <= cycle.t_end))
    throw std::domain_error("air_temperature: t=" + std::to_string(t) +
                            " outside [0, " + std::to_string(cycle.t_end) + "]");
  const auto& bp = cycle.breakpoints;
  if (t >= bp.back().first) return bp.back().second;  // constant tail to t_end
  size_t hi = 1;
  while (bp[hi].first < t) ++hi;
  const auto& [t0, y0] = bp[hi - 1];
  const auto& [t1, y1] = bp[hi];
  return y0 + (y1 - y0) * (t - t0) / (t1 - t0);
}

double arrhenius_K(double temp_kelvin, const CureKineticsParams& k) {
  if (!(temp_kelvin > 0.0))
    throw std::domain_error("arrhenius_K: temperature must be > 0 K");
  return arrhenius_K_eval(temp_kelvin, k);
}

double cure_rate(double alpha, double temp_kelvin, const CureKineticsParams& k) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::domain_error("cure_rate: alpha=" + std::to_string(alpha) +
                            " outside [0, 1]");
  if (!(temp_kelvin > 0.0))
    throw std::domain_error("cure_rate: temperature must be > 0 K");
  return cure_rate_eval(alpha, temp_kelvin, k);
}

std::string task_to_json(const TaskSpec& task) {
  nlohmann::json j;
  j["material"] = {{"rho", task.material.rho},     {"Cp", task.material.Cp},
                   {"kxx", task.material.kxx},     {"vf", task.material.vf},
                   {"rho_r", task.material.rho_r}, {"H_R", task.material.H_R},
                   {"L", task.material.L}};
  j["kinetics"] = {{"delta_E", task.kinetics.delta_E},
                   {"R", task.kinetics.R},
                   {"A", task.kinetics.A},
                   {"m", task.kinetics.m},
                   {"n", task.kinetics.n},
                   {"C", task.kinetics.C},
                   {"alpha_C0", task.kinetics.alpha_C0},
                   {"alpha_CT", task.kinetics.alpha_CT}};
  nlohmann::json bps = nlohmann::json::array();
  for (const auto& [t, temp] : task.cycle.breakpoints) bps.push_back({t, temp});
  j["cycle"] = {{"breakpoints", bps}, {"t_end", task.cycle.t_end}};
  j["h_top"] = task.h_top;
  j["h_bottom"] = task.h_bottom;
  j["T0"] = task.T0;
  j["alpha0"] = task.alpha0;
  return j.dump(2);
}

TaskSpec task_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  TaskSpec task;
  if (j.contains("material")) {
    const auto& m = j.at("material");
    MaterialProps& p = task.material;
    p.rho = m.value("rho", p.rho);
    p.Cp = m.value("Cp", p.Cp);
    p.kxx = m.value("kxx", p.kxx);
    p.vf = m.value("vf", p.vf);
    p.rho_r = m.value("rho_r", p.rho_r);
    p.H_R = m.value("H_R", p.H_R);
    p.L = m.value("L", p.L);
  }
  if (j.contains("kinetics")) {
    const auto& k = j.at("kinetics");
    CureKineticsParams& p = task.kinetics;
    p.delta_E = k.value("delta_E", p.delta_E);
    p.R = k.value("R", p.R);
    p.A = k.value("A", p.A);
    p.m = k.value("m", p.m);
    p.n = k.value("n", p.n);
    p.C = k.value("C", p.C);
    p.alpha_C0 = k.value("alpha_C0", p.alpha_C0);
    p.alpha_CT = k.value("alpha_CT", p.alpha_CT);
  }
  if (j.contains("cycle")) {
    const auto& c = j.at("cycle");
    task.cycle.breakpoints.clear();
    for (const auto& bp : c.at("breakpoints"))
      task.cycle.breakpoints.emplace_back(bp.at(0).get<double>(),
                                          bp.at(1).get<double>());
    task.cycle.t_end = c.contains("t_end") ? c.at("t_end").get<double>()
                                           : task.cycle.breakpoints.back().first;
  }
  task.h_top = j.value("h_top", task.h_top);
  task.h_bottom = j.value("h_bottom", task.h_bottom);
  task.T0 = j.value("T0", task.T0);
  task.alpha0 = j.value("alpha0", task.alpha0);
  task.validate();
  return task;
}

}  // namespace curepinn
