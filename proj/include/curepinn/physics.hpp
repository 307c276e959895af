#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "curepinn/dual.hpp"

namespace curepinn {

/// Resin cure-kinetics constants. Defaults are the 8552 epoxy fit used
/// throughout; see MaterialProps for the laminate side.
struct CureKineticsParams {
  double delta_E = 66500.0;   // activation energy, J/gmol
  double R = 8.314;           // gas constant, J/(gmol K)
  double A = 1.53e5;          // pre-exponential factor, 1/s
  double m = 0.813;           // first reaction-order exponent
  double n = 2.74;            // second reaction-order exponent
  double C = 43.1;            // diffusion constant
  double alpha_C0 = -1.684;   // critical DoC at absolute zero
  double alpha_CT = 5.475e-3; // critical-DoC temperature slope, 1/K

  void validate() const {
    if (A <= 0 || R <= 0 || delta_E <= 0)
      throw std::invalid_argument("CureKineticsParams: A, R, delta_E must be > 0");
  }
};

/// Through-thickness laminate properties for a 3 cm AS4/8552 part.
struct MaterialProps {
  double rho = 1580.0;    // composite density, kg/m^3
  double Cp = 870.0;      // specific heat, J/(kg K)
  double kxx = 0.65;      // through-thickness conductivity, W/(m K)
  double vf = 0.57;       // fiber volume fraction
  double rho_r = 1300.0;  // resin density, kg/m^3
  double H_R = 5.4e5;     // resin heat of reaction, J/kg
  double L = 0.03;        // part thickness, m

  void validate() const {
    if (rho <= 0 || Cp <= 0 || kxx <= 0 || rho_r <= 0 || L <= 0)
      throw std::invalid_argument("MaterialProps: all properties must be > 0");
    if (H_R < 0)  // zero is allowed: it switches the exotherm source off
      throw std::invalid_argument("MaterialProps: H_R must be >= 0");
    if (vf <= 0 || vf >= 1)
      throw std::invalid_argument("MaterialProps: vf must lie in (0, 1)");
  }
};

/// Piecewise-linear autoclave air-temperature program.
struct CureCycle {
  std::vector<std::pair<double, double>> breakpoints;  // (time s, temp degC)
  double t_end = 0.0;                                  // s

  /// Two-ramp two-hold profile: 20->110 degC at 2 degC/min, 60 min hold,
  /// 110->180 degC at 2 degC/min, hold at 180 degC until minute 300.
  static CureCycle standard();

  /// Constant-temperature program, used by degenerate-physics checks.
  static CureCycle constant(double temp_c, double t_end_s);

  void validate() const;
};

/// One curing problem: the cycle, the boundary heat-transfer pair, initial
/// state, and the material system.
struct TaskSpec {
  CureCycle cycle = CureCycle::standard();
  double h_top = 80.0;     // W/(m^2 K)
  double h_bottom = 80.0;  // W/(m^2 K)
  double T0 = 20.0;        // degC
  double alpha0 = 0.001;
  MaterialProps material;
  CureKineticsParams kinetics;

  void validate() const {
    cycle.validate();
    material.validate();
    kinetics.validate();
    if (h_top <= 0 || h_bottom <= 0)
      throw std::invalid_argument("TaskSpec: HTCs must be > 0");
    if (alpha0 < 0 || alpha0 >= 1)
      throw std::invalid_argument("TaskSpec: alpha0 must lie in [0, 1)");
  }
};

enum class Side { top, bottom };

/// Air temperature at time t, degC. t outside [0, t_end] is rejected.
double air_temperature(double t, const CureCycle& cycle);

/// Arrhenius rate constant K = A exp(-delta_E / (R T)), 1/s. T in kelvin.
template <class S>
S arrhenius_K_eval(const S& temp_kelvin, const CureKineticsParams& k) {
  using std::exp;
  return k.A * exp(S(-k.delta_E / k.R) / temp_kelvin);
}

double arrhenius_K(double temp_kelvin, const CureKineticsParams& k);

/// Cure rate K alpha^m (1-alpha)^n / (1 + e^{C(alpha - (alpha_C0 + alpha_CT T))}),
/// 1/s. Both endpoint factors vanish, so alpha at or beyond [0, 1] returns an
/// exact zero; the logistic is evaluated on whichever side of the exponent
/// cannot overflow. Generic form used inside residuals; the checked scalar
/// wrapper below is the public entry point.
template <class S>
S cure_rate_eval(const S& alpha, const S& temp_kelvin, const CureKineticsParams& k) {
  using std::exp;
  using std::pow;
  if (!(value_of(alpha) > 0.0) || !(value_of(alpha) < 1.0)) return S(0);
  S K = arrhenius_K_eval(temp_kelvin, k);
  S ext = pow(alpha, k.m) * pow(S(1) - alpha, k.n);
  S s = k.C * (alpha - (k.alpha_C0 + k.alpha_CT * temp_kelvin));
  S diffusion;
  if (value_of(s) > 0.0) {
    S e = exp(-s);
    diffusion = e / (S(1) + e);
  } else {
    diffusion = S(1) / (S(1) + exp(s));
  }
  return K * ext * diffusion;
}

double cure_rate(double alpha, double temp_kelvin, const CureKineticsParams& k);

/// Floor applied to alpha inside cure_rate_clamped. Strictly positive: at
/// alpha = 0 the power law has a genuine equilibrium, and a network whose
/// output drifts below zero would otherwise find a residual-free resting
/// state there with the reaction switched off. The floor keeps a positive
/// rate pulling such predictions back toward the physical trajectory.
constexpr double kAlphaRateFloor = 1e-3;

/// Cure rate with the arguments clamped to a trainable range (flat gradient
/// outside). Training residuals call this: a linear output layer can
/// momentarily predict alpha outside [0, 1] or unphysical temperatures, and
/// the raw power laws would produce NaN there.
template <class S>
S cure_rate_clamped(const S& alpha, const S& temp_kelvin, const CureKineticsParams& k) {
  S a = alpha;
  if (value_of(a) < kAlphaRateFloor) a = S(kAlphaRateFloor);
  if (value_of(a) > 1.0) a = S(1);
  S t = temp_kelvin;
  if (value_of(t) < 200.0) t = S(200);
  return cure_rate_eval(a, t, k);
}

constexpr double kCelsiusToKelvin = 273.15;

/// Interior energy balance, W/m^3, signed (squaring happens in the loss):
/// rho Cp dT/dt - kxx d2T/dx2 - (1-vf) rho_r H_R dalpha/dt.
template <class S>
S pde_residual_T(const S& dT_dt, const S& d2T_dx2, const S& dalpha_dt,
                 const MaterialProps& mat) {
  return mat.rho * mat.Cp * dT_dt - mat.kxx * d2T_dx2 -
         (1.0 - mat.vf) * mat.rho_r * mat.H_R * dalpha_dt;
}

/// Cure-kinetics balance, 1/s, signed: dalpha/dt - rate(alpha, T).
/// Temperature in degC (converted to kelvin internally).
template <class S>
S ode_residual_alpha(const S& alpha, const S& temp_c, const S& dalpha_dt,
                     const CureKineticsParams& k) {
  return dalpha_dt - cure_rate_clamped(alpha, temp_c + kCelsiusToKelvin, k);
}

/// Convective boundary balance, W/m^2, signed. Top (x = L):
/// h_t (T_a - T) - kxx dT/dx. Bottom (x = 0): h_b (T - T_a) - kxx dT/dx.
template <class S>
S robin_residual(Side side, const S& temp_surface_c, const S& dT_dx_surface,
                 double t, const TaskSpec& task) {
  const double ta = air_temperature(t, task.cycle);
  if (side == Side::top)
    return task.h_top * (ta - temp_surface_c) - task.material.kxx * dT_dx_surface;
  return task.h_bottom * (temp_surface_c - ta) - task.material.kxx * dT_dx_surface;
}

/// JSON round trip for configs; key schema is documented in the README.
std::string task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const std::string& json_text);

}  // namespace curepinn
