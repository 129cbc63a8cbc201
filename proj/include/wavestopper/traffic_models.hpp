#pragma once

// Car-following laws for the human-driven vehicles and the first-order
// velocity-tracking plant that realizes the AV speed command.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "wavestopper/controller.hpp"

namespace wavestopper {

enum class HvModel : std::uint8_t { OVM, IDM };

inline std::string_view to_string(HvModel m) { return m == HvModel::OVM ? "ovm" : "idm"; }

/// Parameters for both supported driver models; `model` selects which set is
/// read. Defaults put the 22-vehicle / 260 m ring in the string-unstable regime.
struct HvModelParams {
  HvModel model = HvModel::OVM;

  // Optimal velocity model
  double kappa = 1.8;  // sensitivity [1/s]
  double v0 = 12.0;    // desired speed [m/s] (also used by IDM)
  double d0 = 6.0;     // transition gap [m]
  double w = 4.0;      // transition width [m]

  // Intelligent driver model
  double a_max = 1.0;
  double b_comf = 1.5;
  double s0 = 2.0;
  double T_headway = 1.0;
  double delta = 4.0;
};

inline void validate(const HvModelParams& p) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string("hv model: ") + name + " must be > 0");
  };
  positive(p.v0, "v0");
  if (p.model == HvModel::OVM) {
    positive(p.kappa, "kappa");
    positive(p.d0, "d0");
    positive(p.w, "w");
  } else {
    positive(p.a_max, "a_max");
    positive(p.b_comf, "b_comf");
    positive(p.s0, "s0");
    positive(p.T_headway, "T_headway");
    positive(p.delta, "delta");
  }
}

struct AvPlantParams {
  double tau = 0.5;          // [s]
  double a_accel_max = 1.5;  // [m/s^2]
  double a_brake_max = 3.0;  // positive magnitude [m/s^2]
};

inline void validate(const AvPlantParams& p) {
  if (!(p.tau > 0.0)) throw std::invalid_argument("av plant: tau must be > 0");
  if (!(p.a_accel_max > 0.0)) throw std::invalid_argument("av plant: a_accel_max must be > 0");
  if (!(p.a_brake_max > 0.0)) throw std::invalid_argument("av plant: a_brake_max must be > 0");
}

/// V(s) = v0 (tanh((s - d0)/w) + tanh(d0/w)) / (1 + tanh(d0/w)).
/// V(0) = 0 and V(s) -> v0 as s -> inf.
inline double ovm_optimal_velocity(double gap, const HvModelParams& p) {
  const double t0 = std::tanh(p.d0 / p.w);
  return p.v0 * (std::tanh((gap - p.d0) / p.w) + t0) / (1.0 + t0);
}

inline double ovm_acceleration(double gap, double v, const HvModelParams& p) {
  if (!(gap > 0.0)) throw CollisionStateError(gap);
  return p.kappa * (ovm_optimal_velocity(gap, p) - v);
}

inline double idm_acceleration(double gap, double v, double v_lead, const HvModelParams& p) {
  if (!(gap > 0.0)) throw CollisionStateError(gap);
  const double dv = v - v_lead;
  const double s_star = p.s0 + v * p.T_headway + v * dv / (2.0 * std::sqrt(p.a_max * p.b_comf));
  const double interaction = s_star / gap;
  return p.a_max * (1.0 - std::pow(v / p.v0, p.delta) - interaction * interaction);
}

inline double hv_acceleration(double gap, double v, double v_lead, const HvModelParams& p) {
  return p.model == HvModel::OVM ? ovm_acceleration(gap, v, p)
                                 : idm_acceleration(gap, v, v_lead, p);
}

/// First-order lag toward v_cmd, clipped to the plant's acceleration limits.
inline double av_plant_acceleration(double v, double v_cmd, const AvPlantParams& p) {
  return std::clamp((v_cmd - v) / p.tau, -p.a_brake_max, p.a_accel_max);
}

}  // namespace wavestopper
