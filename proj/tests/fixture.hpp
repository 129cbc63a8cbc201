#pragma once

// Shared test fixtures. The 3-vehicle run mirrors the one in
// tests/oracle/derive_values.py, which produced the checked-in goldens.

#include <string>

#include "wavestopper/ring_sim.hpp"

namespace fixture {

inline wavestopper::SimConfig three_vehicle() {
  wavestopper::SimConfig c;
  c.ring_length = 30.0;
  c.n_vehicles = 3;
  c.vehicle_length = 4.5;
  c.av_index = 0;
  c.dt_sim = 0.05;
  c.dt_ctrl = 0.1;
  c.duration = 0.5;  // 10 steps
  c.initial.type = wavestopper::InitialCondition::Type::uniform_perturbed;
  c.initial.epsilon = 0.5;
  c.initial.perturbed_vehicle = 1;
  return c;
}

inline wavestopper::SetpointSchedule three_vehicle_schedule() {
  return wavestopper::SetpointSchedule::engage_at(0.2, 6.5);
}

inline std::string golden_path(const std::string& name) {
  return std::string(WAVESTOPPER_SOURCE_DIR) + "/tests/golden/" + name;
}

inline std::string config_path(const std::string& name) {
  return std::string(WAVESTOPPER_SOURCE_DIR) + "/configs/" + name;
}

}  // namespace fixture
