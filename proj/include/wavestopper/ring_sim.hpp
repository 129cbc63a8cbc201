#pragma once

// Fixed-step simulation of N vehicles on a closed single-lane ring.
//
// Vehicle i follows vehicle (i + 1) mod N. One vehicle may be the AV: in
// manual mode it drives like a human, in autonomous mode it is driven by
// nominal governor -> Followerstopper -> velocity-tracking plant.
//
// Integration is semi-implicit Euler at dt_sim; the controller chain runs at
// dt_ctrl (held between ticks). A non-positive bumper gap halts the run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wavestopper/controller.hpp"
#include "wavestopper/traffic_models.hpp"

namespace wavestopper {

enum class VehicleKind : std::uint8_t { HV, AV };
enum class DriveMode : std::uint8_t { manual, autonomous };

inline std::string_view to_string(VehicleKind k) { return k == VehicleKind::AV ? "AV" : "HV"; }
inline std::string_view to_string(DriveMode m) {
  return m == DriveMode::autonomous ? "autonomous" : "manual";
}
inline DriveMode drive_mode_from_string(std::string_view s) {
  if (s == "manual") return DriveMode::manual;
  if (s == "autonomous") return DriveMode::autonomous;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "' (expected manual|autonomous)");
}

struct VehicleState {
  int id = 0;
  double pos = 0.0;    // [0, L)
  double vel = 0.0;    // >= 0
  double accel = 0.0;  // last applied acceleration
  double length = 4.5;
  VehicleKind kind = VehicleKind::HV;
};

struct InitialCondition {
  enum class Type : std::uint8_t { uniform, uniform_perturbed };
  Type type = Type::uniform_perturbed;
  double epsilon = 0.5;       // velocity kick [m/s]
  int perturbed_vehicle = 0;  // index that receives the kick
};

struct SimConfig {
  double ring_length = 260.0;
  int n_vehicles = 22;
  double vehicle_length = 4.5;
  int av_index = 0;  // -1: no AV, every vehicle is human-driven

  double dt_sim = 0.01;
  double dt_ctrl = 0.05;
  double duration = 500.0;

  HvModelParams hv;
  double hv_noise = 0.0;  // bound of uniform acceleration noise on HVs [m/s^2]; 0 = off
  AvPlantParams av_plant;
  EnvelopeParams fs;
  NominalState nominal;  // y is ignored; dt is overwritten with dt_ctrl
  NominalResetPolicy reset_policy = NominalResetPolicy::reset_to_vel;

  InitialCondition initial;
  std::uint64_t rng_seed = 42;

  bool has_av() const { return av_index >= 0; }

  /// Controller period in simulation steps.
  int ctrl_every() const {
    return std::max(1, static_cast<int>(std::lround(dt_ctrl / dt_sim)));
  }
};

inline void validate(const SimConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (!(c.ring_length > 0.0)) fail("ring.length must be > 0");
  if (c.n_vehicles < 1) fail("ring.n_vehicles must be >= 1");
  if (!(c.vehicle_length > 0.0)) fail("ring.vehicle_length must be > 0");
  if (!(c.vehicle_length * c.n_vehicles < c.ring_length))
    fail("sum of vehicle lengths must be < ring.length");
  if (c.av_index < -1 || c.av_index >= c.n_vehicles) fail("ring.av_index out of range");
  if (!(c.dt_sim > 0.0)) fail("time.dt_sim must be > 0");
  if (!(c.dt_ctrl > 0.0)) fail("time.dt_ctrl must be > 0");
  if (c.dt_sim < c.dt_ctrl &&
      std::abs(c.ctrl_every() * c.dt_sim - c.dt_ctrl) > 1e-9 * c.dt_ctrl)
    fail("time.dt_ctrl must be an integer multiple of time.dt_sim");
  if (!(c.duration >= 0.0)) fail("time.duration must be >= 0");
  if (c.hv_noise < 0.0) fail("hv_model.noise must be >= 0");
  if (!(c.nominal.max_accel > 0.0)) fail("nominal.max_accel must be > 0");
  if (c.initial.type == InitialCondition::Type::uniform_perturbed &&
      (c.initial.perturbed_vehicle < 0 || c.initial.perturbed_vehicle >= c.n_vehicles))
    fail("initial_condition.perturbed_vehicle out of range");
  validate(c.hv);
  validate(c.av_plant);
  validate(c.fs);
}

struct ScheduleEntry {
  double t_start = 0.0;
  double t_end = 0.0;
  DriveMode mode = DriveMode::manual;
  double max_speed = 0.0;
};

/// Timed operator actions. Entries are contiguous from t = 0.
struct SetpointSchedule {
  std::vector<ScheduleEntry> entries;

  /// Entry active at time t, or nullptr past the end. A tolerance of 1e-9 s
  /// absorbs step-time rounding at entry boundaries.
  const ScheduleEntry* at(double t) const {
    constexpr double tol = 1e-9;
    for (const auto& e : entries)
      if (e.t_start <= t + tol && t + tol < e.t_end) return &e;
    return nullptr;
  }

  static SetpointSchedule manual_only() {
    return {{{0.0, std::numeric_limits<double>::infinity(), DriveMode::manual, 0.0}}};
  }

  /// Manual until t_engage, then autonomous at a constant max_speed.
  static SetpointSchedule engage_at(double t_engage, double max_speed) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (t_engage <= 0.0) return {{{0.0, inf, DriveMode::autonomous, max_speed}}};
    return {{{0.0, t_engage, DriveMode::manual, 0.0},
             {t_engage, inf, DriveMode::autonomous, max_speed}}};
  }

  /// Ring-road experiment timeline: manual, then 6.5 / 7.0 / 7.5 / 8.0 / 7.5 m/s,
  /// then manual again after 463 s.
  static SetpointSchedule ring_experiment() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    using M = DriveMode;
    return {{{0.0, 126.0, M::manual, 0.0},
             {126.0, 222.0, M::autonomous, 6.5},
             {222.0, 292.0, M::autonomous, 7.0},
             {292.0, 347.0, M::autonomous, 7.5},
             {347.0, 415.0, M::autonomous, 8.0},
             {415.0, 463.0, M::autonomous, 7.5},
             {463.0, inf, M::manual, 0.0}}};
  }
};

inline void validate(const SetpointSchedule& s, double duration) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("schedule: " + m); };
  if (s.entries.empty()) fail("no entries");
  if (s.entries.front().t_start != 0.0) fail("first entry must start at t = 0");
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    const auto& e = s.entries[i];
    if (!(e.t_end > e.t_start)) fail("entry " + std::to_string(i) + " has t_end <= t_start");
    if (e.max_speed < 0.0 || !std::isfinite(e.max_speed))
      fail("entry " + std::to_string(i) + " has invalid max_speed");
    if (i > 0 && e.t_start != s.entries[i - 1].t_end)
      fail("entry " + std::to_string(i) + " is not contiguous with the previous entry");
  }
  if (s.entries.back().t_end < duration) fail("entries do not cover the run duration");
}

struct Relatives {
  double gap = 0.0;     // bumper gap to the leader [m]; <= 0 means collision
  double v_lead = 0.0;
  double v_rel = 0.0;   // v_lead - v_i
};

/// Gap and relative speed of vehicle i to its leader (i + 1) mod N.
inline Relatives gap_and_relatives(std::span<const VehicleState> states, std::size_t i, double L) {
  if (states.empty()) throw std::invalid_argument("gap_and_relatives: no vehicles");
  const std::size_t n = states.size();
  const auto& ego = states[i];
  const auto& lead = states[(i + 1) % n];
  double centre = n == 1 ? L : lead.pos - ego.pos;
  if (centre < 0.0) centre += L;
  return {centre - lead.length, lead.vel, lead.vel - ego.vel};
}

/// AV channel of one log row. r and v_cmd are NaN while in manual mode.
struct AvRecord {
  DriveMode mode = DriveMode::manual;
  double x_rel = 0.0;
  double v_rel = 0.0;
  Region region = Region::S4;
  double r = std::numeric_limits<double>::quiet_NaN();
  double v_cmd = std::numeric_limits<double>::quiet_NaN();
};

struct VehicleInfo {
  int id = 0;
  VehicleKind kind = VehicleKind::HV;
  double length = 0.0;
};

/// Per-step records, row-major by step then vehicle.
struct TrajectoryLog {
  double ring_length = 0.0;
  double dt = 0.0;
  int av_index = -1;
  std::vector<VehicleInfo> vehicles;

  std::vector<double> t;
  std::vector<double> pos, vel, accel;  // size steps() * vehicle_count()
  std::vector<AvRecord> av;             // size steps() when av_index >= 0, else empty

  std::size_t steps() const { return t.size(); }
  std::size_t vehicle_count() const { return vehicles.size(); }
  bool has_av() const { return av_index >= 0; }

  std::span<const double> vel_row(std::size_t k) const {
    return {vel.data() + k * vehicle_count(), vehicle_count()};
  }
  std::span<const double> pos_row(std::size_t k) const {
    return {pos.data() + k * vehicle_count(), vehicle_count()};
  }
  DriveMode mode_of(std::size_t k, std::size_t vehicle) const {
    return has_av() && static_cast<int>(vehicle) == av_index ? av[k].mode : DriveMode::manual;
  }
};

struct CollisionEvent {
  double t = 0.0;
  int follower = 0;
  int leader = 0;
  double gap = 0.0;

  std::string describe() const {
    std::ostringstream os;
    os << "collision at t=" << t << " s: vehicle " << follower << " reached gap " << gap
       << " m behind vehicle " << leader;
    return os.str();
  }
};

/// What the AV is asked to do during one step.
struct ControlInput {
  DriveMode mode = DriveMode::manual;
  double max_speed = 0.0;
};

/// Equilibrium speed of uniform flow at bumper gap s.
inline double equilibrium_speed(double gap, const HvModelParams& p) {
  if (p.model == HvModel::OVM) return ovm_optimal_velocity(gap, p);
  // IDM: solve 1 - (v/v0)^delta - ((s0 + v T) / gap)^2 = 0 on [0, v0].
  double lo = 0.0, hi = p.v0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (idm_acceleration(gap, mid, mid, p) > 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline std::vector<VehicleState> initial_states(const SimConfig& c) {
  const double spacing = c.ring_length / c.n_vehicles;
  const double v_eq = equilibrium_speed(spacing - c.vehicle_length, c.hv);
  std::vector<VehicleState> s(static_cast<std::size_t>(c.n_vehicles));
  for (int i = 0; i < c.n_vehicles; ++i) {
    auto& v = s[static_cast<std::size_t>(i)];
    v.id = i;
    v.pos = i * spacing;
    v.vel = v_eq;
    v.length = c.vehicle_length;
    v.kind = i == c.av_index ? VehicleKind::AV : VehicleKind::HV;
  }
  if (c.initial.type == InitialCondition::Type::uniform_perturbed) {
    auto& p = s[static_cast<std::size_t>(c.initial.perturbed_vehicle)];
    p.vel = std::max(0.0, p.vel + c.initial.epsilon);
  }
  return s;
}

class RingSimulator {
 public:
  explicit RingSimulator(SimConfig config)
      : cfg_(std::move(config)), rng_(cfg_.rng_seed) {
    validate(cfg_);
    cfg_.nominal.dt = cfg_.dt_ctrl;
    nominal_ = cfg_.nominal;
    states_ = initial_states(cfg_);
    relatives_.resize(states_.size());
    accel_.resize(states_.size());
    refresh_relatives();
    if (auto c = find_collision()) collision_ = c;
  }

  const SimConfig& config() const { return cfg_; }
  const std::vector<VehicleState>& states() const { return states_; }
  std::uint64_t step_index() const { return step_; }
  double time() const { return static_cast<double>(step_) * cfg_.dt_sim; }
  bool halted() const { return collision_.has_value(); }
  const std::optional<CollisionEvent>& collision() const { return collision_; }
  DriveMode mode() const { return mode_; }
  const NominalState& nominal() const { return nominal_; }

  /// AV channel for the current (not yet integrated) state.
  AvRecord av_record() const {
    AvRecord rec;
    if (!cfg_.has_av()) return rec;
    const auto& rel = relatives_[static_cast<std::size_t>(cfg_.av_index)];
    rec.mode = mode_;
    rec.x_rel = rel.gap;
    rec.v_rel = rel.v_rel;
    rec.region = rel.gap > 0.0 ? classify_region({rel.gap, rel.v_rel}, cfg_.fs) : Region::S1;
    if (mode_ == DriveMode::autonomous) {
      rec.r = r_;
      rec.v_cmd = v_cmd_;
    }
    return rec;
  }

  /// Start an empty log whose header matches this simulation.
  TrajectoryLog make_log() const {
    TrajectoryLog log;
    log.ring_length = cfg_.ring_length;
    log.dt = cfg_.dt_sim;
    log.av_index = cfg_.av_index;
    for (const auto& s : states_) log.vehicles.push_back({s.id, s.kind, s.length});
    return log;
  }

  /// Advance one dt_sim. The pre-step state and the accelerations applied
  /// during the step are appended to `log` when given. Returns false (and does
  /// nothing) once the run has halted on a collision.
  bool step(const ControlInput& input, TrajectoryLog* log = nullptr) {
    if (halted()) return false;
    const std::size_t n = states_.size();

    if (cfg_.has_av()) update_controller(input);

    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = states_[i];
      const auto& rel = relatives_[i];
      if (static_cast<int>(i) == cfg_.av_index && mode_ == DriveMode::autonomous) {
        accel_[i] = av_plant_acceleration(s.vel, v_cmd_, cfg_.av_plant);
      } else {
        accel_[i] = hv_acceleration(rel.gap, s.vel, rel.v_lead, cfg_.hv);
        if (cfg_.hv_noise > 0.0) accel_[i] += noise_(rng_) * cfg_.hv_noise;
      }
    }

    if (log) append(*log);

    for (std::size_t i = 0; i < n; ++i) {
      auto& s = states_[i];
      s.accel = accel_[i];
      s.vel = std::max(0.0, s.vel + accel_[i] * cfg_.dt_sim);
      s.pos = std::fmod(s.pos + s.vel * cfg_.dt_sim, cfg_.ring_length);
    }
    ++step_;
    refresh_relatives();
    if (auto c = find_collision()) collision_ = c;
    return true;
  }

 private:
  void update_controller(const ControlInput& input) {
    const auto av = static_cast<std::size_t>(cfg_.av_index);
    if (input.mode != mode_) {
      mode_ = input.mode;
      if (mode_ == DriveMode::autonomous) {
        nominal_.reset(cfg_.reset_policy, states_[av].vel);
        ctrl_countdown_ = 0;
      }
    }
    if (mode_ != DriveMode::autonomous) return;
    if (ctrl_countdown_ == 0) {
      const auto& rel = relatives_[av];
      const auto nom = nominal_step(nominal_, input.max_speed, states_[av].vel);
      nominal_ = nom.state;
      r_ = nom.r;
      v_cmd_ = fs_command({{rel.gap, rel.v_rel}, rel.v_lead, r_}, cfg_.fs);
      ctrl_countdown_ = cfg_.ctrl_every();
    }
    --ctrl_countdown_;
  }

  void refresh_relatives() {
    for (std::size_t i = 0; i < states_.size(); ++i)
      relatives_[i] = gap_and_relatives(states_, i, cfg_.ring_length);
  }

  std::optional<CollisionEvent> find_collision() const {
    const std::size_t n = states_.size();
    if (n < 2) return std::nullopt;
    for (std::size_t i = 0; i < n; ++i)
      if (!(relatives_[i].gap > 0.0))
        return CollisionEvent{time(), states_[i].id, states_[(i + 1) % n].id, relatives_[i].gap};
    return std::nullopt;
  }

  void append(TrajectoryLog& log) const {
    log.t.push_back(time());
    for (std::size_t i = 0; i < states_.size(); ++i) {
      log.pos.push_back(states_[i].pos);
      log.vel.push_back(states_[i].vel);
      log.accel.push_back(accel_[i]);
    }
    if (cfg_.has_av()) log.av.push_back(av_record());
  }

  SimConfig cfg_;
  std::vector<VehicleState> states_;
  std::vector<Relatives> relatives_;
  std::vector<double> accel_;
  std::uint64_t step_ = 0;
  std::optional<CollisionEvent> collision_;

  DriveMode mode_ = DriveMode::manual;
  NominalState nominal_;
  double r_ = 0.0;
  double v_cmd_ = 0.0;
  int ctrl_countdown_ = 0;

  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> noise_{-1.0, 1.0};
};

struct RunResult {
  TrajectoryLog log;
  std::optional<CollisionEvent> collision;
};

inline ControlInput control_at(const SetpointSchedule& schedule, double t) {
  const auto* e = schedule.at(t);
  if (!e) return {};
  return {e->mode, e->max_speed};
}

/// Run for config.duration. On a collision the log holds every step up to and
/// including the one that closed the gap.
inline RunResult run(const SimConfig& config, const SetpointSchedule& schedule) {
  validate(schedule, config.duration);
  RingSimulator sim(config);
  RunResult out{sim.make_log(), sim.collision()};
  if (out.collision) return out;
  const auto steps = static_cast<std::uint64_t>(std::llround(config.duration / config.dt_sim));
  out.log.t.reserve(steps);
  out.log.pos.reserve(steps * out.log.vehicle_count());
  out.log.vel.reserve(steps * out.log.vehicle_count());
  out.log.accel.reserve(steps * out.log.vehicle_count());
  for (std::uint64_t k = 0; k < steps; ++k) {
    sim.step(control_at(schedule, sim.time()), &out.log);
    if (sim.halted()) {
      out.collision = sim.collision();
      break;
    }
  }
  return out;
}

}  // namespace wavestopper
