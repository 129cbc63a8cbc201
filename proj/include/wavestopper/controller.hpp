#pragma once

// Followerstopper phase-space velocity controller and the nominal
// reference-velocity governor that feeds it.
//
// Conventions (SI throughout):
//   x_rel  gap from the ego front bumper to the leader rear bumper [m]
//   v_rel  v_lead - v_ego [m/s]; negative means the gap is closing
//   r      reference velocity handed to the controller [m/s]

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wavestopper {

/// Raised when a phase point with a non-positive gap reaches the control law
/// or a car-following model. Callers treat this as a collision.
class CollisionStateError : public std::domain_error {
 public:
  explicit CollisionStateError(double gap)
      : std::domain_error("collision state: non-positive gap " + std::to_string(gap)),
        gap_(gap) {}
  double gap() const noexcept { return gap_; }

 private:
  double gap_;
};

/// Quadratic curve x = omega + (min{0, v})^2 / (2 alpha). Shared by the
/// switching envelopes and the clipped phase-portrait curves.
inline double clipped_parabola(double omega, double alpha, double v_rel) {
  const double closing = std::min(0.0, v_rel);
  return omega + (1.0 / (2.0 * alpha)) * (closing * closing);
}

/// Unclipped constant-acceleration phase curve x = omega + v^2 / (2 alpha).
inline double parabola(double omega, double alpha, double v_rel) {
  return omega + (1.0 / (2.0 * alpha)) * (v_rel * v_rel);
}

/// The three (omega_j, alpha_j) pairs that shape the switching envelopes.
struct EnvelopeParams {
  std::array<double, 3> omega{4.5, 5.25, 6.0};
  std::array<double, 3> alpha{1.5, 1.0, 0.5};

  static EnvelopeParams defaults() { return {}; }
};

/// Human-readable list of violated invariants; empty when the parameters are
/// usable. Ordering (omega increasing, alpha decreasing) keeps d1 < d2 < d3.
inline std::vector<std::string> envelope_violations(const EnvelopeParams& p) {
  std::vector<std::string> out;
  for (int j = 0; j < 3; ++j) {
    if (!(p.omega[j] > 0.0)) out.push_back("omega" + std::to_string(j + 1) + " must be > 0");
    if (!(p.alpha[j] > 0.0)) out.push_back("alpha" + std::to_string(j + 1) + " must be > 0");
  }
  if (!(p.omega[0] < p.omega[1] && p.omega[1] < p.omega[2]))
    out.push_back("omega must be strictly increasing (omega1 < omega2 < omega3)");
  if (!(p.alpha[0] > p.alpha[1] && p.alpha[1] > p.alpha[2]))
    out.push_back("alpha must be strictly decreasing (alpha1 > alpha2 > alpha3)");
  return out;
}

inline void validate(const EnvelopeParams& p) {
  const auto v = envelope_violations(p);
  if (!v.empty()) throw std::invalid_argument("envelope parameters: " + v.front());
}

struct PhasePoint {
  double x_rel = 0.0;
  double v_rel = 0.0;
};

enum class Region : std::uint8_t { S1 = 1, S2 = 2, S3 = 3, S4 = 4 };

inline std::string_view to_string(Region r) {
  switch (r) {
    case Region::S1: return "S1";
    case Region::S2: return "S2";
    case Region::S3: return "S3";
    case Region::S4: return "S4";
  }
  return "?";
}

inline Region region_from_string(std::string_view s) {
  if (s == "S1") return Region::S1;
  if (s == "S2") return Region::S2;
  if (s == "S3") return Region::S3;
  if (s == "S4") return Region::S4;
  throw std::invalid_argument("unknown region tag '" + std::string(s) + "'");
}

struct FsInputs {
  PhasePoint phase;
  double v_lead = 0.0;
  double r = 0.0;
};

/// Safety envelope d_j(v_rel), j in {1,2,3}.
inline double envelope(int j, double v_rel, const EnvelopeParams& params) {
  if (j < 1 || j > 3) throw std::out_of_range("envelope index must be 1..3");
  return clipped_parabola(params.omega[j - 1], params.alpha[j - 1], v_rel);
}

/// Region of the (x_rel, v_rel) plane. A point on an envelope belongs to the
/// lower-indexed region.
inline Region classify_region(const PhasePoint& phase, const EnvelopeParams& params) {
  if (!(phase.x_rel > 0.0)) throw CollisionStateError(phase.x_rel);
  if (phase.x_rel <= envelope(1, phase.v_rel, params)) return Region::S1;
  if (phase.x_rel <= envelope(2, phase.v_rel, params)) return Region::S2;
  if (phase.x_rel <= envelope(3, phase.v_rel, params)) return Region::S3;
  return Region::S4;
}

/// Leader speed clamped into [0, r].
inline double clamp_lead_velocity(double v_lead, double r) {
  return std::min(std::max(v_lead, 0.0), r);
}

struct FsOutput {
  double v_cmd = 0.0;
  Region region = Region::S4;
};

/// Control law with the region that produced the command.
inline FsOutput fs_evaluate(const FsInputs& in, const EnvelopeParams& params) {
  const double x = in.phase.x_rel;
  if (!(x > 0.0)) throw CollisionStateError(x);
  const double r = in.r;
  const double v = clamp_lead_velocity(in.v_lead, r);
  const double d1 = envelope(1, in.phase.v_rel, params);
  const double d2 = envelope(2, in.phase.v_rel, params);
  const double d3 = envelope(3, in.phase.v_rel, params);

  if (x <= d1) return {0.0, Region::S1};
  if (x <= d2) return {v * ((x - d1) / (d2 - d1)), Region::S2};
  if (x <= d3) return {std::min(r, v + (r - v) * ((x - d2) / (d3 - d2))), Region::S3};
  return {r, Region::S4};
}

/// Commanded ego speed; always within [0, r].
inline double fs_command(const FsInputs& in, const EnvelopeParams& params) {
  return fs_evaluate(in, params).v_cmd;
}

/// What the governor does with its internal state when the controller is
/// (re-)engaged.
enum class NominalResetPolicy : std::uint8_t { reset_to_vel, reset_to_zero };

/// Persistent state of the reference-velocity governor.
struct NominalState {
  double y = 0.0;           // internal reference [m/s]
  double dt = 0.05;         // governor period [s]
  double max_accel = 1.5;   // [m/s^2]
  double max_decel = 3.0;   // magnitude is used; sign is ignored

  void reset(NominalResetPolicy policy, double current_vel) {
    y = policy == NominalResetPolicy::reset_to_vel ? current_vel : 0.0;
  }
};

struct NominalOutput {
  double r = 0.0;
  NominalState state;
};

/// One governor tick: rate-limit y toward max_speed (with a +-1 m/s snap band),
/// apply the 2 m/s / 1 m/s speed floors, then keep r within [vel-1, vel+2].
///
/// The y < 1 floor is only reachable when max_speed <= 2; that ordering is
/// intentional and kept as is.
inline NominalOutput nominal_step(NominalState state, double max_speed, double vel) {
  if (!(state.dt > 0.0)) throw std::invalid_argument("nominal governor dt must be > 0");
  double y = state.y;
  if (y > max_speed + 1.0) {
    y = std::max(max_speed, y - std::abs(state.max_decel) * state.dt);
  } else if (y < max_speed - 1.0) {
    y = std::min(max_speed, y + state.max_accel * state.dt);
  } else {
    y = max_speed;
  }

  if (y < 2.0 && max_speed > 2.0) {
    y = 2.0;
  } else if (y < 1.0 && max_speed > 1.0) {
    y = 1.0;
  }

  state.y = y;
  return {std::min(std::max(y, vel - 1.0), vel + 2.0), state};
}

}  // namespace wavestopper
