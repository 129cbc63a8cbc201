#pragma once

// Live simulation session: wire types (Frame, Command, replies), the ordered
// command mailbox, and the single-threaded stepping session the service wraps.
//
// Wire format: one JSON object per WebSocket text message, always carrying
// `type` and `schema_version`.
//
//   -> {"type":"command","schema_version":1,"client_id":"ui","seq":3,
//       "kind":"set_max_speed","v":7.5}
//   <- {"type":"ack","schema_version":1,"client_id":"ui","seq":3,
//       "status":"applied","t_effective":126.0,"step":12600}
//   <- {"type":"reject","schema_version":1,"client_id":"ui","seq":4,"reason":"..."}
//   <- {"type":"frame","schema_version":1,"epoch":0,"step":..,"t":..,"paused":false,
//       "vehicles":[{"id":0,"pos":..,"vel":..,"kind":"AV"},..],
//       "av":{"mode":"manual","r":null,"v_cmd":null,"x_rel":..,"v_rel":..,"region":"S4"},
//       "metrics":{"fleet_vel_std_rolling":..}}
//
// Command kinds: set_max_speed (v), engage, disengage, pause, resume,
// reset (optional "config": YAML text).

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "wavestopper/analysis.hpp"
#include "wavestopper/config.hpp"
#include "wavestopper/ring_sim.hpp"

namespace wavestopper::service {

using json = nlohmann::json;

struct FrameVehicle {
  int id = 0;
  double pos = 0.0;
  double vel = 0.0;
  VehicleKind kind = VehicleKind::HV;
};

struct Frame {
  std::uint64_t epoch = 0;  // incremented by reset
  std::uint64_t step = 0;
  double t = 0.0;
  bool paused = false;
  std::vector<FrameVehicle> vehicles;
  std::optional<AvRecord> av;
  double fleet_vel_std_rolling = 0.0;
};

inline json nullable(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

inline json to_json(const Frame& f) {
  json vehicles = json::array();
  for (const auto& v : f.vehicles)
    vehicles.push_back({{"id", v.id}, {"pos", v.pos}, {"vel", v.vel}, {"kind", to_string(v.kind)}});
  json j = {{"type", "frame"},
            {"schema_version", kSchemaVersion},
            {"epoch", f.epoch},
            {"step", f.step},
            {"t", f.t},
            {"paused", f.paused},
            {"vehicles", std::move(vehicles)},
            {"metrics", {{"fleet_vel_std_rolling", f.fleet_vel_std_rolling}}}};
  if (f.av) {
    j["av"] = {{"mode", to_string(f.av->mode)}, {"r", nullable(f.av->r)},
               {"v_cmd", nullable(f.av->v_cmd)}, {"x_rel", f.av->x_rel},
               {"v_rel", f.av->v_rel},           {"region", to_string(f.av->region)}};
  } else {
    j["av"] = nullptr;
  }
  return j;
}

inline double number_or_nan(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

inline Frame frame_from_json(const json& j) {
  Frame f;
  f.epoch = j.at("epoch").get<std::uint64_t>();
  f.step = j.at("step").get<std::uint64_t>();
  f.t = j.at("t").get<double>();
  f.paused = j.at("paused").get<bool>();
  for (const auto& v : j.at("vehicles"))
    f.vehicles.push_back({v.at("id").get<int>(), v.at("pos").get<double>(),
                          v.at("vel").get<double>(),
                          v.at("kind").get<std::string>() == "AV" ? VehicleKind::AV
                                                                  : VehicleKind::HV});
  if (!j.at("av").is_null()) {
    const auto& a = j.at("av");
    AvRecord rec;
    rec.mode = drive_mode_from_string(a.at("mode").get<std::string>());
    rec.r = number_or_nan(a.at("r"));
    rec.v_cmd = number_or_nan(a.at("v_cmd"));
    rec.x_rel = a.at("x_rel").get<double>();
    rec.v_rel = a.at("v_rel").get<double>();
    rec.region = region_from_string(a.at("region").get<std::string>());
    f.av = rec;
  }
  f.fleet_vel_std_rolling = j.at("metrics").at("fleet_vel_std_rolling").get<double>();
  return f;
}

enum class CommandKind : std::uint8_t { set_max_speed, engage, disengage, pause, resume, reset };

inline std::string_view to_string(CommandKind k) {
  switch (k) {
    case CommandKind::set_max_speed: return "set_max_speed";
    case CommandKind::engage: return "engage";
    case CommandKind::disengage: return "disengage";
    case CommandKind::pause: return "pause";
    case CommandKind::resume: return "resume";
    case CommandKind::reset: return "reset";
  }
  return "?";
}

struct Command {
  CommandKind kind = CommandKind::pause;
  std::string client_id;
  std::uint64_t seq = 0;
  double v = 0.0;                     // set_max_speed
  std::optional<std::string> config;  // reset: replacement config (YAML text)
};

inline json to_json(const Command& c) {
  json j = {{"type", "command"},
            {"schema_version", kSchemaVersion},
            {"client_id", c.client_id},
            {"seq", c.seq},
            {"kind", to_string(c.kind)}};
  if (c.kind == CommandKind::set_max_speed) j["v"] = c.v;
  if (c.config) j["config"] = *c.config;
  return j;
}

struct ParseError {
  std::string reason;
  std::string client_id;  // filled when recoverable from the message
  std::optional<std::uint64_t> seq;
};

/// Decodes one command message. Never throws.
inline std::variant<Command, ParseError> parse_command(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return ParseError{"malformed JSON", {}, {}};
  if (!j.is_object()) return ParseError{"command must be a JSON object", {}, {}};
  ParseError err;
  if (j.contains("client_id") && j["client_id"].is_string()) err.client_id = j["client_id"];
  if (j.contains("seq") && j["seq"].is_number_unsigned()) err.seq = j["seq"].get<std::uint64_t>();
  auto fail = [&](std::string why) {
    err.reason = std::move(why);
    return err;
  };

  if (!j.contains("type") || j["type"] != "command") return fail("field 'type' must be \"command\"");
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kSchemaVersion)
    return fail("field 'schema_version' must be " + std::to_string(kSchemaVersion));
  if (err.client_id.empty()) return fail("field 'client_id' must be a non-empty string");
  if (!err.seq) return fail("field 'seq' must be a non-negative integer");
  if (!j.contains("kind") || !j["kind"].is_string()) return fail("field 'kind' must be a string");

  Command c;
  c.client_id = err.client_id;
  c.seq = *err.seq;
  const auto kind = j["kind"].get<std::string>();
  if (kind == "set_max_speed") {
    c.kind = CommandKind::set_max_speed;
    if (!j.contains("v") || !j["v"].is_number()) return fail("set_max_speed needs numeric 'v'");
    c.v = j["v"].get<double>();
  } else if (kind == "engage") {
    c.kind = CommandKind::engage;
  } else if (kind == "disengage") {
    c.kind = CommandKind::disengage;
  } else if (kind == "pause") {
    c.kind = CommandKind::pause;
  } else if (kind == "resume") {
    c.kind = CommandKind::resume;
  } else if (kind == "reset") {
    c.kind = CommandKind::reset;
    if (j.contains("config")) {
      if (!j["config"].is_string()) return fail("reset 'config' must be YAML text");
      c.config = j["config"].get<std::string>();
    }
  } else {
    return fail("unknown command kind '" + kind + "'");
  }
  return c;
}

struct Ack {
  std::string client_id;
  std::uint64_t seq = 0;
  std::string status;  // applied | noop | duplicate
  double t_effective = 0.0;
  std::uint64_t step = 0;
};

struct Reject {
  std::string client_id;
  std::optional<std::uint64_t> seq;
  std::string reason;
};

using Reply = std::variant<Ack, Reject>;

inline json to_json(const Reply& r) {
  if (const auto* a = std::get_if<Ack>(&r))
    return {{"type", "ack"},           {"schema_version", kSchemaVersion},
            {"client_id", a->client_id}, {"seq", a->seq},
            {"status", a->status},       {"t_effective", nullable(a->t_effective)},
            {"step", a->step}};
  const auto& x = std::get<Reject>(r);
  json j = {{"type", "reject"},
            {"schema_version", kSchemaVersion},
            {"client_id", x.client_id},
            {"reason", x.reason}};
  j["seq"] = x.seq ? json(*x.seq) : json(nullptr);
  return j;
}

/// Ordered, thread-safe hand-off of commands into the stepping context.
template <typename Item>
class Mailbox {
 public:
  void post(Item item) {
    std::lock_guard lock(mu_);
    q_.push_back(std::move(item));
  }
  std::vector<Item> drain() {
    std::lock_guard lock(mu_);
    std::vector<Item> out(std::make_move_iterator(q_.begin()), std::make_move_iterator(q_.end()));
    q_.clear();
    return out;
  }

 private:
  std::mutex mu_;
  std::deque<Item> q_;
};

struct SessionOptions {
  double frame_rate = 20.0;         // frames per simulated second
  double rolling_window = 5.0;      // [s] for fleet_vel_std_rolling
  double initial_max_speed = 6.5;   // operator setpoint before any set_max_speed
};

/// A command as it was applied, keyed by the step boundary it took effect at.
struct AppliedCommand {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  Command command;
};

/// Owns one simulation and applies operator commands between steps. Not
/// thread-safe: the service drives it from a single stepping thread.
class LiveSession {
 public:
  LiveSession(SimConfig config, std::optional<SetpointSchedule> schedule,
              SessionOptions options = {})
      : base_config_(std::move(config)),
        schedule_(std::move(schedule)),
        opts_(options),
        sim_(base_config_),
        rolling_(window_steps()) {
    operator_.max_speed = opts_.initial_max_speed;
    rolling_.push(fleet_std_now());
  }

  const RingSimulator& simulator() const { return sim_; }
  bool paused() const { return paused_; }
  bool halted() const { return sim_.halted(); }
  std::uint64_t epoch() const { return epoch_; }
  const std::vector<AppliedCommand>& applied() const { return applied_; }

  /// Steps between emitted frames.
  std::uint64_t decimation() const {
    const double per = 1.0 / (opts_.frame_rate * sim_.config().dt_sim);
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(per)));
  }

  /// Applies a command at the current step boundary.
  Reply apply(const Command& c) {
    auto& last = last_seq_[c.client_id];
    if (last.has_value() && c.seq <= last->seq) {
      Ack dup = c.seq == last->seq ? last->ack : Ack{c.client_id, c.seq, "", std::nan(""), 0};
      dup.status = "duplicate";
      return dup;
    }

    const double t = sim_.time();
    const std::uint64_t step = sim_.step_index();
    const std::uint64_t epoch = epoch_;
    std::string status = "applied";
    switch (c.kind) {
      case CommandKind::set_max_speed:
        if (!std::isfinite(c.v) || c.v < 0.0)
          return Reject{c.client_id, c.seq, "max speed must be a finite value >= 0"};
        take_control();
        operator_.max_speed = c.v;
        break;
      case CommandKind::engage:
      case CommandKind::disengage: {
        if (!sim_.config().has_av())
          return Reject{c.client_id, c.seq, "simulation has no AV to engage"};
        const auto want =
            c.kind == CommandKind::engage ? DriveMode::autonomous : DriveMode::manual;
        take_control();
        if (operator_.mode == want) status = "noop";
        operator_.mode = want;
        break;
      }
      case CommandKind::pause:
        if (paused_) status = "noop";
        paused_ = true;
        break;
      case CommandKind::resume:
        if (!paused_) status = "noop";
        paused_ = false;
        break;
      case CommandKind::reset: {
        SimConfig next = base_config_;
        if (c.config) {
          try {
            next = parse_config(*c.config, "reset.config");
          } catch (const std::exception& e) {
            return Reject{c.client_id, c.seq, e.what()};
          }
        }
        base_config_ = next;
        sim_ = RingSimulator(base_config_);
        ++epoch_;
        operator_ = {};
        operator_.max_speed = opts_.initial_max_speed;
        detached_ = false;
        paused_ = false;
        rolling_ = RollingMean(window_steps());
        rolling_.push(fleet_std_now());
        break;
      }
    }
    Ack ack{c.client_id, c.seq, status, t, step};
    last = LastSeen{c.seq, ack};
    applied_.push_back({epoch, step, c});
    return ack;
  }

  /// Advances one simulation step unless paused or halted. Returns a frame on
  /// decimation boundaries.
  std::optional<Frame> advance() {
    if (paused_ || sim_.halted()) return std::nullopt;
    sim_.step(current_input());
    rolling_.push(fleet_std_now());
    if (sim_.step_index() % decimation() == 0 || sim_.halted()) return snapshot();
    return std::nullopt;
  }

  Frame snapshot() const {
    Frame f;
    f.epoch = epoch_;
    f.step = sim_.step_index();
    f.t = sim_.time();
    f.paused = paused_;
    for (const auto& s : sim_.states()) f.vehicles.push_back({s.id, s.pos, s.vel, s.kind});
    if (sim_.config().has_av()) f.av = sim_.av_record();
    f.fleet_vel_std_rolling = rolling_.value();
    return f;
  }

  /// Input the AV would see at the next step.
  ControlInput current_input() const {
    if (!detached_ && schedule_) return control_at(*schedule_, sim_.time());
    return {operator_.mode, operator_.max_speed};
  }

 private:
  struct LastSeen {
    std::uint64_t seq;
    Ack ack;
  };

  void take_control() {
    if (!detached_ && schedule_) {
      const auto in = control_at(*schedule_, sim_.time());
      operator_.mode = in.mode;
      if (in.mode == DriveMode::autonomous) operator_.max_speed = in.max_speed;
    }
    detached_ = true;
  }

  std::size_t window_steps() const {
    return static_cast<std::size_t>(std::llround(opts_.rolling_window / base_config_.dt_sim));
  }

  double fleet_std_now() const {
    std::vector<double> v;
    v.reserve(sim_.states().size());
    for (const auto& s : sim_.states()) v.push_back(s.vel);
    return fleet_std(v);
  }

  SimConfig base_config_;
  std::optional<SetpointSchedule> schedule_;
  SessionOptions opts_;
  RingSimulator sim_;
  RollingMean rolling_;
  ControlInput operator_{};
  bool detached_ = false;  // operator has overridden the schedule
  bool paused_ = false;
  std::uint64_t epoch_ = 0;
  std::map<std::string, std::optional<LastSeen>> last_seq_;
  std::vector<AppliedCommand> applied_;
};

/// Re-runs a recorded command log against a fresh session and returns the
/// serialized frame stream up to (end_epoch, end_step). Commands are applied
/// at the step boundaries they were originally applied at. Pause and resume
/// only gate wall-clock progress, so they are skipped.
inline std::vector<std::string> replay(const SimConfig& config,
                                       const std::optional<SetpointSchedule>& schedule,
                                       const std::vector<AppliedCommand>& log,
                                       std::uint64_t end_epoch, std::uint64_t end_step,
                                       SessionOptions options = {}) {
  LiveSession s(config, schedule, options);
  std::vector<std::string> frames;
  std::size_t next = 0;
  while (true) {
    while (next < log.size() && log[next].epoch == s.epoch() &&
           log[next].step == s.simulator().step_index()) {
      const auto kind = log[next].command.kind;
      if (kind != CommandKind::pause && kind != CommandKind::resume) s.apply(log[next].command);
      ++next;
    }
    if ((s.epoch() == end_epoch && s.simulator().step_index() >= end_step) || s.epoch() > end_epoch ||
        s.halted())
      break;
    if (auto f = s.advance()) frames.push_back(to_json(*f).dump());
  }
  return frames;
}

}  // namespace wavestopper::service
