#pragma once

// YAML loading for simulation configs and setpoint schedules.
//
// Config layout (schema_version 1):
//
//   schema_version: 1
//   ring:              {length, n_vehicles, vehicle_length, av_index}
//   time:              {dt_sim, dt_ctrl, duration}
//   hv_model:          {model: ovm|idm, noise, ovm: {kappa, v0, d0, w},
//                       idm: {v0, a_max, b_comf, s0, T_headway, delta}}
//   av_plant:          {tau, a_accel_max, a_brake_max}
//   followerstopper:   {omega: [w1, w2, w3], alpha: [a1, a2, a3]}
//   nominal:           {max_accel, max_decel, reset_policy: reset_to_vel|reset_to_zero}
//   initial_condition: {type: uniform|uniform_perturbed, epsilon, perturbed_vehicle}
//   rng_seed: 42
//
// Every key is optional except schema_version; unknown keys are errors.
// Schedules:
//
//   schema_version: 1
//   entries:
//     - {t_start: 0, t_end: 126, mode: manual}
//     - {t_start: 126, t_end: .inf, mode: autonomous, max_speed: 6.5}

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <array>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wavestopper/csv.hpp"
#include "wavestopper/ring_sim.hpp"

namespace wavestopper {

inline constexpr int kSchemaVersion = 1;

/// Config problem with the offending field and, when known, its 1-based line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, int line, std::string field, const std::string& what)
      : std::runtime_error(format(source, line, field, what)),
        source_(std::move(source)),
        line_(line),
        field_(std::move(field)) {}

  const std::string& source() const { return source_; }
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  static std::string format(const std::string& source, int line, const std::string& field,
                            const std::string& what) {
    std::string s = source;
    if (line > 0) s += ":" + std::to_string(line);
    s += ": ";
    if (!field.empty()) s += "field '" + field + "': ";
    return s + what;
  }

  std::string source_;
  int line_;
  std::string field_;
};

namespace detail {

class YamlReader {
 public:
  explicit YamlReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& field,
                         const std::string& what) const {
    const int line = node.IsDefined() && node.Mark().line >= 0 ? node.Mark().line + 1 : 0;
    throw ConfigError(source_, line, field, what);
  }

  void expect_keys(const YAML::Node& map, const std::string& prefix,
                   std::initializer_list<const char*> allowed) const {
    if (!map.IsDefined() || map.IsNull()) return;
    if (!map.IsMap()) fail(map, prefix, "expected a mapping");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(kv.first, join(prefix, key), "unknown key");
    }
  }

  double number(const YAML::Node& map, const std::string& prefix, const char* key,
                double fallback) const {
    const auto node = child(map, key);
    if (!node.IsDefined() || node.IsNull()) return fallback;
    try {
      return node.as<double>();
    } catch (const YAML::Exception&) {
      fail(node, join(prefix, key), "expected a number, got '" + scalar(node) + "'");
    }
  }

  std::int64_t integer(const YAML::Node& map, const std::string& prefix, const char* key,
                       std::int64_t fallback) const {
    const auto node = child(map, key);
    if (!node.IsDefined() || node.IsNull()) return fallback;
    try {
      return node.as<std::int64_t>();
    } catch (const YAML::Exception&) {
      fail(node, join(prefix, key), "expected an integer, got '" + scalar(node) + "'");
    }
  }

  std::string text(const YAML::Node& map, const std::string& prefix, const char* key,
                   std::string fallback) const {
    const auto node = child(map, key);
    if (!node.IsDefined() || node.IsNull()) return fallback;
    if (!node.IsScalar()) fail(node, join(prefix, key), "expected a scalar");
    return node.as<std::string>();
  }

  std::array<double, 3> triple(const YAML::Node& map, const std::string& prefix, const char* key,
                               std::array<double, 3> fallback) const {
    const auto node = child(map, key);
    if (!node.IsDefined() || node.IsNull()) return fallback;
    if (!node.IsSequence() || node.size() != 3)
      fail(node, join(prefix, key), "expected a list of 3 numbers");
    std::array<double, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) {
      try {
        out[i] = node[i].as<double>();
      } catch (const YAML::Exception&) {
        fail(node[i], join(prefix, key) + "[" + std::to_string(i) + "]", "expected a number");
      }
    }
    return out;
  }

  /// map[key], or an undefined node when map is not a mapping or lacks key.
  static YAML::Node child(const YAML::Node& map, const char* key) {
    if (!map.IsDefined() || !map.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
    const YAML::Node n = map[key];
    return n.IsDefined() ? n : YAML::Node(YAML::NodeType::Undefined);
  }

  static std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
  }
  static std::string scalar(const YAML::Node& n) { return n.IsScalar() ? n.Scalar() : "<non-scalar>"; }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

inline YAML::Node parse_yaml(const std::string& text, const std::string& source) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, e.mark.line >= 0 ? e.mark.line + 1 : 0, "", e.msg);
  }
}

inline void check_schema_version(const YamlReader& rd, const YAML::Node& root) {
  if (!root.IsMap()) rd.fail(root, "", "document must be a mapping");
  const auto v = root["schema_version"];
  if (!v.IsDefined()) rd.fail(root, "schema_version", "missing");
  const auto version = rd.integer(root, "", "schema_version", 0);
  if (version != kSchemaVersion)
    rd.fail(v, "schema_version",
            "unsupported version " + std::to_string(version) + " (expected " +
                std::to_string(kSchemaVersion) + ")");
}

/// Applies "a.b.c=value" overrides onto the document tree.
inline void apply_overrides(YAML::Node& root, const std::vector<std::string>& overrides,
                            const std::string& source) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError(source, 0, ov, "override must look like section.key=value");
    const std::string path = ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      parts.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    std::vector<YAML::Node> chain{root};
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      YAML::Node next = chain.back()[parts[i]];
      if (next.IsDefined() && !next.IsNull() && !next.IsMap())
        throw ConfigError(source, 0, path, "override path crosses a non-mapping value");
      chain.push_back(next);
    }
    chain.back()[parts.back()] = YAML::Load(value);
  }
}

}  // namespace detail

inline SimConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              const std::vector<std::string>& overrides = {}) {
  using detail::YamlReader;
  YAML::Node root = detail::parse_yaml(text, source);
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  detail::apply_overrides(root, overrides, source);
  YamlReader rd(source);
  detail::check_schema_version(rd, root);
  rd.expect_keys(root, "",
                 {"schema_version", "ring", "time", "hv_model", "av_plant", "followerstopper",
                  "nominal", "initial_condition", "rng_seed"});

  SimConfig c;
  const auto ring = YamlReader::child(root, "ring");
  rd.expect_keys(ring, "ring", {"length", "n_vehicles", "vehicle_length", "av_index"});
  c.ring_length = rd.number(ring, "ring", "length", c.ring_length);
  c.n_vehicles = static_cast<int>(rd.integer(ring, "ring", "n_vehicles", c.n_vehicles));
  c.vehicle_length = rd.number(ring, "ring", "vehicle_length", c.vehicle_length);
  c.av_index = static_cast<int>(rd.integer(ring, "ring", "av_index", c.av_index));

  const auto time = YamlReader::child(root, "time");
  rd.expect_keys(time, "time", {"dt_sim", "dt_ctrl", "duration"});
  c.dt_sim = rd.number(time, "time", "dt_sim", c.dt_sim);
  c.dt_ctrl = rd.number(time, "time", "dt_ctrl", c.dt_ctrl);
  c.duration = rd.number(time, "time", "duration", c.duration);

  const auto hv = YamlReader::child(root, "hv_model");
  rd.expect_keys(hv, "hv_model", {"model", "noise", "ovm", "idm"});
  const auto model = rd.text(hv, "hv_model", "model", "ovm");
  if (model == "ovm") c.hv.model = HvModel::OVM;
  else if (model == "idm") c.hv.model = HvModel::IDM;
  else rd.fail(YamlReader::child(hv, "model"), "hv_model.model", "expected ovm or idm, got '" + model + "'");
  c.hv_noise = rd.number(hv, "hv_model", "noise", c.hv_noise);
  const auto ovm = YamlReader::child(hv, "ovm");
  rd.expect_keys(ovm, "hv_model.ovm", {"kappa", "v0", "d0", "w"});
  c.hv.kappa = rd.number(ovm, "hv_model.ovm", "kappa", c.hv.kappa);
  c.hv.d0 = rd.number(ovm, "hv_model.ovm", "d0", c.hv.d0);
  c.hv.w = rd.number(ovm, "hv_model.ovm", "w", c.hv.w);
  const auto idm = YamlReader::child(hv, "idm");
  rd.expect_keys(idm, "hv_model.idm", {"v0", "a_max", "b_comf", "s0", "T_headway", "delta"});
  c.hv.a_max = rd.number(idm, "hv_model.idm", "a_max", c.hv.a_max);
  c.hv.b_comf = rd.number(idm, "hv_model.idm", "b_comf", c.hv.b_comf);
  c.hv.s0 = rd.number(idm, "hv_model.idm", "s0", c.hv.s0);
  c.hv.T_headway = rd.number(idm, "hv_model.idm", "T_headway", c.hv.T_headway);
  c.hv.delta = rd.number(idm, "hv_model.idm", "delta", c.hv.delta);
  // v0 is shared; the active model's section wins.
  c.hv.v0 = c.hv.model == HvModel::OVM ? rd.number(ovm, "hv_model.ovm", "v0", c.hv.v0)
                                       : rd.number(idm, "hv_model.idm", "v0", c.hv.v0);

  const auto plant = YamlReader::child(root, "av_plant");
  rd.expect_keys(plant, "av_plant", {"tau", "a_accel_max", "a_brake_max"});
  c.av_plant.tau = rd.number(plant, "av_plant", "tau", c.av_plant.tau);
  c.av_plant.a_accel_max = rd.number(plant, "av_plant", "a_accel_max", c.av_plant.a_accel_max);
  c.av_plant.a_brake_max = rd.number(plant, "av_plant", "a_brake_max", c.av_plant.a_brake_max);

  const auto fs = YamlReader::child(root, "followerstopper");
  rd.expect_keys(fs, "followerstopper", {"omega", "alpha"});
  c.fs.omega = rd.triple(fs, "followerstopper", "omega", c.fs.omega);
  c.fs.alpha = rd.triple(fs, "followerstopper", "alpha", c.fs.alpha);

  const auto nom = YamlReader::child(root, "nominal");
  rd.expect_keys(nom, "nominal", {"max_accel", "max_decel", "reset_policy"});
  c.nominal.max_accel = rd.number(nom, "nominal", "max_accel", c.nominal.max_accel);
  c.nominal.max_decel = std::abs(rd.number(nom, "nominal", "max_decel", c.nominal.max_decel));
  const auto policy = rd.text(nom, "nominal", "reset_policy", "reset_to_vel");
  if (policy == "reset_to_vel") c.reset_policy = NominalResetPolicy::reset_to_vel;
  else if (policy == "reset_to_zero") c.reset_policy = NominalResetPolicy::reset_to_zero;
  else rd.fail(YamlReader::child(nom, "reset_policy"), "nominal.reset_policy", "expected reset_to_vel or reset_to_zero");

  const auto ic = YamlReader::child(root, "initial_condition");
  rd.expect_keys(ic, "initial_condition", {"type", "epsilon", "perturbed_vehicle"});
  const auto type = rd.text(ic, "initial_condition", "type", "uniform_perturbed");
  if (type == "uniform") c.initial.type = InitialCondition::Type::uniform;
  else if (type == "uniform_perturbed") c.initial.type = InitialCondition::Type::uniform_perturbed;
  else rd.fail(YamlReader::child(ic, "type"), "initial_condition.type", "expected uniform or uniform_perturbed");
  c.initial.epsilon = rd.number(ic, "initial_condition", "epsilon", c.initial.epsilon);
  c.initial.perturbed_vehicle = static_cast<int>(
      rd.integer(ic, "initial_condition", "perturbed_vehicle", c.initial.perturbed_vehicle));

  const auto seed = rd.integer(root, "", "rng_seed", static_cast<std::int64_t>(c.rng_seed));
  if (seed < 0) rd.fail(YamlReader::child(root, "rng_seed"), "rng_seed", "must be >= 0");
  c.rng_seed = static_cast<std::uint64_t>(seed);

  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, "", e.what());
  }
  return c;
}

inline SimConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {}) {
  return parse_config(csv::read_file(path), path, overrides);
}

inline SetpointSchedule parse_schedule(const std::string& text,
                                       const std::string& source = "<schedule>") {
  using detail::YamlReader;
  const YAML::Node root = detail::parse_yaml(text, source);
  YamlReader rd(source);
  detail::check_schema_version(rd, root);
  rd.expect_keys(root, "", {"schema_version", "entries"});
  const auto entries = root["entries"];
  if (!entries.IsDefined() || !entries.IsSequence() || entries.size() == 0)
    rd.fail(entries.IsDefined() ? entries : root, "entries", "expected a non-empty list");

  SetpointSchedule s;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto e = entries[i];
    const std::string prefix = "entries[" + std::to_string(i) + "]";
    rd.expect_keys(e, prefix, {"t_start", "t_end", "mode", "max_speed"});
    ScheduleEntry out;
    out.t_start = rd.number(e, prefix, "t_start", std::nan(""));
    out.t_end = rd.number(e, prefix, "t_end", std::numeric_limits<double>::infinity());
    if (std::isnan(out.t_start)) rd.fail(e, prefix + ".t_start", "missing");
    const auto mode = rd.text(e, prefix, "mode", "");
    try {
      out.mode = drive_mode_from_string(mode);
    } catch (const std::invalid_argument& ex) {
      rd.fail(e["mode"].IsDefined() ? e["mode"] : e, prefix + ".mode", ex.what());
    }
    out.max_speed = rd.number(e, prefix, "max_speed", 0.0);
    if (out.mode == DriveMode::autonomous && !e["max_speed"].IsDefined())
      rd.fail(e, prefix + ".max_speed", "required for autonomous entries");
    if (out.max_speed < 0.0) rd.fail(e["max_speed"], prefix + ".max_speed", "must be >= 0");
    s.entries.push_back(out);
  }
  try {
    validate(s, 0.0);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(source, 0, "entries", ex.what());
  }
  return s;
}

inline SetpointSchedule load_schedule(const std::string& path) {
  return parse_schedule(csv::read_file(path), path);
}

}  // namespace wavestopper
