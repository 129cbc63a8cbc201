#pragma once

// Library side of the command-line tool. Each subcommand is a function that
// takes a request struct and returns what the tool prints or writes, so the
// CLI binary only parses flags.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wavestopper/analysis.hpp"
#include "wavestopper/config.hpp"
#include "wavestopper/controller.hpp"
#include "wavestopper/csv.hpp"
#include "wavestopper/ring_sim.hpp"

namespace wavestopper::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kCollision = 2, kInternal = 3 };

// ---------------------------------------------------------------------------
// run

struct RunRequest {
  std::string config_path;
  std::optional<std::string> schedule_path;  // none: AV stays manual
  std::string out_dir = ".";
  std::optional<std::string> run_id;          // none: next free run-NNN
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;          // --seed, beats the environment
  std::optional<std::string> env_seed;        // WAVESTOPPER_SEED, beats the config
  std::vector<std::string> overrides;         // key.path=value
  bool unwrap = false;                        // unwrapped positions in the time-space export
};

struct RunArtifacts {
  std::string timespace;
  std::string phase;  // empty when the config has no AV
  std::string boundaries;
};

struct RunReport {
  int exit_code = kOk;
  std::string run_id;
  std::vector<std::string> files;
  std::string message;
};

inline RunArtifacts render_run(const RunResult& result, const SimConfig& config, bool unwrap = false) {
  RunArtifacts a;
  a.timespace = timespace_csv(result.log, unwrap);
  if (result.log.has_av()) a.phase = phase_trace_csv(result.log);
  a.boundaries = boundaries_csv(switching_region_geometry(config.fs));
  return a;
}

inline std::uint64_t parse_seed(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text[0] != '-') v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (text.empty() || used != text.size())
    throw std::invalid_argument(what + " must be a non-negative integer, got '" + text + "'");
  return v;
}

/// Config file, then --set overrides, then WAVESTOPPER_SEED, then explicit flags.
inline SimConfig resolve_config(const RunRequest& req) {
  SimConfig c = load_config(req.config_path, req.overrides);
  if (req.env_seed) c.rng_seed = parse_seed(*req.env_seed, "WAVESTOPPER_SEED");
  if (req.seed) c.rng_seed = *req.seed;
  if (req.duration) {
    if (!(*req.duration >= 0.0)) throw std::invalid_argument("--duration must be >= 0");
    c.duration = *req.duration;
  }
  return c;
}

inline std::string manifest_path(const fs::path& dir, const std::string& run_id) {
  return (dir / (run_id + "_manifest.json")).string();
}

inline bool run_id_taken(const fs::path& dir, const std::string& run_id) {
  for (const char* suffix : {"_manifest.json", "_timespace.csv", "_phase.csv", "_boundaries.csv"})
    if (fs::exists(dir / (run_id + suffix))) return true;
  return false;
}

inline std::string next_run_id(const fs::path& dir) {
  for (int i = 1;; ++i) {
    std::ostringstream id;
    id << "run-" << std::setw(3) << std::setfill('0') << i;
    if (!run_id_taken(dir, id.str())) return id.str();
  }
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline RunReport cmd_run(const RunRequest& req) {
  RunReport rep;
  SimConfig config;
  SetpointSchedule schedule = SetpointSchedule::manual_only();
  try {
    config = resolve_config(req);
    if (req.schedule_path) schedule = load_schedule(*req.schedule_path);
    validate(schedule, config.duration);
  } catch (const std::exception& e) {
    rep.exit_code = kUsage;
    rep.message = e.what();
    return rep;
  }

  const fs::path dir(req.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    rep.exit_code = kUsage;
    rep.message = "cannot create output directory '" + req.out_dir + "': " + ec.message();
    return rep;
  }
  if (req.run_id) {
    if (req.run_id->empty() || req.run_id->find('/') != std::string::npos) {
      rep.exit_code = kUsage;
      rep.message = "--run-id must be a non-empty file name";
      return rep;
    }
    if (run_id_taken(dir, *req.run_id)) {
      rep.exit_code = kUsage;
      rep.message = "run id '" + *req.run_id + "' already used in " + req.out_dir;
      return rep;
    }
    rep.run_id = *req.run_id;
  } else {
    rep.run_id = next_run_id(dir);
  }

  const auto started = std::chrono::system_clock::now();
  const RunResult result = run(config, schedule);
  const auto finished = std::chrono::system_clock::now();
  const RunArtifacts art = render_run(result, config, req.unwrap);

  auto write = [&](const std::string& suffix, const std::string& body) {
    const auto p = (dir / (rep.run_id + suffix)).string();
    csv::write_file(p, body);
    rep.files.push_back(p);
  };
  write("_timespace.csv", art.timespace);
  if (result.log.has_av()) write("_phase.csv", art.phase);
  write("_boundaries.csv", art.boundaries);

  nlohmann::json m = {{"schema_version", kSchemaVersion},
                      {"run_id", rep.run_id},
                      {"config", req.config_path},
                      {"schedule", req.schedule_path ? nlohmann::json(*req.schedule_path)
                                                     : nlohmann::json(nullptr)},
                      {"output_dir", req.out_dir},
                      {"seed", config.rng_seed},
                      {"duration", config.duration},
                      {"steps", result.log.steps()},
                      {"started_at", utc_timestamp(started)},
                      {"finished_at", utc_timestamp(finished)},
                      {"status", result.collision ? "collision" : "ok"}};
  if (result.collision) {
    const auto& c = *result.collision;
    m["collision"] = {{"t", c.t}, {"follower", c.follower}, {"leader", c.leader}, {"gap", c.gap}};
  } else {
    m["collision"] = nullptr;
  }
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : rep.files) files.push_back(fs::path(f).filename().string());
  m["files"] = files;
  const auto mp = manifest_path(dir, rep.run_id);
  csv::write_file(mp, m.dump(2) + "\n");
  rep.files.push_back(mp);

  if (result.collision) {
    rep.exit_code = kCollision;
    rep.message = result.collision->describe();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// portrait

struct PortraitRequest {
  PortraitSpec spec;
  std::vector<double> alphas;  // constant_accel curve family; empty: {spec.alpha}
  bool clipped = false;
  AxisRange curve_v{-6.0, 4.0, 101};
  double t_end = 5.0;
  int trajectory_samples = 51;
};

struct PortraitOutput {
  std::string field;
  std::string curves;  // header only unless the category is constant_accel
  std::string trajectory;
};

inline std::string field_csv(const std::vector<FieldSample>& samples) {
  std::string out = "x_rel,v_rel,dx_dt,dv_dt\n";
  for (const auto& s : samples) {
    csv::append_number(out, s.x_rel);
    out += ',';
    csv::append_number(out, s.v_rel);
    out += ',';
    csv::append_number(out, s.dx_dt);
    out += ',';
    csv::append_number(out, s.dv_dt);
    out += '\n';
  }
  return out;
}

inline std::string curves_csv(double omega, const std::vector<double>& alphas, AxisRange v_range,
                              bool clipped) {
  std::string out = "omega,alpha,v_rel,x_rel\n";
  for (double a : alphas)
    for (const auto& p : parabola_curve(omega, a, v_range, clipped)) {
      csv::append_number(out, omega);
      out += ',';
      csv::append_number(out, a);
      out += ',';
      csv::append_number(out, p.v_rel);
      out += ',';
      csv::append_number(out, p.x_rel);
      out += '\n';
    }
  return out;
}

inline std::string trajectory_csv(const std::vector<TrajectorySample>& samples) {
  std::string out = "t,x_rel,v_rel\n";
  for (const auto& s : samples) {
    csv::append_number(out, s.t);
    out += ',';
    csv::append_number(out, s.x_rel);
    out += ',';
    csv::append_number(out, s.v_rel);
    out += '\n';
  }
  return out;
}

inline PortraitOutput cmd_portrait(const PortraitRequest& req) {
  PortraitSpec spec = req.spec;
  const std::vector<double> alphas = req.alphas.empty() ? std::vector<double>{spec.alpha} : req.alphas;
  for (double a : alphas)
    if (!(a > 0.0)) throw std::invalid_argument("--alpha values must be > 0");
  spec.alpha = alphas.front();
  PortraitOutput out;
  out.field = field_csv(portrait_field(spec));
  out.curves = spec.category == PortraitCategory::constant_accel
                   ? curves_csv(spec.omega, alphas, req.curve_v, req.clipped)
                   : std::string("omega,alpha,v_rel,x_rel\n");
  out.trajectory = trajectory_csv(portrait_trajectory(spec, req.t_end, req.trajectory_samples));
  return out;
}

// ---------------------------------------------------------------------------
// check

struct CheckItem {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct CheckGrid {
  AxisRange v_rel{-10.0, 5.0, 1000};
  std::vector<double> v_lead{0.0, 2.0, 5.0, 8.0, 12.0};
  std::vector<double> r{1.0, 6.5, 8.0};
  int x_samples = 200;
  double tolerance = 1e-9;
};

/// Runs the control-law invariant suite on user parameters. Never throws for
/// badly ordered parameters; each failing invariant is reported.
inline std::vector<CheckItem> cmd_check(const EnvelopeParams& p, const CheckGrid& g = {}) {
  std::vector<CheckItem> items;
  {
    CheckItem it{"ordering", true, "d1 < d2 < d3 for all v_rel"};
    const auto v = envelope_violations(p);
    if (!v.empty()) {
      it.pass = false;
      it.detail = v.front();
      for (std::size_t i = 1; i < v.size(); ++i) it.detail += "; " + v[i];
    }
    items.push_back(it);
  }
  for (double a : p.alpha)
    if (!(a > 0.0)) return items;  // the law is undefined; later checks are meaningless

  auto cmd = [&](double x, double v_rel, double v_lead, double r) {
    return fs_command({{x, v_rel}, v_lead, r}, p);
  };

  CheckItem cont{"continuity", true, ""};
  double worst_jump = 0.0;
  CheckItem range{"output_range", true, ""};
  CheckItem mono{"monotonicity", true, ""};
  for (int i = 0; i < g.v_rel.n; ++i) {
    const double v_rel = g.v_rel.at(i);
    const std::array<double, 3> d{envelope(1, v_rel, p), envelope(2, v_rel, p), envelope(3, v_rel, p)};
    for (double v_lead : g.v_lead)
      for (double r : g.r) {
        for (double b : d) {
          if (!(b > 0.0)) continue;
          const double jump = std::abs(cmd(b, v_rel, v_lead, r) -
                                       cmd(std::nextafter(b, INFINITY), v_rel, v_lead, r));
          worst_jump = std::max(worst_jump, jump);
          if (jump > g.tolerance && cont.pass) {
            cont.pass = false;
            std::ostringstream os;
            os << "jump " << jump << " at x_rel=" << b << " v_rel=" << v_rel << " v_lead=" << v_lead
               << " r=" << r;
            cont.detail = os.str();
          }
        }
        const double x_hi = std::max(d[0], std::max(d[1], d[2])) + 5.0;
        double prev = -INFINITY;
        for (int k = 1; k <= g.x_samples; ++k) {
          const double x = x_hi * k / g.x_samples;
          const double u = cmd(x, v_rel, v_lead, r);
          if ((u < 0.0 || u > r) && range.pass) {
            range.pass = false;
            std::ostringstream os;
            os << "v_cmd=" << u << " outside [0, " << r << "] at x_rel=" << x << " v_rel=" << v_rel;
            range.detail = os.str();
          }
          if (u < prev && mono.pass) {
            mono.pass = false;
            std::ostringstream os;
            os << "v_cmd decreases from " << prev << " to " << u << " at x_rel=" << x
               << " v_rel=" << v_rel;
            mono.detail = os.str();
          }
          prev = u;
        }
      }
  }
  if (cont.pass) {
    std::ostringstream os;
    os << "max jump " << worst_jump << " <= " << g.tolerance;
    cont.detail = os.str();
  }
  if (range.pass) range.detail = "0 <= v_cmd <= r on grid";
  if (mono.pass) mono.detail = "v_cmd nondecreasing in x_rel on grid";
  items.push_back(cont);
  items.push_back(mono);
  items.push_back(range);
  return items;
}

inline std::string format_check(const std::vector<CheckItem>& items) {
  std::string out;
  for (const auto& it : items)
    out += std::string(it.pass ? "PASS " : "FAIL ") + it.name + ": " + it.detail + "\n";
  return out;
}

inline bool all_pass(const std::vector<CheckItem>& items) {
  for (const auto& it : items)
    if (!it.pass) return false;
  return true;
}

}  // namespace wavestopper::cli
