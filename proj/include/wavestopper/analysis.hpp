#pragma once

// Phase-portrait data, switching-region geometry, log exports and wave
// metrics. Everything here is a pure function of its inputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wavestopper/controller.hpp"
#include "wavestopper/csv.hpp"
#include "wavestopper/ring_sim.hpp"

namespace wavestopper {

// ---------------------------------------------------------------------------
// Phase portraits

enum class PortraitCategory : std::uint8_t { constant_v_rel, linear, constant_accel };

inline std::string_view to_string(PortraitCategory c) {
  switch (c) {
    case PortraitCategory::constant_v_rel: return "constant_v_rel";
    case PortraitCategory::linear: return "linear";
    case PortraitCategory::constant_accel: return "constant_accel";
  }
  return "?";
}

inline PortraitCategory portrait_category_from_string(std::string_view s) {
  if (s == "constant_v_rel") return PortraitCategory::constant_v_rel;
  if (s == "linear") return PortraitCategory::linear;
  if (s == "constant_accel") return PortraitCategory::constant_accel;
  throw std::invalid_argument("unknown portrait category '" + std::string(s) + "'");
}

struct AxisRange {
  double min = 0.0;
  double max = 1.0;
  int n = 2;

  double at(int i) const { return n == 1 ? min : min + (max - min) * i / (n - 1); }
};

struct PortraitSpec {
  PortraitCategory category = PortraitCategory::constant_accel;
  double k = 0.5;       // slope of v_rel = k x_rel (linear)
  double omega = 5.0;   // design distance [m] (constant_accel)
  double alpha = 1.0;   // relative acceleration [m/s^2] (constant_accel)
  double v_rel0 = 0.0;  // initial relative speed for trajectories
  AxisRange x{0.0, 20.0, 21};
  AxisRange v{-6.0, 6.0, 13};
};

inline void validate(const PortraitSpec& s) {
  if (s.x.n < 2 || s.v.n < 2) throw std::invalid_argument("portrait grid needs >= 2 points per axis");
  if (!(s.x.max > s.x.min) || !(s.v.max > s.v.min))
    throw std::invalid_argument("portrait grid ranges must be increasing");
  if (s.category == PortraitCategory::constant_accel && !(s.alpha > 0.0))
    throw std::invalid_argument("constant_accel portrait needs alpha > 0");
}

struct FieldSample {
  double x_rel = 0.0;
  double v_rel = 0.0;
  double dx_dt = 0.0;
  double dv_dt = 0.0;
};

/// Vector field (dx_rel/dt, dv_rel/dt) at a single point.
inline FieldSample field_at(const PortraitSpec& spec, double x_rel, double v_rel) {
  switch (spec.category) {
    case PortraitCategory::constant_v_rel: return {x_rel, v_rel, v_rel, 0.0};
    // v_rel = k x_rel  =>  dv_rel/dt = k dx_rel/dt = k v_rel
    case PortraitCategory::linear: return {x_rel, v_rel, v_rel, spec.k * v_rel};
    case PortraitCategory::constant_accel: return {x_rel, v_rel, v_rel, spec.alpha};
  }
  return {};
}

/// Field sampled on the spec grid, x varying fastest.
inline std::vector<FieldSample> portrait_field(const PortraitSpec& spec) {
  validate(spec);
  std::vector<FieldSample> out;
  out.reserve(static_cast<std::size_t>(spec.x.n) * static_cast<std::size_t>(spec.v.n));
  for (int j = 0; j < spec.v.n; ++j)
    for (int i = 0; i < spec.x.n; ++i) out.push_back(field_at(spec, spec.x.at(i), spec.v.at(j)));
  return out;
}

struct TrajectorySample {
  double t = 0.0;
  double x_rel = 0.0;
  double v_rel = 0.0;
};

/// Closed-form trajectory starting at (omega, v_rel0) for the spec's category.
inline std::vector<TrajectorySample> portrait_trajectory(const PortraitSpec& spec, double t_end,
                                                         int n) {
  if (n < 2 || !(t_end > 0.0)) throw std::invalid_argument("trajectory needs n >= 2 and t_end > 0");
  std::vector<TrajectorySample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = t_end * i / (n - 1);
    switch (spec.category) {
      case PortraitCategory::constant_v_rel:
        out.push_back({t, spec.omega + spec.v_rel0 * t, spec.v_rel0});
        break;
      case PortraitCategory::linear: {
        const double x = spec.omega * std::exp(spec.k * t);
        out.push_back({t, x, spec.k * x});
        break;
      }
      case PortraitCategory::constant_accel:
        out.push_back({t, spec.omega + spec.v_rel0 * t + spec.alpha * t * t / 2.0,
                       spec.v_rel0 + spec.alpha * t});
        break;
    }
  }
  return out;
}

struct CurvePoint {
  double v_rel = 0.0;
  double x_rel = 0.0;
};

/// x = omega + v^2/(2 alpha), or with v replaced by min{0, v} when clipped.
inline std::vector<CurvePoint> parabola_curve(double omega, double alpha, AxisRange v_range,
                                              bool clipped) {
  if (!(alpha > 0.0)) throw std::invalid_argument("parabola_curve: alpha must be > 0");
  if (v_range.n < 2) throw std::invalid_argument("parabola_curve: need >= 2 samples");
  std::vector<CurvePoint> out;
  out.reserve(static_cast<std::size_t>(v_range.n));
  for (int i = 0; i < v_range.n; ++i) {
    const double v = v_range.at(i);
    out.push_back({v, clipped ? clipped_parabola(omega, alpha, v) : parabola(omega, alpha, v)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Switching regions

struct RegionLabel {
  Region region = Region::S1;
  double v_rel = 0.0;
  double x_rel = 0.0;
};

struct SwitchingGeometry {
  std::vector<double> v_rel;
  std::array<std::vector<double>, 3> d;  // d1, d2, d3 at each v_rel
  std::array<RegionLabel, 4> labels;     // anchor points inside each region
};

inline SwitchingGeometry switching_region_geometry(const EnvelopeParams& params,
                                                   AxisRange v_range = {-8.0, 4.0, 241}) {
  validate(params);
  if (v_range.n < 2) throw std::invalid_argument("switching_region_geometry: need >= 2 samples");
  SwitchingGeometry g;
  for (int i = 0; i < v_range.n; ++i) {
    const double v = v_range.at(i);
    g.v_rel.push_back(v);
    for (int j = 0; j < 3; ++j) g.d[j].push_back(envelope(j + 1, v, params));
  }
  const double va = 0.5 * (v_range.min + v_range.max);
  const double d1 = envelope(1, va, params), d2 = envelope(2, va, params),
               d3 = envelope(3, va, params);
  g.labels = {{{Region::S1, va, 0.5 * d1},
               {Region::S2, va, 0.5 * (d1 + d2)},
               {Region::S3, va, 0.5 * (d2 + d3)},
               {Region::S4, va, d3 + (d3 - d2)}}};
  return g;
}

inline std::string boundaries_csv(const SwitchingGeometry& g) {
  std::string out = "v_rel,d1,d2,d3\n";
  for (std::size_t i = 0; i < g.v_rel.size(); ++i) {
    csv::append_number(out, g.v_rel[i]);
    for (int j = 0; j < 3; ++j) {
      out += ',';
      csv::append_number(out, g.d[j][i]);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Log exports

/// One row per vehicle per step: t,vehicle_id,pos,vel,mode. With `unwrap`,
/// positions accumulate whole laps instead of folding into [0, L).
inline std::string timespace_csv(const TrajectoryLog& log, bool unwrap = false) {
  std::string out = "t,vehicle_id,pos,vel,mode\n";
  const std::size_t n = log.vehicle_count();
  std::vector<double> laps(n, 0.0);
  for (std::size_t k = 0; k < log.steps(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      double p = log.pos[k * n + i];
      if (unwrap) {
        if (k > 0 && p < log.pos[(k - 1) * n + i]) laps[i] += 1.0;
        p += laps[i] * log.ring_length;
      }
      csv::append_number(out, log.t[k]);
      out += ',';
      csv::append_number(out, static_cast<long long>(log.vehicles[i].id));
      out += ',';
      csv::append_number(out, p);
      out += ',';
      csv::append_number(out, log.vel[k * n + i]);
      out += ',';
      out += to_string(log.mode_of(k, i));
      out += '\n';
    }
  }
  return out;
}

/// AV phase trace: t,x_rel,v_rel,region,v_cmd,r. r and v_cmd are empty on
/// manual rows.
inline std::string phase_trace_csv(const TrajectoryLog& log) {
  if (!log.has_av()) throw std::invalid_argument("phase trace export: log has no AV channel");
  std::string out = "t,x_rel,v_rel,region,v_cmd,r\n";
  for (std::size_t k = 0; k < log.steps(); ++k) {
    const auto& a = log.av[k];
    csv::append_number(out, log.t[k]);
    out += ',';
    csv::append_number(out, a.x_rel);
    out += ',';
    csv::append_number(out, a.v_rel);
    out += ',';
    out += to_string(a.region);
    out += ',';
    csv::append_number(out, a.v_cmd);
    out += ',';
    csv::append_number(out, a.r);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wave metrics

struct WaveMetrics {
  double t0 = 0.0;
  double t1 = 0.0;
  double fleet_vel_std = 0.0;  // population std over all vehicle-step samples
  double min_fleet_vel = 0.0;
  int wave_count = 0;
};

/// Indices of log steps with t in [t0, t1).
inline std::pair<std::size_t, std::size_t> window_steps(const TrajectoryLog& log, double t0,
                                                        double t1) {
  if (log.steps() == 0) throw std::invalid_argument("wave metrics: empty log");
  const double span_end = log.t.back() + log.dt;
  constexpr double tol = 1e-9;
  if (!(t0 < t1) || t0 < log.t.front() - tol || t1 > span_end + tol)
    throw std::out_of_range("wave metrics: window [" + std::to_string(t0) + ", " +
                            std::to_string(t1) + ") outside log span");
  const auto lo = std::lower_bound(log.t.begin(), log.t.end(), t0 - tol) - log.t.begin();
  const auto hi = std::lower_bound(log.t.begin(), log.t.end(), t1 - tol) - log.t.begin();
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

inline WaveMetrics wave_metrics(const TrajectoryLog& log, double t0, double t1) {
  const auto [lo, hi] = window_steps(log, t0, t1);
  if (hi <= lo) throw std::out_of_range("wave metrics: window contains no steps");
  const std::size_t n = log.vehicle_count();

  double sum = 0.0, min_v = std::numeric_limits<double>::infinity();
  for (std::size_t k = lo; k < hi; ++k)
    for (double v : log.vel_row(k)) {
      sum += v;
      min_v = std::min(min_v, v);
    }
  const double count = static_cast<double>((hi - lo) * n);
  const double mean = sum / count;
  double ss = 0.0;
  for (std::size_t k = lo; k < hi; ++k)
    for (double v : log.vel_row(k)) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / count);

  const double threshold = mean - 2.0 * sd;
  int crossings = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = lo + 1; k < hi; ++k)
      if (log.vel[(k - 1) * n + i] >= threshold && log.vel[k * n + i] < threshold) ++crossings;

  return {t0, t1, sd, min_v, crossings};
}

/// Population std of vehicle speeds at one instant.
inline double fleet_std(std::span<const double> vel) {
  if (vel.empty()) return 0.0;
  double mean = 0.0;
  for (double v : vel) mean += v;
  mean /= static_cast<double>(vel.size());
  double ss = 0.0;
  for (double v : vel) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(vel.size()));
}

/// Mean of the most recent `capacity` pushed samples.
class RollingMean {
 public:
  explicit RollingMean(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  double push(double v) {
    buf_.push_back(v);
    sum_ += v;
    if (buf_.size() > capacity_) {
      sum_ -= buf_.front();
      buf_.pop_front();
    }
    return value();
  }
  double value() const { return buf_.empty() ? 0.0 : sum_ / static_cast<double>(buf_.size()); }
  void clear() {
    buf_.clear();
    sum_ = 0.0;
  }

 private:
  std::size_t capacity_;
  std::deque<double> buf_;
  double sum_ = 0.0;
};

/// Instantaneous fleet std averaged over a trailing window, one value per step.
inline std::vector<double> rolling_fleet_std(const TrajectoryLog& log, double window_s) {
  RollingMean avg(static_cast<std::size_t>(std::llround(window_s / log.dt)));
  std::vector<double> out;
  out.reserve(log.steps());
  for (std::size_t k = 0; k < log.steps(); ++k) out.push_back(avg.push(fleet_std(log.vel_row(k))));
  return out;
}

struct OnsetCriterion {
  double rolling_window = 5.0;  // trailing window of the rolling std [s]
  double fraction = 0.8;        // drop below fraction * reference
  double hold = 15.0;           // must stay below for this long [s]
};

/// Seconds after t_engage at which the rolling fleet std first drops below
/// fraction * reference_std and stays there for `hold` seconds.
inline std::optional<double> dampening_onset(const TrajectoryLog& log, double t_engage,
                                             double reference_std, OnsetCriterion c = {}) {
  const auto rolling = rolling_fleet_std(log, c.rolling_window);
  const double limit = c.fraction * reference_std;
  const auto hold_steps = static_cast<std::size_t>(std::llround(c.hold / log.dt));
  const auto first =
      static_cast<std::size_t>(std::lower_bound(log.t.begin(), log.t.end(), t_engage - 1e-9) -
                               log.t.begin());
  std::size_t run = 0;
  for (std::size_t k = first; k < log.steps(); ++k) {
    run = rolling[k] <= limit ? run + 1 : 0;
    if (run > hold_steps) return log.t[k - hold_steps] - t_engage;
  }
  return std::nullopt;
}

}  // namespace wavestopper
