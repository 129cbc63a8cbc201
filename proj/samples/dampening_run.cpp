// Runs the ring with the default schedule and prints the wave metrics before
// and after the AV engages.

#include <cstdio>

#include "wavestopper/analysis.hpp"
#include "wavestopper/ring_sim.hpp"

int main() {
  using namespace wavestopper;
  SimConfig config;
  config.duration = 300.0;
  const auto result = run(config, SetpointSchedule::ring_experiment());
  if (result.collision) {
    std::printf("%s\n", result.collision->describe().c_str());
    return 1;
  }
  const auto pre = wave_metrics(result.log, 60.0, 120.0);
  const auto post = wave_metrics(result.log, 186.0, 246.0);
  std::printf("fleet velocity std  pre %.3f m/s  post %.3f m/s\n", pre.fleet_vel_std,
              post.fleet_vel_std);
  std::printf("min fleet velocity  pre %.3f m/s  post %.3f m/s\n", pre.min_fleet_vel,
              post.min_fleet_vel);
  if (const auto onset = dampening_onset(result.log, 126.0, pre.fleet_vel_std))
    std::printf("dampening onset %.2f s after engagement\n", *onset);
  return 0;
}
