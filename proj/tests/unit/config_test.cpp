#include <gtest/gtest.h>

#include "fixture.hpp"
#include "wavestopper/config.hpp"

using namespace wavestopper;

namespace {

ConfigError config_error(const std::string& text, const std::vector<std::string>& ov = {}) {
  try {
    parse_config(text, "test.yaml", ov);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "expected ConfigError";
  return ConfigError("", 0, "", "");
}

}  // namespace

TEST(Config, MinimalDocumentGivesDefaults) {
  const auto c = parse_config("schema_version: 1\n");
  const SimConfig d;
  EXPECT_EQ(c.ring_length, d.ring_length);
  EXPECT_EQ(c.n_vehicles, d.n_vehicles);
  EXPECT_EQ(c.hv.kappa, d.hv.kappa);
  EXPECT_EQ(c.fs.omega, d.fs.omega);
  EXPECT_EQ(c.rng_seed, d.rng_seed);
}

TEST(Config, BundledDefaultMatchesBuiltIns) {
  const auto c = load_config(fixture::config_path("default.yaml"));
  const SimConfig d;
  EXPECT_EQ(c.ring_length, 260.0);
  EXPECT_EQ(c.n_vehicles, 22);
  EXPECT_EQ(c.av_index, 0);
  EXPECT_EQ(c.dt_sim, d.dt_sim);
  EXPECT_EQ(c.dt_ctrl, d.dt_ctrl);
  EXPECT_EQ(c.hv.kappa, d.hv.kappa);
  EXPECT_EQ(c.hv.v0, d.hv.v0);
  EXPECT_EQ(c.hv.d0, d.hv.d0);
  EXPECT_EQ(c.hv.w, d.hv.w);
  EXPECT_EQ(c.fs.omega, d.fs.omega);
  EXPECT_EQ(c.fs.alpha, d.fs.alpha);
  EXPECT_EQ(c.initial.perturbed_vehicle, 0);
  EXPECT_EQ(c.initial.epsilon, 0.5);
}

TEST(Config, MissingSchemaVersion) {
  const auto e = config_error("ring: {length: 100}\n");
  EXPECT_EQ(e.field(), "schema_version");
}

TEST(Config, WrongSchemaVersion) {
  const auto e = config_error("schema_version: 2\n");
  EXPECT_EQ(e.field(), "schema_version");
  EXPECT_EQ(e.line(), 1);
}

TEST(Config, BadNumberReportsLineAndField) {
  const auto e = config_error("schema_version: 1\nring:\n  length: abc\n");
  EXPECT_EQ(e.field(), "ring.length");
  EXPECT_EQ(e.line(), 3);
  EXPECT_NE(std::string(e.what()).find("test.yaml:3"), std::string::npos);
}

TEST(Config, UnknownKeyIsRejected) {
  const auto e = config_error("schema_version: 1\ntime:\n  dt_sim: 0.01\n  dtctrl: 0.05\n");
  EXPECT_EQ(e.field(), "time.dtctrl");
  EXPECT_EQ(e.line(), 4);
}

TEST(Config, WrongTripleLength) {
  const auto e = config_error("schema_version: 1\nfollowerstopper:\n  omega: [1, 2]\n");
  EXPECT_EQ(e.field(), "followerstopper.omega");
}

TEST(Config, InvariantViolationsSurface) {
  const auto e = config_error("schema_version: 1\nfollowerstopper:\n  alpha: [1.5, 0, 0.5]\n");
  EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  config_error("schema_version: 1\ntime: {dt_sim: 0.01, dt_ctrl: 0.055}\n");
}

TEST(Config, EnumFields) {
  const auto c = parse_config(
      "schema_version: 1\nhv_model: {model: idm}\nnominal: {reset_policy: reset_to_zero, "
      "max_decel: -3}\ninitial_condition: {type: uniform}\n");
  EXPECT_EQ(c.hv.model, HvModel::IDM);
  EXPECT_EQ(c.reset_policy, NominalResetPolicy::reset_to_zero);
  EXPECT_EQ(c.nominal.max_decel, 3.0);
  EXPECT_EQ(c.initial.type, InitialCondition::Type::uniform);
  const auto e = config_error("schema_version: 1\nhv_model:\n  model: krauss\n");
  EXPECT_EQ(e.field(), "hv_model.model");
  EXPECT_EQ(e.line(), 3);
}

TEST(Config, OverridesApplyAfterFile) {
  const auto c = parse_config("schema_version: 1\nhv_model:\n  ovm: {kappa: 1.0}\n", "x",
                              {"hv_model.ovm.kappa=1.2", "ring.av_index=-1", "rng_seed=9"});
  EXPECT_EQ(c.hv.kappa, 1.2);
  EXPECT_EQ(c.av_index, -1);
  EXPECT_EQ(c.rng_seed, 9u);
}

TEST(Config, BadOverrides) {
  config_error("schema_version: 1\n", {"nonsense"});
  const auto e = config_error("schema_version: 1\n", {"ring.lenght=3"});
  EXPECT_EQ(e.field(), "ring.lenght");
}

TEST(Config, MalformedYaml) {
  const auto e = config_error("schema_version: 1\nring: [1, 2\n");
  EXPECT_GT(e.line(), 0);
}

TEST(Schedule, BundledExperimentMatchesFactory) {
  const auto s = load_schedule(fixture::config_path("ring_experiment.schedule"));
  const auto t = SetpointSchedule::ring_experiment();
  ASSERT_EQ(s.entries.size(), t.entries.size());
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    EXPECT_EQ(s.entries[i].t_start, t.entries[i].t_start);
    EXPECT_EQ(s.entries[i].t_end, t.entries[i].t_end);
    EXPECT_EQ(s.entries[i].mode, t.entries[i].mode);
    if (s.entries[i].mode == DriveMode::autonomous) {
      EXPECT_EQ(s.entries[i].max_speed, t.entries[i].max_speed);
    }
  }
  EXPECT_EQ(control_at(s, 300.0).max_speed, 7.5);
}

TEST(Schedule, Diagnostics) {
  try {
    parse_schedule("schema_version: 1\nentries:\n  - {t_start: 0, mode: autonomous}\n", "s");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "entries[0].max_speed");
    EXPECT_EQ(e.line(), 3);
  }
  try {
    parse_schedule("schema_version: 1\nentries:\n  - {t_start: 0, t_end: 5, mode: manual}\n"
                   "  - {t_start: 6, mode: manual}\n",
                   "s");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("contiguous"), std::string::npos);
  }
  EXPECT_THROW(parse_schedule("schema_version: 1\nentries: []\n"), ConfigError);
  EXPECT_THROW(parse_schedule("schema_version: 1\nentries:\n  - {t_start: 0, mode: cruise}\n"),
               ConfigError);
}
