#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "fixture.hpp"
#include "json.hpp"
#include "wavestopper/commands.hpp"

using namespace wavestopper;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("wavestopper-test-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  std::string str(const std::string& name = "") const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" + std::string(WAVESTOPPER_CLI) + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

void write(const std::string& path, const std::string& text) { csv::write_file(path, text); }

}  // namespace

TEST(CmdRun, WritesExportsAndManifest) {
  TempDir dir;
  cli::RunRequest req;
  req.config_path = fixture::config_path("default.yaml");
  req.schedule_path = fixture::config_path("ring_experiment.schedule");
  req.out_dir = dir.str();
  req.duration = 2.0;
  const auto rep = cli::cmd_run(req);
  ASSERT_EQ(rep.exit_code, cli::kOk) << rep.message;
  EXPECT_EQ(rep.run_id, "run-001");
  ASSERT_EQ(rep.files.size(), 4u);
  const auto m = nlohmann::json::parse(csv::read_file(dir.str("run-001_manifest.json")));
  EXPECT_EQ(m["run_id"], "run-001");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["steps"], 200);
  EXPECT_EQ(m["seed"], 42);
  EXPECT_TRUE(m.contains("started_at"));
  EXPECT_TRUE(m.contains("finished_at"));

  EXPECT_EQ(cli::cmd_run(req).run_id, "run-002");
  req.run_id = "run-001";
  EXPECT_EQ(cli::cmd_run(req).exit_code, cli::kUsage);
}

TEST(CmdRun, ZeroDurationGivesHeaderOnlyExports) {
  TempDir dir;
  cli::RunRequest req;
  req.config_path = fixture::config_path("default.yaml");
  req.out_dir = dir.str();
  req.duration = 0.0;
  const auto rep = cli::cmd_run(req);
  ASSERT_EQ(rep.exit_code, cli::kOk);
  EXPECT_EQ(csv::read_file(dir.str("run-001_timespace.csv")), "t,vehicle_id,pos,vel,mode\n");
  EXPECT_EQ(csv::read_file(dir.str("run-001_phase.csv")), "t,x_rel,v_rel,region,v_cmd,r\n");
}

TEST(CmdRun, CollisionGivesDistinctCodeAndPartialLog) {
  TempDir dir;
  cli::RunRequest req;
  req.config_path = fixture::config_path("unstable.yaml");
  req.out_dir = dir.str();
  const auto rep = cli::cmd_run(req);
  EXPECT_EQ(rep.exit_code, cli::kCollision);
  const auto m = nlohmann::json::parse(csv::read_file(dir.str("run-001_manifest.json")));
  EXPECT_EQ(m["status"], "collision");
  EXPECT_GT(m["steps"].get<int>(), 0);
  EXPECT_LT(m["steps"].get<int>(), 30000);
  EXPECT_GT(csv::parse(csv::read_file(dir.str("run-001_timespace.csv"))).size(), 1u);
}

TEST(CmdRun, SeedPrecedence) {
  cli::RunRequest req;
  req.config_path = fixture::config_path("default.yaml");
  EXPECT_EQ(cli::resolve_config(req).rng_seed, 42u);
  req.env_seed = "7";
  EXPECT_EQ(cli::resolve_config(req).rng_seed, 7u);
  req.seed = 9;
  EXPECT_EQ(cli::resolve_config(req).rng_seed, 9u);
  req.seed.reset();
  req.env_seed = "seven";
  EXPECT_THROW(cli::resolve_config(req), std::invalid_argument);
}

TEST(CmdRun, BadConfigIsUsageError) {
  TempDir dir;
  write(dir.str("bad.yaml"), "schema_version: 1\nring:\n  length: abc\n");
  cli::RunRequest req;
  req.config_path = dir.str("bad.yaml");
  req.out_dir = dir.str("out");
  const auto rep = cli::cmd_run(req);
  EXPECT_EQ(rep.exit_code, cli::kUsage);
  EXPECT_NE(rep.message.find(":3: field 'ring.length'"), std::string::npos) << rep.message;
}

TEST(CmdPortrait, ConstantAccelCurve) {
  cli::PortraitRequest req;
  req.spec.omega = 5.0;
  req.alphas = {1.0};
  req.clipped = true;
  req.curve_v = {-2.0, 2.0, 3};
  const auto out = cli::cmd_portrait(req);
  const auto rows = csv::parse(out.curves);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1], (csv::Row{"5", "1", "-2", "7"}));
  EXPECT_EQ(rows[3], (csv::Row{"5", "1", "2", "5"}));
}

TEST(CmdPortrait, AlphaSweepEmitsOneCurveEach) {
  cli::PortraitRequest req;
  req.alphas = {0.5, 1.0, 1.5};
  const auto rows = csv::parse(cli::cmd_portrait(req).curves);
  std::set<std::string> alphas;
  for (std::size_t i = 1; i < rows.size(); ++i) alphas.insert(rows[i][1]);
  EXPECT_EQ(alphas, (std::set<std::string>{"0.5", "1", "1.5"}));
  req.alphas = {1.0, 0.0};
  EXPECT_THROW(cli::cmd_portrait(req), std::invalid_argument);
}

TEST(CmdPortrait, LinearFieldSample) {
  cli::PortraitRequest req;
  req.spec.category = PortraitCategory::linear;
  req.spec.k = 0.5;
  req.spec.x = {0.0, 8.0, 3};
  req.spec.v = {-2.0, 2.0, 3};
  const auto rows = csv::parse(cli::cmd_portrait(req).field);
  bool found = false;
  for (const auto& r : rows)
    if (r[0] == "4" && r[1] == "2") {
      EXPECT_EQ(r[2], "2");
      EXPECT_EQ(r[3], "1");
      found = true;
    }
  EXPECT_TRUE(found);
}

TEST(CmdCheck, DefaultsPass) {
  const auto items = cli::cmd_check(EnvelopeParams::defaults());
  EXPECT_TRUE(cli::all_pass(items)) << cli::format_check(items);
  EXPECT_EQ(items.size(), 4u);
}

TEST(CmdCheck, ReversedOmegaFailsOrdering) {
  EnvelopeParams p;
  p.omega = {6.0, 5.0, 4.0};
  const auto items = cli::cmd_check(p);
  EXPECT_FALSE(items[0].pass);
  EXPECT_EQ(items[0].name, "ordering");
  EXPECT_FALSE(cli::all_pass(items));
}

// The binary is a thin shell: its files equal the library's output.

TEST(Cli, RunMatchesLibraryByteForByte) {
  TempDir dir;
  const auto cfg = dir.str("fixture.yaml");
  write(cfg,
        "schema_version: 1\n"
        "ring: {length: 30, n_vehicles: 3, vehicle_length: 4.5, av_index: 0}\n"
        "time: {dt_sim: 0.05, dt_ctrl: 0.1, duration: 0.5}\n"
        "initial_condition: {type: uniform_perturbed, epsilon: 0.5, perturbed_vehicle: 1}\n");
  const auto sched = dir.str("fixture.schedule");
  write(sched,
        "schema_version: 1\nentries:\n  - {t_start: 0, t_end: 0.2, mode: manual}\n"
        "  - {t_start: 0.2, mode: autonomous, max_speed: 6.5}\n");
  ASSERT_EQ(run_cli("run --config " + cfg + " --schedule " + sched + " --out " + dir.str() +
                    " --run-id fx"),
            0);
  const auto lib = cli::render_run(run(fixture::three_vehicle(), fixture::three_vehicle_schedule()),
                                   fixture::three_vehicle());
  EXPECT_EQ(csv::read_file(dir.str("fx_timespace.csv")), lib.timespace);
  EXPECT_EQ(csv::read_file(dir.str("fx_phase.csv")), lib.phase);
  EXPECT_EQ(csv::read_file(dir.str("fx_boundaries.csv")), lib.boundaries);
  EXPECT_EQ(lib.timespace, csv::read_file(fixture::golden_path("fixture_timespace.csv")));
  EXPECT_EQ(lib.phase, csv::read_file(fixture::golden_path("fixture_phase.csv")));
}

TEST(Cli, PortraitMatchesLibrary) {
  TempDir dir;
  ASSERT_EQ(run_cli("portrait --category constant_accel --omega 5 --alpha 0.5 --alpha 1 --alpha 1.5 "
                    "--clipped --out " + dir.str() + " --prefix p"),
            0);
  cli::PortraitRequest req;
  req.spec.omega = 5.0;
  req.alphas = {0.5, 1.0, 1.5};
  req.clipped = true;
  const auto lib = cli::cmd_portrait(req);
  EXPECT_EQ(csv::read_file(dir.str("p_field.csv")), lib.field);
  EXPECT_EQ(csv::read_file(dir.str("p_curves.csv")), lib.curves);
  EXPECT_EQ(csv::read_file(dir.str("p_trajectory.csv")), lib.trajectory);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  const auto cfg = fixture::config_path("default.yaml");
  EXPECT_EQ(run_cli("run --config " + cfg + " --duration 0 --out " + dir.str()), 0);
  EXPECT_EQ(run_cli("run --config " + fixture::config_path("unstable.yaml") + " --out " + dir.str()), 2);
  EXPECT_EQ(run_cli("run --config " + cfg + " --set hv_model.ovm.kapa=1 --out " + dir.str()), 1);
  EXPECT_EQ(run_cli("run --config /nonexistent.yaml"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("check"), 0);
  EXPECT_EQ(run_cli("check --omega 6,5,4"), 1);
  EXPECT_EQ(run_cli("check --alpha 1.5,0,0.5"), 1);
  EXPECT_EQ(run_cli("portrait --category constant_accel --alpha 0"), 1);
  EXPECT_EQ(run_cli("portrait --x-range 1:2"), 1);
}

TEST(Cli, EnvironmentSeedReachesManifest) {
  TempDir dir;
  ASSERT_EQ(run_cli("run --config " + fixture::config_path("default.yaml") + " --duration 0 --out " +
                        dir.str(),
                    "WAVESTOPPER_SEED=31"),
            0);
  const auto m = nlohmann::json::parse(csv::read_file(dir.str("run-001_manifest.json")));
  EXPECT_EQ(m["seed"], 31);
}
