#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wavestopper/commands.hpp"
#include "wavestopper/server.hpp"

namespace {

using namespace wavestopper;
namespace cli = wavestopper::cli;

std::vector<double> parse_triple(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size())
      throw CLI::ValidationError(flag, "'" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.size() != 3) throw CLI::ValidationError(flag, "expected three comma-separated values");
  return out;
}

AxisRange parse_range(const std::string& text, const std::string& flag) {
  // min:max:n
  std::stringstream ss(text);
  std::string a, b, n;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, n))
    throw CLI::ValidationError(flag, "expected min:max:n");
  try {
    return {std::stod(a), std::stod(b), std::stoi(n)};
  } catch (const std::exception&) {
    throw CLI::ValidationError(flag, "expected min:max:n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ring-road wave dampening simulator"};
  app.require_subcommand(1);

  // run
  cli::RunRequest run_req;
  std::string schedule_path;
  std::string run_id;
  double duration = 0.0;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "Simulate a config and write CSV exports plus a manifest");
  run->add_option("--config", run_req.config_path, "YAML config")->required()->check(CLI::ExistingFile);
  run->add_option("--schedule", schedule_path, "YAML setpoint schedule")->check(CLI::ExistingFile);
  run->add_option("--out", run_req.out_dir, "Output directory")->capture_default_str();
  run->add_option("--run-id", run_id, "Output file prefix (default: next free run-NNN)");
  auto* dur_opt = run->add_option("--duration", duration, "Override time.duration [s]");
  auto* seed_opt = run->add_option("--seed", seed, "Override rng_seed");
  run->add_option("--set", run_req.overrides, "Override a config key, e.g. hv_model.ovm.kappa=1.2");
  run->add_flag("--unwrap", run_req.unwrap, "Unwrapped positions in the time-space export");

  // portrait
  cli::PortraitRequest por_req;
  std::string category = "constant_accel";
  std::string out_dir = ".";
  std::string prefix = "portrait";
  std::string x_range, v_range, curve_range;
  auto* por = app.add_subcommand("portrait", "Phase-portrait field, curve and trajectory CSVs");
  por->add_option("--category", category, "constant_v_rel | linear | constant_accel")
      ->check(CLI::IsMember({"constant_v_rel", "linear", "constant_accel"}))
      ->capture_default_str();
  por->add_option("--k", por_req.spec.k, "Slope of v_rel = k x_rel")->capture_default_str();
  por->add_option("--omega", por_req.spec.omega, "Curve offset [m]")->capture_default_str();
  por->add_option("--alpha", por_req.alphas, "Relative acceleration [m/s^2]; repeat for a sweep");
  por->add_option("--v-rel0", por_req.spec.v_rel0, "Initial relative speed")->capture_default_str();
  por->add_option("--x-range", x_range, "Field grid x_rel as min:max:n");
  por->add_option("--v-range", v_range, "Field grid v_rel as min:max:n");
  por->add_option("--curve-range", curve_range, "Curve v_rel samples as min:max:n");
  por->add_option("--t-end", por_req.t_end, "Trajectory horizon [s]")->capture_default_str();
  por->add_flag("--clipped", por_req.clipped, "Use min{0, v_rel} in the curves");
  por->add_option("--out", out_dir, "Output directory")->capture_default_str();
  por->add_option("--prefix", prefix, "Output file prefix")->capture_default_str();

  // check
  std::string omega_text = "4.5,5.25,6.0";
  std::string alpha_text = "1.5,1.0,0.5";
  auto* chk = app.add_subcommand("check", "Run the control-law invariant suite on envelope parameters");
  chk->add_option("--omega", omega_text, "omega1,omega2,omega3 [m]")->capture_default_str();
  chk->add_option("--alpha", alpha_text, "alpha1,alpha2,alpha3 [m/s^2], each > 0")->capture_default_str();

  // serve
  std::string serve_config;
  std::string serve_schedule;
  std::string bind = "127.0.0.1:8080";
  service::ServerOptions srv_opts;
  auto* srv = app.add_subcommand("serve", "Host a live simulation over WebSocket");
  srv->add_option("--config", serve_config, "YAML config")->required()->check(CLI::ExistingFile);
  srv->add_option("--schedule", serve_schedule, "YAML setpoint schedule")->check(CLI::ExistingFile);
  srv->add_option("--bind", bind, "host:port")->capture_default_str();
  srv->add_option("--frame-rate", srv_opts.session.frame_rate, "Frames per simulated second")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  srv->add_option("--time-scale", srv_opts.time_scale, "Simulated seconds per wall second; 0 = unpaced")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kOk : cli::kUsage;
  }

  try {
    if (*run) {
      if (!schedule_path.empty()) run_req.schedule_path = schedule_path;
      if (!run_id.empty()) run_req.run_id = run_id;
      if (dur_opt->count()) run_req.duration = duration;
      if (seed_opt->count()) run_req.seed = seed;
      if (const char* env = std::getenv("WAVESTOPPER_SEED")) run_req.env_seed = std::string(env);
      const auto rep = cli::cmd_run(run_req);
      if (rep.exit_code == cli::kUsage) {
        std::cerr << "error: " << rep.message << "\n";
        return rep.exit_code;
      }
      for (const auto& f : rep.files) std::cout << f << "\n";
      if (rep.exit_code == cli::kCollision) std::cerr << "halted: " << rep.message << "\n";
      return rep.exit_code;
    }

    if (*por) {
      cli::PortraitOutput out;
      try {
        por_req.spec.category = portrait_category_from_string(category);
        if (!x_range.empty()) por_req.spec.x = parse_range(x_range, "--x-range");
        if (!v_range.empty()) por_req.spec.v = parse_range(v_range, "--v-range");
        if (!curve_range.empty()) por_req.curve_v = parse_range(curve_range, "--curve-range");
        out = cli::cmd_portrait(por_req);
      } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kUsage;
      } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kUsage;
      }
      const std::filesystem::path dir(out_dir);
      std::filesystem::create_directories(dir);
      for (const auto& [suffix, body] : {std::pair<std::string, const std::string*>{"_field.csv", &out.field},
                                         {"_curves.csv", &out.curves},
                                         {"_trajectory.csv", &out.trajectory}}) {
        const auto p = (dir / (prefix + suffix)).string();
        csv::write_file(p, *body);
        std::cout << p << "\n";
      }
      return cli::kOk;
    }

    if (*chk) {
      EnvelopeParams p;
      try {
        const auto om = parse_triple(omega_text, "--omega");
        const auto al = parse_triple(alpha_text, "--alpha");
        for (double a : al)
          if (!(a > 0.0)) throw CLI::ValidationError("--alpha", "every alpha must be > 0");
        for (int j = 0; j < 3; ++j) {
          p.omega[j] = om[j];
          p.alpha[j] = al[j];
        }
      } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kUsage;
      }
      const auto items = cli::cmd_check(p);
      std::cout << cli::format_check(items);
      return cli::all_pass(items) ? cli::kOk : cli::kUsage;
    }

    if (*srv) {
      std::optional<SetpointSchedule> schedule;
      SimConfig config;
      try {
        config = load_config(serve_config);
        if (!serve_schedule.empty()) schedule = load_schedule(serve_schedule);
        std::tie(srv_opts.bind_address, srv_opts.port) = service::parse_bind_address(bind);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kUsage;
      }
      std::optional<service::Server> server;
      try {
        server.emplace(config, schedule, srv_opts);
      } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kUsage;
      }
      server->start();
      std::cout << "listening on " << srv_opts.bind_address << ":" << server->port() << std::endl;
      server->wait();
      return cli::kOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return cli::kInternal;
  }
  return cli::kUsage;
}
