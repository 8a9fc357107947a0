// Command-line surface: simulate / train / eval / render / audit.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hcnav/config.hpp"
#include "hcnav/eval.hpp"

namespace fs = std::filesystem;
using namespace hcnav;

namespace {

policy::Policy load_policy(const std::string& checkpoint_path, cfg::RunConfig& run_cfg) {
  nn::Checkpoint ck = nn::load_checkpoint(checkpoint_path);
  if (!ck.config_json.empty()) run_cfg = cfg::from_json(cfg::json::parse(ck.config_json));
  policy::Policy pol(run_cfg.policy, /*seed=*/0);
  pol.store().load_values(ck.tensors);
  return pol;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open output file: " + path);
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hamiltonian-constrained socially-aware navigation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, checkpoint_path, robot = "policy", traj_path;
  std::uint64_t seed = 0;
  int episodes = -1;
  int humans = -1;
  std::string ped_policy;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration (JSON)");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--out", out_path, "output path");
    cmd->add_option("--humans", humans, "override pedestrian count");
    cmd->add_option("--ped-policy", ped_policy, "pedestrian driver: orca|sf");
  };

  CLI::App* sim = app.add_subcommand("simulate", "run one seeded episode, write a trajectory file");
  add_common(sim);
  sim->add_option("--checkpoint", checkpoint_path, "policy checkpoint");
  sim->add_option("--robot", robot, "robot driver: policy|orca|sf|straight|frozen");

  CLI::App* train = app.add_subcommand("train", "train a policy, write checkpoint and metrics log");
  add_common(train);
  train->add_option("--episodes", episodes, "total training episodes");

  CLI::App* eval_cmd = app.add_subcommand("eval", "batch evaluation report");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint");
  eval_cmd->add_option("--robot", robot, "robot driver: policy|orca|sf|straight|frozen");
  eval_cmd->add_option("--episodes", episodes, "number of evaluation runs (default 500)");

  CLI::App* render = app.add_subcommand("render", "render a trajectory file to SVG");
  render->add_option("trajectory", traj_path, "trajectory file")->required();
  render->add_option("--out", out_path, "output SVG path");

  CLI::App* audit = app.add_subcommand("audit", "energy / passivity table for a checkpoint");
  add_common(audit);
  audit->add_option("--checkpoint", checkpoint_path, "policy checkpoint")->required();
  audit->add_option("--episodes", episodes, "audited episodes (default 10)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    cfg::RunConfig run_cfg;
    if (!config_path.empty()) run_cfg = cfg::load_config(config_path);
    if (humans > 0) run_cfg.env.n_humans = humans;
    if (!ped_policy.empty()) {
      if (ped_policy == "orca")
        run_cfg.env.ped_policy = env::PedPolicy::Orca;
      else if (ped_policy == "sf")
        run_cfg.env.ped_policy = env::PedPolicy::SocialForce;
      else
        throw CLI::ValidationError("--ped-policy", "must be orca or sf");
    }

    if (sim->parsed()) {
      eval::RobotDriver driver = eval::driver_from_name(robot);
      std::optional<policy::Policy> pol;
      if (driver == eval::RobotDriver::Policy) {
        if (checkpoint_path.empty())
          throw CLI::ValidationError("--checkpoint", "required for the policy driver");
        pol.emplace(load_policy(checkpoint_path, run_cfg));
      }
      eval::EpisodeOptions opts;
      opts.record_trajectory = true;
      eval::EpisodeResult ep =
          eval::run_episode(run_cfg.env, seed, driver, pol ? &*pol : nullptr, opts);
      std::string path = out_path.empty() ? "trajectory.csv" : out_path;
      eval::write_trajectory(path, ep.trajectory);
      std::cout << "outcome: " << env::done_name(ep.outcome) << ", steps recorded to " << path
                << "\n";
      return 0;
    }

    if (train->parsed()) {
      if (episodes >= 0) run_cfg.train.total_episodes = episodes;
      std::string dir = out_path.empty() ? "." : out_path;
      fs::create_directories(dir);
      std::string ckpt = dir + "/checkpoint.bin";
      std::string log_path = dir + "/metrics.log";
      std::ofstream log(log_path);
      if (!log) throw std::runtime_error("cannot open metrics log: " + log_path);
      policy::Policy pol(run_cfg.policy, seed);
      std::string config_json = cfg::to_json(run_cfg).dump();
      rl::TrainResult res = rl::train(
          run_cfg.train, run_cfg.env, pol, seed,
          [&](const std::string& line) {
            log << line << '\n';
            log.flush();
            std::cout << line << '\n';
          },
          [&](int) { nn::save_checkpoint(ckpt, pol.store(), config_json); });
      nn::save_checkpoint(ckpt, pol.store(), config_json);
      std::cout << "trained " << res.episodes << " episodes; checkpoint: " << ckpt << "\n";
      return res.aborted_nan ? 2 : 0;
    }

    if (eval_cmd->parsed()) {
      eval::RobotDriver driver = eval::driver_from_name(robot);
      std::optional<policy::Policy> pol;
      if (driver == eval::RobotDriver::Policy) {
        if (checkpoint_path.empty())
          throw CLI::ValidationError("--checkpoint", "required for the policy driver");
        pol.emplace(load_policy(checkpoint_path, run_cfg));
      }
      int n_runs = episodes > 0 ? episodes : 500;
      eval::EvalReport rep =
          eval::evaluate(run_cfg.env, driver, pol ? &*pol : nullptr, n_runs, seed);
      std::cout << rep.summary() << "\n";
      if (!out_path.empty()) write_text(out_path, rep.table());
      return 0;
    }

    if (render->parsed()) {
      std::vector<eval::TrajRecord> records = eval::read_trajectory(traj_path);
      std::string svg = eval::render_trajectory_svg(records);
      std::string path = out_path.empty() ? traj_path + ".svg" : out_path;
      write_text(path, svg);
      std::cout << "wrote " << path << "\n";
      return 0;
    }

    if (audit->parsed()) {
      policy::Policy pol = load_policy(checkpoint_path, run_cfg);
      int n = episodes > 0 ? episodes : 10;
      int total_violations = 0;
      std::ostringstream table;
      table << "episode\tstep\tH\tHdot\tsupplied\tdissipated\n";
      for (int e = 0; e < n; ++e) {
        eval::EpisodeOptions opts;
        opts.record_energy = true;
        eval::EpisodeResult ep = eval::run_episode(
            run_cfg.env, seed + static_cast<std::uint64_t>(e), eval::RobotDriver::Policy, &pol,
            opts);
        eval::EnergyAudit audit_res = eval::energy_audit(ep.energy);
        total_violations += audit_res.violations;
        for (size_t s = 0; s < audit_res.rows.size(); ++s) {
          const auto& r = audit_res.rows[s];
          char buf[256];
          std::snprintf(buf, sizeof(buf), "%d\t%zu\t%.6f\t%.6f\t%.6f\t%.6f\n", e, s, r.H, r.Hdot,
                        r.supplied, r.dissipated);
          table << buf;
        }
      }
      if (!out_path.empty())
        write_text(out_path, table.str());
      else
        std::cout << table.str();
      std::cout << "passivity violations: " << total_violations << "\n";
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
