// Batch evaluation, social score, PH energy diagnostics, trajectory files,
// and SVG rendering.

#ifndef HCNAV_EVAL_HPP
#define HCNAV_EVAL_HPP

#include "hcnav/rl.hpp"

namespace hcnav::eval {

using Vec2 = Eigen::Vector2d;

// Line-oriented trajectory record; kinds: robot, human, static, goal.
struct TrajRecord {
  double t = 0;
  int agent_id = 0;
  std::string kind;
  double x = 0, y = 0, vx = 0, vy = 0, radius = 0;
};

std::string trajectory_header();
std::string format_record(const TrajRecord& r);
std::vector<TrajRecord> parse_trajectory(const std::string& text);
void write_trajectory(const std::string& path, const std::vector<TrajRecord>& records);
std::vector<TrajRecord> read_trajectory(const std::string& path);

// Per-step power-balance decomposition.
struct EnergyRow {
  double H = 0;
  double Hdot = 0;
  double supplied = 0;    // u^T y
  double dissipated = 0;  // gradH^T R gradH
};

struct EnergyAudit {
  std::vector<EnergyRow> rows;
  int violations = 0;  // steps with Hdot > supplied + 1e-6
};

// Recomputes Hdot = -dissipated + supplied per row and flags passivity
// violations.
EnergyAudit energy_audit(const std::vector<EnergyRow>& trace);

enum class RobotDriver { Policy, OrcaBaseline, SfBaseline, Straight, Frozen };

RobotDriver driver_from_name(const std::string& name);

struct EpisodeOptions {
  bool record_trajectory = false;
  bool record_energy = false;
  bool stochastic = false;
};

struct EpisodeResult {
  env::Done outcome = env::Done::None;
  double nav_time = 0;         // [s]
  double path_length = 0;      // [m]
  double straight_dist = 0;    // [m]
  double min_separation = 0;   // [m], surface distance
  double comfort_fraction = 0; // steps with min human distance >= d_social
  double episode_return = 0;
  std::vector<TrajRecord> trajectory;
  std::vector<EnergyRow> energy;
};

// Runs one seeded episode with the given driver. `pol` is required only for
// RobotDriver::Policy.
EpisodeResult run_episode(const env::EnvConfig& cfg, std::uint64_t seed, RobotDriver driver,
                          const policy::Policy* pol, const EpisodeOptions& opts = {});

// 0-100 aggregate of success, comfort compliance, and path efficiency.
// Local stand-in metric, not the published social score.
double social_score(const EpisodeResult& ep);

struct EvalReport {
  int n_runs = 0;
  double success_rate = 0;    // percent
  double collision_rate = 0;  // percent
  double timeout_rate = 0;    // percent
  double social = 0;          // mean social score, 0-100
  double mean_nav_time = 0;   // over successful runs [s]
  double mean_min_separation = 0;  // [m]
  std::vector<EpisodeResult> episodes;

  std::string summary() const;
  std::string table() const;  // delimited per-episode records
};

EvalReport evaluate(const env::EnvConfig& cfg, RobotDriver driver, const policy::Policy* pol,
                    int n_runs, std::uint64_t seed);

// Deterministic SVG: arena outline, per-agent time-fading paths, final-step
// radius circles, goal markers.
std::string render_trajectory_svg(const std::vector<TrajRecord>& records, double arena_half = 10.0);

}  // namespace hcnav::eval

#endif  // HCNAV_EVAL_HPP
