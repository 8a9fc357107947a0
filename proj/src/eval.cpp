#include "hcnav/eval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace hcnav::eval {

std::string trajectory_header() {
  return "# t[s],agent_id,kind,x[m],y[m],vx[m/s],vy[m/s],radius[m]";
}

std::string format_record(const TrajRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f,%d,%s,%.9f,%.9f,%.9f,%.9f,%.4f", r.t, r.agent_id,
                r.kind.c_str(), r.x, r.y, r.vx, r.vy, r.radius);
  return buf;
}

std::vector<TrajRecord> parse_trajectory(const std::string& text) {
  std::vector<TrajRecord> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    TrajRecord r;
    char kind[32];
    int got = std::sscanf(line.c_str(), "%lf,%d,%31[^,],%lf,%lf,%lf,%lf,%lf", &r.t, &r.agent_id,
                          kind, &r.x, &r.y, &r.vx, &r.vy, &r.radius);
    if (got != 8)
      throw std::runtime_error("trajectory parse error at line " + std::to_string(line_no));
    r.kind = kind;
    out.push_back(std::move(r));
  }
  return out;
}

void write_trajectory(const std::string& path, const std::vector<TrajRecord>& records) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open trajectory for writing: " + path);
  f << trajectory_header() << '\n';
  for (const auto& r : records) f << format_record(r) << '\n';
}

std::vector<TrajRecord> read_trajectory(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open trajectory: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_trajectory(ss.str());
}

EnergyAudit energy_audit(const std::vector<EnergyRow>& trace) {
  EnergyAudit out;
  out.rows = trace;
  for (auto& row : out.rows) {
    row.Hdot = -row.dissipated + row.supplied;
    if (row.Hdot > row.supplied + 1e-6) ++out.violations;
  }
  return out;
}

RobotDriver driver_from_name(const std::string& name) {
  if (name == "policy") return RobotDriver::Policy;
  if (name == "orca") return RobotDriver::OrcaBaseline;
  if (name == "sf") return RobotDriver::SfBaseline;
  if (name == "straight") return RobotDriver::Straight;
  if (name == "frozen") return RobotDriver::Frozen;
  throw std::invalid_argument("unknown robot driver: " + name);
}

static Vec2 baseline_action(RobotDriver driver, const env::CrowdEnv& environment,
                            std::mt19937_64& rng) {
  const env::WorldState& w = environment.world();
  const env::EnvConfig& cfg = environment.config();
  Vec2 to_goal = w.robot.g - w.robot.p;
  Vec2 pref = Vec2::Zero();
  if (to_goal.norm() > 1e-9)
    pref = to_goal.normalized() * std::min(w.robot.v_pref, to_goal.norm() / cfg.time_step);

  switch (driver) {
    case RobotDriver::Frozen:
      return Vec2::Zero();
    case RobotDriver::Straight:
      return pref;
    case RobotDriver::OrcaBaseline: {
      std::vector<orca::Body> neighbors;
      for (const auto& h : w.humans) neighbors.push_back({h.p, h.v, h.rho});
      orca::Body self{w.robot.p, w.robot.v, w.robot.rho};
      return orca::orca_velocity(self, neighbors, pref, w.robot.v_pref, cfg.orca_horizon,
                                 cfg.time_step)
          .velocity;
    }
    case RobotDriver::SfBaseline: {
      env::AgentState self = w.robot;
      Vec2 acc = env::social_force(self, w.humans, w.robot.g, cfg.sf, rng);
      Vec2 v = w.robot.v + acc * cfg.time_step;
      if (v.norm() > w.robot.v_pref) v = v.normalized() * w.robot.v_pref;
      return v;
    }
    case RobotDriver::Policy:
      throw std::logic_error("baseline_action called for policy driver");
  }
  return Vec2::Zero();
}

static void record_world(std::vector<TrajRecord>& traj, const env::WorldState& w) {
  traj.push_back({w.t, 0, "robot", w.robot.p.x(), w.robot.p.y(), w.robot.v.x(), w.robot.v.y(),
                  w.robot.rho});
  for (size_t i = 0; i < w.humans.size(); ++i) {
    const auto& h = w.humans[i];
    traj.push_back({w.t, static_cast<int>(i) + 1, h.is_static ? "static" : "human", h.p.x(),
                    h.p.y(), h.v.x(), h.v.y(), h.rho});
  }
}

EpisodeResult run_episode(const env::EnvConfig& cfg, std::uint64_t seed, RobotDriver driver,
                          const policy::Policy* pol, const EpisodeOptions& opts) {
  if (driver == RobotDriver::Policy && pol == nullptr)
    throw std::invalid_argument("run_episode: policy driver requires a policy");

  env::CrowdEnv environment(cfg);
  env::Observation obs = environment.reset(seed);
  std::mt19937_64 rng(seed ^ 0x51ed2701a2b5f8d3ull);

  EpisodeResult res;
  res.straight_dist = (environment.world().robot.g - environment.world().robot.p).norm();
  res.min_separation = std::numeric_limits<double>::infinity();

  std::optional<enc::WindowBuffer> buf;
  if (driver == RobotDriver::Policy) {
    buf.emplace(pol->config().encoder.T);
    buf->push(obs);
  }

  if (opts.record_trajectory) {
    const auto& w = environment.world();
    res.trajectory.push_back(
        {0.0, 0, "goal", w.robot.g.x(), w.robot.g.y(), 0.0, 0.0, w.robot.rho});
    record_world(res.trajectory, w);
  }

  int comfortable = 0, steps = 0;
  Vec2 prev_p = environment.world().robot.p;

  while (!environment.done()) {
    Vec2 action;
    if (driver == RobotDriver::Policy) {
      diff::ConditionVector cond = policy::make_condition(obs, cfg.d_social);
      enc::ObservationWindow w = buf->window();
      if (opts.record_energy) {
        policy::Policy::Forward fwd = pol->forward_mean(w, obs, cond);
        action = Vec2(fwd.mean->value(0, 0), fwd.mean->value(0, 1));
        // power-balance trace from the learned terms
        const auto& lh = fwd.lh;
        Eigen::VectorXd g(4 * lh.N);
        for (int i = 0; i < lh.N; ++i)
          g.segment<4>(4 * i) = lh.gradH[static_cast<size_t>(i)]->value.col(0);
        EnergyRow row;
        row.H = lh.H->value(0, 0);
        row.dissipated = g.dot(lh.R_full * g);
        Eigen::Vector2d u_ph(fwd.u_ph->value(0, 0), fwd.u_ph->value(0, 1));
        Eigen::Vector2d y = fwd.nominal.G.transpose() * g.head<4>();
        row.supplied = u_ph.dot(y);
        res.energy.push_back(row);
      } else if (opts.stochastic) {
        action = pol->act_sample(w, obs, cond, rng).action;
      } else {
        action = pol->act_mean(w, obs, cond);
      }
    } else {
      action = baseline_action(driver, environment, rng);
    }

    env::StepOutcome out = environment.step(action);
    res.episode_return += out.reward;
    res.min_separation = std::min(res.min_separation, out.min_separation);
    ++steps;
    if (out.min_separation + 2.0 * cfg.radius >= cfg.d_social) ++comfortable;
    res.path_length += (environment.world().robot.p - prev_p).norm();
    prev_p = environment.world().robot.p;
    obs = out.observation;
    if (buf) buf->push(obs);
    if (opts.record_trajectory) record_world(res.trajectory, environment.world());
    if (out.done != env::Done::None) {
      res.outcome = out.done;
      break;
    }
  }
  res.nav_time = environment.world().t;
  res.comfort_fraction = steps > 0 ? double(comfortable) / steps : 0.0;
  return res;
}

double social_score(const EpisodeResult& ep) {
  double success = ep.outcome == env::Done::Success ? 1.0 : 0.0;
  double efficiency = 0.0;
  if (ep.path_length > 1e-9) efficiency = std::min(1.0, ep.straight_dist / ep.path_length);
  double score = 100.0 * (0.5 * success + 0.3 * ep.comfort_fraction + 0.2 * efficiency);
  return std::clamp(score, 0.0, 100.0);
}

EvalReport evaluate(const env::EnvConfig& cfg, RobotDriver driver, const policy::Policy* pol,
                    int n_runs, std::uint64_t seed) {
  if (n_runs < 1) throw std::invalid_argument("evaluate: need n_runs >= 1");
  EvalReport rep;
  rep.n_runs = n_runs;
  double nav_time_sum = 0;
  int successes = 0;
  for (int i = 0; i < n_runs; ++i) {
    EpisodeResult ep = run_episode(cfg, seed + static_cast<std::uint64_t>(i), driver, pol);
    switch (ep.outcome) {
      case env::Done::Success:
        rep.success_rate += 1;
        nav_time_sum += ep.nav_time;
        ++successes;
        break;
      case env::Done::Collision:
        rep.collision_rate += 1;
        break;
      default:
        rep.timeout_rate += 1;
        break;
    }
    rep.social += social_score(ep);
    rep.mean_min_separation += std::isfinite(ep.min_separation) ? ep.min_separation : 0.0;
    rep.episodes.push_back(std::move(ep));
  }
  rep.success_rate *= 100.0 / n_runs;
  rep.collision_rate *= 100.0 / n_runs;
  rep.timeout_rate *= 100.0 / n_runs;
  rep.social /= n_runs;
  rep.mean_nav_time = successes > 0 ? nav_time_sum / successes : 0.0;
  rep.mean_min_separation /= n_runs;
  return rep;
}

std::string EvalReport::summary() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "episodes: %d\nsuccess rate: %.1f %%\ncollision rate: %.1f %%\n"
                "timeout rate: %.1f %%\nsocial score (non-paper metric): %.1f\n"
                "mean navigation time: %.2f s\nmean min separation: %.3f m",
                n_runs, success_rate, collision_rate, timeout_rate, social, mean_nav_time,
                mean_min_separation);
  return buf;
}

std::string EvalReport::table() const {
  std::ostringstream out;
  out << "episode\toutcome\tnav_time\tpath_length\tmin_separation\tcomfort\tsocial_score\n";
  for (size_t i = 0; i < episodes.size(); ++i) {
    const auto& e = episodes[i];
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu\t%s\t%.3f\t%.3f\t%.4f\t%.4f\t%.2f\n", i,
                  env::done_name(e.outcome), e.nav_time, e.path_length,
                  std::isfinite(e.min_separation) ? e.min_separation : -1.0, e.comfort_fraction,
                  social_score(e));
    out << buf;
  }
  return out.str();
}

// ---- SVG ------------------------------------------------------------------

namespace {

const char* kPalette[] = {"#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
                          "#17becf", "#bcbd22", "#7f7f7f", "#ff7f0e", "#aec7e8"};

struct Px {
  double x, y;
};

}  // namespace

std::string render_trajectory_svg(const std::vector<TrajRecord>& records, double arena_half) {
  const double size = 640.0, margin = 20.0;
  auto px = [&](double x, double y) {
    double s = (size - 2 * margin) / (2 * arena_half);
    return Px{margin + (x + arena_half) * s, size - margin - (y + arena_half) * s};
  };
  double scale = (size - 2 * margin) / (2 * arena_half);

  // group by agent, time-ordered (input order preserved)
  std::map<int, std::vector<const TrajRecord*>> agents;
  std::vector<const TrajRecord*> goals;
  double t_max = 0;
  for (const auto& r : records) {
    if (r.kind == "goal") {
      goals.push_back(&r);
      continue;
    }
    agents[r.agent_id].push_back(&r);
    t_max = std::max(t_max, r.t);
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << " " << size << "\">\n";
  svg << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size - 2 * margin
      << "\" height=\"" << size - 2 * margin
      << "\" fill=\"white\" stroke=\"black\" stroke-width=\"1.5\"/>\n";

  char buf[512];
  for (const auto& kv : agents) {
    const auto& path = kv.second;
    const char* color = kv.first == 0 ? "#d62728"
                        : path.front()->kind == "static"
                            ? "#7f7f7f"
                            : kPalette[(kv.first - 1) % 10];
    for (size_t i = 1; i < path.size(); ++i) {
      Px a = px(path[i - 1]->x, path[i - 1]->y);
      Px b = px(path[i]->x, path[i]->y);
      double alpha = t_max > 0 ? 0.15 + 0.85 * path[i]->t / t_max : 1.0;
      std::snprintf(buf, sizeof(buf),
                    "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" "
                    "stroke-width=\"1.6\" stroke-opacity=\"%.3f\"/>\n",
                    a.x, a.y, b.x, b.y, color, alpha);
      svg << buf;
    }
    const TrajRecord* last = path.back();
    Px c = px(last->x, last->y);
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"none\" stroke=\"%s\" "
                  "stroke-width=\"1.8\"/>\n",
                  c.x, c.y, last->radius * scale, color);
    svg << buf;
  }
  for (const auto* g : goals) {
    Px c = px(g->x, g->y);
    std::snprintf(buf, sizeof(buf),
                  "<path d=\"M %.2f %.2f L %.2f %.2f M %.2f %.2f L %.2f %.2f\" stroke=\"#d62728\" "
                  "stroke-width=\"2\"/>\n",
                  c.x - 6, c.y - 6, c.x + 6, c.y + 6, c.x - 6, c.y + 6, c.x + 6, c.y - 6);
    svg << buf;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace hcnav::eval
