#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "hcnav/eval.hpp"

using namespace hcnav;

TEST_CASE("trajectory records round-trip through format and parse") {
  std::vector<eval::TrajRecord> recs{
      {0.0, 0, "robot", 0.0, -8.0, 0.0, 0.0, 0.3},
      {0.25, 1, "human", 7.5, 0.125, -1.0, 0.0, 0.3},
      {0.25, 2, "static", -3.0, 2.0, 0.0, 0.0, 0.3},
  };
  std::string text = eval::trajectory_header() + "\n";
  for (const auto& r : recs) text += eval::format_record(r) + "\n";
  std::vector<eval::TrajRecord> back = eval::parse_trajectory(text);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].t == doctest::Approx(recs[i].t));
    CHECK(back[i].agent_id == recs[i].agent_id);
    CHECK(back[i].kind == recs[i].kind);
    CHECK(back[i].x == doctest::Approx(recs[i].x));
    CHECK(back[i].radius == doctest::Approx(recs[i].radius));
  }
}

TEST_CASE("malformed trajectory lines report the line number") {
  std::string text = eval::trajectory_header() + "\n0.0,0,robot,0,0,0,0,0.3\nbroken line\n";
  try {
    (void)eval::parse_trajectory(text);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("energy audit recomputes the balance and flags violations") {
  std::vector<eval::EnergyRow> trace(3);
  trace[0].supplied = 1.0;
  trace[0].dissipated = 0.5;
  trace[1].supplied = -0.2;
  trace[1].dissipated = 0.0;
  trace[2].supplied = 0.3;
  trace[2].dissipated = 0.7;
  eval::EnergyAudit audit = eval::energy_audit(trace);
  CHECK(audit.rows[0].Hdot == doctest::Approx(0.5));
  CHECK(audit.rows[1].Hdot == doctest::Approx(-0.2));
  CHECK(audit.rows[2].Hdot == doctest::Approx(-0.4));
  CHECK(audit.violations == 0);

  // dissipation can only lower Hdot, so a negative value is the only way to
  // break passivity here
  std::vector<eval::EnergyRow> bad(1);
  bad[0].supplied = 0.1;
  bad[0].dissipated = -0.5;
  CHECK(eval::energy_audit(bad).violations == 1);
}

TEST_CASE("driver names map to drivers and unknown names are rejected") {
  CHECK(eval::driver_from_name("policy") == eval::RobotDriver::Policy);
  CHECK(eval::driver_from_name("orca") == eval::RobotDriver::OrcaBaseline);
  CHECK(eval::driver_from_name("sf") == eval::RobotDriver::SfBaseline);
  CHECK(eval::driver_from_name("straight") == eval::RobotDriver::Straight);
  CHECK(eval::driver_from_name("frozen") == eval::RobotDriver::Frozen);
  CHECK_THROWS_AS((void)eval::driver_from_name("warp"), std::invalid_argument);
}

TEST_CASE("social score weight arithmetic") {
  eval::EpisodeResult ep;
  ep.outcome = env::Done::Success;
  ep.comfort_fraction = 1.0;
  ep.straight_dist = 16.0;
  ep.path_length = 16.0;
  CHECK(eval::social_score(ep) == doctest::Approx(100.0));

  ep.comfort_fraction = 0.5;
  ep.path_length = 20.0;  // efficiency 0.8
  CHECK(eval::social_score(ep) == doctest::Approx(81.0));

  ep.outcome = env::Done::Collision;
  ep.comfort_fraction = 0.0;
  ep.path_length = 1e18;  // efficiency ~ 0
  CHECK(eval::social_score(ep) <= 50.0);
  CHECK(eval::social_score(ep) >= 0.0);
}

TEST_CASE("empty-world straight-line driver succeeds every run") {
  env::EnvConfig cfg;
  cfg.n_humans = 0;
  eval::EvalReport rep = eval::evaluate(cfg, eval::RobotDriver::Straight, nullptr, 5, 0);
  CHECK(rep.success_rate == doctest::Approx(100.0));
  CHECK(rep.collision_rate == doctest::Approx(0.0));
  CHECK(rep.timeout_rate == doctest::Approx(0.0));
}

TEST_CASE("frozen robot times out every run") {
  env::EnvConfig cfg;
  cfg.n_humans = 1;
  eval::EvalReport rep = eval::evaluate(cfg, eval::RobotDriver::Frozen, nullptr, 3, 0);
  CHECK(rep.timeout_rate + rep.collision_rate == doctest::Approx(100.0));
  CHECK(rep.success_rate == doctest::Approx(0.0));
}

TEST_CASE("every episode lands in exactly one outcome bucket") {
  env::EnvConfig cfg;
  cfg.n_humans = 5;
  eval::EvalReport rep = eval::evaluate(cfg, eval::RobotDriver::OrcaBaseline, nullptr, 25, 7);
  CHECK(rep.success_rate + rep.collision_rate + rep.timeout_rate == doctest::Approx(100.0));
  CHECK(rep.episodes.size() == 25);
  CHECK(rep.social >= 0.0);
  CHECK(rep.social <= 100.0);
}

TEST_CASE("evaluation is deterministic under a fixed seed") {
  env::EnvConfig cfg;
  cfg.n_humans = 3;
  eval::EvalReport a = eval::evaluate(cfg, eval::RobotDriver::OrcaBaseline, nullptr, 10, 3);
  eval::EvalReport b = eval::evaluate(cfg, eval::RobotDriver::OrcaBaseline, nullptr, 10, 3);
  CHECK(a.summary() == b.summary());
  CHECK(a.table() == b.table());
}

TEST_CASE("trajectory recording covers goal, robot, and humans each step") {
  env::EnvConfig cfg;
  cfg.n_humans = 2;
  eval::EpisodeOptions opts;
  opts.record_trajectory = true;
  eval::EpisodeResult ep =
      eval::run_episode(cfg, 4, eval::RobotDriver::Straight, nullptr, opts);
  REQUIRE(!ep.trajectory.empty());
  CHECK(ep.trajectory.front().kind == "goal");
  int robots = 0, humans = 0;
  for (const auto& r : ep.trajectory) {
    if (r.kind == "robot") ++robots;
    if (r.kind == "human") ++humans;
  }
  CHECK(robots >= 2);
  CHECK(humans == 2 * robots);
}

TEST_CASE("single stationary agent renders one circle and no path lines") {
  std::vector<eval::TrajRecord> recs{{0.0, 1, "human", 1.0, 1.0, 0.0, 0.0, 0.3}};
  std::string svg = eval::render_trajectory_svg(recs);
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK(svg.find("<line") == std::string::npos);
}

TEST_CASE("two crossing agents produce intersecting path segments") {
  std::vector<eval::TrajRecord> recs;
  for (int s = 0; s <= 8; ++s) {
    double t = 0.25 * s;
    recs.push_back({t, 1, "human", -4.0 + s, 0.0, 1.0, 0.0, 0.3});
    recs.push_back({t, 2, "human", 0.0, -4.0 + s, 0.0, 1.0, 0.3});
  }
  std::string svg = eval::render_trajectory_svg(recs);
  // both paths drawn; agent 1 crosses x = 0 while agent 2 crosses y = 0 at
  // the same world point, so their pixel bounding boxes overlap at center
  CHECK(svg.find("#1f77b4") != std::string::npos);
  CHECK(svg.find("#2ca02c") != std::string::npos);
  size_t lines = 0;
  for (size_t pos = 0; (pos = svg.find("<line", pos)) != std::string::npos; ++pos) ++lines;
  CHECK(lines == 16);
}

TEST_CASE("rendering is byte-identical for identical input") {
  env::EnvConfig cfg;
  cfg.n_humans = 2;
  eval::EpisodeOptions opts;
  opts.record_trajectory = true;
  eval::EpisodeResult ep =
      eval::run_episode(cfg, 9, eval::RobotDriver::OrcaBaseline, nullptr, opts);
  std::string a = eval::render_trajectory_svg(ep.trajectory);
  std::string b = eval::render_trajectory_svg(ep.trajectory);
  CHECK(a == b);
  CHECK(a.find("<svg") == 0);
}

TEST_CASE("orca baseline success does not increase with crowd size") {
  env::EnvConfig small, large;
  small.n_humans = 5;
  large.n_humans = 15;
  eval::EvalReport s = eval::evaluate(small, eval::RobotDriver::OrcaBaseline, nullptr, 40, 11);
  eval::EvalReport l = eval::evaluate(large, eval::RobotDriver::OrcaBaseline, nullptr, 40, 11);
  CHECK(l.success_rate <= s.success_rate);
}
