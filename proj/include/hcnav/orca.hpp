// Optimal reciprocal collision avoidance in velocity space: one half-plane
// per neighbor from the truncated velocity obstacle (reciprocity 1/2),
// solved by incremental linear programming with the 3-D safest-velocity
// fallback when infeasible.

#ifndef HCNAV_ORCA_HPP
#define HCNAV_ORCA_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace hcnav::orca {

using Eigen::Vector2d;

struct Body {
  Vector2d p;      // position [m]
  Vector2d v;      // velocity [m/s]
  double radius;   // [m]
};

// Feasible side is to the left of `direction` through `point`:
// det(direction, v - point) >= 0.
struct Line {
  Vector2d point;
  Vector2d direction;
};

struct Result {
  Vector2d velocity;
  std::vector<Line> lines;
  bool infeasible = false;  // 3-D fallback was used
};

inline double det2(const Vector2d& a, const Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

inline bool satisfies(const Line& l, const Vector2d& v, double tol = 0.0) {
  return det2(l.direction, l.point - v) <= tol;
}

namespace detail {

inline bool linear_program1(const std::vector<Line>& lines, size_t line_no, double radius,
                            const Vector2d& opt, bool direction_opt, Vector2d& result) {
  double dot = lines[line_no].point.dot(lines[line_no].direction);
  double disc = dot * dot + radius * radius - lines[line_no].point.squaredNorm();
  if (disc < 0.0) return false;  // max-speed circle misses the line
  double sq = std::sqrt(disc);
  double t_left = -dot - sq;
  double t_right = -dot + sq;

  for (size_t i = 0; i < line_no; ++i) {
    double denom = det2(lines[line_no].direction, lines[i].direction);
    double numer = det2(lines[i].direction, lines[line_no].point - lines[i].point);
    if (std::abs(denom) <= 1e-12) {
      if (numer < 0.0) return false;  // parallel and on the wrong side
      continue;
    }
    double t = numer / denom;
    if (denom >= 0.0)
      t_right = std::min(t_right, t);
    else
      t_left = std::max(t_left, t);
    if (t_left > t_right) return false;
  }

  if (direction_opt) {
    if (opt.dot(lines[line_no].direction) > 0.0)
      result = lines[line_no].point + t_right * lines[line_no].direction;
    else
      result = lines[line_no].point + t_left * lines[line_no].direction;
  } else {
    double t = lines[line_no].direction.dot(opt - lines[line_no].point);
    t = std::clamp(t, t_left, t_right);
    result = lines[line_no].point + t * lines[line_no].direction;
  }
  return true;
}

inline size_t linear_program2(const std::vector<Line>& lines, double radius, const Vector2d& opt,
                              bool direction_opt, Vector2d& result) {
  if (direction_opt) {
    result = opt * radius;  // opt is a unit direction
  } else if (opt.squaredNorm() > radius * radius) {
    result = opt.normalized() * radius;
  } else {
    result = opt;
  }
  for (size_t i = 0; i < lines.size(); ++i) {
    if (det2(lines[i].direction, lines[i].point - result) > 0.0) {
      Vector2d temp = result;
      if (!linear_program1(lines, i, radius, opt, direction_opt, result)) {
        result = temp;
        return i;
      }
    }
  }
  return lines.size();
}

inline void linear_program3(const std::vector<Line>& lines, size_t begin_line, double radius,
                            Vector2d& result) {
  double distance = 0.0;
  for (size_t i = begin_line; i < lines.size(); ++i) {
    if (det2(lines[i].direction, lines[i].point - result) <= distance) continue;
    std::vector<Line> proj_lines;
    for (size_t j = 0; j < i; ++j) {
      Line line;
      double denom = det2(lines[i].direction, lines[j].direction);
      if (std::abs(denom) <= 1e-12) {
        if (lines[i].direction.dot(lines[j].direction) > 0.0) continue;  // same direction
        line.point = 0.5 * (lines[i].point + lines[j].point);
      } else {
        line.point = lines[i].point + (det2(lines[j].direction, lines[i].point - lines[j].point) /
                                       denom) *
                                          lines[i].direction;
      }
      line.direction = (lines[j].direction - lines[i].direction).normalized();
      proj_lines.push_back(line);
    }
    Vector2d temp = result;
    Vector2d perp(-lines[i].direction.y(), lines[i].direction.x());
    if (linear_program2(proj_lines, radius, perp, true, result) < proj_lines.size()) {
      result = temp;  // should not happen except for numeric reasons
    }
    distance = det2(lines[i].direction, lines[i].point - result);
  }
}

}  // namespace detail

// Constrained velocity closest to `pref_velocity` subject to the per-neighbor
// ORCA half-planes and the max-speed disc.
inline Result orca_velocity(const Body& self, const std::vector<Body>& neighbors,
                            const Vector2d& pref_velocity, double max_speed,
                            double time_horizon, double time_step) {
  if (time_horizon <= 0.0) throw std::invalid_argument("orca_velocity: time horizon must be > 0");
  Result res;
  const double inv_horizon = 1.0 / time_horizon;

  for (const Body& other : neighbors) {
    Vector2d rel_pos = other.p - self.p;
    Vector2d rel_vel = self.v - other.v;
    double dist_sq = rel_pos.squaredNorm();
    double cr = self.radius + other.radius;
    double cr_sq = cr * cr;

    Line line;
    Vector2d u;
    if (dist_sq > cr_sq) {
      Vector2d w = rel_vel - inv_horizon * rel_pos;
      double w_len_sq = w.squaredNorm();
      double dot1 = w.dot(rel_pos);
      if (dot1 < 0.0 && dot1 * dot1 > cr_sq * w_len_sq) {
        // project on cut-off circle
        double w_len = std::sqrt(w_len_sq);
        Vector2d unit_w = w / w_len;
        line.direction = Vector2d(unit_w.y(), -unit_w.x());
        u = (cr * inv_horizon - w_len) * unit_w;
      } else {
        // project on legs
        double leg = std::sqrt(dist_sq - cr_sq);
        if (det2(rel_pos, w) > 0.0)
          line.direction = Vector2d(rel_pos.x() * leg - rel_pos.y() * cr,
                                    rel_pos.x() * cr + rel_pos.y() * leg) /
                           dist_sq;
        else
          line.direction = -Vector2d(rel_pos.x() * leg + rel_pos.y() * cr,
                                     -rel_pos.x() * cr + rel_pos.y() * leg) /
                           dist_sq;
        double dot2 = rel_vel.dot(line.direction);
        u = dot2 * line.direction - rel_vel;
      }
    } else {
      // already colliding: push apart within one timestep
      double inv_dt = 1.0 / time_step;
      Vector2d w = rel_vel - inv_dt * rel_pos;
      double w_len = w.norm();
      Vector2d unit_w = w_len > 1e-12 ? Vector2d(w / w_len) : Vector2d(1.0, 0.0);
      line.direction = Vector2d(unit_w.y(), -unit_w.x());
      u = (cr * inv_dt - w_len) * unit_w;
    }
    line.point = self.v + 0.5 * u;  // reciprocity: each side takes half
    res.lines.push_back(line);
  }

  size_t fail = detail::linear_program2(res.lines, max_speed, pref_velocity, false, res.velocity);
  if (fail < res.lines.size()) {
    res.infeasible = true;
    detail::linear_program3(res.lines, fail, max_speed, res.velocity);
  }
  return res;
}

}  // namespace hcnav::orca

#endif  // HCNAV_ORCA_HPP
