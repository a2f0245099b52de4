#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "paramap/error.hpp"
#include "paramap/geometry.hpp"
#include "paramap/mapping.hpp"
#include "paramap/parallel.hpp"
#include "paramap/planner.hpp"
#include "paramap/robot_model.hpp"

namespace paramap {

struct Robot {
  std::string name;
  KinematicChain chain;
  SphereModel spheres;
};

enum class Shape { Box, Sphere };

struct Waypoint {
  double t = 0.0;
  RigidTransform pose;
};

// Obstacle with a piecewise-linear pose script.
struct Primitive {
  std::string name;
  Shape shape = Shape::Box;
  Vec3 half_extents = Vec3::Zero();  // boxes
  double radius = 0.0;               // spheres
  std::vector<Waypoint> script;
};

// Primitive posed at a particular time.
struct PlacedPrimitive {
  Shape shape = Shape::Box;
  Vec3 half_extents = Vec3::Zero();
  double radius = 0.0;
  RigidTransform pose;
};

using WorldState = std::vector<PlacedPrimitive>;

// Pose of a script at time t, clamped to the first and last waypoints.
inline RigidTransform interpolate_script(std::span<const Waypoint> script, double t) {
  if (script.empty()) return RigidTransform::identity();
  if (t <= script.front().t) return script.front().pose;
  if (t >= script.back().t) return script.back().pose;
  const auto it = std::upper_bound(script.begin(), script.end(), t,
                                   [](double v, const Waypoint& w) { return v < w.t; });
  const Waypoint& b = *it;
  const Waypoint& a = *(it - 1);
  const double s = (t - a.t) / (b.t - a.t);
  const Vec3 p = (1.0 - s) * a.pose.translation + s * b.pose.translation;
  const UnitQuaternion q = UnitQuaternion::slerp(UnitQuaternion::from_rotation(a.pose.rotation),
                                                 UnitQuaternion::from_rotation(b.pose.rotation), s);
  return {Rotation3::from_quaternion(q), p};
}

inline WorldState advance_world(std::span<const Primitive> world, double t) {
  WorldState out;
  out.reserve(world.size());
  for (const auto& p : world) out.push_back({p.shape, p.half_extents, p.radius, interpolate_script(p.script, t)});
  return out;
}

// Smallest t > 0 with origin + t * dir on the primitive surface (dir need not be unit).
inline std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const PlacedPrimitive& p) {
  if (p.shape == Shape::Sphere) {
    const Vec3 oc = origin - p.pose.translation;
    const double a = dir.squaredNorm();
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - p.radius * p.radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    const double t0 = (-b - sq) / a;
    if (t0 > 0.0) return t0;
    const double t1 = (-b + sq) / a;
    if (t1 > 0.0) return t1;
    return std::nullopt;
  }
  const Mat3 rt = p.pose.rotation.matrix().transpose();
  const Vec3 o = rt * (origin - p.pose.translation);
  const Vec3 d = rt * dir;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double h = p.half_extents[a];
    if (d[a] == 0.0) {
      if (o[a] < -h || o[a] > h) return std::nullopt;
      continue;
    }
    double t0 = (-h - o[a]) / d[a];
    double t1 = (h - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_near > 0.0) return t_near;
  if (t_far > 0.0) return t_far;
  return std::nullopt;
}

// Signed distance from a point to a primitive surface (negative inside).
inline double signed_distance(const Vec3& point, const PlacedPrimitive& p) {
  if (p.shape == Shape::Sphere) return (point - p.pose.translation).norm() - p.radius;
  const Vec3 q = (p.pose.rotation.inverse() * (point - p.pose.translation)).cwiseAbs() - p.half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

// Minimum over spheres and primitives of (surface distance - radius).
inline double min_clearance(const SpherePositions& s, const WorldState& world) {
  double c = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.centers.size(); ++i) {
    for (const auto& p : world) c = std::min(c, signed_distance(s.centers[i], p) - s.radii[i]);
  }
  return c;
}

struct RenderOptions {
  const SpherePositions* robot = nullptr;  // rendered as extra spheres when set
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
};

// Analytic depth image: nearest hit per pixel center ray within [d_min, d_max], else 0.
inline DepthImage render_depth(const WorldState& world, const CameraModel& cam, ThreadPool& pool,
                               const RenderOptions& opt = {}) {
  cam.validate();
  DepthImage img(cam.width, cam.height);
  const Mat3& r = cam.pose.rotation.matrix();
  const Vec3& o = cam.pose.translation;
  pool.parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    std::mt19937_64 rng(sample_stream_seed(opt.noise_seed, row));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int u = 0; u < cam.width; ++u) {
      // Camera-frame direction with unit z component, so t equals depth.
      const Vec3 d = r * Vec3((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : world) {
        if (auto t = ray_hit(o, d, p)) best = std::min(best, *t);
      }
      if (opt.robot) {
        for (std::size_t i = 0; i < opt.robot->centers.size(); ++i) {
          PlacedPrimitive s{Shape::Sphere, Vec3::Zero(), opt.robot->radii[i],
                            RigidTransform::from_translation(opt.robot->centers[i])};
          if (auto t = ray_hit(o, d, s)) best = std::min(best, *t);
        }
      }
      if (opt.noise_std > 0.0 && std::isfinite(best)) best += opt.noise_std * noise(rng);
      if (best >= cam.d_min && best <= cam.d_max) img.at(u, v) = static_cast<float>(best);
    }
  });
  return img;
}

// Range per lidar bin center, 0 when nothing is hit within max_range.
inline RangeImage render_ranges(const WorldState& world, const LidarModel& lidar, ThreadPool& pool,
                                const SpherePositions* robot = nullptr) {
  lidar.validate();
  RangeImage img(lidar.azimuth_bins, lidar.elevation_bins);
  const double az_step = 2.0 * std::numbers::pi / lidar.azimuth_bins;
  const double el_step = (lidar.elevation_max - lidar.elevation_min) / lidar.elevation_bins;
  pool.parallel_for(static_cast<std::size_t>(lidar.elevation_bins), [&](std::size_t e) {
    const int el_bin = static_cast<int>(e);
    const double el = lidar.elevation_min + (el_bin + 0.5) * el_step;
    for (int a = 0; a < lidar.azimuth_bins; ++a) {
      const double az = (a + 0.5) * az_step;
      const Vec3 d = lidar.pose.rotation * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : world) {
        if (auto t = ray_hit(lidar.pose.translation, d, p)) best = std::min(best, *t);
      }
      if (robot) {
        for (std::size_t i = 0; i < robot->centers.size(); ++i) {
          PlacedPrimitive s{Shape::Sphere, Vec3::Zero(), robot->radii[i],
                            RigidTransform::from_translation(robot->centers[i])};
          if (auto t = ray_hit(lidar.pose.translation, d, s)) best = std::min(best, *t);
        }
      }
      if (best <= lidar.max_range) img.at(a, el_bin) = static_cast<float>(best);
    }
  });
  return img;
}

struct GoalSpec {
  RigidTransform pose;
  double hold_until_s = 0.0;  // convergence only counts from this time on
};

struct SensorSpec {
  CameraModel camera;
  bool render_robot = true;
  double noise_std = 0.0;
};

struct GridSpec {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.02;
  Index3 dims{1, 1, 1};
  IndexBox edt_volume;     // empty = whole grid
  IndexBox update_volume;  // empty = whole grid
};

struct Scenario {
  std::string name;
  std::shared_ptr<const Robot> robot;
  Eigen::VectorXd start_q;
  std::vector<GoalSpec> goals;
  std::vector<Primitive> world;
  SensorSpec sensor;
  GridSpec grid;
  OccupancyParams occupancy;
  double mask_padding = 0.0;
  PlannerParams planner;
  ConvergenceParams convergence;
  double rate_hz = 50.0;
  int max_cycles = 1000;
  std::uint64_t seed = 0;
  std::string config_hash;

  void validate() const {
    if (!robot) throw InvalidArgument("scenario has no robot");
    if (static_cast<std::size_t>(start_q.size()) != robot->chain.dof()) {
      throw DimensionMismatch("start configuration does not match the robot");
    }
    if (goals.empty()) throw InvalidArgument("scenario needs at least one goal");
    if (!(rate_hz > 0.0)) throw InvalidArgument("rate must be positive");
    if (max_cycles < 0) throw InvalidArgument("max_cycles must be non-negative");
    for (const auto& p : world) {
      if (p.script.empty()) throw InvalidArgument("primitive '" + p.name + "' has no waypoints");
      for (std::size_t i = 1; i < p.script.size(); ++i) {
        if (!(p.script[i].t > p.script[i - 1].t)) {
          throw InvalidArgument("primitive '" + p.name + "' waypoint times must be strictly increasing");
        }
      }
    }
    const VoxelGrid probe(grid.origin, grid.voxel_size, grid.dims);
    if (!grid.edt_volume.empty()) detail::check_volume(probe, grid.edt_volume);
    if (!grid.update_volume.empty()) detail::check_volume(probe, grid.update_volume);
    sensor.camera.validate();
    planner.validate(robot->chain.dof());
  }

  double dt() const { return 1.0 / rate_hz; }
};

struct CycleRecord {
  int cycle = 0;
  double t = 0.0;  // time after executing this cycle's command
  int goal_index = 0;
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  Eigen::VectorXd command;
  std::array<double, 7> ee_pose{};
  CostBreakdown costs;  // optimized sequence
  double best_cost = 0.0;
  double e_pos = 0.0;
  double e_ori = 0.0;
  double min_clearance = 0.0;
  int occupied_voxels = 0;
  int mask_violations = 0;  // occupied voxels inside the robot spheres
  double map_ms = 0.0;
  double plan_ms = 0.0;
};

struct EpisodeLog {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string config_hash;
  double dt = 0.02;
  Eigen::VectorXd start_q;
  std::vector<RigidTransform> goals;
  std::vector<CycleRecord> cycles;
  std::vector<int> goal_converged_cycle;  // one entry per reached goal
  bool success = false;
  bool timeout = false;
};

struct Metrics {
  double planning_time_ms = 0.0;
  double mapping_time_ms = 0.0;
  double motion_time_s = 0.0;
  double path_length_rad = 0.0;
  double e_pos_mm = 0.0;
  double e_ori_rad = 0.0;
  double min_clearance_m = 0.0;
  int penetration_frames = 0;
  int cycles = 0;
  bool success = false;
};

inline double position_error(const RigidTransform& goal, const RigidTransform& ee) {
  return (goal.translation - ee.translation).norm();
}

inline double orientation_error(const RigidTransform& goal, const RigidTransform& ee) {
  return quaternion_angle(UnitQuaternion::from_rotation(goal.rotation), UnitQuaternion::from_rotation(ee.rotation));
}

// Metric suite for a finished episode against `goal`.
inline Metrics compute_metrics(const EpisodeLog& log, const RigidTransform& goal, double tolerance) {
  Metrics m;
  m.cycles = static_cast<int>(log.cycles.size());
  if (log.cycles.empty()) return m;

  const bool reached_all = log.success && !log.goal_converged_cycle.empty();
  const int last = reached_all ? log.goal_converged_cycle.back() : log.cycles.back().cycle;

  Eigen::VectorXd prev = log.start_q;
  double map_sum = 0.0, plan_sum = 0.0;
  m.min_clearance_m = std::numeric_limits<double>::infinity();
  const CycleRecord* final_rec = &log.cycles.back();
  for (const auto& c : log.cycles) {
    map_sum += c.map_ms;
    plan_sum += c.plan_ms;
    m.min_clearance_m = std::min(m.min_clearance_m, c.min_clearance);
    if (c.min_clearance < 0.0) ++m.penetration_frames;
    if (c.cycle <= last) {
      if (prev.size() == c.q.size()) m.path_length_rad += (c.q - prev).cwiseAbs().sum();
      prev = c.q;
      final_rec = &c;
    }
  }
  m.mapping_time_ms = map_sum / static_cast<double>(log.cycles.size());
  m.planning_time_ms = plan_sum / static_cast<double>(log.cycles.size());
  m.motion_time_s = (last + 1) * log.dt;

  const RigidTransform ee = RigidTransform::from_pose7(final_rec->ee_pose);
  m.e_pos_mm = 1000.0 * position_error(goal, ee);
  m.e_ori_rad = orientation_error(goal, ee);
  m.success = reached_all && m.e_pos_mm <= 1000.0 * tolerance;
  return m;
}

// Occupied voxels whose centers are strictly inside any robot sphere.
inline int count_mask_violations(const VoxelGrid& grid, const SpherePositions& robot) {
  int n = 0;
  for (std::size_t s = 0; s < robot.centers.size(); ++s) {
    const Vec3& c = robot.centers[s];
    const double r = robot.radii[s];
    const Index3 a = grid.voxel_of(c - Vec3::Constant(r));
    const Index3 b = grid.voxel_of(c + Vec3::Constant(r));
    for (int x = std::max(a[0], 0); x <= std::min(b[0], grid.dims()[0] - 1); ++x) {
      for (int y = std::max(a[1], 0); y <= std::min(b[1], grid.dims()[1] - 1); ++y) {
        for (int z = std::max(a[2], 0); z <= std::min(b[2], grid.dims()[2] - 1); ++z) {
          if (grid.state(x, y, z) == VoxelState::Occupied && (grid.center(x, y, z) - c).squaredNorm() < r * r) ++n;
        }
      }
    }
  }
  return n;
}

inline MapperConfig mapper_config(const Scenario& sc) {
  MapperConfig cfg;
  cfg.occupancy = sc.occupancy;
  cfg.update_volume = sc.grid.update_volume;
  cfg.edt_volume = sc.grid.edt_volume;
  cfg.outside_default = sc.planner.d_act + sc.robot->spheres.max_radius() + sc.grid.voxel_size;
  cfg.mask_padding = sc.mask_padding;
  return cfg;
}

// Seed for planner sampling at a given cycle.
inline std::uint64_t cycle_seed(std::uint64_t seed, int cycle) {
  return sample_stream_seed(seed ^ 0xA5A5A5A5DEADBEEFULL, static_cast<std::uint64_t>(cycle));
}

// Closed loop: advance world, render, fuse with robot mask, EDT, plan, execute.
inline EpisodeLog run_episode(const Scenario& sc, ThreadPool& pool) {
  sc.validate();
  using Clock = std::chrono::steady_clock;
  const Robot& robot = *sc.robot;
  const double dt = sc.dt();

  EpisodeLog log;
  log.scenario = sc.name;
  log.seed = sc.seed;
  log.config_hash = sc.config_hash;
  log.dt = dt;
  log.start_q = sc.start_q;
  for (const auto& g : sc.goals) log.goals.push_back(g.pose);

  Mapper mapper(VoxelGrid(sc.grid.origin, sc.grid.voxel_size, sc.grid.dims), mapper_config(sc), pool);
  SmpcPlanner planner(robot.chain, robot.spheres, sc.planner, pool);

  JointState state = JointState::at_rest(sc.start_q);
  ControlSequence nominal = planner.zero_nominal();
  std::vector<ConvergenceSample> history;
  std::size_t goal = 0;
  std::vector<RigidTransform> frames;

  for (int cycle = 0; cycle < sc.max_cycles; ++cycle) {
    const double t = cycle * dt;
    const WorldState world = advance_world(sc.world, t);

    const SpherePositions body = sphere_positions(robot.chain, state.q, robot.spheres);
    RenderOptions ro;
    ro.robot = sc.sensor.render_robot ? &body : nullptr;
    ro.noise_std = sc.sensor.noise_std;
    ro.noise_seed = cycle_seed(sc.seed + 1, cycle);
    const DepthImage depth = render_depth(world, sc.sensor.camera, pool, ro);
    // Mapping time covers fusion and the distance transform, not the simulated sensor.
    const auto t0 = Clock::now();
    mapper.integrate(depth, sc.sensor.camera, &body);
    const SnapshotPtr snap = mapper.publish();
    const auto t1 = Clock::now();

    const RigidTransform& goal_pose = sc.goals[goal].pose;
    const StepResult step = planner.step(state, goal_pose, *snap, nominal, cycle_seed(sc.seed, cycle));
    const auto t2 = Clock::now();

    state = integrate_step(state, step.command, dt);
    nominal = step.next_nominal;

    CycleRecord rec;
    rec.cycle = cycle;
    rec.t = (cycle + 1) * dt;
    rec.goal_index = static_cast<int>(goal);
    rec.q = state.q;
    rec.qd = state.qd;
    rec.command = step.command;
    forward_kinematics(robot.chain, std::span<const double>(state.q.data(), robot.chain.dof()), frames);
    rec.ee_pose = frames.back().to_pose7();
    rec.costs = step.diagnostics.weighted;
    rec.best_cost = step.diagnostics.best_cost;
    rec.e_pos = position_error(goal_pose, frames.back());
    rec.e_ori = orientation_error(goal_pose, frames.back());
    const SpherePositions moved = sphere_positions(robot.chain, state.q, robot.spheres);
    rec.min_clearance = min_clearance(moved, advance_world(sc.world, rec.t));
    rec.mask_violations = count_mask_violations(snap->grid, body);
    rec.occupied_voxels = static_cast<int>(
        std::count(snap->grid.state_data().begin(), snap->grid.state_data().end(), VoxelState::Occupied));
    rec.map_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    rec.plan_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    log.cycles.push_back(rec);

    history.push_back({rec.costs.total(), rec.e_pos, rec.e_ori});
    if (rec.t + 1e-9 >= sc.goals[goal].hold_until_s && check_convergence(history, sc.convergence)) {
      log.goal_converged_cycle.push_back(cycle);
      history.clear();
      if (++goal == sc.goals.size()) {
        log.success = true;
        return log;
      }
    }
  }
  log.timeout = true;
  return log;
}

}  // namespace paramap
