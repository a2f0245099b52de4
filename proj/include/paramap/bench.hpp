#pragma once

// Fixed synthetic workloads for the benchmark subcommands and timing checks.

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "paramap/error.hpp"
#include "paramap/mapping.hpp"
#include "paramap/planner.hpp"
#include "paramap/sim.hpp"

namespace paramap::bench {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// "16,64,128x128x64": a bare N means N^3.
inline std::vector<Index3> parse_sizes(const std::string& text) {
  std::vector<Index3> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::vector<int> parts;
    std::stringstream ts(tok);
    std::string p;
    while (std::getline(ts, p, 'x')) {
      try {
        std::size_t used = 0;
        const int v = std::stoi(p, &used);
        if (used != p.size() || v < 1) throw InvalidArgument("");
        parts.push_back(v);
      } catch (const std::exception&) {
        throw InvalidArgument("bad grid size '" + tok + "'");
      }
    }
    if (parts.size() == 1) parts = {parts[0], parts[0], parts[0]};
    if (parts.size() != 3) throw InvalidArgument("bad grid size '" + tok + "'");
    out.push_back({parts[0], parts[1], parts[2]});
  }
  if (out.empty()) throw InvalidArgument("no grid sizes given");
  return out;
}

inline std::vector<int> parse_ints(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size() || v < 1) throw InvalidArgument("");
      out.push_back(v);
    } catch (const std::exception&) {
      throw InvalidArgument("bad " + what + " '" + tok + "'");
    }
  }
  if (out.empty()) throw InvalidArgument("no " + what + " given");
  return out;
}

struct MappingTiming {
  std::vector<double> ogm_ms;
  std::vector<double> edt_ms;
};

// Camera facing a box in the middle of a 2 cm grid; times one occupancy
// update and one full-grid EDT per repetition.
inline MappingTiming bench_mapping(Index3 dims, int reps, ThreadPool& pool) {
  const double voxel = 0.02;
  VoxelGrid grid(Vec3::Zero(), voxel, dims);
  const Vec3 extent(dims[0] * voxel, dims[1] * voxel, dims[2] * voxel);
  const Vec3 mid = 0.5 * extent;

  Primitive box;
  box.shape = Shape::Box;
  box.half_extents = 0.2 * extent;
  box.script.push_back({0.0, RigidTransform::from_translation(mid)});
  const WorldState world = advance_world(std::vector<Primitive>{box}, 0.0);

  CameraModel cam;
  cam.width = 320;
  cam.height = 240;
  cam.fx = cam.fy = 300.0;
  cam.cx = 159.5;
  cam.cy = 119.5;
  cam.d_min = 0.05;
  cam.d_max = 20.0;
  cam.pose = CameraModel::look_at(mid + Vec3(-extent.x(), 0.3 * extent.y(), 0.6 * extent.z() + 0.1), mid);
  const DepthImage depth = render_depth(world, cam, pool);

  const OccupancyParams params;
  MappingTiming t;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    update_occupancy(grid, depth, cam, {}, params, pool);
    t.ogm_ms.push_back(ms_since(t0));
    t0 = Clock::now();
    const DistanceField f = edt_3d(grid, grid.bounds(), pool);
    t.edt_ms.push_back(ms_since(t0));
  }
  return t;
}

// Static scene for planner timing: a box near the arm, a reachable goal.
struct PlannerScene {
  SnapshotPtr map;
  JointState state;
  RigidTransform goal;
};

inline PlannerScene make_planner_scene(const Robot& robot, ThreadPool& pool) {
  const std::size_t n = robot.chain.dof();
  VoxelGrid grid(Vec3(-1.1, -1.5, 0.2), 0.02, {150, 150, 25});
  for (int x = 75; x < 90; ++x)
    for (int y = 70; y < 80; ++y)
      for (int z = 0; z < 12; ++z) grid.set(x, y, z, VoxelState::Occupied, 2.0f);
  PlannerScene s;
  s.map = make_snapshot(grid, edt_3d(grid, grid.bounds(), pool, 0.2));
  Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (n >= 4) q[3] = -2.0;
  if (n >= 6) q[5] = 1.9;
  s.state = JointState::at_rest(q);
  Eigen::VectorXd qg = q;
  qg[0] += 0.6;
  s.goal = forward_kinematics(robot.chain, qg).back();
  return s;
}

// Wall time of `reps` planner steps, each warm-started from the previous one.
inline std::vector<double> bench_planner(const Robot& robot, const PlannerScene& scene, PlannerParams params, int reps,
                                         ThreadPool& pool) {
  if (params.q_ref.size() == 0) params.q_ref = scene.state.q;
  if (params.sigma.size() == 0) params.sigma = Eigen::VectorXd::Constant(scene.state.q.size(), 2.0);
  SmpcPlanner planner(robot.chain, robot.spheres, params, pool);
  ControlSequence nominal = planner.zero_nominal();
  planner.step(scene.state, scene.goal, *scene.map, nominal, 0);  // warm-up
  std::vector<double> out;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    const StepResult res = planner.step(scene.state, scene.goal, *scene.map, nominal, static_cast<std::uint64_t>(r + 1));
    out.push_back(ms_since(t0));
    nominal = res.next_nominal;
  }
  return out;
}

}  // namespace paramap::bench
