#pragma once

// Slow reference implementations used by tests, the acceptance suite, and
// the `oracle` CLI subcommand.

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "paramap/geometry.hpp"
#include "paramap/mapping.hpp"
#include "paramap/robot_model.hpp"
#include "paramap/sim.hpp"

namespace paramap::oracle {

using Mat4 = Eigen::Matrix4d;

inline constexpr std::int64_t kNoSource = std::numeric_limits<std::int64_t>::max();

// Squared voxel distance to the nearest occupied voxel of `volume`, by
// scanning every source. Indexed like the grid; outside-volume entries are kNoSource.
inline std::vector<std::int64_t> brute_force_edt(const VoxelGrid& grid, const IndexBox& volume) {
  std::vector<Index3> sources;
  for (int x = volume.min[0]; x < volume.max[0]; ++x)
    for (int y = volume.min[1]; y < volume.max[1]; ++y)
      for (int z = volume.min[2]; z < volume.max[2]; ++z)
        if (grid.state(x, y, z) == VoxelState::Occupied) sources.push_back({x, y, z});

  std::vector<std::int64_t> out(grid.size(), kNoSource);
  for (int x = volume.min[0]; x < volume.max[0]; ++x) {
    for (int y = volume.min[1]; y < volume.max[1]; ++y) {
      for (int z = volume.min[2]; z < volume.max[2]; ++z) {
        std::int64_t best = kNoSource;
        for (const auto& s : sources) {
          const std::int64_t dx = x - s[0], dy = y - s[1], dz = z - s[2];
          best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        out[grid.index(x, y, z)] = best;
      }
    }
  }
  return out;
}

inline Mat4 homogeneous(const RigidTransform& t) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = t.rotation.matrix();
  m.topRightCorner<3, 1>() = t.translation;
  return m;
}

inline Mat4 twist_matrix(const Twist6& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = hat(xi.omega);
  m.topRightCorner<3, 1>() = xi.v;
  return m;
}

// log(I + X) = sum (-1)^{k+1} X^k / k, for ||X|| well below 1.
inline Mat4 log_series(const Mat4& t, int terms = 200) {
  const Mat4 x = t - Mat4::Identity();
  Mat4 power = x;
  Mat4 acc = Mat4::Zero();
  for (int k = 1; k <= terms; ++k) {
    acc += ((k % 2 == 1) ? 1.0 : -1.0) / k * power;
    power = power * x;
    if (power.cwiseAbs().maxCoeff() < 1e-20) break;
  }
  return acc;
}

// Principal square root by Denman-Beavers iteration.
inline Mat4 sqrt_db(const Mat4& a) {
  Mat4 y = a;
  Mat4 z = Mat4::Identity();
  for (int i = 0; i < 100; ++i) {
    const Mat4 yi = y.inverse();
    const Mat4 zi = z.inverse();
    const Mat4 yn = 0.5 * (y + zi);
    z = 0.5 * (z + yi);
    const double change = (yn - y).cwiseAbs().maxCoeff();
    y = yn;
    if (change < 1e-16) break;
  }
  return y;
}

// Matrix logarithm of a homogeneous transform. The plain series only converges
// for ||T - I|| < 1, so T is first square-rooted until it is close to I and the
// result rescaled: log T = 2^k log T^(1/2^k).
inline Mat4 matrix_log(const Mat4& t) {
  Mat4 a = t;
  int k = 0;
  while ((a - Mat4::Identity()).norm() > 0.05 && k < 40) {
    a = sqrt_db(a);
    ++k;
  }
  return std::ldexp(1.0, k) * log_series(a);
}

inline Twist6 log_twist(const RigidTransform& t) {
  const Mat4 l = matrix_log(homogeneous(t));
  Twist6 xi;
  xi.v = l.topRightCorner<3, 1>();
  xi.omega = Vec3(l(2, 1) - l(1, 2), l(0, 2) - l(2, 0), l(1, 0) - l(0, 1)) * 0.5;
  return xi;
}

// exp by Taylor series with scaling and squaring.
inline Mat4 matrix_exp(const Mat4& x) {
  int k = 0;
  double n = x.cwiseAbs().maxCoeff();
  while (n > 0.1) {
    n *= 0.5;
    ++k;
  }
  const Mat4 s = x / std::ldexp(1.0, k);
  Mat4 acc = Mat4::Identity();
  Mat4 term = Mat4::Identity();
  for (int i = 1; i < 40; ++i) {
    term = term * s / i;
    acc += term;
  }
  for (int i = 0; i < k; ++i) acc = acc * acc;
  return acc;
}

// Label a ray-casting reference assigns to a voxel center seen by a camera.
struct RayLabel {
  VoxelState state = VoxelState::Unknown;
  double margin = 0.0;  // projected minus measured depth; NaN when nothing is measured
};

// Traces the ray of the pixel the point falls in against the world directly and
// applies the hit/miss/behind rules to the projected depth.
inline RayLabel raycast_label(const WorldState& world, const CameraModel& cam, const Vec3& point, double tau) {
  RayLabel out;
  out.margin = std::numeric_limits<double>::quiet_NaN();
  const Mat3 rt = cam.pose.rotation.matrix().transpose();
  const Vec3 pc = rt * (point - cam.pose.translation);
  if (!(pc.z() > 0.0)) return out;
  const double uf = cam.fx * pc.x() / pc.z() + cam.cx;
  const double vf = cam.fy * pc.y() / pc.z() + cam.cy;
  const long u = std::lround(uf), v = std::lround(vf);
  if (u < 0 || v < 0 || u >= cam.width || v >= cam.height) return out;

  const Vec3 dir = cam.pose.rotation.matrix() * Vec3((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : world) {
    if (auto t = ray_hit(cam.pose.translation, dir, p)) best = std::min(best, *t);
  }
  if (!(best >= cam.d_min && best <= cam.d_max)) return out;
  const double measured = static_cast<float>(best);
  out.margin = pc.z() - measured;
  if (std::abs(out.margin) <= tau) {
    out.state = VoxelState::Occupied;
  } else if (out.margin < 0.0) {
    out.state = VoxelState::Free;
  }
  return out;
}

// Result of one oracle comparison suite.
struct SuiteReport {
  int cases = 0;
  int compared = 0;  // individual values checked
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
  void fail(std::string msg) {
    if (failures.size() < 20) failures.push_back(std::move(msg));
  }
};

// Random 16^3 grids at 1%-50% occupancy: edt_3d must equal the brute-force
// squared distances exactly.
inline SuiteReport edt_suite(int cases, std::uint64_t seed, ThreadPool& pool, int side = 16) {
  SuiteReport r;
  r.cases = cases;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dens(0.01, 0.5);
  for (int c = 0; c < cases; ++c) {
    VoxelGrid g(Vec3::Zero(), 0.1, {side, side, side});
    std::bernoulli_distribution occ(dens(rng));
    for (auto& s : g.state_data()) s = occ(rng) ? VoxelState::Occupied : VoxelState::Free;
    const DistanceField f = edt_3d(g, g.bounds(), pool);
    const auto want = brute_force_edt(g, g.bounds());
    for (std::size_t i = 0; i < want.size(); ++i) {
      ++r.compared;
      const float w = want[i] == kNoSource ? kInfDistance : static_cast<float>(want[i]);
      if (f.sqdist[i] != w) {
        std::ostringstream os;
        os << "case " << c << " voxel " << i << ": got " << f.sqdist[i] << " want " << w;
        r.fail(os.str());
        break;
      }
    }
  }
  return r;
}

// exp/log round trips plus the log examples against the matrix-log oracle.
inline SuiteReport geometry_suite(int cases, std::uint64_t seed, double tol = 1e-9) {
  SuiteReport r;
  r.cases = cases;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> ang(0.0, std::numbers::pi - 0.01), t(-3.0, 3.0);
  for (int c = 0; c < cases; ++c) {
    Vec3 axis;
    do axis = Vec3(n(rng), n(rng), n(rng));
    while (axis.norm() < 1e-3);
    const Twist6 xi{Vec3(t(rng), t(rng), t(rng)), axis.normalized() * ang(rng)};
    const double err = (se3_log(se3_exp(xi)).vector() - xi.vector()).cwiseAbs().maxCoeff();
    ++r.compared;
    if (!(err <= tol)) r.fail("round trip " + std::to_string(c) + ": error " + std::to_string(err));
  }
  if (cases == 0) return r;
  const std::pair<const char*, RigidTransform> logs[] = {
      {"identity", RigidTransform::identity()},
      {"translation", RigidTransform::from_translation(Vec3(1, 2, 3))},
      {"quarter turn", RigidTransform{Rotation3::rot_z(std::numbers::pi / 2), Vec3(1, 0, 0)}},
  };
  for (const auto& [name, tr] : logs) {
    const double err = (se3_log(tr).vector() - log_twist(tr).vector()).cwiseAbs().maxCoeff();
    ++r.compared;
    if (!(err <= tol)) r.fail(std::string("log ") + name + ": error " + std::to_string(err));
  }
  return r;
}

// Single box seen by a static noiseless camera for `cases` frames, with a
// moving robot rendered into the image. After every frame no Occupied voxel
// may lie inside the robot, and each voxel whose ray-cast margin exceeds 2 tau
// must carry the oracle label. Voxels the robot hides or the mask has stamped
// are skipped.
inline SuiteReport occupancy_suite(int cases, const KinematicChain& chain, const SphereModel& spheres, ThreadPool& pool) {
  SuiteReport r;
  r.cases = cases;
  Primitive box;
  box.name = "box";
  box.shape = Shape::Box;
  box.half_extents = Vec3(0.1, 0.15, 0.12);
  box.script.push_back({0.0, RigidTransform::from_translation(Vec3(0.55, -0.45, 0.3))});
  const WorldState world = advance_world(std::vector<Primitive>{box}, 0.0);

  CameraModel cam;
  cam.width = 160;
  cam.height = 120;
  cam.fx = cam.fy = 150.0;
  cam.cx = (cam.width - 1) / 2.0;
  cam.cy = (cam.height - 1) / 2.0;
  cam.d_min = 0.1;
  cam.d_max = 6.0;
  cam.pose = CameraModel::look_at(Vec3(1.8, 0.0, 1.3), Vec3(0.4, 0.0, 0.3));

  VoxelGrid grid(Vec3(-0.3, -0.8, 0.0), 0.02, {60, 80, 40});
  const OccupancyParams params;
  const double tau = params.tolerance(grid.voxel_size());
  const std::size_t dof = chain.dof();
  // Voxels the mask has ever stamped keep that history, so they are not compared.
  std::vector<char> ever_masked(grid.size(), 0);

  for (int frame = 0; frame < cases; ++frame) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dof));
    for (std::size_t i = 0; i < dof; ++i) q[static_cast<Eigen::Index>(i)] = 0.3 * std::sin(0.4 * frame + static_cast<double>(i));
    if (dof >= 4) q[3] = -1.8 + q[3];
    const SpherePositions body = sphere_positions(chain, q, spheres);
    RenderOptions ro;
    ro.robot = &body;
    const DepthImage depth = render_depth(world, cam, pool, ro);
    const auto mask = mask_from(body);
    update_occupancy(grid, depth, cam, mask, params, pool);

    // Robot spheres as oracle primitives, to tell which rays the body blocks.
    WorldState with_robot = world;
    for (std::size_t s = 0; s < body.centers.size(); ++s) {
      PlacedPrimitive p;
      p.shape = Shape::Sphere;
      p.radius = body.radii[s];
      p.pose = RigidTransform::from_translation(body.centers[s]);
      with_robot.push_back(p);
    }
    for (int x = 0; x < grid.dims()[0]; ++x)
      for (int y = 0; y < grid.dims()[1]; ++y)
        for (int z = 0; z < grid.dims()[2]; ++z) {
          const Vec3 c = grid.center(x, y, z);
          const VoxelState got = grid.state(x, y, z);
          const bool masked = detail::inside_any(c, mask);
          if (masked) ever_masked[grid.index(x, y, z)] = 1;
          if (got == VoxelState::Occupied && masked) {
            r.fail("frame " + std::to_string(frame) + ": occupied voxel inside robot at " + std::to_string(x) + "," +
                   std::to_string(y) + "," + std::to_string(z));
          }
          if (frame == 0) continue;  // surface voxels need two hits
          const RayLabel world_only = raycast_label(world, cam, c, tau);
          const RayLabel seen = raycast_label(with_robot, cam, c, tau);
          if (std::isnan(world_only.margin) || std::isnan(seen.margin) || seen.margin != world_only.margin) continue;
          if (std::abs(world_only.margin) <= 2 * tau || ever_masked[grid.index(x, y, z)]) continue;
          ++r.compared;
          if (got != world_only.state) {
            std::ostringstream os;
            os << "frame " << frame << " voxel " << x << "," << y << "," << z << ": got " << to_string(got)
               << " oracle " << to_string(world_only.state) << " margin " << world_only.margin;
            r.fail(os.str());
          }
        }
  }
  return r;
}

}  // namespace paramap::oracle
