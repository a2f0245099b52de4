#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "paramap/error.hpp"
#include "paramap/geometry.hpp"

namespace paramap {

// One revolute joint. The joint frame is parent * parent_offset * rot(axis, q).
struct JointSpec {
  RigidTransform parent_offset;
  Vec3 axis = Vec3::UnitZ();
  double q_min = -std::numbers::pi;
  double q_max = std::numbers::pi;
  double qd_max = 1.0;
  double qdd_max = 1.0;

  void validate() const {
    if (!(q_min < q_max)) throw InvalidArgument("joint position limits require q_min < q_max");
    if (!(std::abs(axis.norm() - 1.0) <= 1e-9)) throw InvalidArgument("joint axis must be unit length");
    if (!(qd_max > 0.0) || !(qdd_max > 0.0)) {
      throw InvalidArgument("joint velocity and acceleration limits must be positive");
    }
  }
};

class KinematicChain {
 public:
  KinematicChain(std::vector<JointSpec> joints, RigidTransform base)
      : joints_(std::move(joints)), base_(std::move(base)) {
    if (joints_.empty()) throw InvalidArgument("kinematic chain needs at least one joint");
    for (const auto& j : joints_) j.validate();
  }

  std::size_t dof() const { return joints_.size(); }
  const std::vector<JointSpec>& joints() const { return joints_; }
  const JointSpec& joint(std::size_t i) const { return joints_[i]; }
  const RigidTransform& base() const { return base_; }

 private:
  std::vector<JointSpec> joints_;
  RigidTransform base_;
};

struct Sphere {
  std::size_t link = 0;  // 0 = base, i = frame after joint i
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

using SpherePair = std::pair<std::size_t, std::size_t>;

// Collision proxy: spheres rigidly attached to link frames plus the
// self-collision pair set.
class SphereModel {
 public:
  SphereModel() = default;

  SphereModel(std::vector<Sphere> spheres, std::vector<SpherePair> self_pairs, const KinematicChain& chain)
      : spheres_(std::move(spheres)), pairs_(std::move(self_pairs)) {
    for (const auto& s : spheres_) {
      if (s.link > chain.dof()) throw InvalidArgument("sphere attached to nonexistent link " + std::to_string(s.link));
      if (!(s.radius > 0.0)) throw InvalidArgument("sphere radius must be positive");
    }
    for (const auto& [i, j] : pairs_) {
      if (i >= spheres_.size() || j >= spheres_.size() || i == j) {
        throw InvalidArgument("self-collision pair (" + std::to_string(i) + "," + std::to_string(j) + ") is invalid");
      }
      const auto li = spheres_[i].link, lj = spheres_[j].link;
      const auto gap = li > lj ? li - lj : lj - li;
      if (gap < 2) {
        throw InvalidArgument("self-collision pair (" + std::to_string(i) + "," + std::to_string(j) +
                              ") joins spheres on the same or adjacent links");
      }
    }
  }

  std::size_t size() const { return spheres_.size(); }
  const std::vector<Sphere>& spheres() const { return spheres_; }
  const std::vector<SpherePair>& self_pairs() const { return pairs_; }

  double max_radius() const {
    double r = 0.0;
    for (const auto& s : spheres_) r = std::max(r, s.radius);
    return r;
  }

 private:
  std::vector<Sphere> spheres_;
  std::vector<SpherePair> pairs_;
};

struct JointState {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  Eigen::VectorXd qdd;

  static JointState at_rest(const Eigen::VectorXd& q) {
    const auto n = q.size();
    return {q, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  }

  std::size_t dof() const { return static_cast<std::size_t>(q.size()); }
};

// World-frame sphere centers for one configuration.
struct SpherePositions {
  std::vector<Vec3> centers;
  std::vector<double> radii;
};

// Writes the n+1 link frames into `frames` (resized as needed).
inline void forward_kinematics(const KinematicChain& chain, std::span<const double> q,
                               std::vector<RigidTransform>& frames) {
  if (q.size() != chain.dof()) {
    throw DimensionMismatch("configuration has " + std::to_string(q.size()) + " entries, chain has " +
                            std::to_string(chain.dof()) + " joints");
  }
  frames.resize(chain.dof() + 1);
  frames[0] = chain.base();
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const JointSpec& j = chain.joint(i);
    frames[i + 1] = frames[i] * j.parent_offset * RigidTransform{Rotation3::about_axis(j.axis, q[i]), Vec3::Zero()};
  }
}

inline std::vector<RigidTransform> forward_kinematics(const KinematicChain& chain, std::span<const double> q) {
  std::vector<RigidTransform> frames;
  forward_kinematics(chain, q, frames);
  return frames;
}

inline std::vector<RigidTransform> forward_kinematics(const KinematicChain& chain, const Eigen::VectorXd& q) {
  return forward_kinematics(chain, std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
}

// Sphere centers from precomputed link frames.
inline void sphere_positions(std::span<const RigidTransform> frames, const SphereModel& model,
                             SpherePositions& out) {
  const auto& spheres = model.spheres();
  out.centers.resize(spheres.size());
  out.radii.resize(spheres.size());
  for (std::size_t i = 0; i < spheres.size(); ++i) {
    out.centers[i] = frames[spheres[i].link].apply(spheres[i].center);
    out.radii[i] = spheres[i].radius;
  }
}

inline SpherePositions sphere_positions(const KinematicChain& chain, std::span<const double> q,
                                        const SphereModel& model) {
  const auto frames = forward_kinematics(chain, q);
  SpherePositions out;
  sphere_positions(frames, model, out);
  return out;
}

inline SpherePositions sphere_positions(const KinematicChain& chain, const Eigen::VectorXd& q,
                                        const SphereModel& model) {
  return sphere_positions(chain, std::span<const double>(q.data(), static_cast<std::size_t>(q.size())), model);
}

// ||p_i - p_j|| - (r_i + r_j) per pair; negative means penetration.
inline std::vector<double> self_collision_distances(std::span<const Vec3> centers, std::span<const double> radii,
                                                    std::span<const SpherePair> pairs) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    d.push_back((centers[i] - centers[j]).norm() - (radii[i] + radii[j]));
  }
  return d;
}

}  // namespace paramap
