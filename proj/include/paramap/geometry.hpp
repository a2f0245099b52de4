#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "paramap/error.hpp"

namespace paramap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Rotation angles below this use Taylor series for the V(theta) coefficients.
inline constexpr double kSmallAngle = 1e-6;
// Logarithm is rejected at or beyond pi - kPiMargin.
inline constexpr double kPiMargin = 1e-6;

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

class UnitQuaternion;

class Rotation3 {
 public:
  Rotation3() : m_(Mat3::Identity()) {}

  // Validates orthonormality and handedness within tol.
  static Rotation3 from_matrix(const Mat3& m, double tol = 1e-9) {
    const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= tol)) {
      throw InvalidArgument("rotation matrix is not orthonormal (deviation " + std::to_string(ortho) + ")");
    }
    if (!(std::abs(m.determinant() - 1.0) <= tol)) {
      throw InvalidArgument("rotation matrix has determinant != +1");
    }
    return Rotation3(m);
  }

  // Rodrigues' formula; `omega` is axis * angle.
  static Rotation3 exp(const Vec3& omega) {
    const double theta = omega.norm();
    const Mat3 w = hat(omega);
    double a, b;
    if (theta < kSmallAngle) {
      const double t2 = theta * theta;
      a = 1.0 - t2 / 6.0;
      b = 0.5 - t2 / 24.0;
    } else {
      a = std::sin(theta) / theta;
      b = (1.0 - std::cos(theta)) / (theta * theta);
    }
    return Rotation3(Mat3::Identity() + a * w + b * w * w);
  }

  // `axis` must be unit length.
  static Rotation3 about_axis(const Vec3& axis, double angle) {
    const double s = std::sin(angle), c = std::cos(angle);
    const Mat3 w = hat(axis);
    return Rotation3(Mat3::Identity() + s * w + (1.0 - c) * w * w);
  }

  static Rotation3 rot_x(double a) { return about_axis(Vec3::UnitX(), a); }
  static Rotation3 rot_y(double a) { return about_axis(Vec3::UnitY(), a); }
  static Rotation3 rot_z(double a) { return about_axis(Vec3::UnitZ(), a); }

  static Rotation3 from_quaternion(const UnitQuaternion& q);

  const Mat3& matrix() const { return m_; }

  Rotation3 inverse() const { return Rotation3(m_.transpose()); }
  Rotation3 operator*(const Rotation3& o) const { return Rotation3(m_ * o.m_); }
  Vec3 operator*(const Vec3& p) const { return m_ * p; }

  // Rotation angle in [0, pi].
  double angle() const {
    const Vec3 s(m_(2, 1) - m_(1, 2), m_(0, 2) - m_(2, 0), m_(1, 0) - m_(0, 1));
    return std::atan2(0.5 * s.norm(), 0.5 * (m_.trace() - 1.0));
  }

  // Rotation vector omega with exp([omega]x) == *this.
  Vec3 log() const {
    const Vec3 s(m_(2, 1) - m_(1, 2), m_(0, 2) - m_(2, 0), m_(1, 0) - m_(0, 1));
    const double sin_theta = 0.5 * s.norm();
    const double theta = std::atan2(sin_theta, 0.5 * (m_.trace() - 1.0));
    if (theta >= std::numbers::pi - kPiMargin) {
      throw DegenerateRotation("rotation angle " + std::to_string(theta) + " too close to pi for a unique logarithm");
    }
    if (theta < kSmallAngle) {
      return 0.5 * (1.0 + theta * theta / 6.0) * s;
    }
    return (0.5 * theta / sin_theta) * s;
  }

 private:
  explicit Rotation3(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

class UnitQuaternion {
 public:
  UnitQuaternion() = default;

  // Normalizes; rejects a zero quaternion.
  UnitQuaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("quaternion has zero or non-finite norm");
    c_ = {w / n, x / n, y / n, z / n};
  }

  static UnitQuaternion from_rotation(const Rotation3& r) {
    const Eigen::Quaterniond q(r.matrix());
    return UnitQuaternion(q.w(), q.x(), q.y(), q.z());
  }

  double w() const { return c_[0]; }
  double x() const { return c_[1]; }
  double y() const { return c_[2]; }
  double z() const { return c_[3]; }

  double dot(const UnitQuaternion& o) const {
    return c_[0] * o.c_[0] + c_[1] * o.c_[1] + c_[2] * o.c_[2] + c_[3] * o.c_[3];
  }

  UnitQuaternion operator-() const { return UnitQuaternion(-c_[0], -c_[1], -c_[2], -c_[3]); }

  // Shortest-path spherical interpolation.
  static UnitQuaternion slerp(const UnitQuaternion& a, const UnitQuaternion& b, double s) {
    const Eigen::Quaterniond qa(a.w(), a.x(), a.y(), a.z());
    const Eigen::Quaterniond qb(b.w(), b.x(), b.y(), b.z());
    const Eigen::Quaterniond q = qa.slerp(s, qb);
    return UnitQuaternion(q.w(), q.x(), q.y(), q.z());
  }

 private:
  std::array<double, 4> c_{1.0, 0.0, 0.0, 0.0};
};

inline Rotation3 Rotation3::from_quaternion(const UnitQuaternion& q) {
  const Eigen::Quaterniond e(q.w(), q.x(), q.y(), q.z());
  return Rotation3(e.toRotationMatrix());
}

// Element of SE(3): p_world = rotation * p_local + translation.
struct RigidTransform {
  Rotation3 rotation;
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Rotation3(), t}; }

  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    const Rotation3 rt = rotation.inverse();
    return {rt, -(rt * translation)};
  }

  // Serialized form [tx, ty, tz, qw, qx, qy, qz].
  std::array<double, 7> to_pose7() const {
    const UnitQuaternion q = UnitQuaternion::from_rotation(rotation);
    return {translation.x(), translation.y(), translation.z(), q.w(), q.x(), q.y(), q.z()};
  }

  static RigidTransform from_pose7(std::span<const double> p) {
    if (p.size() != 7) throw DimensionMismatch("pose needs 7 values [tx ty tz qw qx qy qz]");
    return {Rotation3::from_quaternion(UnitQuaternion(p[3], p[4], p[5], p[6])), Vec3(p[0], p[1], p[2])};
  }
};

struct Twist6 {
  Vec3 v = Vec3::Zero();      // translational part, meters
  Vec3 omega = Vec3::Zero();  // rotation vector, radians

  Vec6 vector() const {
    Vec6 x;
    x << v, omega;
    return x;
  }
};

namespace detail {

// (1 - cos t) / t^2 and (t - sin t) / t^3.
inline void v_coefficients(double theta, double& a, double& b) {
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    a = 0.5 - t2 / 24.0;
    b = 1.0 / 6.0 - t2 / 120.0;
    return;
  }
  const double t2 = theta * theta;
  const double half_sin = std::sin(0.5 * theta);
  a = 2.0 * half_sin * half_sin / t2;
  b = (theta - std::sin(theta)) / (t2 * theta);
}

}  // namespace detail

// V(theta) = I + (1-cos)/theta^2 [w] + (theta-sin)/theta^3 [w]^2.
inline Mat3 se3_left_jacobian(const Vec3& omega) {
  double a, b;
  detail::v_coefficients(omega.norm(), a, b);
  const Mat3 w = hat(omega);
  return Mat3::Identity() + a * w + b * w * w;
}

inline RigidTransform se3_exp(const Twist6& xi) {
  return {Rotation3::exp(xi.omega), se3_left_jacobian(xi.omega) * xi.v};
}

// Throws DegenerateRotation when the rotation angle is within 1e-6 of pi.
inline Twist6 se3_log(const RigidTransform& t) {
  const Vec3 omega = t.rotation.log();
  const double theta = omega.norm();
  // V^-1 = I - 1/2 [w] + c [w]^2
  double c;
  if (theta < kSmallAngle) {
    c = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    const double half = 0.5 * theta;
    c = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
  }
  const Mat3 w = hat(omega);
  const Vec3 wt = w * t.translation;
  return {t.translation - 0.5 * wt + c * (w * wt), omega};
}

// goal^-1 * current.
inline RigidTransform relative_transform(const RigidTransform& goal, const RigidTransform& current) {
  const Mat3 rg_t = goal.rotation.matrix().transpose();
  return {goal.rotation.inverse() * current.rotation, rg_t * (current.translation - goal.translation)};
}

// Minimal rotation angle between two orientations, in [0, pi].
inline double quaternion_angle(const UnitQuaternion& a, const UnitQuaternion& b) {
  const double d = std::clamp(std::abs(a.dot(b)), -1.0, 1.0);
  return 2.0 * std::acos(d);
}

}  // namespace paramap
