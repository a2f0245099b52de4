#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "paramap/error.hpp"
#include "paramap/geometry.hpp"
#include "paramap/parallel.hpp"
#include "paramap/robot_model.hpp"

namespace paramap {

enum class VoxelState : std::uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

inline const char* to_string(VoxelState s) {
  switch (s) {
    case VoxelState::Free: return "free";
    case VoxelState::Occupied: return "occupied";
    default: return "unknown";
  }
}

using Index3 = std::array<int, 3>;

// Half-open voxel index box [min, max).
struct IndexBox {
  Index3 min{0, 0, 0};
  Index3 max{0, 0, 0};

  bool empty() const { return max[0] <= min[0] || max[1] <= min[1] || max[2] <= min[2]; }
  int extent(int axis) const { return max[axis] - min[axis]; }
  std::size_t count() const {
    return empty() ? 0 : static_cast<std::size_t>(extent(0)) * extent(1) * extent(2);
  }
  bool contains(int x, int y, int z) const {
    return x >= min[0] && x < max[0] && y >= min[1] && y < max[1] && z >= min[2] && z < max[2];
  }
  bool operator==(const IndexBox&) const = default;
};

// Log-odds fusion constants. tau_occ <= 0 selects 2.5 voxel sizes.
struct OccupancyParams {
  double l_hit = 0.85;
  double l_miss = -0.4;
  double l_min = -2.0;
  double l_max = 3.5;
  double l_occupied = 1.0;
  double tau_occ = 0.0;

  double tolerance(double voxel_size) const { return tau_occ > 0.0 ? tau_occ : 2.5 * voxel_size; }
};

// Dense grid; linear index = x * (Ny * Nz) + y * Nz + z.
class VoxelGrid {
 public:
  VoxelGrid() = default;

  VoxelGrid(const Vec3& origin, double voxel_size, Index3 dims) : origin_(origin), voxel_size_(voxel_size), dims_(dims) {
    if (!(voxel_size > 0.0)) throw InvalidArgument("voxel size must be positive");
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw InvalidArgument("grid dimensions must be >= 1");
    log_odds_.assign(size(), 0.0f);
    state_.assign(size(), VoxelState::Unknown);
  }

  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  const Index3& dims() const { return dims_; }
  std::size_t size() const { return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]; }
  IndexBox bounds() const { return {{0, 0, 0}, dims_}; }

  std::size_t stride(int axis) const {
    switch (axis) {
      case 0: return static_cast<std::size_t>(dims_[1]) * dims_[2];
      case 1: return static_cast<std::size_t>(dims_[2]);
      default: return 1;
    }
  }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * dims_[1] + y) * dims_[2] + z;
  }

  bool in_bounds(int x, int y, int z) const { return bounds().contains(x, y, z); }

  Vec3 center(int x, int y, int z) const {
    return origin_ + voxel_size_ * Vec3(x + 0.5, y + 0.5, z + 0.5);
  }

  // Voxel containing a world point (may be out of bounds).
  Index3 voxel_of(const Vec3& p) const {
    const Vec3 c = (p - origin_) / voxel_size_;
    return {static_cast<int>(std::floor(c.x())), static_cast<int>(std::floor(c.y())),
            static_cast<int>(std::floor(c.z()))};
  }

  float log_odds(std::size_t i) const { return log_odds_[i]; }
  VoxelState state(std::size_t i) const { return state_[i]; }
  VoxelState state(int x, int y, int z) const { return state_[index(x, y, z)]; }

  std::span<float> log_odds_data() { return log_odds_; }
  std::span<const float> log_odds_data() const { return log_odds_; }
  std::span<VoxelState> state_data() { return state_; }
  std::span<const VoxelState> state_data() const { return state_; }

  void set(int x, int y, int z, VoxelState s, float l) {
    const auto i = index(x, y, z);
    state_[i] = s;
    log_odds_[i] = l;
  }

  bool operator==(const VoxelGrid& o) const {
    return origin_ == o.origin_ && voxel_size_ == o.voxel_size_ && dims_ == o.dims_ && log_odds_ == o.log_odds_ &&
           state_ == o.state_;
  }

 private:
  Vec3 origin_ = Vec3::Zero();
  double voxel_size_ = 1.0;
  Index3 dims_{1, 1, 1};
  std::vector<float> log_odds_;
  std::vector<VoxelState> state_;
};

inline constexpr float kInfDistance = std::numeric_limits<float>::infinity();

// Squared voxel distances to the nearest occupied voxel, valid inside `volume`.
struct DistanceField {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 1.0;
  Index3 dims{1, 1, 1};
  IndexBox volume;
  std::vector<float> sqdist;
  double outside_default = std::numeric_limits<double>::infinity();

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * dims[1] + y) * dims[2] + z;
  }
  float value(int x, int y, int z) const { return sqdist[index(x, y, z)]; }

  double distance(const Vec3& p) const;
};

struct CameraModel {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  double d_min = 0.1, d_max = 10.0;
  RigidTransform pose;  // camera-to-world; camera looks along +z, x right, y down

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw InvalidArgument("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw InvalidArgument("camera image size must be positive");
    if (!(d_min > 0.0 && d_min < d_max)) throw InvalidArgument("camera depth range must satisfy 0 < d_min < d_max");
  }

  // Camera placed at `eye` looking at `target`, image y-axis roughly along -up.
  static RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-9) x = z.unitOrthogonal();
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return {Rotation3::from_matrix(r, 1e-9), eye};
  }
};

struct LidarModel {
  int azimuth_bins = 360;
  int elevation_bins = 16;
  double elevation_min = -0.26;
  double elevation_max = 0.26;
  double max_range = 20.0;
  RigidTransform pose;  // sensor-to-world

  void validate() const {
    if (azimuth_bins < 1 || elevation_bins < 1) throw InvalidArgument("lidar bin counts must be >= 1");
    if (!(elevation_min < elevation_max)) throw InvalidArgument("lidar elevation range is empty");
    if (!(max_range > 0.0)) throw InvalidArgument("lidar max range must be positive");
  }
};

// Row-major metric depths; 0 or NaN means no return.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0f) {}

  float& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  float at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }

  static bool is_return(float d) { return std::isfinite(d) && d > 0.0f; }
};

// Ranges indexed [elevation_bin][azimuth_bin]; 0 or NaN means no return.
struct RangeImage {
  int azimuth_bins = 0;
  int elevation_bins = 0;
  std::vector<float> data;

  RangeImage() = default;
  RangeImage(int az, int el) : azimuth_bins(az), elevation_bins(el), data(static_cast<std::size_t>(az) * el, 0.0f) {}

  float& at(int az, int el) { return data[static_cast<std::size_t>(el) * azimuth_bins + az]; }
  float at(int az, int el) const { return data[static_cast<std::size_t>(el) * azimuth_bins + az]; }
};

struct CameraProjection {
  double u = 0.0, v = 0.0, depth = 0.0;
};

// Pinhole projection of a world point; nullopt when the point is behind the camera.
inline std::optional<CameraProjection> project_camera_local(const Vec3& pc, const CameraModel& cam) {
  if (!(pc.z() > 0.0)) return std::nullopt;
  return CameraProjection{cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy, pc.z()};
}

inline std::optional<CameraProjection> project_camera(const Vec3& point, const CameraModel& cam) {
  return project_camera_local(cam.pose.inverse().apply(point), cam);
}

struct LidarProjection {
  int azimuth_bin = 0;
  int elevation_bin = 0;
  double range = 0.0;
};

inline std::optional<LidarProjection> project_lidar_local(const Vec3& ps, const LidarModel& lidar) {
  const double range = ps.norm();
  if (!(range > 0.0)) return std::nullopt;
  double az = std::atan2(ps.y(), ps.x());
  if (az < 0.0) az += 2.0 * std::numbers::pi;
  const double el = std::atan2(ps.z(), std::hypot(ps.x(), ps.y()));
  if (el < lidar.elevation_min || el >= lidar.elevation_max) return std::nullopt;
  const double az_step = 2.0 * std::numbers::pi / lidar.azimuth_bins;
  const int az_bin = std::min(static_cast<int>(az / az_step), lidar.azimuth_bins - 1);
  const double el_frac = (el - lidar.elevation_min) / (lidar.elevation_max - lidar.elevation_min);
  const int el_bin = std::min(static_cast<int>(el_frac * lidar.elevation_bins), lidar.elevation_bins - 1);
  return LidarProjection{az_bin, el_bin, range};
}

// Spherical projection; nullopt when outside the elevation field of view.
inline std::optional<LidarProjection> project_lidar(const Vec3& point, const LidarModel& lidar) {
  return project_lidar_local(lidar.pose.inverse().apply(point), lidar);
}

// Sphere used for robot masking.
struct MaskSphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

inline std::vector<MaskSphere> mask_from(const SpherePositions& s, double padding = 0.0) {
  std::vector<MaskSphere> m;
  m.reserve(s.centers.size());
  for (std::size_t i = 0; i < s.centers.size(); ++i) m.push_back({s.centers[i], s.radii[i] + padding});
  return m;
}

namespace detail {

inline bool inside_any(const Vec3& p, std::span<const MaskSphere> mask) {
  for (const auto& s : mask) {
    if ((p - s.center).squaredNorm() < s.radius * s.radius) return true;
  }
  return false;
}

inline void check_volume(const VoxelGrid& grid, const IndexBox& box) {
  for (int a = 0; a < 3; ++a) {
    if (box.min[a] < 0 || box.max[a] > grid.dims()[a] || box.min[a] > box.max[a]) {
      throw VolumeOutOfBounds("voxel box exceeds grid bounds on axis " + std::to_string(a));
    }
  }
}

// Applies one measurement to a voxel: margin = projected - measured depth.
inline void fuse(float& l, VoxelState& s, double projected, double measured, double tau, const OccupancyParams& p) {
  double lo = l;
  if (std::abs(projected - measured) <= tau) {
    lo += p.l_hit;
  } else if (projected < measured - tau) {
    lo += p.l_miss;
  } else {
    return;  // behind the surface
  }
  lo = std::clamp(lo, p.l_min, p.l_max);
  l = static_cast<float>(lo);
  s = lo >= p.l_occupied ? VoxelState::Occupied : VoxelState::Free;
}

// Forces voxels whose centers are strictly inside a mask sphere to free.
inline void stamp_mask(VoxelGrid& grid, const IndexBox& box, std::span<const MaskSphere> mask) {
  auto lo = grid.log_odds_data();
  auto st = grid.state_data();
  for (const auto& s : mask) {
    const Index3 a = grid.voxel_of(s.center - Vec3::Constant(s.radius));
    const Index3 b = grid.voxel_of(s.center + Vec3::Constant(s.radius));
    for (int x = std::max(a[0], box.min[0]); x <= std::min(b[0], box.max[0] - 1); ++x) {
      for (int y = std::max(a[1], box.min[1]); y <= std::min(b[1], box.max[1] - 1); ++y) {
        for (int z = std::max(a[2], box.min[2]); z <= std::min(b[2], box.max[2] - 1); ++z) {
          if ((grid.center(x, y, z) - s.center).squaredNorm() < s.radius * s.radius) {
            const auto i = grid.index(x, y, z);
            lo[i] = std::min(lo[i], 0.0f);
            st[i] = VoxelState::Free;
          }
        }
      }
    }
  }
}

}  // namespace detail

// Voxel-projection occupancy update from a depth image.
//
// Each voxel center in `volume` is projected into the image and compared with
// the measured depth at the nearest pixel: within tau -> hit, in front -> miss,
// behind -> untouched. With a mask, depth returns whose back-projection lies
// inside a mask sphere are discarded and voxels inside the mask are forced free.
inline void update_occupancy(VoxelGrid& grid, const DepthImage& depth, const CameraModel& cam,
                             std::span<const MaskSphere> mask, const OccupancyParams& params, ThreadPool& pool,
                             std::optional<IndexBox> volume = std::nullopt) {
  cam.validate();
  if (depth.width != cam.width || depth.height != cam.height ||
      depth.data.size() != static_cast<std::size_t>(depth.width) * depth.height) {
    throw FrameMismatch("depth image is " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                        ", camera expects " + std::to_string(cam.width) + "x" + std::to_string(cam.height));
  }
  const IndexBox box = volume.value_or(grid.bounds());
  detail::check_volume(grid, box);

  // Per-pixel measured depth with invalid and masked returns removed.
  std::vector<float> measured(depth.data.size(), 0.0f);
  pool.parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < cam.width; ++u) {
      const float d = depth.at(u, v);
      if (!DepthImage::is_return(d) || d < cam.d_min || d > cam.d_max) continue;
      if (!mask.empty()) {
        const Vec3 pc((u - cam.cx) / cam.fx * d, (v - cam.cy) / cam.fy * d, d);
        if (detail::inside_any(cam.pose.apply(pc), mask)) continue;
      }
      measured[static_cast<std::size_t>(v) * cam.width + u] = d;
    }
  });

  const Mat3 rt = cam.pose.rotation.matrix().transpose();
  const Vec3 tt = -(rt * cam.pose.translation);
  const double tau = params.tolerance(grid.voxel_size());
  auto lo = grid.log_odds_data();
  auto st = grid.state_data();

  pool.parallel_for(static_cast<std::size_t>(box.extent(0)), [&](std::size_t xi) {
    const int x = box.min[0] + static_cast<int>(xi);
    for (int y = box.min[1]; y < box.max[1]; ++y) {
      for (int z = box.min[2]; z < box.max[2]; ++z) {
        const Vec3 pc = rt * grid.center(x, y, z) + tt;
        if (!(pc.z() > 0.0)) continue;
        const double u = cam.fx * pc.x() / pc.z() + cam.cx;
        const double v = cam.fy * pc.y() / pc.z() + cam.cy;
        const long pu = std::lround(u), pv = std::lround(v);
        if (pu < 0 || pv < 0 || pu >= cam.width || pv >= cam.height) continue;
        const float d = measured[static_cast<std::size_t>(pv) * cam.width + pu];
        if (d <= 0.0f) continue;
        const auto i = grid.index(x, y, z);
        detail::fuse(lo[i], st[i], pc.z(), d, tau, params);
      }
    }
  });

  if (!mask.empty()) detail::stamp_mask(grid, box, mask);
}

// Same rules for a spinning lidar; ranges replace depths.
inline void update_occupancy(VoxelGrid& grid, const RangeImage& ranges, const LidarModel& lidar,
                             std::span<const MaskSphere> mask, const OccupancyParams& params, ThreadPool& pool,
                             std::optional<IndexBox> volume = std::nullopt) {
  lidar.validate();
  if (ranges.azimuth_bins != lidar.azimuth_bins || ranges.elevation_bins != lidar.elevation_bins) {
    throw FrameMismatch("range image bins do not match the lidar model");
  }
  const IndexBox box = volume.value_or(grid.bounds());
  detail::check_volume(grid, box);

  const double az_step = 2.0 * std::numbers::pi / lidar.azimuth_bins;
  const double el_step = (lidar.elevation_max - lidar.elevation_min) / lidar.elevation_bins;
  std::vector<float> measured(ranges.data.size(), 0.0f);
  pool.parallel_for(static_cast<std::size_t>(lidar.elevation_bins), [&](std::size_t e) {
    const int el_bin = static_cast<int>(e);
    const double el = lidar.elevation_min + (el_bin + 0.5) * el_step;
    for (int a = 0; a < lidar.azimuth_bins; ++a) {
      const float r = ranges.at(a, el_bin);
      if (!DepthImage::is_return(r) || r > lidar.max_range) continue;
      if (!mask.empty()) {
        const double az = (a + 0.5) * az_step;
        const Vec3 ps(r * std::cos(el) * std::cos(az), r * std::cos(el) * std::sin(az), r * std::sin(el));
        if (detail::inside_any(lidar.pose.apply(ps), mask)) continue;
      }
      measured[static_cast<std::size_t>(el_bin) * lidar.azimuth_bins + a] = r;
    }
  });

  const RigidTransform to_sensor = lidar.pose.inverse();
  const double tau = params.tolerance(grid.voxel_size());
  auto lo = grid.log_odds_data();
  auto st = grid.state_data();
  pool.parallel_for(static_cast<std::size_t>(box.extent(0)), [&](std::size_t xi) {
    const int x = box.min[0] + static_cast<int>(xi);
    for (int y = box.min[1]; y < box.max[1]; ++y) {
      for (int z = box.min[2]; z < box.max[2]; ++z) {
        const auto proj = project_lidar_local(to_sensor.apply(grid.center(x, y, z)), lidar);
        if (!proj) continue;
        const float r = measured[static_cast<std::size_t>(proj->elevation_bin) * lidar.azimuth_bins + proj->azimuth_bin];
        if (r <= 0.0f) continue;
        const auto i = grid.index(x, y, z);
        detail::fuse(lo[i], st[i], proj->range, r, tau, params);
      }
    }
  });

  if (!mask.empty()) detail::stamp_mask(grid, box, mask);
}

struct FhScratch {
  std::vector<int> v;
  std::vector<double> z;
};

// Exact 1D squared distance transform, out[i] = min_j (i - j)^2 + in[j],
// via the lower envelope of parabolas. Infinite entries are not sources.
template <std::floating_point T>
void fh_1d(std::span<const T> in, std::span<T> out, FhScratch& scratch) {
  const int n = static_cast<int>(in.size());
  if (out.size() != in.size()) throw DimensionMismatch("fh_1d input and output lengths differ");
  scratch.v.resize(static_cast<std::size_t>(n) + 1);
  scratch.z.resize(static_cast<std::size_t>(n) + 2);
  auto& v = scratch.v;
  auto& z = scratch.z;
  constexpr double inf = std::numeric_limits<double>::infinity();

  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = in[q];
    if (!std::isfinite(fq)) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    const double hq = fq + static_cast<double>(q) * q;
    double s;
    for (;;) {
      const int p = v[k];
      s = (hq - (static_cast<double>(in[p]) + static_cast<double>(p) * p)) / (2.0 * (q - p));
      if (s <= z[k]) {
        --k;  // never drops below 0 since z[0] = -inf
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }

  if (k < 0) {
    std::fill(out.begin(), out.end(), std::numeric_limits<T>::infinity());
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    out[q] = static_cast<T>(dq * dq + static_cast<double>(in[v[j]]));
  }
}

template <std::floating_point T>
std::vector<T> fh_1d(std::span<const T> in) {
  std::vector<T> out(in.size());
  FhScratch s;
  fh_1d<T>(in, std::span<T>(out), s);
  return out;
}

enum class Axis : int { X = 0, Y = 1, Z = 2 };

// Pass order used by edt_3d unless overridden.
inline constexpr std::array<Axis, 3> kEdtPassOrder{Axis::Y, Axis::X, Axis::Z};

namespace detail {

// One separable pass: each line along `axis` is gathered into a contiguous
// buffer, transformed, and scattered back in place.
inline void edt_pass(DistanceField& f, const IndexBox& box, Axis axis_tag, ThreadPool& pool) {
  const int axis = static_cast<int>(axis_tag);
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  const std::size_t strides[3] = {static_cast<std::size_t>(f.dims[1]) * f.dims[2],
                                  static_cast<std::size_t>(f.dims[2]), 1};
  const std::size_t stride = strides[axis];
  const int len = box.extent(axis);
  const int n1 = box.extent(a1), n2 = box.extent(a2);
  const std::size_t lines = static_cast<std::size_t>(n1) * n2;

  pool.parallel_for_chunks(lines, [&](std::size_t begin, std::size_t end, std::size_t) {
    std::vector<float> in(static_cast<std::size_t>(len)), out(static_cast<std::size_t>(len));
    FhScratch scratch;
    for (std::size_t l = begin; l < end; ++l) {
      Index3 c{};
      c[a1] = box.min[a1] + static_cast<int>(l / n2);
      c[a2] = box.min[a2] + static_cast<int>(l % n2);
      c[axis] = box.min[axis];
      const std::size_t base = f.index(c[0], c[1], c[2]);
      for (int i = 0; i < len; ++i) in[i] = f.sqdist[base + i * stride];
      fh_1d<float>(in, out, scratch);
      for (int i = 0; i < len; ++i) f.sqdist[base + i * stride] = out[i];
    }
  });
}

}  // namespace detail

// Exact squared EDT over `volume`: occupied voxels are zero-distance sources,
// everything else starts at infinity. Values outside the volume stay infinite.
inline DistanceField edt_3d(const VoxelGrid& grid, const IndexBox& volume, ThreadPool& pool,
                            double outside_default = std::numeric_limits<double>::infinity(),
                            std::array<Axis, 3> order = kEdtPassOrder) {
  detail::check_volume(grid, volume);
  DistanceField f;
  f.origin = grid.origin();
  f.voxel_size = grid.voxel_size();
  f.dims = grid.dims();
  f.volume = volume;
  f.outside_default = outside_default;
  f.sqdist.assign(grid.size(), kInfDistance);
  if (volume.empty()) return f;

  const auto states = grid.state_data();
  pool.parallel_for(static_cast<std::size_t>(volume.extent(0)), [&](std::size_t xi) {
    const int x = volume.min[0] + static_cast<int>(xi);
    for (int y = volume.min[1]; y < volume.max[1]; ++y) {
      for (int z = volume.min[2]; z < volume.max[2]; ++z) {
        const auto i = grid.index(x, y, z);
        f.sqdist[i] = states[i] == VoxelState::Occupied ? 0.0f : kInfDistance;
      }
    }
  });
  for (Axis a : order) detail::edt_pass(f, volume, a, pool);
  return f;
}

// Metric distance to the nearest occupied voxel: r * sqrt of the trilinear
// interpolation of squared distances at the surrounding voxel centers.
inline double query_distance(const DistanceField& f, const Vec3& p) {
  const Vec3 g = (p - f.origin) / f.voxel_size;
  const IndexBox& b = f.volume;
  if (b.empty()) return f.outside_default;
  if (!(g.x() >= b.min[0] && g.x() < b.max[0] && g.y() >= b.min[1] && g.y() < b.max[1] && g.z() >= b.min[2] &&
        g.z() < b.max[2])) {
    return f.outside_default;
  }
  const int vx = static_cast<int>(g.x()), vy = static_cast<int>(g.y()), vz = static_cast<int>(g.z());
  const float own = f.value(vx, vy, vz);
  if (own == 0.0f) return 0.0;
  if (!std::isfinite(own)) return f.outside_default;  // no sources in the volume

  double c[3] = {g.x() - 0.5, g.y() - 0.5, g.z() - 0.5};
  int lo[3], hi[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    const double fl = std::floor(c[a]);
    lo[a] = std::clamp(static_cast<int>(fl), b.min[a], b.max[a] - 1);
    hi[a] = std::min(lo[a] + 1, b.max[a] - 1);
    t[a] = std::clamp(c[a] - lo[a], 0.0, 1.0);
  }
  double acc = 0.0;
  for (int k = 0; k < 8; ++k) {
    const int x = (k & 4) ? hi[0] : lo[0];
    const int y = (k & 2) ? hi[1] : lo[1];
    const int z = (k & 1) ? hi[2] : lo[2];
    const double w = ((k & 4) ? t[0] : 1.0 - t[0]) * ((k & 2) ? t[1] : 1.0 - t[1]) * ((k & 1) ? t[2] : 1.0 - t[2]);
    if (w == 0.0) continue;
    acc += w * f.value(x, y, z);
  }
  return f.voxel_size * std::sqrt(acc);
}

inline double DistanceField::distance(const Vec3& p) const { return query_distance(*this, p); }

// Immutable grid + distance field pair handed to planners.
struct MapSnapshot {
  VoxelGrid grid;
  DistanceField field;

  double distance(const Vec3& p) const { return query_distance(field, p); }
};

using SnapshotPtr = std::shared_ptr<const MapSnapshot>;

inline SnapshotPtr make_snapshot(const VoxelGrid& grid, DistanceField field) {
  return std::make_shared<const MapSnapshot>(MapSnapshot{grid, std::move(field)});
}

struct MapperConfig {
  OccupancyParams occupancy;
  IndexBox update_volume;  // empty = whole grid
  IndexBox edt_volume;     // empty = whole grid
  double outside_default = std::numeric_limits<double>::infinity();
  double mask_padding = 0.0;
};

// Single writer that owns the grid and publishes immutable snapshots.
class Mapper {
 public:
  Mapper(VoxelGrid grid, MapperConfig config, ThreadPool& pool)
      : grid_(std::move(grid)), config_(std::move(config)), pool_(pool) {
    if (config_.update_volume.empty()) config_.update_volume = grid_.bounds();
    if (config_.edt_volume.empty()) config_.edt_volume = grid_.bounds();
    detail::check_volume(grid_, config_.update_volume);
    detail::check_volume(grid_, config_.edt_volume);
  }

  void integrate(const DepthImage& depth, const CameraModel& cam, const SpherePositions* robot = nullptr) {
    std::vector<MaskSphere> mask;
    if (robot) mask = mask_from(*robot, config_.mask_padding);
    update_occupancy(grid_, depth, cam, mask, config_.occupancy, pool_, config_.update_volume);
  }

  void integrate(const RangeImage& ranges, const LidarModel& lidar, const SpherePositions* robot = nullptr) {
    std::vector<MaskSphere> mask;
    if (robot) mask = mask_from(*robot, config_.mask_padding);
    update_occupancy(grid_, ranges, lidar, mask, config_.occupancy, pool_, config_.update_volume);
  }

  // Recomputes the local EDT and publishes a new snapshot.
  SnapshotPtr publish() {
    auto snap = make_snapshot(grid_, edt_3d(grid_, config_.edt_volume, pool_, config_.outside_default));
    std::lock_guard lock(mutex_);
    latest_ = snap;
    return snap;
  }

  SnapshotPtr snapshot() const {
    std::lock_guard lock(mutex_);
    return latest_;
  }

  const VoxelGrid& grid() const { return grid_; }
  const MapperConfig& config() const { return config_; }

 private:
  VoxelGrid grid_;
  MapperConfig config_;
  ThreadPool& pool_;
  mutable std::mutex mutex_;
  SnapshotPtr latest_;
};

}  // namespace paramap
