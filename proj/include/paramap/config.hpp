#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "paramap/error.hpp"
#include "paramap/geometry.hpp"
#include "paramap/mapping.hpp"
#include "paramap/planner.hpp"
#include "paramap/robot_model.hpp"
#include "paramap/sim.hpp"
#include "paramap/version.hpp"

// JSON loaders for robot and scenario files. Errors name the offending field
// as a dotted path, e.g. "goals[1].pose".
namespace paramap {

using Json = nlohmann::json;

// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace config_detail {

inline Json parse(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

inline const Json& require(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + ": missing field '" + key + "'");
  return j.at(key);
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  return j.get<double>();
}

inline double number_or(const Json& j, const std::string& key, double def, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return def;
  return number(j.at(key), join(path, key));
}

inline int integer_or(const Json& j, const std::string& key, int def, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return def;
  const Json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key) + ": expected an integer");
  return v.get<int>();
}

inline std::vector<double> numbers(const Json& j, const std::string& path, std::size_t expected = 0) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  if (expected && j.size() != expected) {
    throw ConfigError(path + ": expected " + std::to_string(expected) + " numbers, got " + std::to_string(j.size()));
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline Vec3 vec3(const Json& j, const std::string& path) {
  const auto v = numbers(j, path, 3);
  return {v[0], v[1], v[2]};
}

inline Index3 index3(const Json& j, const std::string& path) {
  const auto v = numbers(j, path, 3);
  return {static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2])};
}

inline Eigen::VectorXd vecx(const Json& j, const std::string& path, std::size_t n) {
  const auto v = numbers(j, path, n);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// [tx ty tz qw qx qy qz] or {"xyz": [...], "rpy": [...]} (fixed-axis roll, pitch, yaw).
inline RigidTransform pose(const Json& j, const std::string& path) {
  try {
    if (j.is_array()) return RigidTransform::from_pose7(numbers(j, path, 7));
    if (j.is_object()) {
      Vec3 t = Vec3::Zero(), rpy = Vec3::Zero();
      if (j.contains("xyz")) t = vec3(j.at("xyz"), path + ".xyz");
      if (j.contains("rpy")) rpy = vec3(j.at("rpy"), path + ".rpy");
      return {Rotation3::rot_z(rpy.z()) * Rotation3::rot_y(rpy.y()) * Rotation3::rot_x(rpy.x()), t};
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  throw ConfigError(path + ": expected a 7-element pose array or an {xyz, rpy} object");
}

inline Mat6 weight6(const Json& j, const std::string& path) {
  const auto v = numbers(j, path);
  if (v.size() == 6) return Vec6(v[0], v[1], v[2], v[3], v[4], v[5]).asDiagonal();
  if (v.size() == 36) return Eigen::Map<const Eigen::Matrix<double, 6, 6, Eigen::RowMajor>>(v.data());
  throw ConfigError(path + ": expected 6 diagonal entries or a 36-entry row-major matrix");
}

inline IndexBox box(const Json& j, const std::string& path) {
  return {index3(require(j, "min", path), path + ".min"), index3(require(j, "max", path), path + ".max")};
}

inline void check_schema(const Json& j, const std::string& source) {
  const int v = integer_or(j, "schema_version", kSchemaVersion, source);
  if (v != kSchemaVersion) {
    throw ConfigError(source + ": unsupported schema_version " + std::to_string(v));
  }
}

}  // namespace config_detail

inline Robot parse_robot(const Json& j, const std::string& source = "robot") {
  using namespace config_detail;
  check_schema(j, source);
  const RigidTransform base = j.contains("base_pose") ? pose(j.at("base_pose"), source + ".base_pose")
                                                      : RigidTransform::identity();
  const Json& joints = require(j, "joints", source);
  if (!joints.is_array() || joints.empty()) throw ConfigError(source + ".joints: expected a non-empty array");
  std::vector<JointSpec> specs;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const std::string p = source + ".joints[" + std::to_string(i) + "]";
    const Json& jj = joints[i];
    JointSpec s;
    s.parent_offset = pose(require(jj, "parent_offset", p), p + ".parent_offset");
    if (jj.contains("axis")) s.axis = vec3(jj.at("axis"), p + ".axis");
    const Json& lim = require(jj, "limits", p);
    const auto pos = numbers(require(lim, "position", p + ".limits"), p + ".limits.position", 2);
    s.q_min = pos[0];
    s.q_max = pos[1];
    s.qd_max = number(require(lim, "velocity", p + ".limits"), p + ".limits.velocity");
    s.qdd_max = number(require(lim, "acceleration", p + ".limits"), p + ".limits.acceleration");
    try {
      s.validate();
    } catch (const Error& e) {
      throw ConfigError(p + ": " + e.what());
    }
    specs.push_back(s);
  }
  KinematicChain chain(std::move(specs), base);

  std::vector<Sphere> spheres;
  if (j.contains("spheres")) {
    const Json& sj = j.at("spheres");
    for (std::size_t i = 0; i < sj.size(); ++i) {
      const std::string p = source + ".spheres[" + std::to_string(i) + "]";
      Sphere s;
      const double link = number(require(sj[i], "link", p), p + ".link");
      if (link < 0) throw ConfigError(p + ".link: must be non-negative");
      s.link = static_cast<std::size_t>(link);
      s.center = vec3(require(sj[i], "center", p), p + ".center");
      s.radius = number(require(sj[i], "radius", p), p + ".radius");
      spheres.push_back(s);
    }
  }
  std::vector<SpherePair> pairs;
  if (j.contains("self_pairs")) {
    const Json& pj = j.at("self_pairs");
    for (std::size_t i = 0; i < pj.size(); ++i) {
      const auto v = numbers(pj[i], source + ".self_pairs[" + std::to_string(i) + "]", 2);
      pairs.emplace_back(static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]));
    }
  }
  try {
    SphereModel model(std::move(spheres), std::move(pairs), chain);
    return Robot{j.value("name", std::string("robot")), chain, std::move(model)};
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

inline Robot load_robot(const std::filesystem::path& path) {
  return parse_robot(config_detail::parse(read_text_file(path), path.string()), path.string());
}

// Planner parameters; missing fields keep their defaults. sigma may be a
// scalar (broadcast) or per-joint array; q_ref defaults to `q_ref_default`.
inline PlannerParams parse_planner(const Json& j, std::size_t dof, const Eigen::VectorXd& q_ref_default,
                                   const std::string& path = "planner") {
  using namespace config_detail;
  PlannerParams p;
  p.horizon = integer_or(j, "horizon", p.horizon, path);
  p.samples = integer_or(j, "samples", p.samples, path);
  p.dt = number_or(j, "dt", p.dt, path);
  p.lambda = number_or(j, "lambda", p.lambda, path);
  p.noise_window = integer_or(j, "noise_window", p.noise_window, path);
  p.sigma = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dof), 2.0);
  if (j.contains("sigma")) {
    const Json& s = j.at("sigma");
    if (s.is_number()) {
      p.sigma.setConstant(s.get<double>());
    } else {
      p.sigma = vecx(s, path + ".sigma", dof);
    }
  }
  if (j.contains("q_running")) p.q_running = weight6(j.at("q_running"), path + ".q_running");
  p.q_terminal = 10.0 * p.q_running;
  if (j.contains("q_terminal")) p.q_terminal = weight6(j.at("q_terminal"), path + ".q_terminal");
  p.w_env = number_or(j, "w_env", p.w_env, path);
  p.w_self = number_or(j, "w_self", p.w_self, path);
  p.w_q = number_or(j, "w_q", p.w_q, path);
  p.w_qd = number_or(j, "w_qd", p.w_qd, path);
  p.w_qdd = number_or(j, "w_qdd", p.w_qdd, path);
  p.w_s = number_or(j, "w_s", p.w_s, path);
  p.w_ns = number_or(j, "w_ns", p.w_ns, path);
  p.d_act = number_or(j, "d_act", p.d_act, path);
  p.eps_frac = number_or(j, "eps_frac", p.eps_frac, path);
  p.q_ref = j.contains("q_ref") ? vecx(j.at("q_ref"), path + ".q_ref", dof) : q_ref_default;
  try {
    p.validate(dof);
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return p;
}

inline CameraModel parse_camera(const Json& j, const std::string& path) {
  using namespace config_detail;
  CameraModel c;
  c.width = integer_or(j, "width", 320, path);
  c.height = integer_or(j, "height", 240, path);
  c.fx = number_or(j, "fx", 300.0, path);
  c.fy = number_or(j, "fy", c.fx, path);
  c.cx = number_or(j, "cx", 0.5 * (c.width - 1), path);
  c.cy = number_or(j, "cy", 0.5 * (c.height - 1), path);
  c.d_min = number_or(j, "d_min", 0.1, path);
  c.d_max = number_or(j, "d_max", 5.0, path);
  if (j.contains("pose")) {
    c.pose = pose(j.at("pose"), path + ".pose");
  } else if (j.contains("look_at")) {
    const Json& la = j.at("look_at");
    c.pose = CameraModel::look_at(vec3(require(la, "eye", path + ".look_at"), path + ".look_at.eye"),
                                  vec3(require(la, "target", path + ".look_at"), path + ".look_at.target"));
  } else {
    throw ConfigError(path + ": camera needs 'pose' or 'look_at'");
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

// Parses a scenario; relative robot paths resolve against `base_dir`.
inline Scenario parse_scenario(const Json& j, const std::filesystem::path& base_dir, const std::string& source,
                               const std::string& hash_seed_text = {}) {
  using namespace config_detail;
  check_schema(j, source);
  Scenario sc;
  sc.name = j.value("name", std::string("scenario"));

  const Json& rj = require(j, "robot", source);
  std::string robot_text;
  if (rj.is_string()) {
    const std::filesystem::path rp = base_dir / rj.get<std::string>();
    robot_text = read_text_file(rp);
    sc.robot = std::make_shared<const Robot>(parse_robot(parse(robot_text, rp.string()), rp.string()));
  } else {
    sc.robot = std::make_shared<const Robot>(parse_robot(rj, source + ".robot"));
  }
  const std::size_t dof = sc.robot->chain.dof();

  sc.seed = static_cast<std::uint64_t>(number_or(j, "seed", 0.0, source));
  sc.rate_hz = number_or(j, "rate_hz", sc.rate_hz, source);
  sc.max_cycles = integer_or(j, "max_cycles", sc.max_cycles, source);
  sc.start_q = vecx(require(j, "start_q", source), source + ".start_q", dof);

  const Json& goals = require(j, "goals", source);
  if (!goals.is_array() || goals.empty()) throw ConfigError(source + ".goals: expected a non-empty array");
  for (std::size_t i = 0; i < goals.size(); ++i) {
    const std::string p = source + ".goals[" + std::to_string(i) + "]";
    GoalSpec g;
    g.pose = pose(require(goals[i], "pose", p), p + ".pose");
    g.hold_until_s = number_or(goals[i], "hold_until_s", 0.0, p);
    sc.goals.push_back(g);
  }

  if (j.contains("world")) {
    const Json& w = j.at("world");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::string p = source + ".world[" + std::to_string(i) + "]";
      Primitive prim;
      prim.name = w[i].value("name", "primitive" + std::to_string(i));
      const std::string type = w[i].value("type", std::string("box"));
      if (type == "box") {
        prim.shape = Shape::Box;
        prim.half_extents = 0.5 * vec3(require(w[i], "size", p), p + ".size");
      } else if (type == "sphere") {
        prim.shape = Shape::Sphere;
        prim.radius = number(require(w[i], "radius", p), p + ".radius");
      } else {
        throw ConfigError(p + ".type: unknown primitive type '" + type + "'");
      }
      if (w[i].contains("pose")) {
        prim.script.push_back({0.0, pose(w[i].at("pose"), p + ".pose")});
      } else {
        const Json& wps = require(w[i], "waypoints", p);
        for (std::size_t k = 0; k < wps.size(); ++k) {
          const std::string wp = p + ".waypoints[" + std::to_string(k) + "]";
          prim.script.push_back({number(require(wps[k], "t", wp), wp + ".t"), pose(require(wps[k], "pose", wp), wp + ".pose")});
        }
      }
      sc.world.push_back(std::move(prim));
    }
  }

  const Json& sj = require(j, "sensor", source);
  sc.sensor.camera = parse_camera(require(sj, "camera", source + ".sensor"), source + ".sensor.camera");
  sc.sensor.render_robot = sj.value("render_robot", true);
  sc.sensor.noise_std = number_or(sj, "noise_std", 0.0, source + ".sensor");

  const Json& gj = require(j, "grid", source);
  sc.grid.origin = vec3(require(gj, "origin", source + ".grid"), source + ".grid.origin");
  sc.grid.voxel_size = number(require(gj, "voxel_size", source + ".grid"), source + ".grid.voxel_size");
  sc.grid.dims = index3(require(gj, "dims", source + ".grid"), source + ".grid.dims");
  if (gj.contains("edt_volume")) sc.grid.edt_volume = box(gj.at("edt_volume"), source + ".grid.edt_volume");
  if (gj.contains("update_volume")) sc.grid.update_volume = box(gj.at("update_volume"), source + ".grid.update_volume");

  if (j.contains("occupancy")) {
    const Json& oj = j.at("occupancy");
    const std::string p = source + ".occupancy";
    sc.occupancy.l_hit = number_or(oj, "l_hit", sc.occupancy.l_hit, p);
    sc.occupancy.l_miss = number_or(oj, "l_miss", sc.occupancy.l_miss, p);
    sc.occupancy.l_min = number_or(oj, "l_min", sc.occupancy.l_min, p);
    sc.occupancy.l_max = number_or(oj, "l_max", sc.occupancy.l_max, p);
    sc.occupancy.l_occupied = number_or(oj, "l_occupied", sc.occupancy.l_occupied, p);
    sc.occupancy.tau_occ = number_or(oj, "tau_occ", sc.occupancy.tau_occ, p);
    sc.mask_padding = number_or(oj, "mask_padding", sc.mask_padding, p);
  }

  sc.planner = parse_planner(j.value("planner", Json::object()), dof, sc.start_q, source + ".planner");

  if (j.contains("convergence")) {
    const Json& cj = j.at("convergence");
    const std::string p = source + ".convergence";
    sc.convergence.n_stable = integer_or(cj, "n_stable", sc.convergence.n_stable, p);
    sc.convergence.eta_rel = number_or(cj, "eta_rel", sc.convergence.eta_rel, p);
    sc.convergence.pos_tol = number_or(cj, "pos_tol", sc.convergence.pos_tol, p);
    sc.convergence.ori_tol = number_or(cj, "ori_tol", sc.convergence.ori_tol, p);
  }

  sc.config_hash = fnv1a_hex(hash_seed_text + robot_text);
  try {
    sc.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  return parse_scenario(config_detail::parse(text, path.string()), path.parent_path(), path.string(), text);
}

}  // namespace paramap
