#pragma once

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "paramap/config.hpp"
#include "paramap/error.hpp"
#include "paramap/mapping.hpp"
#include "paramap/sim.hpp"
#include "paramap/version.hpp"

namespace paramap {

static_assert(std::endian::native == std::endian::little, "binary depth I/O assumes a little-endian host");

// Depth files: uint32 width, uint32 height, then row-major payload.
//   .depth  float32 meters
//   .mm16   uint16 millimeters (0 = no return)

inline void write_depth(const std::filesystem::path& path, const DepthImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(img.width), static_cast<std::uint32_t>(img.height)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size() * sizeof(float)));
}

namespace io_detail {

inline std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void read_header(const std::vector<char>& bytes, std::size_t elem, const std::string& name, std::uint32_t& w,
                        std::uint32_t& h) {
  if (bytes.size() < 8) throw Error(name + ": truncated depth header");
  std::memcpy(&w, bytes.data(), 4);
  std::memcpy(&h, bytes.data() + 4, 4);
  if (bytes.size() != 8 + static_cast<std::size_t>(w) * h * elem) {
    throw Error(name + ": payload size does not match " + std::to_string(w) + "x" + std::to_string(h));
  }
}

}  // namespace io_detail

inline DepthImage read_depth(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_all(path);
  std::uint32_t w = 0, h = 0;
  io_detail::read_header(bytes, sizeof(float), path.string(), w, h);
  DepthImage img(static_cast<int>(w), static_cast<int>(h));
  std::memcpy(img.data.data(), bytes.data() + 8, img.data.size() * sizeof(float));
  return img;
}

inline void write_depth_mm16(const std::filesystem::path& path, const DepthImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(img.width), static_cast<std::uint32_t>(img.height)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  std::vector<std::uint16_t> mm(img.data.size(), 0);
  for (std::size_t i = 0; i < mm.size(); ++i) {
    const float d = img.data[i];
    if (DepthImage::is_return(d)) mm[i] = static_cast<std::uint16_t>(std::min(65535.0f, std::round(d * 1000.0f)));
  }
  out.write(reinterpret_cast<const char*>(mm.data()), static_cast<std::streamsize>(mm.size() * 2));
}

inline DepthImage read_depth_mm16(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_all(path);
  std::uint32_t w = 0, h = 0;
  io_detail::read_header(bytes, sizeof(std::uint16_t), path.string(), w, h);
  DepthImage img(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    std::uint16_t mm = 0;
    std::memcpy(&mm, bytes.data() + 8 + 2 * i, 2);
    img.data[i] = mm == 0 ? 0.0f : static_cast<float>(mm) / 1000.0f;
  }
  return img;
}

// One voxel per line: "x y z state log-odds sqdist" (sqdist "inf" when unset).
inline void dump_grid(std::ostream& os, const VoxelGrid& grid, const DistanceField* field = nullptr) {
  os << std::setprecision(9);
  for (int x = 0; x < grid.dims()[0]; ++x) {
    for (int y = 0; y < grid.dims()[1]; ++y) {
      for (int z = 0; z < grid.dims()[2]; ++z) {
        const auto i = grid.index(x, y, z);
        os << x << ' ' << y << ' ' << z << ' ' << to_string(grid.state(i)) << ' ' << grid.log_odds(i) << ' ';
        if (field && std::isfinite(field->sqdist[i])) {
          os << field->sqdist[i];
        } else {
          os << "inf";
        }
        os << '\n';
      }
    }
  }
}

inline Json header_record(std::uint64_t seed, const std::string& config_hash) {
  return Json{{"type", "header"}, {"schema_version", kSchemaVersion}, {"version", kVersion},
              {"seed", seed}, {"config_hash", config_hash}};
}

// CSV/text preamble carrying the same reproducibility fields.
inline std::string comment_header(std::uint64_t seed, const std::string& config_hash) {
  std::ostringstream os;
  os << "# paramap " << kVersion << " schema_version=" << kSchemaVersion << " seed=" << seed
     << " config_hash=" << config_hash << '\n';
  return os.str();
}

namespace io_detail {

inline Json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd json_vec(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Json costs_json(const CostBreakdown& c) {
  return Json{{"pose", c.pose}, {"collision", c.collision}, {"limits", c.limits}, {"smoothness", c.smoothness},
              {"nullspace", c.nullspace}, {"terminal", c.terminal}, {"total", c.total()}};
}

inline CostBreakdown json_costs(const Json& j) {
  CostBreakdown c;
  c.pose = j.at("pose");
  c.collision = j.at("collision");
  c.limits = j.at("limits");
  c.smoothness = j.at("smoothness");
  c.nullspace = j.at("nullspace");
  c.terminal = j.at("terminal");
  return c;
}

}  // namespace io_detail

inline Json metrics_json(const Metrics& m) {
  return Json{{"planning_time_ms", m.planning_time_ms}, {"mapping_time_ms", m.mapping_time_ms},
              {"motion_time_s", m.motion_time_s},       {"path_length_rad", m.path_length_rad},
              {"e_pos_mm", m.e_pos_mm},                 {"e_ori_rad", m.e_ori_rad},
              {"min_clearance_m", m.min_clearance_m},   {"penetration_frames", m.penetration_frames},
              {"cycles", m.cycles},                     {"success", m.success}};
}

inline Json cycle_json(const CycleRecord& c) {
  using namespace io_detail;
  return Json{{"type", "cycle"},
              {"cycle", c.cycle},
              {"t", c.t},
              {"goal", c.goal_index},
              {"q", vec_json(c.q)},
              {"qd", vec_json(c.qd)},
              {"u0", vec_json(c.command)},
              {"ee_pose", c.ee_pose},
              {"costs", costs_json(c.costs)},
              {"best_cost", c.best_cost},
              {"e_pos", c.e_pos},
              {"e_ori", c.e_ori},
              {"min_clearance", c.min_clearance},
              {"occupied_voxels", c.occupied_voxels},
              {"mask_violations", c.mask_violations},
              {"map_ms", c.map_ms},
              {"plan_ms", c.plan_ms}};
}

// Newline-delimited records: header, one per cycle, then a summary with metrics.
inline void write_episode_log(std::ostream& os, const EpisodeLog& log, const Metrics& metrics) {
  Json head = header_record(log.seed, log.config_hash);
  head["scenario"] = log.scenario;
  head["dt"] = log.dt;
  head["start_q"] = io_detail::vec_json(log.start_q);
  Json goals = Json::array();
  for (const auto& g : log.goals) goals.push_back(g.to_pose7());
  head["goals"] = goals;
  os << head.dump() << '\n';
  for (const auto& c : log.cycles) os << cycle_json(c).dump() << '\n';
  Json summary{{"type", "summary"},
               {"success", log.success},
               {"timeout", log.timeout},
               {"goal_converged_cycle", log.goal_converged_cycle},
               {"metrics", metrics_json(metrics)}};
  os << summary.dump() << '\n';
}

inline EpisodeLog read_episode_log(std::istream& is) {
  using namespace io_detail;
  EpisodeLog log;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ConfigError("episode log line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string type = j.value("type", std::string());
    if (type == "header") {
      if (j.value("schema_version", 0) != kSchemaVersion) {
        throw ConfigError("episode log line " + std::to_string(line_no) + ": unsupported schema_version");
      }
      log.scenario = j.value("scenario", std::string());
      log.seed = j.value("seed", std::uint64_t{0});
      log.config_hash = j.value("config_hash", std::string());
      log.dt = j.at("dt");
      log.start_q = json_vec(j.at("start_q"));
      for (const auto& g : j.at("goals")) log.goals.push_back(RigidTransform::from_pose7(g.get<std::vector<double>>()));
    } else if (type == "cycle") {
      CycleRecord c;
      c.cycle = j.at("cycle");
      c.t = j.at("t");
      c.goal_index = j.at("goal");
      c.q = json_vec(j.at("q"));
      c.qd = json_vec(j.at("qd"));
      c.command = json_vec(j.at("u0"));
      c.ee_pose = j.at("ee_pose").get<std::array<double, 7>>();
      c.costs = json_costs(j.at("costs"));
      c.best_cost = j.at("best_cost");
      c.e_pos = j.at("e_pos");
      c.e_ori = j.at("e_ori");
      c.min_clearance = j.at("min_clearance");
      c.occupied_voxels = j.at("occupied_voxels");
      c.mask_violations = j.at("mask_violations");
      c.map_ms = j.at("map_ms");
      c.plan_ms = j.at("plan_ms");
      log.cycles.push_back(std::move(c));
    } else if (type == "summary") {
      log.success = j.at("success");
      log.timeout = j.at("timeout");
      log.goal_converged_cycle = j.at("goal_converged_cycle").get<std::vector<int>>();
    } else {
      throw ConfigError("episode log line " + std::to_string(line_no) + ": unknown record type '" + type + "'");
    }
  }
  return log;
}

// Removes wall-clock fields ("*_ms" keys) from a record, recursively.
inline Json strip_timing(Json j) {
  if (j.is_object()) {
    Json out = Json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      if (k.size() > 3 && k.compare(k.size() - 3, 3, "_ms") == 0) continue;
      out[k] = strip_timing(it.value());
    }
    return out;
  }
  if (j.is_array()) {
    for (auto& e : j) e = strip_timing(e);
  }
  return j;
}

}  // namespace paramap
