#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "paramap/config.hpp"
#include "paramap/io.hpp"

using namespace paramap;
namespace fs = std::filesystem;

namespace {

fs::path data_path(const std::string& rel) { return fs::path(PARAMAP_DATA_DIR) / rel; }

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() / ("paramap_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                                  "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  fs::create_directories(d);
  return d;
}

Json read_json(const fs::path& p) { return Json::parse(read_text_file(p)); }

// Parses an edited copy of the bundled near-goal scenario.
Scenario parse_edited(const std::function<void(Json&)>& edit) {
  Json j = read_json(data_path("scenarios/near_goal.json"));
  edit(j);
  return parse_scenario(j, data_path("scenarios"), "test");
}

std::string config_error(const std::function<void(Json&)>& edit) {
  try {
    parse_edited(edit);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(LoadRobot, BundledArm) {
  const Robot r = load_robot(data_path("robots/arm7.json"));
  EXPECT_EQ(r.name, "arm7");
  EXPECT_EQ(r.chain.dof(), 7u);
  EXPECT_GT(r.spheres.spheres().size(), 10u);
  for (const auto& [i, j] : r.spheres.self_pairs()) {
    EXPECT_GE(std::abs(static_cast<int>(r.spheres.spheres()[i].link) - static_cast<int>(r.spheres.spheres()[j].link)), 2);
  }
  // Zero configuration: stacked link offsets put the flange 0.333 + 0.316 + 0.384 m up, 0.088 m out.
  const auto frames = forward_kinematics(r.chain, Eigen::VectorXd::Zero(7));
  EXPECT_NEAR(frames.back().translation.x(), 0.088, 1e-9);
  EXPECT_NEAR(frames.back().translation.y(), 0.0, 1e-9);
  EXPECT_NEAR(frames.back().translation.z(), 0.333 + 0.316 + 0.384, 1e-9);
}

TEST(LoadScenario, BundledFilesParse) {
  for (const char* name : {"near_goal.json", "reach_static.json", "two_goal_dynamic.json"}) {
    const Scenario sc = load_scenario(data_path(std::string("scenarios/") + name));
    EXPECT_EQ(sc.robot->chain.dof(), 7u) << name;
    EXPECT_EQ(sc.grid.dims, (Index3{150, 150, 25})) << name;
    EXPECT_EQ(sc.planner.samples, 512) << name;
    EXPECT_EQ(sc.planner.horizon, 30) << name;
    EXPECT_EQ(sc.rate_hz, 50.0) << name;
    EXPECT_EQ(sc.config_hash.size(), 16u) << name;
  }
  const Scenario dyn = load_scenario(data_path("scenarios/two_goal_dynamic.json"));
  ASSERT_EQ(dyn.goals.size(), 2u);
  EXPECT_GT(dyn.goals[1].hold_until_s, 0.0);
  bool cube = false;
  for (const auto& p : dyn.world) {
    if (p.script.size() > 1) {
      cube = true;
      EXPECT_EQ(p.half_extents, Vec3::Constant(0.05));
    }
  }
  EXPECT_TRUE(cube);
}

TEST(LoadScenario, PoseFormsAgree) {
  const Scenario a = parse_edited([](Json& j) {
    j["world"] = Json::array({{{"type", "sphere"}, {"radius", 0.1}, {"pose", {{"xyz", {1, 2, 3}}, {"rpy", {0.3, -0.2, 0.5}}}}}});
  });
  const RigidTransform want{Rotation3::rot_z(0.5) * Rotation3::rot_y(-0.2) * Rotation3::rot_x(0.3), Vec3(1, 2, 3)};
  const Scenario b = parse_edited([&](Json& j) {
    const auto p7 = want.to_pose7();
    j["world"] = Json::array({{{"type", "sphere"}, {"radius", 0.1}, {"pose", std::vector<double>(p7.begin(), p7.end())}}});
  });
  const RigidTransform pa = a.world[0].script[0].pose, pb = b.world[0].script[0].pose;
  EXPECT_LT((pa.rotation.matrix() - pb.rotation.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(pa.translation, pb.translation);
}

TEST(LoadScenario, PlannerOverridesAndDefaults) {
  const Scenario sc = parse_edited([](Json& j) {
    j["planner"] = {{"samples", 16}, {"sigma", {1, 2, 3, 4, 5, 6, 7}}, {"q_running", {1, 1, 1, 2, 2, 2}}};
  });
  EXPECT_EQ(sc.planner.samples, 16);
  EXPECT_EQ(sc.planner.sigma[6], 7.0);
  EXPECT_EQ(sc.planner.q_terminal(3, 3), 20.0);  // defaults to 10x running weight
  EXPECT_EQ(sc.planner.q_ref, sc.start_q);
}

TEST(LoadScenario, ErrorsNameTheField) {
  EXPECT_NE(config_error([](Json& j) { j.erase("start_q"); }).find("start_q"), std::string::npos);
  EXPECT_NE(config_error([](Json& j) { j["start_q"] = {0, 0, 0}; }).find("start_q"), std::string::npos);
  EXPECT_NE(config_error([](Json& j) { j["schema_version"] = 99; }).find("schema_version"), std::string::npos);
  EXPECT_NE(config_error([](Json& j) { j["goals"] = Json::array(); }).find("goals"), std::string::npos);
  EXPECT_NE(config_error([](Json& j) { j["goals"][0]["pose"] = {1, 2}; }).find("goals[0].pose"), std::string::npos);
  EXPECT_NE(config_error([](Json& j) { j["world"][0]["type"] = "cone"; }).find("world[0].type"), std::string::npos);
  EXPECT_NE(config_error([](Json& j) { j["planner"]["samples"] = 1.5; }).find("planner.samples"), std::string::npos);
  EXPECT_NE(config_error([](Json& j) { j["planner"]["lambda"] = -1; }).find("lambda"), std::string::npos);
  EXPECT_NE(config_error([](Json& j) { j["sensor"]["camera"].erase("look_at"); }).find("camera"), std::string::npos);
  EXPECT_NE(config_error([](Json& j) {
              j["world"] = Json::array({{{"type", "box"},
                                         {"size", {1, 1, 1}},
                                         {"waypoints", {{{"t", 1.0}, {"pose", {{"xyz", {0, 0, 0}}}}},
                                                        {{"t", 1.0}, {"pose", {{"xyz", {1, 0, 0}}}}}}}}});
            }).find("strictly increasing"),
            std::string::npos);
  EXPECT_NE(config_error([](Json& j) { j["grid"]["edt_volume"] = {{"min", {0, 0, 0}}, {"max", {151, 10, 10}}}; }), "");
}

TEST(LoadScenario, FileErrors) {
  try {
    load_scenario("/nonexistent/scenario.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/scenario.json"), std::string::npos);
  }
  const fs::path bad = temp_dir() / "bad.json";
  std::ofstream(bad) << "{\n  \"schema_version\": 1,\n  \"name\": oops\n}\n";
  try {
    load_scenario(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadScenario, HashTracksFileContents) {
  const fs::path dir = temp_dir();
  fs::create_directories(dir / "scenarios");
  fs::create_directories(dir / "robots");
  fs::copy_file(data_path("robots/arm7.json"), dir / "robots/arm7.json", fs::copy_options::overwrite_existing);
  Json j = read_json(data_path("scenarios/near_goal.json"));
  std::ofstream(dir / "scenarios/a.json") << j.dump(2);
  const std::string h1 = load_scenario(dir / "scenarios/a.json").config_hash;
  EXPECT_EQ(load_scenario(dir / "scenarios/a.json").config_hash, h1);
  j["seed"] = 99;
  std::ofstream(dir / "scenarios/a.json") << j.dump(2);
  EXPECT_NE(load_scenario(dir / "scenarios/a.json").config_hash, h1);
}

TEST(DepthIo, RoundTrips) {
  DepthImage img(7, 5);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> d(0.2f, 6.0f);
  for (auto& v : img.data) v = d(rng);
  img.at(3, 2) = 0.0f;
  const fs::path dir = temp_dir();
  write_depth(dir / "a.depth", img);
  const DepthImage back = read_depth(dir / "a.depth");
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.data, img.data);

  write_depth_mm16(dir / "a.mm16", img);
  const DepthImage mm = read_depth_mm16(dir / "a.mm16");
  EXPECT_EQ(mm.at(3, 2), 0.0f);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(mm.data[i], img.data[i], 0.0005 + 1e-6);

  std::ofstream(dir / "short.depth", std::ios::binary) << "abc";
  EXPECT_THROW(read_depth(dir / "short.depth"), Error);
}

TEST(EpisodeLogIo, RoundTripPreservesValuesAndPathLength) {
  Scenario sc = load_scenario(data_path("scenarios/near_goal.json"));
  sc.planner.samples = 32;
  sc.planner.horizon = 10;
  sc.max_cycles = 12;
  ThreadPool pool(2);
  const EpisodeLog log = run_episode(sc, pool);
  const Metrics m = compute_metrics(log, sc.goals.back().pose, sc.convergence.pos_tol);

  std::stringstream ss;
  write_episode_log(ss, log, m);
  const EpisodeLog back = read_episode_log(ss);
  ASSERT_EQ(back.cycles.size(), log.cycles.size());
  EXPECT_EQ(back.seed, log.seed);
  EXPECT_EQ(back.config_hash, log.config_hash);
  EXPECT_EQ(back.start_q, log.start_q);
  EXPECT_EQ(back.timeout, log.timeout);
  for (std::size_t i = 0; i < log.cycles.size(); ++i) {
    EXPECT_EQ(back.cycles[i].q, log.cycles[i].q);
    EXPECT_EQ(back.cycles[i].command, log.cycles[i].command);
    EXPECT_EQ(back.cycles[i].ee_pose, log.cycles[i].ee_pose);
    EXPECT_EQ(back.cycles[i].costs.total(), log.cycles[i].costs.total());
  }
  const Metrics m2 = compute_metrics(back, back.goals.back(), sc.convergence.pos_tol);
  EXPECT_EQ(m2.path_length_rad, m.path_length_rad);
  EXPECT_EQ(m2.e_pos_mm, m.e_pos_mm);
  EXPECT_EQ(m2.e_ori_rad, m.e_ori_rad);
  EXPECT_EQ(m2.motion_time_s, m.motion_time_s);
}

TEST(EpisodeLogIo, RejectsBadRecords) {
  std::stringstream bad("{\"type\":\"header\",\"schema_version\":1,\"dt\":0.02,\"start_q\":[0],\"goals\":[]}\nnot json\n");
  try {
    read_episode_log(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::stringstream unknown("{\"type\":\"mystery\"}\n");
  EXPECT_THROW(read_episode_log(unknown), ConfigError);
}

TEST(StripTiming, RemovesMillisecondFieldsRecursively) {
  const Json j = Json::parse(R"({"a_ms": 1, "b": {"plan_ms": 2, "keep": 3}, "c": [{"map_ms": 4, "d": 5}], "ms": 6})");
  EXPECT_EQ(strip_timing(j), Json::parse(R"({"b": {"keep": 3}, "c": [{"d": 5}], "ms": 6})"));
}

TEST(Headers, CarryVersionSeedAndHash) {
  const Json h = header_record(7, "00ff");
  EXPECT_EQ(h["seed"], 7);
  EXPECT_EQ(h["config_hash"], "00ff");
  EXPECT_EQ(h["version"], kVersion);
  EXPECT_EQ(h["schema_version"], kSchemaVersion);
  EXPECT_EQ(comment_header(7, "00ff"), std::string("# paramap ") + kVersion + " schema_version=1 seed=7 config_hash=00ff\n");
}

TEST(DumpGrid, OneLinePerVoxel) {
  VoxelGrid g(Vec3::Zero(), 0.1, {2, 3, 2});
  g.set(1, 2, 0, VoxelState::Occupied, 2.5f);
  ThreadPool pool(1);
  const DistanceField f = edt_3d(g, g.bounds(), pool);
  std::stringstream ss;
  dump_grid(ss, g, &f);
  std::vector<std::string> lines;
  for (std::string l; std::getline(ss, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 12u);
  EXPECT_EQ(lines[0], "0 0 0 unknown 0 5");
  EXPECT_EQ(lines[g.index(1, 2, 0)], "1 2 0 occupied 2.5 0");
  std::stringstream bare;
  dump_grid(bare, g);
  std::string first;
  std::getline(bare, first);
  EXPECT_EQ(first, "0 0 0 unknown 0 inf");
}
