#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "paramap/bench.hpp"
#include "paramap/config.hpp"
#include "paramap/io.hpp"
#include "paramap/oracle.hpp"
#include "paramap/sim.hpp"
#include "paramap/version.hpp"

namespace fs = std::filesystem;
using namespace paramap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

fs::path default_robot() { return fs::path(PARAMAP_DATA_DIR) / "robots" / "arm7.json"; }

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write " + p.string());
  os.precision(17);
  return os;
}

struct RunArgs {
  std::string scenario;
  std::string out = "out";
  std::size_t threads = 0;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_cycles;
  bool quiet = false;
};

void write_cycles_csv(std::ostream& os, const EpisodeLog& log) {
  os << comment_header(log.seed, log.config_hash);
  os << "cycle,t,goal,e_pos,e_ori,min_clearance,best_cost,cost_total,occupied_voxels,map_ms,plan_ms";
  const std::size_t n = log.start_q.size();
  for (std::size_t i = 0; i < n; ++i) os << ",q" << i;
  for (std::size_t i = 0; i < n; ++i) os << ",u" << i;
  os << '\n';
  for (const auto& c : log.cycles) {
    os << c.cycle << ',' << c.t << ',' << c.goal_index << ',' << c.e_pos << ',' << c.e_ori << ',' << c.min_clearance
       << ',' << c.best_cost << ',' << c.costs.total() << ',' << c.occupied_voxels << ',' << c.map_ms << ','
       << c.plan_ms;
    for (Eigen::Index i = 0; i < c.q.size(); ++i) os << ',' << c.q[i];
    for (Eigen::Index i = 0; i < c.command.size(); ++i) os << ',' << c.command[i];
    os << '\n';
  }
}

int cmd_run(const RunArgs& a) {
  Scenario sc = load_scenario(a.scenario);
  if (a.seed) sc.seed = *a.seed;
  if (a.max_cycles) sc.max_cycles = *a.max_cycles;
  ThreadPool pool(a.threads);
  const EpisodeLog log = run_episode(sc, pool);
  const Metrics m = compute_metrics(log, sc.goals.back().pose, sc.convergence.pos_tol);

  fs::create_directories(a.out);
  {
    auto os = open_out(fs::path(a.out) / "episode.ndjson");
    write_episode_log(os, log, m);
  }
  {
    auto os = open_out(fs::path(a.out) / "metrics.json");
    Json j = header_record(log.seed, log.config_hash);
    j["scenario"] = log.scenario;
    j["threads"] = pool.size();
    j["timeout"] = log.timeout;
    j["goal_converged_cycle"] = log.goal_converged_cycle;
    j["metrics"] = metrics_json(m);
    os << j.dump(2) << '\n';
  }
  {
    auto os = open_out(fs::path(a.out) / "cycles.csv");
    write_cycles_csv(os, log);
  }
  if (!a.quiet) {
    std::cout << "scenario " << log.scenario << " seed " << log.seed << ": "
              << (m.success ? "success" : (log.timeout ? "timeout" : "failed")) << " after " << m.cycles
              << " cycles, e_pos " << m.e_pos_mm << " mm, e_ori " << m.e_ori_rad << " rad, min clearance "
              << m.min_clearance_m << " m, plan " << m.planning_time_ms << " ms, map " << m.mapping_time_ms
              << " ms\n";
  }
  return m.success ? kExitOk : kExitFailure;
}

std::ostream& pick_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file = open_out(path);
  return file;
}

int cmd_bench_edt(const std::string& sizes_text, int reps, const std::string& threads_text, const std::string& out) {
  const auto sizes = bench::parse_sizes(sizes_text);
  const auto threads = bench::parse_ints(threads_text, "thread count");
  if (reps < 1) throw InvalidArgument("--reps must be >= 1");
  std::ofstream file;
  std::ostream& os = pick_out(out, file);
  os << comment_header(0, fnv1a_hex("bench-edt " + sizes_text + " " + std::to_string(reps) + " " + threads_text));
  os << "nx,ny,nz,threads,reps,ogm_mean_ms,ogm_median_ms,edt_mean_ms,edt_median_ms,total_median_ms,speedup\n";
  for (const auto& d : sizes) {
    double base = 0.0;
    for (int t : threads) {
      ThreadPool pool(static_cast<std::size_t>(t));
      const auto timing = bench::bench_mapping(d, reps, pool);
      std::vector<double> total(timing.ogm_ms.size());
      for (std::size_t i = 0; i < total.size(); ++i) total[i] = timing.ogm_ms[i] + timing.edt_ms[i];
      const double med = bench::median(total);
      if (base == 0.0) base = med;
      os << d[0] << ',' << d[1] << ',' << d[2] << ',' << t << ',' << reps << ',' << bench::mean(timing.ogm_ms) << ','
         << bench::median(timing.ogm_ms) << ',' << bench::mean(timing.edt_ms) << ',' << bench::median(timing.edt_ms)
         << ',' << med << ',' << (med > 0.0 ? base / med : 0.0) << '\n';
    }
  }
  return kExitOk;
}

int cmd_bench_planner(const std::string& samples_text, int horizon, int reps, const std::string& threads_text,
                      const std::string& robot_path, const std::string& out) {
  const auto samples = bench::parse_ints(samples_text, "sample count");
  const auto threads = bench::parse_ints(threads_text, "thread count");
  if (reps < 1) throw InvalidArgument("--reps must be >= 1");
  if (horizon < 1) throw InvalidArgument("--horizon must be >= 1");
  const std::string robot_text = read_text_file(robot_path);
  const Robot robot = load_robot(robot_path);
  std::ofstream file;
  std::ostream& os = pick_out(out, file);
  os << comment_header(0, fnv1a_hex(robot_text + "bench-planner " + samples_text + " " + std::to_string(horizon) +
                                    " " + std::to_string(reps) + " " + threads_text));
  os << "samples,horizon,dof,threads,reps,mean_ms,median_ms,min_ms,rollouts_per_s,speedup\n";
  ThreadPool setup(1);
  const bench::PlannerScene scene = bench::make_planner_scene(robot, setup);
  for (int m : samples) {
    double base = 0.0;
    for (int t : threads) {
      ThreadPool pool(static_cast<std::size_t>(t));
      PlannerParams p;
      p.samples = m;
      p.horizon = horizon;
      const auto ms = bench::bench_planner(robot, scene, p, reps, pool);
      const double med = bench::median(ms);
      if (base == 0.0) base = med;
      os << m << ',' << horizon << ',' << robot.chain.dof() << ',' << t << ',' << reps << ',' << bench::mean(ms) << ','
         << med << ',' << *std::min_element(ms.begin(), ms.end()) << ',' << (med > 0.0 ? 1000.0 * m / med : 0.0)
         << ',' << (med > 0.0 ? base / med : 0.0) << '\n';
    }
  }
  return kExitOk;
}

int cmd_oracle(const std::string& suite, std::optional<int> cases, std::uint64_t seed, std::size_t threads,
               const std::string& robot_path) {
  ThreadPool pool(threads);
  oracle::SuiteReport r;
  if (suite == "edt") {
    r = oracle::edt_suite(cases.value_or(100), seed, pool);
  } else if (suite == "geometry") {
    r = oracle::geometry_suite(cases.value_or(10000), seed);
  } else {
    const Robot robot = load_robot(robot_path);
    r = oracle::occupancy_suite(cases.value_or(5), robot.chain, robot.spheres, pool);
  }
  if (r.cases == 0) std::cerr << "warning: --cases 0, nothing compared\n";
  for (const auto& f : r.failures) std::cout << "  " << f << '\n';
  std::cout << "oracle " << suite << ": " << (r.passed() ? "PASS" : "FAIL") << " (" << r.cases << " cases, "
            << r.compared << " values compared)\n";
  return r.passed() ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paramap: sampling MPC with online mapping on a simulated manipulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::size_t env_threads = 1;
  try {
    env_threads = default_thread_count();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  RunArgs run;
  run.threads = env_threads;
  std::uint64_t seed_value = 0;
  int max_cycles_value = 0;
  auto* run_cmd = app.add_subcommand("run", "run a closed-loop episode");
  run_cmd->add_option("--scenario", run.scenario, "scenario file")->required();
  run_cmd->add_option("--out", run.out, "output directory")->capture_default_str();
  run_cmd->add_option("--threads", run.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  auto* seed_opt = run_cmd->add_option("--seed", seed_value, "override the scenario seed");
  auto* cycles_opt = run_cmd->add_option("--max-cycles", max_cycles_value, "override the cycle budget")
                         ->check(CLI::NonNegativeNumber);
  run_cmd->add_flag("--quiet", run.quiet, "no summary line");

  std::string sizes = "16,64,128x128x64";
  int edt_reps = 5;
  std::string edt_threads = std::to_string(env_threads);
  std::string edt_out;
  auto* edt_cmd = app.add_subcommand("bench-edt", "time occupancy update and EDT on synthetic grids");
  edt_cmd->add_option("--sizes", sizes, "comma list of N or AxBxC")->capture_default_str();
  edt_cmd->add_option("--reps", edt_reps, "repetitions")->capture_default_str();
  edt_cmd->add_option("--threads", edt_threads, "comma list of thread counts")->capture_default_str();
  edt_cmd->add_option("--out", edt_out, "CSV file (default stdout)");

  std::string samples = "64,512";
  int horizon = 30, plan_reps = 5;
  std::string plan_threads = std::to_string(env_threads);
  std::string plan_out, plan_robot = default_robot().string();
  auto* plan_cmd = app.add_subcommand("bench-planner", "time planner steps on a fixed scene");
  plan_cmd->add_option("--samples", samples, "comma list of sample counts")->capture_default_str();
  plan_cmd->add_option("--horizon", horizon, "horizon steps")->capture_default_str();
  plan_cmd->add_option("--reps", plan_reps, "repetitions")->capture_default_str();
  plan_cmd->add_option("--threads", plan_threads, "comma list of thread counts")->capture_default_str();
  plan_cmd->add_option("--robot", plan_robot, "robot file")->capture_default_str();
  plan_cmd->add_option("--out", plan_out, "CSV file (default stdout)");

  std::string suite;
  int cases_value = 0;
  std::uint64_t oracle_seed = 1;
  std::size_t oracle_threads = env_threads;
  std::string oracle_robot = default_robot().string();
  auto* oracle_cmd = app.add_subcommand("oracle", "compare fast kernels against slow references");
  oracle_cmd->add_option("--suite", suite, "edt, geometry or occupancy")
      ->required()
      ->check(CLI::IsMember({"edt", "geometry", "occupancy"}));
  auto* cases_opt = oracle_cmd->add_option("--cases", cases_value, "number of cases")->check(CLI::NonNegativeNumber);
  oracle_cmd->add_option("--seed", oracle_seed, "random seed")->capture_default_str();
  oracle_cmd->add_option("--threads", oracle_threads, "worker threads")->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--robot", oracle_robot, "robot file for the occupancy suite")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) {
      if (*seed_opt) run.seed = seed_value;
      if (*cycles_opt) run.max_cycles = max_cycles_value;
      return cmd_run(run);
    }
    if (*edt_cmd) return cmd_bench_edt(sizes, edt_reps, edt_threads, edt_out);
    if (*plan_cmd) return cmd_bench_planner(samples, horizon, plan_reps, plan_threads, plan_robot, plan_out);
    if (*oracle_cmd) {
      std::optional<int> cases;
      if (*cases_opt) cases = cases_value;
      return cmd_oracle(suite, cases, oracle_seed, oracle_threads, oracle_robot);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
