#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "paramap/error.hpp"
#include "paramap/geometry.hpp"
#include "paramap/parallel.hpp"
#include "paramap/robot_model.hpp"

namespace paramap {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// H x n joint accelerations, one row per step.
using ControlSequence = RowMatrix;

// Anything that answers point-to-obstacle distance queries in meters.
template <class F>
concept DistanceQuery = requires(const F& f, const Vec3& p) {
  { f.distance(p) } -> std::convertible_to<double>;
};

// Field with no obstacles anywhere.
struct FreeSpace {
  double distance(const Vec3&) const { return std::numeric_limits<double>::infinity(); }
};

struct PlannerParams {
  int horizon = 30;
  int samples = 512;
  double dt = 0.02;
  double lambda = 0.5;
  Eigen::VectorXd sigma;  // per-joint sampling std, rad/s^2
  int noise_window = 5;
  Mat6 q_running = Vec6(5, 5, 5, 2, 2, 2).asDiagonal();
  Mat6 q_terminal = 10.0 * Mat6(Vec6(5, 5, 5, 2, 2, 2).asDiagonal());
  double w_env = 5000.0;
  double w_self = 5000.0;
  double w_q = 100.0;
  double w_qd = 100.0;
  double w_qdd = 100.0;
  double w_s = 0.01;
  double w_ns = 0.1;
  double d_act = 0.05;
  double eps_frac = 0.02;
  Eigen::VectorXd q_ref;

  void validate(std::size_t dof) const {
    if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
    if (samples < 1) throw InvalidArgument("sample count must be >= 1");
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (!(lambda > 0.0)) throw InvalidArgument("temperature lambda must be positive");
    if (noise_window < 1) throw InvalidArgument("noise window must be >= 1");
    if (static_cast<std::size_t>(sigma.size()) != dof) throw DimensionMismatch("sigma must have one entry per joint");
    if (static_cast<std::size_t>(q_ref.size()) != dof) throw DimensionMismatch("q_ref must have one entry per joint");
    if ((sigma.array() < 0.0).any()) throw InvalidArgument("sigma entries must be non-negative");
    for (double w : {w_env, w_self, w_q, w_qd, w_qdd, w_s, w_ns, d_act, eps_frac}) {
      if (!(w >= 0.0)) throw InvalidArgument("penalty weights and margins must be non-negative");
    }
    auto check_weight = [](const Mat6& q, bool definite, const char* name) {
      if (!q.isApprox(q.transpose(), 1e-12)) throw InvalidArgument(std::string(name) + " must be symmetric");
      const double lo = Eigen::SelfAdjointEigenSolver<Mat6>(q).eigenvalues().minCoeff();
      if (definite ? !(lo > 0.0) : !(lo >= -1e-12)) {
        throw InvalidArgument(std::string(name) + (definite ? " must be positive definite" : " must be PSD"));
      }
    };
    check_weight(q_running, false, "running pose weight");
    check_weight(q_terminal, true, "terminal pose weight");
  }
};

// Joint trajectory, rows k = 0..H.
struct Trajectory {
  RowMatrix q;
  RowMatrix qd;
  RowMatrix qdd;

  int steps() const { return static_cast<int>(q.rows()) - 1; }
};

struct CostBreakdown {
  double pose = 0.0;
  double collision = 0.0;
  double limits = 0.0;
  double smoothness = 0.0;
  double nullspace = 0.0;
  double terminal = 0.0;

  double total() const { return pose + collision + limits + smoothness + nullspace + terminal; }
};

// Semi-implicit Euler double integrator; qdd_H is left at zero.
inline void rollout(const JointState& s0, const ControlSequence& u, double dt, Trajectory& out) {
  const auto n = s0.q.size();
  if (u.cols() != n || s0.qd.size() != n) throw DimensionMismatch("rollout state and control dimensions differ");
  const auto h = u.rows();
  out.q.resize(h + 1, n);
  out.qd.resize(h + 1, n);
  out.qdd.resize(h + 1, n);
  out.q.row(0) = s0.q.transpose();
  out.qd.row(0) = s0.qd.transpose();
  for (Eigen::Index k = 0; k < h; ++k) {
    out.qdd.row(k) = u.row(k);
    out.qd.row(k + 1) = out.qd.row(k) + dt * u.row(k);
    out.q.row(k + 1) = out.q.row(k) + dt * out.qd.row(k + 1);
  }
  out.qdd.row(h).setZero();
}

inline Trajectory rollout(const JointState& s0, const ControlSequence& u, double dt) {
  Trajectory t;
  rollout(s0, u, dt, t);
  return t;
}

// One executed step of the same integrator.
inline JointState integrate_step(const JointState& s, const Eigen::VectorXd& u, double dt) {
  JointState next;
  next.qdd = u;
  next.qd = s.qd + dt * u;
  next.q = s.q + dt * next.qd;
  return next;
}

inline double pose_error_cost(const RigidTransform& ee, const RigidTransform& goal, const Mat6& q) {
  const Vec6 xi = se3_log(relative_transform(goal, ee)).vector();
  return 0.5 * xi.dot(q * xi);
}

// Running pose cost over the supplied end-effector frames (k = 0..H-1).
inline double pose_cost(std::span<const RigidTransform> ee, const RigidTransform& goal, const Mat6& q) {
  double c = 0.0;
  for (const auto& t : ee) c += pose_error_cost(t, goal, q);
  return c;
}

inline double terminal_cost(const RigidTransform& ee_h, const RigidTransform& goal, const Mat6& q_terminal) {
  return pose_error_cost(ee_h, goal, q_terminal);
}

template <DistanceQuery Field>
double collision_step_cost(const SpherePositions& s, const Field& field, std::span<const SpherePair> pairs,
                           const PlannerParams& p) {
  double env = 0.0;
  for (std::size_t i = 0; i < s.centers.size(); ++i) {
    const double d = field.distance(s.centers[i]) - s.radii[i];
    const double delta = std::max(0.0, p.d_act - d);
    env += delta * delta;
  }
  double self = 0.0;
  for (const auto& [i, j] : pairs) {
    const double d = (s.centers[i] - s.centers[j]).norm() - (s.radii[i] + s.radii[j]);
    const double delta = std::max(0.0, -d);
    self += delta * delta;
  }
  return p.w_env * env + p.w_self * self;
}

// Environment and self-collision penalties over the supplied steps.
template <DistanceQuery Field>
double collision_cost(std::span<const SpherePositions> steps, const Field& field, std::span<const SpherePair> pairs,
                      const PlannerParams& p) {
  double c = 0.0;
  for (const auto& s : steps) c += collision_step_cost(s, field, pairs, p);
  return c;
}

namespace detail {

inline double limit_violation(double x, double lo, double hi) {
  return std::max(0.0, x - hi) + std::min(0.0, x - lo);
}

// Squared violations of the tightened bounds for one step.
inline double limit_step_cost(const KinematicChain& chain, const PlannerParams& p, const double* q, const double* qd,
                              const double* qdd) {
  double c = 0.0;
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const JointSpec& j = chain.joint(i);
    const double eq = p.eps_frac * (j.q_max - j.q_min);
    const double ev = p.eps_frac * 2.0 * j.qd_max;
    const double ea = p.eps_frac * 2.0 * j.qdd_max;
    const double dq = limit_violation(q[i], j.q_min + eq, j.q_max - eq);
    const double dv = limit_violation(qd[i], -j.qd_max + ev, j.qd_max - ev);
    const double da = limit_violation(qdd[i], -j.qdd_max + ea, j.qdd_max - ea);
    c += p.w_q * dq * dq + p.w_qd * dv * dv + p.w_qdd * da * da;
  }
  return c;
}

}  // namespace detail

inline double joint_limit_cost(const Trajectory& t, const KinematicChain& chain, const PlannerParams& p) {
  double c = 0.0;
  for (int k = 0; k < t.steps(); ++k) {
    c += detail::limit_step_cost(chain, p, t.q.row(k).data(), t.qd.row(k).data(), t.qdd.row(k).data());
  }
  return c;
}

inline double smoothness_cost(const Trajectory& t, double w_s) {
  return w_s * t.qdd.topRows(t.steps()).squaredNorm();
}

inline double nullspace_cost(const Trajectory& t, const Eigen::VectorXd& q_ref, double w_ns) {
  return w_ns * (t.q.topRows(t.steps()).rowwise() - q_ref.transpose()).squaredNorm();
}

// Buffers reused across evaluations of one worker.
struct CostWorkspace {
  std::vector<RigidTransform> frames;
  SpherePositions spheres;
};

// All six terms for one trajectory, evaluated step by step.
template <DistanceQuery Field>
CostBreakdown total_cost(const Trajectory& t, const KinematicChain& chain, const SphereModel& model,
                         const Field& field, const RigidTransform& goal, const PlannerParams& p,
                         CostWorkspace& ws) {
  CostBreakdown c;
  const int h = t.steps();
  const auto n = static_cast<std::size_t>(t.q.cols());
  for (int k = 0; k <= h; ++k) {
    forward_kinematics(chain, std::span<const double>(t.q.row(k).data(), n), ws.frames);
    if (k == h) {
      c.terminal = terminal_cost(ws.frames.back(), goal, p.q_terminal);
      break;
    }
    c.pose += pose_error_cost(ws.frames.back(), goal, p.q_running);
    sphere_positions(ws.frames, model, ws.spheres);
    c.collision += collision_step_cost(ws.spheres, field, model.self_pairs(), p);
    c.limits += detail::limit_step_cost(chain, p, t.q.row(k).data(), t.qd.row(k).data(), t.qdd.row(k).data());
    for (std::size_t i = 0; i < n; ++i) {
      const double a = t.qdd(k, static_cast<Eigen::Index>(i));
      const double e = t.q(k, static_cast<Eigen::Index>(i)) - p.q_ref[static_cast<Eigen::Index>(i)];
      c.smoothness += a * a;
      c.nullspace += e * e;
    }
  }
  c.smoothness *= p.w_s;
  c.nullspace *= p.w_ns;
  return c;
}

template <DistanceQuery Field>
CostBreakdown total_cost(const Trajectory& t, const KinematicChain& chain, const SphereModel& model,
                         const Field& field, const RigidTransform& goal, const PlannerParams& p) {
  CostWorkspace ws;
  return total_cost(t, chain, model, field, goal, p, ws);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Seed of the independent stream for sample m.
inline std::uint64_t sample_stream_seed(std::uint64_t seed, std::uint64_t m) {
  return detail::splitmix64(detail::splitmix64(seed) ^ detail::splitmix64(m + 0x632BE59BD9B4E019ULL));
}

// Moving-average smoothed Gaussian perturbations for sample m (m >= 1).
// A window of w i.i.d. draws is summed and scaled by 1/sqrt(w), keeping the
// per-step standard deviation at sigma.
inline void sample_perturbation(const PlannerParams& p, std::size_t dof, std::uint64_t seed, std::size_t m,
                                ControlSequence& out) {
  const int h = p.horizon, w = p.noise_window;
  const auto n = static_cast<Eigen::Index>(dof);
  out.resize(h, n);
  std::mt19937_64 rng(sample_stream_seed(seed, m));
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix raw(h + w - 1, n);
  for (Eigen::Index r = 0; r < raw.rows(); ++r) {
    for (Eigen::Index i = 0; i < n; ++i) raw(r, i) = normal(rng);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(w));
  for (int k = 0; k < h; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < w; ++j) s += raw(k + j, i);
      out(k, i) = p.sigma[i] * scale * s;
    }
  }
}

// M perturbation sequences; sample 0 is the reserved all-zero sequence.
inline std::vector<ControlSequence> sample_perturbations(const PlannerParams& p, std::size_t dof,
                                                         std::uint64_t seed, ThreadPool& pool) {
  std::vector<ControlSequence> eps(static_cast<std::size_t>(p.samples));
  pool.parallel_for(eps.size(), [&](std::size_t m) {
    if (m == 0) {
      eps[0] = ControlSequence::Zero(p.horizon, static_cast<Eigen::Index>(dof));
    } else {
      sample_perturbation(p, dof, seed, m, eps[m]);
    }
  });
  return eps;
}

// Softmin importance weights, shifted by the batch minimum.
inline std::vector<double> soft_weights(std::span<const double> costs, double lambda) {
  if (costs.empty()) return {};
  if (!(lambda > 0.0)) throw InvalidArgument("temperature lambda must be positive");
  const double s_min = *std::min_element(costs.begin(), costs.end());
  std::vector<double> w(costs.size());
  double sum = 0.0;
  for (std::size_t m = 0; m < costs.size(); ++m) {
    w[m] = std::exp(-(costs[m] - s_min) / lambda);
    sum += w[m];
  }
  for (double& x : w) x /= sum;
  return w;
}

// U* = nominal + sum_m w_m eps_m.
inline ControlSequence update_controls(const ControlSequence& nominal, std::span<const ControlSequence> eps,
                                       std::span<const double> weights) {
  if (eps.size() != weights.size()) throw WeightMismatch("one weight per perturbation required");
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (!(std::abs(sum - 1.0) <= 1e-9)) throw WeightMismatch("weights sum to " + std::to_string(sum) + ", expected 1");
  ControlSequence u = nominal;
  for (std::size_t m = 0; m < eps.size(); ++m) {
    if (eps[m].rows() != nominal.rows() || eps[m].cols() != nominal.cols()) {
      throw DimensionMismatch("perturbation shape differs from the nominal sequence");
    }
    if (weights[m] != 0.0) u += weights[m] * eps[m];
  }
  return u;
}

// Left shift by one step with a zero tail.
inline ControlSequence shift_nominal(const ControlSequence& u) {
  ControlSequence next = ControlSequence::Zero(u.rows(), u.cols());
  if (u.rows() > 1) next.topRows(u.rows() - 1) = u.bottomRows(u.rows() - 1);
  return next;
}

struct RolloutBatch {
  std::vector<ControlSequence> perturbations;
  std::vector<CostBreakdown> costs;
  std::vector<Trajectory> trajectories;  // only when requested

  std::vector<double> totals() const {
    std::vector<double> t(costs.size());
    for (std::size_t m = 0; m < costs.size(); ++m) t[m] = costs[m].total();
    return t;
  }
};

struct StepDiagnostics {
  double best_cost = 0.0;
  std::size_t best_index = 0;
  double nominal_cost = 0.0;     // cost of the unperturbed sample
  CostBreakdown weighted;        // breakdown of the optimized sequence
  double effective_samples = 0.0;
};

struct StepResult {
  Eigen::VectorXd command;       // first optimized control, clamped to acceleration limits
  ControlSequence optimized;     // U*
  ControlSequence next_nominal;  // U* shifted left, zero tail
  StepDiagnostics diagnostics;
};

// Sampling-based MPC over a fixed robot model.
class SmpcPlanner {
 public:
  SmpcPlanner(const KinematicChain& chain, const SphereModel& model, PlannerParams params, ThreadPool& pool)
      : chain_(chain), model_(model), params_(std::move(params)), pool_(pool) {
    params_.validate(chain_.dof());
  }

  const PlannerParams& params() const { return params_; }
  const KinematicChain& chain() const { return chain_; }
  const SphereModel& model() const { return model_; }

  ControlSequence zero_nominal() const {
    return ControlSequence::Zero(params_.horizon, static_cast<Eigen::Index>(chain_.dof()));
  }

  // Samples, rolls out and costs one batch around `nominal`.
  template <DistanceQuery Field>
  RolloutBatch evaluate(const JointState& state, const RigidTransform& goal, const Field& field,
                        const ControlSequence& nominal, std::uint64_t seed, bool keep_trajectories = false) const {
    check_inputs(state, nominal);
    RolloutBatch batch;
    batch.perturbations = sample_perturbations(params_, chain_.dof(), seed, pool_);
    const std::size_t m_count = batch.perturbations.size();
    batch.costs.resize(m_count);
    if (keep_trajectories) batch.trajectories.resize(m_count);
    pool_.parallel_for_chunks(m_count, [&](std::size_t begin, std::size_t end, std::size_t) {
      CostWorkspace ws;
      Trajectory traj;
      ControlSequence u;
      for (std::size_t m = begin; m < end; ++m) {
        u = nominal + batch.perturbations[m];
        rollout(state, u, params_.dt, traj);
        batch.costs[m] = total_cost(traj, chain_, model_, field, goal, params_, ws);
        if (keep_trajectories) batch.trajectories[m] = traj;
      }
    });
    return batch;
  }

  template <DistanceQuery Field>
  StepResult step(const JointState& state, const RigidTransform& goal, const Field& field,
                  const ControlSequence& nominal, std::uint64_t seed) const {
    const RolloutBatch batch = evaluate(state, goal, field, nominal, seed);
    const std::vector<double> totals = batch.totals();
    const std::vector<double> weights = soft_weights(totals, params_.lambda);

    StepResult r;
    r.optimized = update_controls(nominal, batch.perturbations, weights);
    r.next_nominal = shift_nominal(r.optimized);

    const auto best = std::min_element(totals.begin(), totals.end());
    r.diagnostics.best_cost = *best;
    r.diagnostics.best_index = static_cast<std::size_t>(best - totals.begin());
    r.diagnostics.nominal_cost = totals.front();
    double sq = 0.0;
    for (double w : weights) sq += w * w;
    r.diagnostics.effective_samples = 1.0 / sq;
    r.diagnostics.weighted = total_cost(rollout(state, r.optimized, params_.dt), chain_, model_, field, goal, params_);

    r.command = r.optimized.row(0).transpose();
    for (std::size_t i = 0; i < chain_.dof(); ++i) {
      const double lim = chain_.joint(i).qdd_max;
      r.command[static_cast<Eigen::Index>(i)] = std::clamp(r.command[static_cast<Eigen::Index>(i)], -lim, lim);
    }
    return r;
  }

 private:
  void check_inputs(const JointState& state, const ControlSequence& nominal) const {
    const auto n = static_cast<Eigen::Index>(chain_.dof());
    if (state.q.size() != n || state.qd.size() != n) throw DimensionMismatch("joint state does not match the chain");
    if (nominal.rows() != params_.horizon || nominal.cols() != n) {
      throw DimensionMismatch("nominal sequence must be horizon x dof");
    }
  }

  const KinematicChain& chain_;
  const SphereModel& model_;
  PlannerParams params_;
  ThreadPool& pool_;
};

template <DistanceQuery Field>
StepResult smpc_step(const SmpcPlanner& planner, const JointState& state, const RigidTransform& goal,
                     const Field& field, const ControlSequence& nominal, std::uint64_t seed) {
  return planner.step(state, goal, field, nominal, seed);
}

struct ConvergenceParams {
  int n_stable = 5;
  double eta_rel = 1e-3;
  double pos_tol = 0.010;  // meters
  double ori_tol = 0.05;   // radians
};

struct ConvergenceSample {
  double cost = 0.0;
  double e_pos = 0.0;
  double e_ori = 0.0;
};

// True when the last n_stable cycles all show relative cost improvement below
// eta_rel and pose error inside tolerance. The first cycle has no predecessor
// and counts as zero improvement.
inline bool check_convergence(std::span<const ConvergenceSample> history, const ConvergenceParams& p) {
  if (p.n_stable < 1 || history.size() < static_cast<std::size_t>(p.n_stable)) return false;
  for (std::size_t k = history.size() - static_cast<std::size_t>(p.n_stable); k < history.size(); ++k) {
    const auto& s = history[k];
    if (!(s.e_pos < p.pos_tol) || !(s.e_ori <= p.ori_tol)) return false;
    if (k > 0) {
      const double prev = history[k - 1].cost;
      const double improvement = (prev - s.cost) / std::max(std::abs(prev), 1e-12);
      if (!(improvement < p.eta_rel)) return false;
    }
  }
  return true;
}

}  // namespace paramap
