#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

#include "paramap/mapping.hpp"
#include "paramap/planner.hpp"

using namespace paramap;
constexpr double kPi = std::numbers::pi;

namespace {

// 3-DoF spatial arm used for batch tests.
KinematicChain small_arm() {
  std::vector<JointSpec> joints(3);
  joints[0].axis = Vec3::UnitZ();
  joints[1].parent_offset = {Rotation3::rot_x(-kPi / 2), Vec3(0, 0, 0.3)};
  joints[2].parent_offset = RigidTransform::from_translation(Vec3(0.4, 0, 0));
  for (auto& j : joints) {
    j.q_min = -2.5;
    j.q_max = 2.5;
    j.qd_max = 2.0;
    j.qdd_max = 10.0;
  }
  return KinematicChain(joints, RigidTransform::identity());
}

SphereModel arm_spheres(const KinematicChain& c) {
  return SphereModel({{1, Vec3(0.2, 0, 0), 0.05}, {2, Vec3(0.1, 0, 0), 0.05}, {3, Vec3(0, 0, 0), 0.04},
                      {0, Vec3(0, 0, 0.1), 0.08}},
                     {{3, 2}}, c);
}

PlannerParams params_for(std::size_t dof) {
  PlannerParams p;
  p.sigma = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dof), 2.0);
  p.q_ref = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dof));
  return p;
}

Trajectory constant_trajectory(const Eigen::VectorXd& q, int h) {
  Trajectory t;
  t.q = q.transpose().replicate(h + 1, 1);
  t.qd = RowMatrix::Zero(h + 1, q.size());
  t.qdd = RowMatrix::Zero(h + 1, q.size());
  return t;
}

// Field with a fixed distance everywhere.
struct ConstantField {
  double d;
  double distance(const Vec3&) const { return d; }
};

}  // namespace

TEST(Rollout, RestStaysPut) {
  const JointState s = JointState::at_rest(Eigen::Vector3d(0.1, -0.2, 0.3));
  const Trajectory t = rollout(s, ControlSequence::Zero(10, 3), 0.02);
  for (int k = 0; k <= 10; ++k) EXPECT_EQ(t.q.row(k), s.q.transpose());
}

TEST(Rollout, HandIntegration) {
  const JointState s = JointState::at_rest(Eigen::VectorXd::Zero(1));
  const Trajectory t = rollout(s, ControlSequence::Ones(2, 1), 0.1);
  EXPECT_NEAR(t.qd(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(t.qd(1, 0), 0.1, 1e-15);
  EXPECT_NEAR(t.qd(2, 0), 0.2, 1e-15);
  EXPECT_NEAR(t.q(1, 0), 0.01, 1e-15);
  EXPECT_NEAR(t.q(2, 0), 0.03, 1e-15);
  EXPECT_EQ(t.qdd(0, 0), 1.0);
  EXPECT_EQ(t.qdd(2, 0), 0.0);
}

TEST(Rollout, ClosedFormForConstantInput) {
  // Semi-implicit Euler: q_k = q0 + k dt qd0 + u dt^2 k(k+1)/2.
  JointState s = JointState::at_rest(Eigen::Vector2d(0.3, -1.0));
  s.qd = Eigen::Vector2d(0.5, 0.25);
  const Eigen::Vector2d u(1.5, -3.0);
  const double dt = 0.02;
  const int h = 40;
  const Trajectory t = rollout(s, u.transpose().replicate(h, 1), dt);
  for (int k = 0; k <= h; ++k) {
    const Eigen::Vector2d want = s.q + k * dt * s.qd + u * dt * dt * k * (k + 1) / 2.0;
    EXPECT_LE((t.q.row(k).transpose() - want).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Rollout, Superposition) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  JointState s = JointState::at_rest(Eigen::Vector3d(0.2, 0.1, -0.4));
  s.qd = Eigen::Vector3d(0.3, -0.2, 0.1);
  ControlSequence u1(8, 3), u2(8, 3);
  for (int i = 0; i < u1.size(); ++i) {
    u1.data()[i] = g(rng);
    u2.data()[i] = g(rng);
  }
  const double a = 0.7, b = -1.3;
  const Trajectory zero = rollout(s, ControlSequence::Zero(8, 3), 0.05);
  const Trajectory t1 = rollout(s, u1, 0.05), t2 = rollout(s, u2, 0.05);
  const Trajectory tc = rollout(s, a * u1 + b * u2, 0.05);
  const RowMatrix want = a * (t1.q - zero.q) + b * (t2.q - zero.q) + zero.q;
  EXPECT_LE((tc.q - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(IntegrateStep, MatchesRolloutFirstStep) {
  JointState s = JointState::at_rest(Eigen::Vector2d(0.1, 0.2));
  s.qd = Eigen::Vector2d(-0.4, 0.3);
  const Eigen::Vector2d u(2.0, -1.0);
  const JointState n = integrate_step(s, u, 0.02);
  const Trajectory t = rollout(s, u.transpose().replicate(3, 1), 0.02);
  EXPECT_EQ(n.q, t.q.row(1).transpose());
  EXPECT_EQ(n.qd, t.qd.row(1).transpose());
}

TEST(PoseCost, Cases) {
  const RigidTransform goal{Rotation3::rot_y(0.3), Vec3(0.1, 0.2, 0.3)};
  std::vector<RigidTransform> at_goal(5, goal);
  EXPECT_NEAR(pose_cost(at_goal, goal, Mat6::Identity()), 0.0, 1e-20);

  std::vector<RigidTransform> off(10, RigidTransform::from_translation(Vec3(0.1, 0, 0)));
  EXPECT_NEAR(pose_cost(off, RigidTransform::identity(), Mat6::Identity()), 0.05, 1e-15);
  EXPECT_NEAR(pose_cost(off, RigidTransform::identity(), 2.0 * Mat6::Identity()), 0.1, 1e-15);
}

TEST(TerminalCost, Cases) {
  const RigidTransform goal = RigidTransform::from_translation(Vec3(1, 2, 3));
  EXPECT_EQ(terminal_cost(goal, goal, Mat6::Identity()), 0.0);
  EXPECT_NEAR(terminal_cost(RigidTransform::from_translation(Vec3(1.1, 2, 3)), goal, Mat6::Identity()), 0.005, 1e-15);
  EXPECT_NEAR(terminal_cost(RigidTransform::from_translation(Vec3(1.1, 2, 3)), goal, 4.0 * Mat6::Identity()), 0.02,
              1e-15);
  EXPECT_THROW(terminal_cost({Rotation3::rot_x(kPi), Vec3::Zero()}, RigidTransform::identity(), Mat6::Identity()),
               DegenerateRotation);
}

TEST(CollisionCost, Cases) {
  PlannerParams p = params_for(1);
  p.w_env = 3.0;
  p.w_self = 7.0;
  SpherePositions s;
  s.centers = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  s.radii = {0.1, 0.1};
  const std::vector<SpherePair> pairs{{0, 1}};
  const std::vector<SpherePositions> one{s};
  EXPECT_EQ(collision_cost(one, ConstantField{0.1 + p.d_act + 1e-3}, pairs, p), 0.0);

  // One sphere at phi - r = d_act / 2, the other far away.
  struct Split {
    double near, far;
    double distance(const Vec3& x) const { return x.x() < 0.5 ? near : far; }
  };
  EXPECT_NEAR(collision_cost(one, Split{0.1 + p.d_act / 2, 10.0}, pairs, p), 3.0 * (p.d_act / 2) * (p.d_act / 2),
              1e-15);

  SpherePositions pen;
  pen.centers = {Vec3(0, 0, 0), Vec3(0.18, 0, 0)};
  pen.radii = {0.1, 0.1};
  const std::vector<SpherePositions> pen_steps{pen};
  EXPECT_NEAR(collision_cost(pen_steps, FreeSpace{}, pairs, p), 7.0 * 0.0004, 1e-15);
}

TEST(JointLimitCost, Cases) {
  const KinematicChain chain = small_arm();
  PlannerParams p = params_for(3);
  p.w_q = 1.0;
  Trajectory t = constant_trajectory(Eigen::Vector3d(0.1, -0.3, 1.0), 4);
  EXPECT_EQ(joint_limit_cost(t, chain, p), 0.0);

  const double hi = 2.5 - p.eps_frac * 5.0;
  Trajectory up = constant_trajectory(Eigen::Vector3d(0, 0, 0), 4);
  up.q(2, 1) = hi + 0.1;
  EXPECT_NEAR(joint_limit_cost(up, chain, p), 0.01, 1e-12);
  Trajectory down = constant_trajectory(Eigen::Vector3d(0, 0, 0), 4);
  down.q(2, 1) = -hi - 0.1;
  EXPECT_NEAR(joint_limit_cost(down, chain, p), joint_limit_cost(up, chain, p), 1e-15);

  // Velocity and acceleration bounds are tightened the same way.
  p.w_qd = 2.0;
  p.w_qdd = 3.0;
  Trajectory va = constant_trajectory(Eigen::Vector3d(0, 0, 0), 2);
  va.qd(0, 0) = 2.0 - p.eps_frac * 4.0 + 0.5;
  va.qdd(1, 2) = -(10.0 - p.eps_frac * 20.0) - 1.0;
  EXPECT_NEAR(joint_limit_cost(va, chain, p), 2.0 * 0.25 + 3.0 * 1.0, 1e-12);
}

TEST(SmoothnessCost, Cases) {
  Trajectory t = constant_trajectory(Eigen::Vector2d(0, 0), 3);
  EXPECT_EQ(smoothness_cost(t, 0.5), 0.0);
  t.qdd(1, 0) = 2.0;
  EXPECT_EQ(smoothness_cost(t, 0.5), 2.0);
  const JointState s = JointState::at_rest(Eigen::Vector2d(0, 0));
  ControlSequence u(3, 2);
  u << 1, 2, -1, 0.5, 3, 1;
  const double c1 = smoothness_cost(rollout(s, u, 0.02), 0.3);
  const double c3 = smoothness_cost(rollout(s, 3.0 * u, 0.02), 0.3);
  EXPECT_NEAR(c3, 9.0 * c1, 1e-12);
}

TEST(NullspaceCost, Cases) {
  const Eigen::Vector3d ref(0.1, 0.2, 0.3);
  Trajectory t = constant_trajectory(ref, 4);
  EXPECT_EQ(nullspace_cost(t, ref, 2.0), 0.0);
  t.q(1, 2) += 0.5;
  EXPECT_NEAR(nullspace_cost(t, ref, 2.0), 0.5, 1e-15);
  // The final state (k = H) is covered by the terminal term only.
  t.q(4, 0) += 3.0;
  EXPECT_NEAR(nullspace_cost(t, ref, 2.0), 0.5, 1e-15);
}

TEST(TotalCost, ZeroAtGlobalMinimum) {
  const KinematicChain chain = small_arm();
  const SphereModel model = arm_spheres(chain);
  PlannerParams p = params_for(3);
  p.q_ref = Eigen::Vector3d(0.2, 0.4, -0.6);
  const RigidTransform goal = forward_kinematics(chain, p.q_ref).back();
  const CostBreakdown c = total_cost(constant_trajectory(p.q_ref, 10), chain, model, FreeSpace{}, goal, p);
  EXPECT_NEAR(c.total(), 0.0, 1e-20);
}

TEST(TotalCost, MatchesTermByTermRecomputation) {
  const KinematicChain chain = small_arm();
  const SphereModel model = arm_spheres(chain);
  PlannerParams p = params_for(3);
  p.q_ref = Eigen::Vector3d(0.1, 0.1, 0.1);
  const RigidTransform goal{Rotation3::rot_z(0.4), Vec3(0.3, 0.2, 0.4)};
  ThreadPool pool(1);
  VoxelGrid g(Vec3(-1, -1, -0.5), 0.05, {40, 40, 30});
  for (int x = 20; x < 24; ++x)
    for (int y = 18; y < 30; ++y)
      for (int z = 10; z < 25; ++z) g.set(x, y, z, VoxelState::Occupied, 2.0f);
  const DistanceField field = edt_3d(g, g.bounds(), pool, 0.2);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    JointState s = JointState::at_rest(Eigen::Vector3d(n(rng) * 0.2, n(rng) * 0.2, n(rng) * 0.2));
    ControlSequence u(12, 3);
    for (int i = 0; i < u.size(); ++i) u.data()[i] = n(rng);
    const Trajectory t = rollout(s, u, p.dt);
    const CostBreakdown c = total_cost(t, chain, model, field, goal, p);

    std::vector<RigidTransform> ee;
    std::vector<SpherePositions> spheres;
    for (int k = 0; k < t.steps(); ++k) {
      const Eigen::VectorXd q = t.q.row(k).transpose();
      ee.push_back(forward_kinematics(chain, q).back());
      spheres.push_back(sphere_positions(chain, q, model));
    }
    const Eigen::VectorXd qh = t.q.row(t.steps()).transpose();
    EXPECT_NEAR(c.pose, pose_cost(ee, goal, p.q_running), 1e-9);
    EXPECT_NEAR(c.collision, collision_cost(spheres, field, model.self_pairs(), p), 1e-9);
    EXPECT_NEAR(c.limits, joint_limit_cost(t, chain, p), 1e-9);
    EXPECT_NEAR(c.smoothness, smoothness_cost(t, p.w_s), 1e-9);
    EXPECT_NEAR(c.nullspace, nullspace_cost(t, p.q_ref, p.w_ns), 1e-9);
    EXPECT_NEAR(c.terminal, terminal_cost(forward_kinematics(chain, qh).back(), goal, p.q_terminal), 1e-9);
    EXPECT_DOUBLE_EQ(c.total(), c.pose + c.collision + c.limits + c.smoothness + c.nullspace + c.terminal);
    for (double term : {c.pose, c.collision, c.limits, c.smoothness, c.nullspace, c.terminal}) EXPECT_GE(term, 0.0);
  }
}

TEST(SamplePerturbations, ZeroSigmaAndReservedSample) {
  ThreadPool pool(2);
  PlannerParams p = params_for(3);
  p.samples = 16;
  p.horizon = 7;
  const auto eps = sample_perturbations(p, 3, 42, pool);
  ASSERT_EQ(eps.size(), 16u);
  EXPECT_TRUE(eps[0].isZero(0.0));
  EXPECT_FALSE(eps[1].isZero(0.0));
  p.sigma.setZero();
  for (const auto& e : sample_perturbations(p, 3, 42, pool)) EXPECT_TRUE(e.isZero(0.0));
}

TEST(SamplePerturbations, ZeroMeanAndUnitVariance) {
  ThreadPool pool(2);
  PlannerParams p = params_for(2);
  p.samples = 100000;
  p.horizon = 4;
  p.sigma = Eigen::Vector2d(2.0, 0.5);
  const auto eps = sample_perturbations(p, 2, 9, pool);
  const double m = static_cast<double>(p.samples - 1);
  for (int k = 0; k < p.horizon; ++k) {
    for (int i = 0; i < 2; ++i) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t s = 1; s < eps.size(); ++s) {
        sum += eps[s](k, i);
        sq += eps[s](k, i) * eps[s](k, i);
      }
      EXPECT_LE(std::abs(sum / m), 4.0 * p.sigma[i] / std::sqrt(m));
      EXPECT_NEAR(std::sqrt(sq / m), p.sigma[i], 0.02 * p.sigma[i]);
    }
  }
}

TEST(SamplePerturbations, ThreadCountAndSeedBehaviour) {
  PlannerParams p = params_for(3);
  p.samples = 64;
  ThreadPool p1(1), p5(5);
  const auto a = sample_perturbations(p, 3, 5, p1);
  const auto b = sample_perturbations(p, 3, 5, p5);
  const auto c = sample_perturbations(p, 3, 6, p5);
  for (std::size_t m = 0; m < a.size(); ++m) EXPECT_EQ(a[m], b[m]);
  EXPECT_NE(a[3], c[3]);
}

TEST(SoftWeights, Examples) {
  EXPECT_EQ(soft_weights(std::vector<double>{3.7}, 0.5), std::vector<double>{1.0});
  for (double w : soft_weights(std::vector<double>(8, 2.0), 0.5)) EXPECT_DOUBLE_EQ(w, 0.125);
  const double lambda = 0.5;
  const auto w = soft_weights(std::vector<double>{0.0, lambda * std::log(2.0)}, lambda);
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-15);
  EXPECT_THROW(soft_weights(std::vector<double>{1.0}, 0.0), InvalidArgument);
}

TEST(SoftWeights, Properties) {
  std::mt19937_64 rng(3);
  // Dyadic costs so that adding the shift is exact in floating point.
  std::uniform_int_distribution<int> u(0, 8000);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> costs(64);
    for (auto& c : costs) c = u(rng) / 8.0;
    const auto w = soft_weights(costs, 5.0);
    double sum = 0.0;
    for (double x : w) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    std::vector<double> shifted = costs;
    for (auto& c : shifted) c += 1024.0;
    EXPECT_EQ(soft_weights(shifted, 5.0), w);
  }
}

TEST(UpdateControls, Examples) {
  const ControlSequence nominal = ControlSequence::Constant(3, 2, 0.7);
  std::vector<ControlSequence> eps{ControlSequence::Zero(3, 2), ControlSequence::Constant(3, 2, 1.0),
                                   ControlSequence::Constant(3, 2, -1.0)};
  EXPECT_EQ(update_controls(nominal, eps, std::vector<double>{1.0, 0.0, 0.0}), nominal);
  EXPECT_TRUE(update_controls(nominal, eps, std::vector<double>{0.0, 0.5, 0.5}).isApprox(nominal, 1e-15));
  const std::vector<ControlSequence> pm{ControlSequence::Constant(1, 1, 1.0), ControlSequence::Constant(1, 1, -1.0)};
  EXPECT_NEAR(update_controls(ControlSequence::Zero(1, 1), pm, std::vector<double>{0.75, 0.25})(0, 0), 0.5, 1e-15);
  EXPECT_THROW(update_controls(nominal, eps, std::vector<double>{0.5, 0.4, 0.0}), WeightMismatch);
  EXPECT_THROW(update_controls(nominal, eps, std::vector<double>{1.0}), WeightMismatch);
}

TEST(ShiftNominal, ZeroTail) {
  ControlSequence u(3, 2);
  u << 1, 2, 3, 4, 5, 6;
  ControlSequence want(3, 2);
  want << 3, 4, 5, 6, 0, 0;
  EXPECT_EQ(shift_nominal(u), want);
}

TEST(PlannerParams, Validation) {
  PlannerParams p = params_for(3);
  EXPECT_NO_THROW(p.validate(3));
  EXPECT_THROW(p.validate(4), DimensionMismatch);
  PlannerParams bad = p;
  bad.lambda = 0.0;
  EXPECT_THROW(bad.validate(3), InvalidArgument);
  bad = p;
  bad.q_running(0, 1) = 1.0;
  EXPECT_THROW(bad.validate(3), InvalidArgument);
  bad = p;
  bad.q_terminal = Mat6::Zero();
  EXPECT_THROW(bad.validate(3), InvalidArgument);
  bad = p;
  bad.q_running = -Mat6::Identity();
  EXPECT_THROW(bad.validate(3), InvalidArgument);
  bad = p;
  bad.horizon = 0;
  EXPECT_THROW(bad.validate(3), InvalidArgument);
}

TEST(SmpcStep, FixedPointAtGoal) {
  const KinematicChain chain = small_arm();
  const SphereModel model = arm_spheres(chain);
  PlannerParams p = params_for(3);
  p.sigma.setZero();
  p.samples = 8;
  p.q_ref = Eigen::Vector3d(0.3, 0.5, -0.8);
  ThreadPool pool(2);
  const SmpcPlanner planner(chain, model, p, pool);
  const RigidTransform goal = forward_kinematics(chain, p.q_ref).back();
  const StepResult r = smpc_step(planner, JointState::at_rest(p.q_ref), goal, FreeSpace{}, planner.zero_nominal(), 1);
  EXPECT_TRUE(r.command.isZero(0.0));
  EXPECT_TRUE(r.next_nominal.isZero(0.0));
  EXPECT_NEAR(r.diagnostics.best_cost, 0.0, 1e-20);
}

TEST(SmpcStep, DeterministicAcrossThreadCounts) {
  const KinematicChain chain = small_arm();
  const SphereModel model = arm_spheres(chain);
  PlannerParams p = params_for(3);
  p.samples = 100;
  p.horizon = 12;
  const RigidTransform goal{Rotation3::rot_z(0.5), Vec3(0.2, 0.3, 0.5)};
  JointState s = JointState::at_rest(Eigen::Vector3d(0.1, -0.2, 0.4));
  s.qd = Eigen::Vector3d(0.2, 0.0, -0.1);
  StepResult ref;
  for (std::size_t threads : {1u, 2u, 7u}) {
    ThreadPool pool(threads);
    const SmpcPlanner planner(chain, model, p, pool);
    ControlSequence nominal = planner.zero_nominal();
    nominal.row(0).setConstant(0.3);
    const StepResult r = planner.step(s, goal, FreeSpace{}, nominal, 77);
    if (threads == 1) {
      ref = r;
      continue;
    }
    EXPECT_EQ(r.command, ref.command);
    EXPECT_EQ(r.optimized, ref.optimized);
    EXPECT_EQ(r.next_nominal, ref.next_nominal);
    EXPECT_EQ(r.diagnostics.best_cost, ref.diagnostics.best_cost);
  }
}

TEST(SmpcStep, NominalIsInBatch) {
  const KinematicChain chain = small_arm();
  const SphereModel model = arm_spheres(chain);
  PlannerParams p = params_for(3);
  p.samples = 50;
  p.horizon = 10;
  ThreadPool pool(2);
  const SmpcPlanner planner(chain, model, p, pool);
  const RigidTransform goal{Rotation3::rot_x(0.2), Vec3(0.3, -0.2, 0.4)};
  const JointState s = JointState::at_rest(Eigen::Vector3d(-0.4, 0.2, 0.6));
  ControlSequence nominal = planner.zero_nominal();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RolloutBatch b = planner.evaluate(s, goal, FreeSpace{}, nominal, seed);
    const CostBreakdown nominal_cost = total_cost(rollout(s, nominal, p.dt), chain, model, FreeSpace{}, goal, p);
    const auto totals = b.totals();
    EXPECT_EQ(totals[0], nominal_cost.total());
    EXPECT_LE(*std::min_element(totals.begin(), totals.end()), nominal_cost.total());
    nominal = planner.step(s, goal, FreeSpace{}, nominal, seed).next_nominal;
  }
}

TEST(SmpcStep, CommandClampedToAccelerationLimits) {
  const KinematicChain chain = small_arm();
  const SphereModel model = arm_spheres(chain);
  PlannerParams p = params_for(3);
  p.sigma.setZero();
  p.samples = 2;
  ThreadPool pool(1);
  const SmpcPlanner planner(chain, model, p, pool);
  ControlSequence nominal = planner.zero_nominal();
  nominal.row(0) << 50.0, -50.0, 3.0;
  const StepResult r = planner.step(JointState::at_rest(Eigen::Vector3d::Zero()), RigidTransform::identity(),
                                    FreeSpace{}, nominal, 0);
  EXPECT_EQ(r.command, Eigen::Vector3d(10.0, -10.0, 3.0));
  EXPECT_EQ(r.optimized(0, 0), 50.0);
}

TEST(SmpcStep, SingleJointReachesGoal) {
  // Flange 0.5 m out along x of a single revolute joint.
  JointSpec j;
  j.q_min = -2.0;
  j.q_max = 2.0;
  j.qd_max = 2.0;
  j.qdd_max = 20.0;
  const KinematicChain chain({j}, RigidTransform::identity());
  const SphereModel model({{1, Vec3(0.5, 0, 0), 0.05}}, {}, chain);
  PlannerParams p = params_for(1);
  p.samples = 64;
  p.horizon = 20;
  p.w_ns = 0.0;
  ThreadPool pool(2);
  const SmpcPlanner planner(chain, model, p, pool);
  const double q_goal = 0.3;
  const RigidTransform goal = forward_kinematics(chain, Eigen::VectorXd::Constant(1, q_goal)).back();

  std::vector<int> cycles;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    JointState s = JointState::at_rest(Eigen::VectorXd::Zero(1));
    ControlSequence nominal = planner.zero_nominal();
    int reached = 1000;
    for (int c = 0; c < 400; ++c) {
      const StepResult r = planner.step(s, goal, FreeSpace{}, nominal, seed * 1000 + c);
      s = integrate_step(s, r.command, p.dt);
      nominal = r.next_nominal;
      if (std::abs(s.q[0] - q_goal) < 1e-3) {
        reached = c + 1;
        break;
      }
    }
    cycles.push_back(reached);
  }
  std::sort(cycles.begin(), cycles.end());
  RecordProperty("median_cycles", cycles[cycles.size() / 2]);
  EXPECT_LE(cycles[cycles.size() / 2], 200);
}

TEST(CheckConvergence, Examples) {
  const ConvergenceParams p;
  std::vector<ConvergenceSample> flat(5, {10.0, 0.005, 0.0});
  EXPECT_TRUE(check_convergence(flat, p));
  std::vector<ConvergenceSample> far(8, {10.0, 0.012, 0.0});
  EXPECT_FALSE(check_convergence(far, p));
  std::vector<ConvergenceSample> four(4, {10.0, 0.005, 0.0});
  EXPECT_FALSE(check_convergence(four, p));
  // A large improvement inside the window blocks convergence until it slides out.
  std::vector<ConvergenceSample> mixed{{20.0, 0.005, 0.0}, {10.0, 0.005, 0.0}, {10.0, 0.005, 0.0},
                                       {10.0, 0.005, 0.0}, {10.0, 0.005, 0.0}};
  EXPECT_FALSE(check_convergence(mixed, p));
  mixed.push_back({10.0, 0.005, 0.0});
  EXPECT_FALSE(check_convergence(mixed, p));
  mixed.push_back({10.0, 0.005, 0.0});
  EXPECT_TRUE(check_convergence(mixed, p));
  // A cost increase is not an improvement.
  std::vector<ConvergenceSample> rising{{10.0, 0.005, 0.0}, {11.0, 0.005, 0.0}, {12.0, 0.005, 0.0},
                                        {13.0, 0.005, 0.0}, {14.0, 0.005, 0.0}};
  EXPECT_TRUE(check_convergence(rising, p));
  std::vector<ConvergenceSample> twisted(5, {10.0, 0.005, 0.2});
  EXPECT_FALSE(check_convergence(twisted, p));
  EXPECT_FALSE(check_convergence(std::vector<ConvergenceSample>{}, p));
}
