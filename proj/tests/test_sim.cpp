#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "recoverlab/env.hpp"
#include "recoverlab/errors.hpp"
#include "recoverlab/sim.hpp"

using namespace recoverlab;

namespace {

RobotModel light() { return make_preset("light"); }

SimState zero_state() { return SimState{}; }

double body_potential_energy(const RobotModel& m, const SimState& s) {
  // independent summation over FK body positions
  const FrameSet f = forward_kinematics(m, s);
  double e = m.base_mass * kGravity * f.base_position.y();
  for (int l = 0; l < 2; ++l) {
    e += m.leg[l].thigh_mass * kGravity * f.thigh_com[l].y();
    e += m.leg[l].shank_mass * kGravity * f.shank_com[l].y();
    e += m.leg[l].wheel_mass * kGravity * f.wheel_center[l].y();
  }
  return e;
}

}  // namespace

TEST_SUITE_BEGIN("sim");

TEST_CASE("fk: zero state puts wheel centers half a metre below the hips") {
  RobotModel m = light();
  m.default_joint_angles.setZero();  // not used by fk, but keep the state literal
  SimState s = zero_state();
  const FrameSet f = forward_kinematics(m, s);
  // trig oracle: hip + L_t*dir(0) + L_s*dir(0), dir(0) = (0,-1)
  CHECK(f.wheel_center[0].x() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(f.wheel_center[0].y() == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(f.wheel_center[1].x() == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(f.wheel_center[1].y() == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(f.knee[0].y() == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("fk: hip pi/2 with straight knee lays the leg out horizontally") {
  RobotModel m = light();
  SimState s = zero_state();
  s.joint_angles[0] = M_PI / 2;  // front hip
  const FrameSet f = forward_kinematics(m, s);
  CHECK(f.wheel_center[0].x() == doctest::Approx(0.25 + 0.5).epsilon(1e-12));
  CHECK(f.wheel_center[0].y() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fk: pitch pi mirrors every candidate about the base") {
  RobotModel m = light();
  SimState a = zero_state();
  a.joint_angles = Vec4(0.4, -0.9, -0.3, 0.7);
  SimState b = a;
  b.base_pitch = M_PI;
  const FrameSet fa = forward_kinematics(m, a);
  const FrameSet fb = forward_kinematics(m, b);
  REQUIRE(fa.candidates.size() == fb.candidates.size());
  for (std::size_t i = 0; i < fa.candidates.size(); ++i) {
    CHECK(fa.candidates[i].body == fb.candidates[i].body);
    const bool wheel = fa.candidates[i].body == BodyId::wheel_front ||
                       fa.candidates[i].body == BodyId::wheel_rear;
    if (wheel) continue;  // the rim point is always the lowest one, checked below
    const Vec2 ra = fa.candidates[i].position - a.base_position;
    const Vec2 rb = fb.candidates[i].position - b.base_position;
    CHECK((ra + rb).norm() < 1e-12);
  }
  // wheel centers mirror; their ground candidates stay one radius below them
  for (int l = 0; l < 2; ++l) {
    CHECK((fa.wheel_center[l] + fb.wheel_center[l]).norm() < 1e-12);
  }
  CHECK((fb.candidates[7].position - (fb.wheel_center[0] - Vec2(0.0, m.leg[0].wheel_radius)))
            .norm() < 1e-12);
}

TEST_CASE("step: ballistic drop matches the semi-implicit closed form") {
  RobotModel m = light();
  SimState s = zero_state();
  s.joint_angles = m.default_joint_angles;
  s.base_position = Vec2(0.0, 2.0);
  const Terrain ground = Terrain::flat();
  const double dt = 0.005;
  const int N = 20;
  for (int i = 0; i < N; ++i) {
    s = step(m, s, Vec4::Zero(), Vec2::Zero(), ground, dt);
  }
  const double expected_dz = -kGravity * dt * dt * N * (N + 1) / 2.0;  // -0.0515025
  CHECK(expected_dz == doctest::Approx(-0.0515025).epsilon(1e-9));
  CHECK(std::abs(s.base_position.y() - (2.0 + expected_dz)) < N * 1e-9);
  CHECK(std::abs(s.base_position.x()) < 1e-12);
  // free fall is uniform: the joints never move
  CHECK((s.joint_angles - m.default_joint_angles).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("step: settled stand keeps its base height for a second") {
  RobotModel m = light();
  const Terrain ground = Terrain::flat();
  SimState s = init_stand_state(m, ground);
  const double h0 = s.base_position.y();
  CHECK(h0 > 0.42);  // the default stand clears the recovery height
  SimParams params;
  const Vec2 hold = Vec2::Zero();
  for (int i = 0; i < 200; ++i) {
    const Vec4 tau = pd_joint_torque(m, m.default_joint_angles, s);
    s = step(m, s, tau, Vec2::Zero(), ground, params.dt, params, nullptr, &hold);
    CHECK(std::abs(s.base_position.y() - h0) < 1e-3);
  }
}

TEST_CASE("step: constant wheel torque rolls at the expected acceleration") {
  RobotModel m = light();
  const Terrain ground = Terrain::flat();
  SimState s = init_stand_state(m, ground);
  SimParams params;
  const double tau_wheel = 0.5;  // far below the friction cone
  auto advance = [&](double seconds) {
    const int n = static_cast<int>(std::round(seconds / params.dt));
    for (int i = 0; i < n; ++i) {
      const Vec4 tau = pd_joint_torque(m, m.default_joint_angles, s);
      s = step(m, s, tau, Vec2::Constant(tau_wheel), ground, params.dt, params);
    }
  };
  advance(0.2);  // past the posture transient, before the wheels hit the speed limit
  const double v0 = s.base_linear_velocity.x();
  advance(0.5);
  const double v1 = s.base_linear_velocity.x();
  const double accel = std::abs(v1 - v0) / 0.5;
  const double expected = 2.0 * tau_wheel / (m.leg[0].wheel_radius * m.total_mass());
  CHECK(accel == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("pd_joint_torque") {
  RobotModel m = light();
  SimState s = zero_state();
  s.joint_angles = Vec4(0.3, -0.4, 0.2, 0.1);

  SUBCASE("zero error, zero rate gives zero torque") {
    CHECK(pd_joint_torque(m, s.joint_angles, s).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("direct arithmetic") {
    m.pd_stiffness = 50.0;
    m.pd_damping = 2.0;
    s.joint_velocities = Vec4(0.5, 0.0, 0.0, 0.0);
    Vec4 target = s.joint_angles;
    target[0] += 0.1;
    const Vec4 tau = pd_joint_torque(m, target, s);
    CHECK(tau[0] == doctest::Approx(50.0 * 0.1 - 2.0 * 0.5).epsilon(1e-12));  // 4.0
  }
  SUBCASE("saturates exactly at the torque limit") {
    Vec4 target = s.joint_angles;
    target[0] += 100.0;  // way past limits; clamped target irrelevant here
    const Vec4 tau = pd_joint_torque(m, target, s);
    CHECK(tau[0] == m.joint_torque_limit[0]);
  }
}

TEST_CASE("wheel_velocity_torque") {
  RobotModel m = light();
  SimState s = zero_state();
  SUBCASE("zero error") {
    s.wheel_velocities = Vec2(3.0, -2.0);
    CHECK(wheel_velocity_torque(m, s.wheel_velocities, s).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("direct arithmetic") {
    m.wheel_velocity_gain = 1.5;
    s.wheel_velocities = Vec2(1.0, 1.0);
    const Vec2 tau = wheel_velocity_torque(m, Vec2(4.0, 4.0), s);
    CHECK(tau[0] == doctest::Approx(4.5).epsilon(1e-12));
  }
  SUBCASE("saturation") {
    const Vec2 tau = wheel_velocity_torque(m, Vec2(1e6, -1e6), s);
    CHECK(tau[0] == m.wheel_torque_limit);
    CHECK(tau[1] == -m.wheel_torque_limit);
  }
  SUBCASE("fixed wheels refuse the call") {
    m.wheel_mode = WheelMode::fixed;
    CHECK_THROWS_AS(wheel_velocity_torque(m, Vec2::Zero(), s), WheelsFixed);
  }
}

TEST_CASE("mechanical_energy") {
  RobotModel m = light();
  const Terrain ground = Terrain::flat();

  SUBCASE("at rest with zero penetration it is the summed potential") {
    SimState s = zero_state();
    s.joint_angles = m.default_joint_angles;
    // lift so the lowest wheel point exactly touches z = 0
    const FrameSet f = forward_kinematics(m, s);
    const double lowest = std::min(f.wheel_center[0].y(), f.wheel_center[1].y()) -
                          m.leg[0].wheel_radius;
    s.base_position.y() -= lowest;
    const double e = mechanical_energy(m, s, ground);
    CHECK(e == doctest::Approx(body_potential_energy(m, s)).epsilon(1e-12));
  }

  SUBCASE("pure base translation carries (1/2) m v^2") {
    SimState s = zero_state();
    s.joint_angles = Vec4(0.7, -1.1, -0.2, 0.4);
    s.base_position = Vec2(0.0, 5.0);
    s.base_linear_velocity = Vec2(0.3, -0.2);
    const double e = mechanical_energy(m, s, ground);
    const double kinetic = e - body_potential_energy(m, s);
    const double expected = 0.5 * m.total_mass() * s.base_linear_velocity.squaredNorm();
    CHECK(kinetic == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("ballistic flight: exact discrete invariant and monotone decrease") {
    // The staggered integrator conserves E + (dt/2) m g v_z exactly; plain
    // E itself drops by (1/2) m g^2 dt^2 every step.
    SimState s = zero_state();
    s.joint_angles = m.default_joint_angles;
    s.base_position = Vec2(0.0, 3.0);
    const double dt = 0.005;
    const double m_tot = m.total_mass();
    double e_prev = mechanical_energy(m, s, ground);
    double invariant_prev =
        e_prev + 0.5 * dt * m_tot * kGravity * s.base_linear_velocity.y();
    for (int i = 0; i < 40; ++i) {
      s = step(m, s, Vec4::Zero(), Vec2::Zero(), ground, dt);
      const double e = mechanical_energy(m, s, ground);
      const double invariant = e - 0.5 * dt * m_tot * kGravity * s.base_linear_velocity.y();
      CHECK(std::abs(invariant - invariant_prev) < 1e-9);
      CHECK(e - e_prev < 1e-6);  // non-increasing
      CHECK(e - e_prev ==
            doctest::Approx(-0.5 * m_tot * kGravity * kGravity * dt * dt).epsilon(1e-6));
      e_prev = e;
      invariant_prev = invariant;
    }
  }
}

TEST_CASE("passivity: a settled robot stops exchanging energy") {
  RobotModel m = light();
  const Terrain ground = Terrain::flat();
  Rng rng(7, 0);
  SimParams params;
  EpisodeConfig episode;  // 1.1 m drop, 2 s settle
  SimState s = init_fallen_state(m, ground, episode, params, rng);
  // another half second of torque-free settling, then check per-step changes
  for (int i = 0; i < 100; ++i) {
    s = step(m, s, Vec4::Zero(), Vec2::Zero(), ground, params.dt, params);
  }
  double e_prev = mechanical_energy(m, s, ground, params);
  for (int i = 0; i < 200; ++i) {
    s = step(m, s, Vec4::Zero(), Vec2::Zero(), ground, params.dt, params);
    const double e = mechanical_energy(m, s, ground, params);
    CHECK(e - e_prev < 1e-6);
    e_prev = e;
  }
}

TEST_CASE("contacts: friction cone and resting penetration") {
  RobotModel m = light();
  const Terrain ground = Terrain::flat(0.9);
  SimState s = init_stand_state(m, ground);
  SimParams params;
  Rng rng(3, 1);
  std::vector<ContactPoint> contacts;
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    // gentle rolling/resting excitation
    Vec4 target = m.default_joint_angles;
    for (int j = 0; j < 4; ++j) target[j] += 0.05 * std::sin(0.005 * i + j) + 0.01 * rng.normal();
    const Vec4 tau = pd_joint_torque(m, target, s);
    const Vec2 servo = Vec2::Constant(0.5 * std::sin(0.004 * i));
    s = step(m, s, tau, Vec2::Zero(), ground, params.dt, params, &contacts, &servo);
    for (const ContactPoint& c : contacts) {
      CHECK(c.normal_force >= 0.0);
      CHECK(c.penetration >= 0.0);
      CHECK(std::abs(c.tangent_force) <= ground.friction * c.normal_force + 1e-9);
      if (i > 200) CHECK(c.penetration < 2e-3);
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("determinism: identical inputs give bit-identical trajectories") {
  RobotModel m = light();
  const Terrain ground = Terrain::flat();
  Rng rng(11, 0);
  SimParams params;
  EpisodeConfig episode;
  const SimState start = init_fallen_state(m, ground, episode, params, rng);

  auto rollout = [&](SimState s) {
    std::vector<SimState> states;
    Rng torque_rng(5, 5);
    for (int i = 0; i < 500; ++i) {
      Vec4 tau;
      for (int j = 0; j < 4; ++j) tau[j] = torque_rng.uniform(-5.0, 5.0);
      s = step(m, s, tau, Vec2(0.3, -0.3), ground, params.dt, params);
      states.push_back(s);
    }
    return states;
  };
  const auto a = rollout(start);
  const auto b = rollout(start);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(a[i].q().data(), b[i].q().data(), sizeof(double) * kNumDof) == 0);
    CHECK(std::memcmp(a[i].v().data(), b[i].v().data(), sizeof(double) * kNumDof) == 0);
  }
}

TEST_CASE("momentum: translational free flight conserves p_x to 1e-9 per step") {
  RobotModel m = light();
  const Terrain ground = Terrain::flat();
  SimState s = zero_state();
  s.joint_angles = Vec4(0.9, -1.4, -0.5, 0.8);
  s.base_position = Vec2(0.0, 5.0);
  s.base_linear_velocity = Vec2(0.7, 0.3);
  const double dt = 0.005;
  const double px0 = m.total_mass() * s.base_linear_velocity.x();
  for (int i = 0; i < 100; ++i) {
    s = step(m, s, Vec4::Zero(), Vec2::Zero(), ground, dt);
    const double px = m.total_mass() * s.base_linear_velocity.x();
    CHECK(std::abs(px - px0) < 1e-9);
    // and it stays a pure translation
    CHECK(std::abs(s.base_angular_velocity) < 1e-12);
    CHECK(s.joint_velocities.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("limits: velocities, torques and positions are clamped") {
  RobotModel m = light();
  const Terrain ground = Terrain::flat();
  SimState s = zero_state();
  s.base_position = Vec2(0.0, 5.0);  // airborne, no contact
  SimParams params;

  SUBCASE("huge torques cannot break the velocity or position limits") {
    for (int i = 0; i < 60; ++i) {
      s = step(m, s, Vec4::Constant(1e4), Vec2::Constant(1e4), ground, params.dt, params);
      CHECK(s.joint_velocities.cwiseAbs().maxCoeff() <= m.joint_velocity_limit + 1e-9);
      CHECK(s.wheel_velocities.cwiseAbs().maxCoeff() <= m.wheel_velocity_limit + 1e-9);
      CHECK(s.applied_torques.head<4>().cwiseAbs().maxCoeff() <=
            m.joint_torque_limit[1] + 1e-12);
      for (int j = 0; j < 4; ++j) {
        CHECK(s.joint_angles[j] >= m.joint_position_limits[j].min);
        CHECK(s.joint_angles[j] <= m.joint_position_limits[j].max);
      }
    }
  }
  SUBCASE("a joint arriving at its limit has the outward velocity zeroed") {
    s.joint_angles = Vec4(2.75, 0.0, 0.0, 0.0);
    s.joint_velocities = Vec4(20.0, 0.0, 0.0, 0.0);
    s = step(m, s, Vec4::Zero(), Vec2::Zero(), ground, params.dt, params);
    CHECK(s.joint_angles[0] == m.joint_position_limits[0].max);
    CHECK(s.joint_velocities[0] == 0.0);
  }
  SUBCASE("fixed wheels never rotate") {
    m.wheel_mode = WheelMode::fixed;
    for (int i = 0; i < 50; ++i) {
      s = step(m, s, Vec4::Zero(), Vec2::Constant(5.0), ground, params.dt, params);
      CHECK(s.wheel_velocities.cwiseAbs().maxCoeff() == 0.0);
      CHECK(s.applied_torques.tail<2>().cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("step rejects bad inputs and flags non-finite states") {
  RobotModel m = light();
  const Terrain ground = Terrain::flat();
  SimState s = zero_state();
  CHECK_THROWS_AS(step(m, s, Vec4::Zero(), Vec2::Zero(), ground, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(step(m, s, Vec4::Constant(NAN), Vec2::Zero(), ground, 0.005),
                  std::invalid_argument);
  s.base_linear_velocity.x() = NAN;
  CHECK_THROWS_AS(step(m, s, Vec4::Zero(), Vec2::Zero(), ground, 0.005), NonFiniteState);
}

TEST_CASE("terrain: piecewise-linear queries with flat extrapolation") {
  Terrain t;
  t.sample_spacing = 0.5;
  t.origin_x = -1.0;
  t.heights = {0.0, 0.2, 0.2, -0.1};
  CHECK(t.height_at(-5.0) == 0.0);
  CHECK(t.height_at(5.0) == doctest::Approx(-0.1));
  CHECK(t.height_at(-0.75) == doctest::Approx(0.1));
  CHECK(t.slope_at(-0.75) == doctest::Approx(0.4));
  const Vec2 n = t.normal_at(-0.75);
  CHECK(n.norm() == doctest::Approx(1.0));
  CHECK(n.x() < 0.0);
}

TEST_SUITE_END();
