#include <doctest.h>

#include "recoverlab/reward.hpp"

using namespace recoverlab;

namespace {

ShapingState default_shaping() {
  ShapingState s;
  s.expected_recovery_step = 125.0;
  s.growth_rate = 3.0;
  s.episode_length = 250;
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("reward");

TEST_CASE("ed_factor: normalized mode anchor points") {
  ShapingState s = default_shaping();
  CHECK(ed_factor(0.0, s) == 0.0);
  CHECK(ed_factor(125.0, s) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ed_factor(250.0, s) == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(ed_factor(25.0, s) == doctest::Approx(0.008).epsilon(1e-12));
}

TEST_CASE("ed_factor: literal mode follows the printed form") {
  ShapingState s = default_shaping();
  s.mode = ShapingState::Mode::literal;
  CHECK(ed_factor(0.0, s) == 0.0);
  CHECK(ed_factor(250.0, s) ==
        doctest::Approx(std::pow(125.0 * 250.0 / 250.0, 3.0)).epsilon(1e-12));
}

TEST_CASE("ed_factor: strictly increasing in both modes; constant when static") {
  ShapingState s = default_shaping();
  for (auto mode : {ShapingState::Mode::normalized, ShapingState::Mode::literal}) {
    s.mode = mode;
    double prev = ed_factor(0.0, s);
    for (int t = 1; t <= 250; ++t) {
      const double e = ed_factor(t, s);
      CHECK(e > prev);
      prev = e;
    }
  }
  s.dynamic = false;
  CHECK(ed_factor(0.0, s) == 1.0);
  CHECK(ed_factor(250.0, s) == 1.0);
}

TEST_CASE("curriculum_step: fixed point, first step, closed-form iteration") {
  CHECK(curriculum_step(1.0, 0.968) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(curriculum_step(0.3, 0.968) == doctest::Approx(0.3118).epsilon(1e-4 / 0.3118));

  double cw = 0.3;
  double prev = cw;
  for (int n = 1; n <= 100; ++n) {
    cw = curriculum_step(cw, 0.968);
    CHECK(cw > prev);
    CHECK(cw == doctest::Approx(std::pow(0.3, std::pow(0.968, n))).epsilon(1e-12));
    prev = cw;
  }
  CHECK(cw == doctest::Approx(0.9545).epsilon(1e-4 / 0.9545));
  CHECK(cw < 1.0);
}

TEST_CASE("joint_position_reward") {
  RewardScales s;
  CHECK(joint_position_reward(s.target_joint_angles, s) == 1.0);

  Vec4 q = s.target_joint_angles;
  q[0] += 1.0;  // sqrt(sigma_p * N_j) = 1 rad
  CHECK(joint_position_reward(q, s) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  double prev = 1.0;
  for (double off = 0.1; off < 2.0; off += 0.1) {
    Vec4 qq = s.target_joint_angles;
    qq[2] -= off;
    const double r = joint_position_reward(qq, s);
    CHECK(r < prev);
    CHECK(r > 0.0);
    prev = r;
  }
}

TEST_CASE("base_height_reward") {
  RewardScales s;
  CHECK(s.target_height == 0.42);
  CHECK(base_height_reward(0.42, s) == 1.0);
  CHECK(base_height_reward(0.70, s) == 1.0);  // one-sided
  CHECK(base_height_reward(0.32, s) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("base_orientation_error") {
  RewardScales s;
  CHECK(base_orientation_error(Vec2(0.0, -1.0), s) == 0.0);
  CHECK(base_orientation_error(Vec2(0.0, 1.0), s) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(base_orientation_error(Vec2(1.0, 0.0), s) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(base_orientation_error(Vec2(-1.0, 0.0), s) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("behavior_penalties") {
  RobotModel m = make_preset("light");
  RewardScales scales;
  SimState state;

  SUBCASE("motionless in mid-air with repeated action: all six terms vanish") {
    const Vec6 a = Vec6::Constant(0.3);
    const auto p = behavior_penalties(state, a, a, {}, m, scales);
    CHECK(p.collision == 0.0);
    CHECK(p.action_rate == 0.0);
    CHECK(p.joint_velocity == 0.0);
    CHECK(p.torque == 0.0);
    CHECK(p.acceleration == 0.0);
    CHECK(p.wheel_velocity == 0.0);
  }

  SUBCASE("base flat on its two corners carrying the weight: collision = 0.5") {
    const double w = m.total_mass() * kGravity;
    std::vector<ContactPoint> contacts(2);
    contacts[0].body = BodyId::base_front_corner;
    contacts[0].normal_force = 0.5 * w;
    contacts[1].body = BodyId::base_rear_corner;
    contacts[1].normal_force = 0.5 * w;
    const auto p = behavior_penalties(state, Vec6::Zero(), Vec6::Zero(), contacts, m, scales);
    CHECK(p.collision == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("wheel contacts never count as collisions") {
    std::vector<ContactPoint> contacts(1);
    contacts[0].body = BodyId::wheel_front;
    contacts[0].normal_force = 500.0;
    const auto p = behavior_penalties(state, Vec6::Zero(), Vec6::Zero(), contacts, m, scales);
    CHECK(p.collision == 0.0);
  }

  SUBCASE("action rate excludes the wheels") {
    Vec6 prev = Vec6::Zero();
    Vec6 a;
    a << 1.0, 1.0, 1.0, 1.0, 5.0, -5.0;
    const auto p = behavior_penalties(state, a, prev, {}, m, scales);
    CHECK(p.action_rate == doctest::Approx(4.0).epsilon(1e-12));
  }
}

TEST_CASE("support_state_bonus") {
  RewardScales s;
  std::vector<ContactPoint> contacts(2);
  contacts[0].body = BodyId::wheel_front;
  contacts[0].normal_force = 10.0;
  contacts[1].body = BodyId::wheel_rear;
  contacts[1].normal_force = 10.0;
  CHECK(support_state_bonus(contacts, s) == 0.5);

  contacts[1].normal_force = 0.0;  // rear wheel airborne
  CHECK(support_state_bonus(contacts, s) == 0.0);

  contacts[1].normal_force = 10.0;
  s.support_bonus_enabled = false;
  CHECK(support_state_bonus(contacts, s) == 0.0);
}

TEST_CASE("total_reward: composition and linearity probes") {
  RewardScales s;

  SUBCASE("upright target stand scores the full task group") {
    RewardTerms t;
    t.joint_position = 1.0;
    t.height = 1.0;
    const double r = total_reward(t, 1.0, 1.0, s);
    CHECK(r == doctest::Approx(162.0).epsilon(1e-12));
    CHECK(t.recompose(s) == doctest::Approx(r).epsilon(1e-12));
  }

  SUBCASE("ed = 0 gates the entire task group") {
    RewardTerms t;
    t.joint_position = 1.0;
    t.height = 1.0;
    t.orientation_error = 4.0;
    CHECK(total_reward(t, 0.0, 1.0, s) == 0.0);
  }

  SUBCASE("one term at a time recovers every scale exactly") {
    auto probe = [&](auto set_term) {
      RewardTerms t;
      set_term(t);
      return total_reward(t, 1.0, 1.0, s);
    };
    CHECK(probe([](RewardTerms& t) { t.joint_position = 1.0; }) == 42.0);
    CHECK(probe([](RewardTerms& t) { t.height = 1.0; }) == 120.0);
    CHECK(probe([](RewardTerms& t) { t.orientation_error = 1.0; }) == -50.0);
    CHECK(probe([](RewardTerms& t) { t.collision = 1.0; }) == -5e-2);
    CHECK(probe([](RewardTerms& t) { t.action_rate = 1.0; }) == -1e-2);
    CHECK(probe([](RewardTerms& t) { t.joint_velocity = 1.0; }) == -2e-2);
    CHECK(probe([](RewardTerms& t) { t.torque = 1.0; }) == -2.5e-5);
    CHECK(probe([](RewardTerms& t) { t.acceleration = 1.0; }) == -2.5e-7);
    CHECK(probe([](RewardTerms& t) { t.wheel_velocity = 1.0; }) == -2e-2);
  }

  SUBCASE("cw gates the behavior group but not the wheel term") {
    RewardTerms t;
    t.joint_velocity = 1.0;
    t.wheel_velocity = 1.0;
    const double r_half = total_reward(t, 1.0, 0.5, s);
    CHECK(r_half == doctest::Approx(0.5 * -2e-2 + -2e-2).epsilon(1e-12));
  }

  SUBCASE("baseline shaping at t = a matches the dynamic reward") {
    ShapingState dyn = default_shaping();
    ShapingState fixed = default_shaping();
    fixed.dynamic = false;
    RewardTerms t;
    t.joint_position = 0.7;
    t.height = 0.4;
    t.orientation_error = 0.3;
    t.collision = 0.2;
    const double r_dyn = total_reward(t, ed_factor(125.0, dyn), 0.5, s);
    RewardTerms t2 = t;
    const double r_fixed = total_reward(t2, ed_factor(125.0, fixed), 0.5, s);
    CHECK(r_dyn == doctest::Approx(r_fixed).epsilon(1e-12));
  }
}

TEST_SUITE_END();
