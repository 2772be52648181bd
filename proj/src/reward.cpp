#include "recoverlab/reward.hpp"

#include <cmath>

namespace recoverlab {

double ed_factor(double t, const ShapingState& shaping) {
  if (!shaping.dynamic) return 1.0;
  if (shaping.mode == ShapingState::Mode::normalized) {
    return std::pow(t / shaping.expected_recovery_step, shaping.growth_rate);
  }
  return std::pow(shaping.expected_recovery_step * t / shaping.episode_length,
                  shaping.growth_rate);
}

double curriculum_step(double cw, double beta) { return std::pow(cw, beta); }

double joint_position_reward(const Vec4& q, const RewardScales& s) {
  const double err = (s.target_joint_angles - q).squaredNorm();
  return std::exp(-err / (s.sigma_p * kNumJoints));
}

double base_height_reward(double base_height, const RewardScales& s) {
  const double deficit = std::max(s.target_height - base_height, 0.0);
  return std::exp(-deficit * deficit / s.sigma_h);
}

double base_orientation_error(const Vec2& gravity_b, const RewardScales& s) {
  return (gravity_b - s.upright_gravity).squaredNorm();
}

namespace {

bool collision_body(BodyId id) {
  switch (id) {
    case BodyId::wheel_front:
    case BodyId::wheel_rear:
      return false;
    default:
      return true;
  }
}

}  // namespace

BehaviorPenalties behavior_penalties(const SimState& state, const Vec6& action,
                                     const Vec6& prev_action,
                                     const std::vector<ContactPoint>& contacts,
                                     const RobotModel& model, const RewardScales& s) {
  BehaviorPenalties p;
  const double weight = model.total_mass() * kGravity;
  for (const ContactPoint& c : contacts) {
    if (!collision_body(c.body)) continue;
    double f2 = c.normal_force * c.normal_force + c.tangent_force * c.tangent_force;
    if (s.normalize_contact_forces) f2 /= weight * weight;
    p.collision += f2;
  }
  p.action_rate = (action.head<4>() - prev_action.head<4>()).squaredNorm();
  p.joint_velocity = state.joint_velocities.squaredNorm();
  p.torque = state.applied_torques.head<4>().squaredNorm();
  p.acceleration = state.joint_accelerations.squaredNorm();
  p.wheel_velocity = state.wheel_velocities.squaredNorm();
  return p;
}

double support_state_bonus(const std::vector<ContactPoint>& contacts, const RewardScales& s) {
  if (!s.support_bonus_enabled) return 0.0;
  bool front = false, rear = false;
  for (const ContactPoint& c : contacts) {
    if (c.normal_force <= 0.0) continue;
    if (c.body == BodyId::wheel_front) front = true;
    if (c.body == BodyId::wheel_rear) rear = true;
  }
  return (front && rear) ? s.support_bonus : 0.0;
}

double total_reward(RewardTerms& terms, double ed, double cw, const RewardScales& s) {
  terms.ed = ed;
  terms.cw = cw;
  terms.task_group = ed * (s.stand_joint_position * terms.joint_position +
                           s.base_height * terms.height -
                           s.base_orientation * terms.orientation_error);
  terms.behavior_group =
      cw * (s.body_collision * terms.collision + s.action_rate * terms.action_rate +
            s.joint_velocity * terms.joint_velocity + s.torques * terms.torque +
            s.acceleration * terms.acceleration);
  terms.wheel_term = s.wheel_velocity * terms.wheel_velocity;
  terms.total = terms.task_group + terms.behavior_group + terms.wheel_term + terms.support;
  return terms.total;
}

double RewardTerms::recompose(const RewardScales& s) const {
  RewardTerms copy = *this;
  return total_reward(copy, ed, cw, s);
}

RewardTerms compute_step_reward(const SimState& state, double base_height,
                                const std::vector<ContactPoint>& contacts, const Vec6& action,
                                const Vec6& prev_action, const RobotModel& model,
                                const RewardScales& scales, const ShapingState& shaping,
                                double t) {
  RewardTerms terms;
  terms.joint_position = joint_position_reward(state.joint_angles, scales);
  terms.height = base_height_reward(base_height, scales);
  terms.orientation_error = base_orientation_error(state.projected_gravity(), scales);
  const BehaviorPenalties p =
      behavior_penalties(state, action, prev_action, contacts, model, scales);
  terms.collision = p.collision;
  terms.action_rate = p.action_rate;
  terms.joint_velocity = p.joint_velocity;
  terms.torque = p.torque;
  terms.acceleration = p.acceleration;
  terms.wheel_velocity = p.wheel_velocity;
  terms.support = support_state_bonus(contacts, scales);
  total_reward(terms, ed_factor(t, shaping), shaping.cw, scales);
  return terms;
}

}  // namespace recoverlab
