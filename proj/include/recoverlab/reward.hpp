#pragma once

#include <vector>

#include "recoverlab/model.hpp"

namespace recoverlab {

/// Scales and targets of the reward terms. Positive task scales multiply
/// bounded sub-rewards; negative behavior scales multiply squared penalties.
/// The orientation scale is stored positive and applied as a penalty.
struct RewardScales {
  double stand_joint_position = 42.0;
  double base_height = 120.0;
  double base_orientation = 50.0;  // penalty magnitude
  double body_collision = -5e-2;
  double action_rate = -1e-2;
  double joint_velocity = -2e-2;
  double torques = -2.5e-5;
  double acceleration = -2.5e-7;
  double wheel_velocity = -2e-2;

  double sigma_p = 0.25;  // rad^2
  double sigma_h = 0.01;  // m^2
  double target_height = 0.42;
  Vec4 target_joint_angles{0.5, -1.0, -0.5, 1.0};
  Vec2 upright_gravity{0.0, -1.0};

  double support_bonus = 0.5;
  bool support_bonus_enabled = true;
  /// Divide contact forces by total weight before squaring in the collision
  /// term; switch off for raw squared Newtons.
  bool normalize_contact_forces = true;
};

/// Within-episode reward ramp and the between-episode curriculum weight.
struct ShapingState {
  double expected_recovery_step = 125.0;  // a
  double growth_rate = 3.0;               // k
  double cw = 0.3;
  double cw0 = 0.3;
  double progress_rate = 0.968;  // beta
  int episode_length = 250;      // T
  enum class Mode { normalized, literal };
  Mode mode = Mode::normalized;
  /// false freezes the ramp at 1 (the fixed-shaping ablation)
  bool dynamic = true;
};

/// Per-step reward decomposition; `total` is the composition of the parts.
struct RewardTerms {
  // unscaled values
  double joint_position = 0.0;      // in (0, 1]
  double height = 0.0;              // in (0, 1]
  double orientation_error = 0.0;   // in [0, 4]
  double collision = 0.0;
  double action_rate = 0.0;
  double joint_velocity = 0.0;
  double torque = 0.0;
  double acceleration = 0.0;
  double wheel_velocity = 0.0;
  double support = 0.0;  // bonus, already scaled

  double ed = 0.0;
  double cw = 0.0;

  // scaled values
  double task_group = 0.0;
  double behavior_group = 0.0;
  double wheel_term = 0.0;
  double total = 0.0;

  /// Recompute total from the stored parts (consistency check).
  double recompose(const RewardScales& s) const;
};

/// Within-episode ramp. Normalized mode: (t/a)^k, equal to 1 at the expected
/// recovery step. Literal mode: (a*t/T)^k. Returns 1 when dynamic is off.
double ed_factor(double t, const ShapingState& shaping);

/// One curriculum update: cw^beta.
double curriculum_step(double cw, double beta);

double joint_position_reward(const Vec4& q, const RewardScales& s);
double base_height_reward(double base_height, const RewardScales& s);
double base_orientation_error(const Vec2& gravity_b, const RewardScales& s);

struct BehaviorPenalties {
  double collision = 0.0;
  double action_rate = 0.0;
  double joint_velocity = 0.0;
  double torque = 0.0;
  double acceleration = 0.0;
  double wheel_velocity = 0.0;
};

/// Unscaled squared penalty terms. The collision sum runs over contact points
/// on the base, thighs, shanks and knees (wheels excluded); the action rate
/// covers the four joint actions only.
BehaviorPenalties behavior_penalties(const SimState& state, const Vec6& action,
                                     const Vec6& prev_action,
                                     const std::vector<ContactPoint>& contacts,
                                     const RobotModel& model, const RewardScales& s);

/// support_bonus when both wheels touch the ground, else 0.
double support_state_bonus(const std::vector<ContactPoint>& contacts, const RewardScales& s);

/// Composition: ed gates the task group, cw gates the behavior group, the
/// wheel-velocity penalty and the support bonus sit outside both.
double total_reward(RewardTerms& terms, double ed, double cw, const RewardScales& s);

/// Convenience wrapper used by the environment: fills a RewardTerms from the
/// post-step state and composes the total. `base_height` is measured above
/// the local terrain.
RewardTerms compute_step_reward(const SimState& state, double base_height,
                                const std::vector<ContactPoint>& contacts, const Vec6& action,
                                const Vec6& prev_action, const RobotModel& model,
                                const RewardScales& scales, const ShapingState& shaping,
                                double t);

}  // namespace recoverlab
