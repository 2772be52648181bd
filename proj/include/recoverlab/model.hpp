#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace recoverlab {

inline constexpr int kNumJoints = 4;  // front hip, front knee, rear hip, rear knee
inline constexpr int kNumWheels = 2;  // front, rear
inline constexpr int kNumDof = 9;     // base x, base z, pitch, 4 joints, 2 wheels
inline constexpr int kActionDim = kNumJoints + kNumWheels;
inline constexpr double kGravity = 9.81;

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecDof = Eigen::Matrix<double, kNumDof, 1>;
using MatDof = Eigen::Matrix<double, kNumDof, kNumDof>;
using JacRow = Eigen::Matrix<double, 1, kNumDof>;
using Jac2 = Eigen::Matrix<double, 2, kNumDof>;

// generalized-coordinate indices
enum DofIndex : int {
  kDofBaseX = 0,
  kDofBaseZ = 1,
  kDofPitch = 2,
  kDofHipF = 3,
  kDofKneeF = 4,
  kDofHipR = 5,
  kDofKneeR = 6,
  kDofWheelF = 7,
  kDofWheelR = 8,
};

enum class WheelMode { active, fixed };

struct JointLimit {
  double min = -2.8;
  double max = 2.8;
};

struct LegParams {
  double hip_offset_x = 0.25;  // hip pivot along the base axis, base frame
  double thigh_length = 0.25;
  double thigh_mass = 0.9;
  double shank_length = 0.25;
  double shank_mass = 0.6;
  double wheel_radius = 0.07;
  double wheel_mass = 0.35;
  double wheel_inertia = 8.575e-4;  // solid disc, 0.5*m*r^2
};

/// Planar 2-leg wheeled robot: box base with a front and a rear leg, each
/// hip + knee + wheel. Two named presets ("heavy", "light") differ in masses,
/// gains and actuator limits; geometry is shared.
struct RobotModel {
  std::string name = "light";
  double base_mass = 6.0;
  double base_inertia = 0.2;       // about COM
  double base_half_length = 0.3;   // along x
  double base_half_height = 0.1;   // along z
  std::array<LegParams, 2> leg{};  // [0]=front, [1]=rear

  std::array<JointLimit, kNumJoints> joint_position_limits{};
  double joint_velocity_limit = 20.3;               // rad/s
  std::array<double, kNumJoints> joint_torque_limit{};  // N*m, knees may differ
  double wheel_velocity_limit = 30.0;               // rad/s
  double wheel_torque_limit = 10.0;                 // N*m
  double pd_stiffness = 100.0;                      // Kp
  double pd_damping = 3.0;                          // Kd
  double wheel_velocity_gain = 8.0;                 // Kv
  Vec4 default_joint_angles{0.5, -1.0, -0.5, 1.0};  // q
  Vec2 default_wheel_speed{0.0, 0.0};               // q_v
  WheelMode wheel_mode = WheelMode::active;

  double total_mass() const {
    double m = base_mass;
    for (const auto& l : leg) m += l.thigh_mass + l.shank_mass + l.wheel_mass;
    return m;
  }

  /// Throws std::invalid_argument when a field violates its constraints.
  void validate() const;
};

/// "heavy" or "light". Throws std::invalid_argument otherwise.
RobotModel make_preset(const std::string& name);

/// Full dynamic state. Velocities are the semi-implicit integrator's
/// post-step values; joint_accelerations is the finite difference of joint
/// velocities across the last physics step.
struct SimState {
  Vec2 base_position{0.0, 0.0};
  double base_pitch = 0.0;
  Vec2 base_linear_velocity{0.0, 0.0};
  double base_angular_velocity = 0.0;
  Vec4 joint_angles{0.0, 0.0, 0.0, 0.0};
  Vec4 joint_velocities{0.0, 0.0, 0.0, 0.0};
  Vec4 joint_accelerations{0.0, 0.0, 0.0, 0.0};
  Vec2 wheel_angles{0.0, 0.0};
  Vec2 wheel_velocities{0.0, 0.0};
  Vec6 applied_torques = Vec6::Zero();  // 4 joints then 2 wheels
  double sim_time = 0.0;

  VecDof q() const;
  VecDof v() const;
  void set_q(const VecDof& q);
  void set_v(const VecDof& v);
  bool finite() const;

  /// World gravity direction expressed in the base frame; (0,-1) when upright.
  Vec2 projected_gravity() const {
    return Vec2(-std::sin(base_pitch), -std::cos(base_pitch));
  }
};

enum class BodyId : int {
  base_front_corner = 0,
  base_rear_corner,
  thigh_front,
  thigh_rear,
  shank_front,
  shank_rear,
  knee_front,
  knee_rear,
  wheel_front,
  wheel_rear,
};
inline constexpr int kNumBodyIds = 10;

const char* body_id_name(BodyId id);

struct ContactPoint {
  BodyId body = BodyId::base_front_corner;
  Vec2 world_position{0.0, 0.0};
  Vec2 normal{0.0, 1.0};
  double normal_force = 0.0;   // N, >= 0
  double tangent_force = 0.0;  // N, Coulomb-clamped
  double penetration = 0.0;    // m, >= 0 while touching
};

/// 1D heightfield: piecewise-linear between samples, flat beyond the array.
/// An empty height array means flat ground at z = 0.
struct Terrain {
  double sample_spacing = 0.1;  // m
  double origin_x = 0.0;        // x of heights[0]
  std::vector<double> heights;  // m
  double friction = 1.0;        // static/dynamic Coulomb coefficient

  double height_at(double x) const;
  double slope_at(double x) const;
  Vec2 normal_at(double x) const;  // unit, points away from the ground

  static Terrain flat(double friction = 1.0) {
    Terrain t;
    t.friction = friction;
    return t;
  }
};

}  // namespace recoverlab
