#pragma once

#include <array>
#include <vector>

#include "recoverlab/model.hpp"

namespace recoverlab {

/// Integration and penalty-contact parameters. The normal force is a spring
/// (explicit, rate capped by the contact's effective mass) plus an implicit
/// damper; the tangential viscous force is also implicit and cone-clamped,
/// so sticking contacts hold static loads without creep and light links stay
/// stable on impact.
struct SimParams {
  double dt = 0.005;                 // physics step, s
  double contact_stiffness = 1.5e5;  // N/m
  double contact_damping = 1.2e3;    // N*s/m, implicit
  double tangent_damping = 5.0e4;    // N*s/m, implicit viscous slip resistance
  double stiffness_cap = 1.5;        // k_eff <= cap * m_eff / dt^2
  double gravity = 9.81;             // m/s^2
};

/// World-frame link poses and the ground-contact candidate points.
struct FrameSet {
  Vec2 base_position;
  double base_angle = 0.0;
  std::array<Vec2, 2> hip{}, knee{}, wheel_center{};
  std::array<Vec2, 2> thigh_com{}, shank_com{};
  std::array<double, 2> thigh_angle{}, shank_angle{}, wheel_world_angle{};

  struct Candidate {
    BodyId body;
    Vec2 position;
  };
  std::vector<Candidate> candidates;
};

/// Pure kinematics: link frames and contact candidates. The wheel candidate
/// is the lowest rim point along the local terrain normal; pass nullptr for
/// flat-ground normals.
FrameSet forward_kinematics(const RobotModel& model, const SimState& state,
                            const Terrain* terrain = nullptr);

/// One semi-implicit Euler step of the articulated dynamics with penalty
/// ground contact. Torques are clamped to model limits before application.
/// Joint positions are clamped to their limits with the outward velocity
/// zeroed; joint and wheel speeds are clamped to model limits.
///
/// When `wheel_velocity_targets` is given (active wheels), the wheel speed
/// servo tau_w = Kv*(target - wheel_velocity) is evaluated implicitly at the
/// post-step velocity: the motor loop runs far faster than the physics step,
/// and the explicit form is unstable against the small rotor inertia. The
/// resulting torque respects wheel_torque_limit and lands in
/// applied_torques; `wheel_torques` adds any further direct torque.
/// Throws NonFiniteState if the state leaves the finite domain.
SimState step(const RobotModel& model, const SimState& state, const Vec4& joint_torques,
              const Vec2& wheel_torques, const Terrain& terrain, double dt,
              const SimParams& params = SimParams{},
              std::vector<ContactPoint>* contacts_out = nullptr,
              const Vec2* wheel_velocity_targets = nullptr);

/// tau = Kp*(q_target - q) - Kd*qdot, clamped to the per-joint torque limit.
Vec4 pd_joint_torque(const RobotModel& model, const Vec4& q_target, const SimState& state);

/// tau_w = Kv*(v_target - wheel_velocity), clamped to the wheel torque limit.
/// Throws WheelsFixed when the model's wheels are fixed.
Vec2 wheel_velocity_torque(const RobotModel& model, const Vec2& v_target,
                           const SimState& state);

/// Kinetic + gravitational potential energy of all bodies plus the energy
/// stored in the contact springs.
double mechanical_energy(const RobotModel& model, const SimState& state,
                         const Terrain& terrain, const SimParams& params = SimParams{});

/// Contact set at the given configuration (forces evaluated from the current
/// velocities, as `step` would apply them).
std::vector<ContactPoint> compute_contacts(const RobotModel& model, const SimState& state,
                                           const Terrain& terrain,
                                           const SimParams& params = SimParams{});

/// Generalized mass matrix at the state's configuration.
MatDof mass_matrix(const RobotModel& model, const SimState& state);

}  // namespace recoverlab
