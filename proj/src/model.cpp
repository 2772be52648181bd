#include "recoverlab/model.hpp"

#include <cmath>
#include <stdexcept>

namespace recoverlab {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void RobotModel::validate() const {
  require(base_mass > 0 && base_inertia > 0, "base mass/inertia must be positive");
  require(base_half_length > 0 && base_half_height > 0, "base extents must be positive");
  for (const auto& l : leg) {
    require(l.thigh_length > 0 && l.shank_length > 0, "link lengths must be positive");
    require(l.thigh_mass > 0 && l.shank_mass > 0 && l.wheel_mass > 0,
            "link masses must be positive");
    require(l.wheel_radius > 0 && l.wheel_inertia > 0, "wheel radius/inertia must be positive");
  }
  require(joint_velocity_limit > 0, "joint velocity limit must be positive");
  require(wheel_velocity_limit > 0 && wheel_torque_limit > 0,
          "wheel limits must be positive");
  require(pd_stiffness > 0 && pd_damping > 0 && wheel_velocity_gain > 0,
          "gains must be positive");
  for (int j = 0; j < kNumJoints; ++j) {
    require(joint_torque_limit[j] > 0, "joint torque limit must be positive");
    require(joint_position_limits[j].min < joint_position_limits[j].max,
            "joint position limits must be ordered");
    require(joint_position_limits[j].min < default_joint_angles[j] &&
                default_joint_angles[j] < joint_position_limits[j].max,
            "default joint angles must lie strictly inside position limits");
  }
}

RobotModel make_preset(const std::string& name) {
  RobotModel m;
  m.name = name;
  m.leg[0].hip_offset_x = 0.25;
  m.leg[1].hip_offset_x = -0.25;
  for (auto& j : m.joint_position_limits) j = JointLimit{-2.8, 2.8};
  m.default_joint_angles = Vec4(0.5, -1.0, -0.5, 1.0);

  if (name == "light") {
    m.base_mass = 6.0;
    m.base_inertia = 6.0 * (0.36 + 0.04) / 12.0;
    for (auto& l : m.leg) {
      l.thigh_mass = 0.9;
      l.shank_mass = 0.6;
      l.wheel_mass = 0.35;
      l.wheel_inertia = 0.5 * l.wheel_mass * l.wheel_radius * l.wheel_radius;
    }
    m.joint_torque_limit = {23.7, 35.55, 23.7, 35.55};  // knees allow more
    m.joint_velocity_limit = 20.3;
    m.wheel_velocity_limit = 30.0;
    m.wheel_torque_limit = 10.0;
    m.pd_stiffness = 100.0;
    m.pd_damping = 3.0;
    m.wheel_velocity_gain = 8.0;
  } else if (name == "heavy") {
    m.base_mass = 35.0;
    m.base_inertia = 35.0 * (0.36 + 0.04) / 12.0;
    for (auto& l : m.leg) {
      l.thigh_mass = 3.5;
      l.shank_mass = 2.2;
      l.wheel_mass = 1.5;
      l.wheel_inertia = 0.5 * l.wheel_mass * l.wheel_radius * l.wheel_radius;
    }
    m.joint_torque_limit = {132.0, 132.0, 132.0, 132.0};
    m.joint_velocity_limit = 7.6;
    m.wheel_velocity_limit = 20.0;
    m.wheel_torque_limit = 40.0;
    m.pd_stiffness = 250.0;
    m.pd_damping = 8.0;
    m.wheel_velocity_gain = 12.0;
  } else {
    throw std::invalid_argument("unknown robot preset: " + name);
  }
  m.validate();
  return m;
}

VecDof SimState::q() const {
  VecDof q;
  q << base_position.x(), base_position.y(), base_pitch, joint_angles, wheel_angles;
  return q;
}

VecDof SimState::v() const {
  VecDof v;
  v << base_linear_velocity.x(), base_linear_velocity.y(), base_angular_velocity,
      joint_velocities, wheel_velocities;
  return v;
}

void SimState::set_q(const VecDof& q) {
  base_position = q.segment<2>(0);
  base_pitch = q[kDofPitch];
  joint_angles = q.segment<4>(kDofHipF);
  wheel_angles = q.segment<2>(kDofWheelF);
}

void SimState::set_v(const VecDof& v) {
  base_linear_velocity = v.segment<2>(0);
  base_angular_velocity = v[kDofPitch];
  joint_velocities = v.segment<4>(kDofHipF);
  wheel_velocities = v.segment<2>(kDofWheelF);
}

bool SimState::finite() const {
  return q().allFinite() && v().allFinite() && joint_accelerations.allFinite() &&
         applied_torques.allFinite() && std::isfinite(sim_time);
}

const char* body_id_name(BodyId id) {
  switch (id) {
    case BodyId::base_front_corner: return "base_front_corner";
    case BodyId::base_rear_corner: return "base_rear_corner";
    case BodyId::thigh_front: return "thigh_front";
    case BodyId::thigh_rear: return "thigh_rear";
    case BodyId::shank_front: return "shank_front";
    case BodyId::shank_rear: return "shank_rear";
    case BodyId::knee_front: return "knee_front";
    case BodyId::knee_rear: return "knee_rear";
    case BodyId::wheel_front: return "wheel_front";
    case BodyId::wheel_rear: return "wheel_rear";
  }
  return "unknown";
}

double Terrain::height_at(double x) const {
  if (heights.empty()) return 0.0;
  if (heights.size() == 1) return heights[0];
  const double u = (x - origin_x) / sample_spacing;
  if (u <= 0.0) return heights.front();
  const double last = static_cast<double>(heights.size() - 1);
  if (u >= last) return heights.back();
  const auto i = static_cast<std::size_t>(u);
  const double frac = u - static_cast<double>(i);
  return heights[i] + frac * (heights[i + 1] - heights[i]);
}

double Terrain::slope_at(double x) const {
  if (heights.size() < 2) return 0.0;
  const double u = (x - origin_x) / sample_spacing;
  const double last = static_cast<double>(heights.size() - 1);
  if (u <= 0.0 || u >= last) return 0.0;
  const auto i = static_cast<std::size_t>(u);
  return (heights[i + 1] - heights[i]) / sample_spacing;
}

Vec2 Terrain::normal_at(double x) const {
  const double s = slope_at(x);
  Vec2 n(-s, 1.0);
  return n / n.norm();
}

}  // namespace recoverlab
