#include "recoverlab/sim.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

#include "recoverlab/errors.hpp"

namespace recoverlab {

namespace {

inline Vec2 dir(double phi) { return Vec2(std::sin(phi), -std::cos(phi)); }
inline Vec2 pdir(double phi) { return Vec2(std::cos(phi), std::sin(phi)); }
inline Vec2 perp(const Vec2& v) { return Vec2(-v.y(), v.x()); }
inline Vec2 rot(double th, const Vec2& u) {
  const double c = std::cos(th), s = std::sin(th);
  return Vec2(c * u.x() - s * u.y(), s * u.x() + c * u.y());
}

constexpr int kNumBodies = 7;  // base, thigh/shank/wheel per leg

struct BodyKin {
  double mass = 0.0;
  double inertia = 0.0;
  Vec2 com = Vec2::Zero();
  Jac2 J = Jac2::Zero();        // d(com)/dq
  JacRow ang = JacRow::Zero();  // d(angle)/dq, constant indicator row
  Vec2 bias = Vec2::Zero();     // centripetal com acceleration at qddot = 0
  double omega = 0.0;
};

struct Kinematics {
  std::array<BodyKin, kNumBodies> body;  // 0 base, per leg: 1+3*l thigh, shank, wheel
  FrameSet frames;
};

// point moving with a body, offset r from its com (world frame)
struct PointKin {
  Vec2 pos;
  Jac2 J;
  Vec2 bias;
};

PointKin body_point(const BodyKin& b, const Vec2& world_pos) {
  const Vec2 r = world_pos - b.com;
  PointKin p;
  p.pos = world_pos;
  p.J = b.J + perp(r) * b.ang;
  p.bias = b.bias - b.omega * b.omega * r;
  return p;
}

Kinematics compute_kinematics(const RobotModel& model, const SimState& state) {
  Kinematics k;
  const double th = state.base_pitch;
  const double w_base = state.base_angular_velocity;

  BodyKin& base = k.body[0];
  base.mass = model.base_mass;
  base.inertia = model.base_inertia;
  base.com = state.base_position;
  base.J.setZero();
  base.J(0, kDofBaseX) = 1.0;
  base.J(1, kDofBaseZ) = 1.0;
  base.ang.setZero();
  base.ang[kDofPitch] = 1.0;
  base.omega = w_base;

  k.frames.base_position = state.base_position;
  k.frames.base_angle = th;

  for (int l = 0; l < 2; ++l) {
    const LegParams& leg = model.leg[l];
    const int hip_dof = (l == 0) ? kDofHipF : kDofHipR;
    const int knee_dof = hip_dof + 1;
    const int wheel_dof = (l == 0) ? kDofWheelF : kDofWheelR;

    const double q_hip = state.joint_angles[2 * l];
    const double q_knee = state.joint_angles[2 * l + 1];
    const double w_hip = state.joint_velocities[2 * l];
    const double w_knee = state.joint_velocities[2 * l + 1];
    const double w_wheel = state.wheel_velocities[l];

    // hip pivot rides on the base
    const Vec2 hip_local(leg.hip_offset_x, 0.0);
    const Vec2 hip_world = rot(th, hip_local);
    PointKin hip;
    hip.pos = state.base_position + hip_world;
    hip.J = base.J;
    hip.J.col(kDofPitch) += perp(hip_world);
    hip.bias = -w_base * w_base * hip_world;

    const double phi_t = th + q_hip;
    const double wt = w_base + w_hip;
    BodyKin& thigh = k.body[1 + 3 * l];
    thigh.mass = leg.thigh_mass;
    thigh.inertia = leg.thigh_mass * leg.thigh_length * leg.thigh_length / 12.0;
    thigh.com = hip.pos + 0.5 * leg.thigh_length * dir(phi_t);
    thigh.J = hip.J;
    thigh.J.col(kDofPitch) += 0.5 * leg.thigh_length * pdir(phi_t);
    thigh.J.col(hip_dof) += 0.5 * leg.thigh_length * pdir(phi_t);
    thigh.bias = hip.bias - 0.5 * leg.thigh_length * wt * wt * dir(phi_t);
    thigh.ang.setZero();
    thigh.ang[kDofPitch] = 1.0;
    thigh.ang[hip_dof] = 1.0;
    thigh.omega = wt;

    PointKin knee;
    knee.pos = hip.pos + leg.thigh_length * dir(phi_t);
    knee.J = hip.J;
    knee.J.col(kDofPitch) += leg.thigh_length * pdir(phi_t);
    knee.J.col(hip_dof) += leg.thigh_length * pdir(phi_t);
    knee.bias = hip.bias - leg.thigh_length * wt * wt * dir(phi_t);

    const double phi_s = phi_t + q_knee;
    const double ws = wt + w_knee;
    BodyKin& shank = k.body[2 + 3 * l];
    shank.mass = leg.shank_mass;
    shank.inertia = leg.shank_mass * leg.shank_length * leg.shank_length / 12.0;
    shank.com = knee.pos + 0.5 * leg.shank_length * dir(phi_s);
    shank.J = knee.J;
    shank.J.col(kDofPitch) += 0.5 * leg.shank_length * pdir(phi_s);
    shank.J.col(hip_dof) += 0.5 * leg.shank_length * pdir(phi_s);
    shank.J.col(knee_dof) += 0.5 * leg.shank_length * pdir(phi_s);
    shank.bias = knee.bias - 0.5 * leg.shank_length * ws * ws * dir(phi_s);
    shank.ang = thigh.ang;
    shank.ang[knee_dof] = 1.0;
    shank.omega = ws;

    BodyKin& wheel = k.body[3 + 3 * l];
    wheel.mass = leg.wheel_mass;
    wheel.inertia = leg.wheel_inertia;
    wheel.com = knee.pos + leg.shank_length * dir(phi_s);
    wheel.J = knee.J;
    wheel.J.col(kDofPitch) += leg.shank_length * pdir(phi_s);
    wheel.J.col(hip_dof) += leg.shank_length * pdir(phi_s);
    wheel.J.col(knee_dof) += leg.shank_length * pdir(phi_s);
    wheel.bias = knee.bias - leg.shank_length * ws * ws * dir(phi_s);
    wheel.ang = shank.ang;
    wheel.ang[wheel_dof] = 1.0;
    wheel.omega = ws + w_wheel;

    k.frames.hip[l] = hip.pos;
    k.frames.knee[l] = knee.pos;
    k.frames.wheel_center[l] = wheel.com;
    k.frames.thigh_com[l] = thigh.com;
    k.frames.shank_com[l] = shank.com;
    k.frames.thigh_angle[l] = phi_t;
    k.frames.shank_angle[l] = phi_s;
    k.frames.wheel_world_angle[l] = phi_s + state.wheel_angles[l];
  }
  return k;
}

struct Candidate {
  BodyId id;
  int body_index;   // into Kinematics::body
  Vec2 position;    // world frame
  bool wheel_rim;   // apply forces at the rim with the terrain normal
  int leg;          // for wheel candidates
};

// 4 base corners, thigh mids, knees, shank mids, wheel rims
std::vector<Candidate> contact_candidates(const RobotModel& model, const Kinematics& k,
                                          const Terrain* terrain) {
  std::vector<Candidate> c;
  c.reserve(12);
  const double th = k.frames.base_angle;
  const double hl = model.base_half_length, hh = model.base_half_height;
  const Vec2 corners[4] = {{hl, -hh}, {hl, hh}, {-hl, -hh}, {-hl, hh}};
  for (const Vec2& u : corners) {
    const BodyId id = u.x() > 0 ? BodyId::base_front_corner : BodyId::base_rear_corner;
    c.push_back({id, 0, k.frames.base_position + rot(th, u), false, -1});
  }
  for (int l = 0; l < 2; ++l) {
    const BodyId thigh_id = l == 0 ? BodyId::thigh_front : BodyId::thigh_rear;
    const BodyId knee_id = l == 0 ? BodyId::knee_front : BodyId::knee_rear;
    const BodyId shank_id = l == 0 ? BodyId::shank_front : BodyId::shank_rear;
    const BodyId wheel_id = l == 0 ? BodyId::wheel_front : BodyId::wheel_rear;
    c.push_back({thigh_id, 1 + 3 * l, k.frames.thigh_com[l], false, l});
    c.push_back({knee_id, 1 + 3 * l, k.frames.knee[l], false, l});
    c.push_back({shank_id, 2 + 3 * l, k.frames.shank_com[l], false, l});
    const Vec2 center = k.frames.wheel_center[l];
    const Vec2 n = terrain ? terrain->normal_at(center.x()) : Vec2(0.0, 1.0);
    c.push_back({wheel_id, 3 + 3 * l, center - model.leg[l].wheel_radius * n, true, l});
  }
  return c;
}

// one ground contact prepared for the velocity solve
struct ActiveContact {
  const Candidate* cand = nullptr;
  Vec2 pos, n, t;
  double depth = 0.0;
  double spring_force = 0.0;      // k_eff * depth, explicit part of f_n
  double normal_force = 0.0;      // total f_n after the implicit damping
  double k_eff = 0.0;             // effective spring rate after the mass cap
  VecDof jn = VecDof::Zero();     // J^T n
  VecDof jt = VecDof::Zero();     // J^T t
  bool sticking = true;           // false: sliding at the cone limit
  double slide_sign = 0.0;
  bool released = false;          // damping would pull: contact exerts nothing
};

template <typename Solver>
std::vector<ActiveContact> prepare_contacts(const RobotModel& model, const Kinematics& k,
                                            const std::vector<Candidate>& candidates,
                                            const Terrain& terrain, const VecDof& v,
                                            const Solver& Minv, double dt,
                                            const SimParams& p) {
  std::vector<ActiveContact> active;
  for (const Candidate& cand : candidates) {
    Vec2 n, pos = cand.position;
    double depth;
    if (cand.wheel_rim) {
      const Vec2 center = k.frames.wheel_center[cand.leg];
      n = terrain.normal_at(center.x());
      const double d = n.y() * (center.y() - terrain.height_at(center.x()));
      depth = model.leg[cand.leg].wheel_radius - d;
      pos = center - std::max(d, 0.0) * n;
    } else {
      n = terrain.normal_at(pos.x());
      depth = (terrain.height_at(pos.x()) - pos.y()) * n.y();
    }
    if (depth <= 0.0) continue;

    ActiveContact c;
    c.cand = &cand;
    c.pos = pos;
    c.n = n;
    c.t = Vec2(n.y(), -n.x());
    c.depth = depth;
    const PointKin pk = body_point(k.body[cand.body_index], pos);
    c.jn = pk.J.transpose() * n;
    c.jt = pk.J.transpose() * c.t;

    // explicit spring, capped by the contact's effective mass so the
    // integrator cannot blow up on light links; damping is implicit
    const double m_eff = 1.0 / std::max(c.jn.dot(Minv.solve(c.jn)), 1e-9);
    c.k_eff = std::min(p.contact_stiffness, p.stiffness_cap * m_eff / (dt * dt));
    c.spring_force = c.k_eff * depth;
    c.normal_force = c.spring_force;
    active.push_back(c);
  }
  return active;
}

MatDof assemble_mass_matrix(const Kinematics& k) {
  MatDof M = MatDof::Zero();
  for (const BodyKin& b : k.body) {
    M.noalias() += b.mass * (b.J.transpose() * b.J);
    M.noalias() += b.inertia * (b.ang.transpose() * b.ang);
  }
  return M;
}

// implicit wheel speed servo bookkeeping
struct WheelServo {
  bool enabled = false;
  double target = 0.0;
  bool saturated = false;
  double sat_torque = 0.0;
  double applied = 0.0;
};

// Semi-implicit velocity update. The normal damping, the tangential viscous
// force -k_t * slip and the wheel speed servo Kv * (target - omega) are all
// taken at the post-step velocity (their dt-scaled quadratic terms join the
// system matrix), so sticking contacts hold static loads and light rotors
// stay stable. Joint/wheel speed limits and joint position limits enter as
// pinned velocity constraints rather than post-hoc clamps: naive clamping of
// one generalized velocity can inject kinetic energy through the mass-matrix
// cross terms during tumbles. The switching sets (released contacts, sliding
// friction, saturated servos, pinned dofs) are resolved by re-solving.
VecDof solve_velocities(const RobotModel& model, const MatDof& M, const VecDof& v,
                        const VecDof& q, const VecDof& explicit_force,
                        std::vector<ActiveContact>& contacts,
                        std::array<WheelServo, kNumWheels>& servos, const Terrain& terrain,
                        double dt, const SimParams& p) {
  const double kv = model.wheel_velocity_gain;
  std::array<bool, kNumDof> pinned{};
  std::array<double, kNumDof> pin_value{};
  if (model.wheel_mode == WheelMode::fixed) {
    pinned[kDofWheelF] = pinned[kDofWheelR] = true;
  }

  VecDof v_next = VecDof::Zero();
  for (int pass = 0; pass < 20; ++pass) {
    MatDof A = M;
    VecDof rhs = M * v + dt * explicit_force;
    for (ActiveContact& c : contacts) {
      if (c.released) continue;
      rhs += dt * c.spring_force * c.jn;
      A.noalias() += (dt * p.contact_damping) * (c.jn * c.jn.transpose());
      if (c.sticking) {
        A.noalias() += (dt * p.tangent_damping) * (c.jt * c.jt.transpose());
      } else {
        rhs += dt * (c.slide_sign * terrain.friction * c.normal_force) * c.jt;
      }
    }
    for (int w = 0; w < kNumWheels; ++w) {
      if (!servos[w].enabled || pinned[kDofWheelF + w]) continue;
      const int dof = kDofWheelF + w;
      if (servos[w].saturated) {
        rhs[dof] += dt * servos[w].sat_torque;
      } else {
        A(dof, dof) += dt * kv;
        rhs[dof] += dt * kv * servos[w].target;
      }
    }

    // eliminate the pinned dofs: v[i] = pin_value[i]
    for (int i = 0; i < kNumDof; ++i) {
      if (!pinned[i]) continue;
      rhs -= A.col(i) * pin_value[i];
      A.row(i).setZero();
      A.col(i).setZero();
      A(i, i) = 1.0;
      rhs[i] = pin_value[i];
    }
    v_next = A.ldlt().solve(rhs);
    for (int i = 0; i < kNumDof; ++i) {
      if (pinned[i]) v_next[i] = pin_value[i];
    }

    bool changed = false;
    for (ActiveContact& c : contacts) {
      if (c.released) continue;
      const double fn = c.spring_force - p.contact_damping * c.jn.dot(v_next);
      if (fn < 0.0) {
        c.released = true;
        c.normal_force = 0.0;
        changed = true;
        continue;
      }
      c.normal_force = fn;
      if (c.sticking) {
        const double ft = -p.tangent_damping * c.jt.dot(v_next);
        if (std::abs(ft) > terrain.friction * fn) {
          c.sticking = false;
          c.slide_sign = ft > 0.0 ? 1.0 : -1.0;
          changed = true;
        }
      }
    }
    for (int w = 0; w < kNumWheels; ++w) {
      if (!servos[w].enabled || pinned[kDofWheelF + w]) continue;
      if (servos[w].saturated) {
        servos[w].applied = servos[w].sat_torque;
        continue;
      }
      const double tau = kv * (servos[w].target - v_next[kDofWheelF + w]);
      if (std::abs(tau) > model.wheel_torque_limit) {
        servos[w].saturated = true;
        servos[w].sat_torque = tau > 0.0 ? model.wheel_torque_limit : -model.wheel_torque_limit;
        servos[w].applied = servos[w].sat_torque;
        changed = true;
      } else {
        servos[w].applied = tau;
      }
    }
    // joint speed limit, then position limit (reach the stop, never pass it)
    for (int j = 0; j < kNumJoints; ++j) {
      const int dof = kDofHipF + j;
      if (pinned[dof]) continue;
      const double vl = model.joint_velocity_limit;
      if (std::abs(v_next[dof]) > vl) {
        pinned[dof] = true;
        pin_value[dof] = v_next[dof] > 0.0 ? vl : -vl;
        changed = true;
        continue;
      }
      const JointLimit& lim = model.joint_position_limits[j];
      const double q_pred = q[dof] + dt * v_next[dof];
      if (q_pred > lim.max) {
        pinned[dof] = true;
        pin_value[dof] = std::max(0.0, (lim.max - q[dof]) / dt);
        changed = true;
      } else if (q_pred < lim.min) {
        pinned[dof] = true;
        pin_value[dof] = std::min(0.0, (lim.min - q[dof]) / dt);
        changed = true;
      }
    }
    if (model.wheel_mode == WheelMode::active) {
      for (int w = 0; w < kNumWheels; ++w) {
        const int dof = kDofWheelF + w;
        if (pinned[dof]) continue;
        if (std::abs(v_next[dof]) > model.wheel_velocity_limit) {
          pinned[dof] = true;
          pin_value[dof] = v_next[dof] > 0.0 ? model.wheel_velocity_limit
                                             : -model.wheel_velocity_limit;
          // a pinned servo wheel applies whatever the constraint needs;
          // report the limit torque in its direction
          if (servos[w].enabled) {
            servos[w].applied = std::clamp(servos[w].applied, -model.wheel_torque_limit,
                                           model.wheel_torque_limit);
          }
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return v_next;
}

void report_contacts(const std::vector<ActiveContact>& contacts, const VecDof& v_next,
                     const Terrain& terrain, const SimParams& p,
                     std::vector<ContactPoint>* out) {
  if (!out) return;
  out->clear();
  for (const ActiveContact& c : contacts) {
    ContactPoint cp;
    cp.body = c.cand->id;
    cp.world_position = c.pos;
    cp.normal = c.n;
    cp.penetration = c.depth;
    if (!c.released) {
      cp.normal_force = c.normal_force;
      cp.tangent_force = c.sticking ? -p.tangent_damping * c.jt.dot(v_next)
                                    : c.slide_sign * terrain.friction * c.normal_force;
      // the last stick/slide switch can leave a hair of cone overshoot
      const double cone = terrain.friction * cp.normal_force;
      cp.tangent_force = std::clamp(cp.tangent_force, -cone, cone);
    }
    out->push_back(cp);
  }
}

}  // namespace

FrameSet forward_kinematics(const RobotModel& model, const SimState& state,
                            const Terrain* terrain) {
  if (!state.q().allFinite()) throw std::invalid_argument("forward_kinematics: non-finite state");
  Kinematics k = compute_kinematics(model, state);
  FrameSet frames = k.frames;
  for (const Candidate& c : contact_candidates(model, k, terrain)) {
    frames.candidates.push_back({c.id, c.position});
  }
  return frames;
}

MatDof mass_matrix(const RobotModel& model, const SimState& state) {
  return assemble_mass_matrix(compute_kinematics(model, state));
}

SimState step(const RobotModel& model, const SimState& state, const Vec4& joint_torques,
              const Vec2& wheel_torques, const Terrain& terrain, double dt,
              const SimParams& params, std::vector<ContactPoint>* contacts_out,
              const Vec2* wheel_velocity_targets) {
  if (!(dt > 0.0 && dt <= 0.01)) throw std::invalid_argument("step: dt must lie in (0, 0.01]");
  if (!joint_torques.allFinite() || !wheel_torques.allFinite())
    throw std::invalid_argument("step: non-finite torques");

  const Kinematics k = compute_kinematics(model, state);
  const MatDof M = assemble_mass_matrix(k);
  const auto Minv = M.ldlt();

  // actuation, clamped to limits
  Vec4 tau_j;
  for (int j = 0; j < kNumJoints; ++j) {
    tau_j[j] = std::clamp(joint_torques[j], -model.joint_torque_limit[j],
                          model.joint_torque_limit[j]);
  }
  Vec2 tau_w = Vec2::Zero();
  if (model.wheel_mode == WheelMode::active) {
    tau_w = wheel_torques.cwiseMax(-model.wheel_torque_limit).cwiseMin(model.wheel_torque_limit);
  }

  VecDof force = VecDof::Zero();
  force.segment<4>(kDofHipF) = tau_j;
  force.segment<2>(kDofWheelF) = tau_w;

  // gravity and velocity-product bias
  for (const BodyKin& b : k.body) {
    force += b.J.transpose() * Vec2(0.0, -b.mass * params.gravity);
    force -= b.mass * (b.J.transpose() * b.bias);
  }

  std::array<WheelServo, kNumWheels> servos{};
  if (wheel_velocity_targets && model.wheel_mode == WheelMode::active) {
    if (!wheel_velocity_targets->allFinite())
      throw std::invalid_argument("step: non-finite wheel velocity targets");
    for (int w = 0; w < kNumWheels; ++w) {
      servos[w].enabled = true;
      servos[w].target = (*wheel_velocity_targets)[w];
    }
  }

  const VecDof v = state.v();
  const VecDof q = state.q();
  const auto candidates = contact_candidates(model, k, &terrain);
  auto contacts = prepare_contacts(model, k, candidates, terrain, v, Minv, dt, params);
  VecDof v_new =
      solve_velocities(model, M, v, q, force, contacts, servos, terrain, dt, params);
  report_contacts(contacts, v_new, terrain, params, contacts_out);

  // velocity limits
  for (int j = 0; j < kNumJoints; ++j) {
    v_new[kDofHipF + j] =
        std::clamp(v_new[kDofHipF + j], -model.joint_velocity_limit, model.joint_velocity_limit);
  }
  if (model.wheel_mode == WheelMode::active) {
    for (int w = 0; w < kNumWheels; ++w) {
      v_new[kDofWheelF + w] = std::clamp(v_new[kDofWheelF + w], -model.wheel_velocity_limit,
                                         model.wheel_velocity_limit);
    }
  } else {
    v_new.segment<2>(kDofWheelF).setZero();
  }

  VecDof q_new = state.q() + dt * v_new;

  // position limits: clamp and zero the outward velocity component
  for (int j = 0; j < kNumJoints; ++j) {
    const JointLimit& lim = model.joint_position_limits[j];
    double& qj = q_new[kDofHipF + j];
    double& vj = v_new[kDofHipF + j];
    if (qj <= lim.min) {
      qj = lim.min;
      vj = std::max(vj, 0.0);
    } else if (qj >= lim.max) {
      qj = lim.max;
      vj = std::min(vj, 0.0);
    }
  }

  SimState next = state;
  next.set_q(q_new);
  next.set_v(v_new);
  next.joint_accelerations =
      (v_new.segment<4>(kDofHipF) - v.segment<4>(kDofHipF)) / dt;
  Vec2 tau_w_total = tau_w;
  for (int w = 0; w < kNumWheels; ++w) {
    if (servos[w].enabled) tau_w_total[w] += servos[w].applied;
  }
  tau_w_total = tau_w_total.cwiseMax(-model.wheel_torque_limit).cwiseMin(model.wheel_torque_limit);
  next.applied_torques << tau_j, tau_w_total;
  next.sim_time = state.sim_time + dt;

  if (!next.finite()) throw NonFiniteState("integrator produced a non-finite state");
  return next;
}

Vec4 pd_joint_torque(const RobotModel& model, const Vec4& q_target, const SimState& state) {
  if (!q_target.allFinite()) throw std::invalid_argument("pd_joint_torque: non-finite target");
  Vec4 tau = model.pd_stiffness * (q_target - state.joint_angles) -
             model.pd_damping * state.joint_velocities;
  for (int j = 0; j < kNumJoints; ++j) {
    tau[j] = std::clamp(tau[j], -model.joint_torque_limit[j], model.joint_torque_limit[j]);
  }
  return tau;
}

Vec2 wheel_velocity_torque(const RobotModel& model, const Vec2& v_target,
                           const SimState& state) {
  if (model.wheel_mode == WheelMode::fixed)
    throw WheelsFixed("wheel_velocity_torque called with fixed wheels");
  Vec2 tau = model.wheel_velocity_gain * (v_target - state.wheel_velocities);
  return tau.cwiseMax(-model.wheel_torque_limit).cwiseMin(model.wheel_torque_limit);
}

double mechanical_energy(const RobotModel& model, const SimState& state,
                         const Terrain& terrain, const SimParams& params) {
  const Kinematics k = compute_kinematics(model, state);
  const MatDof M = assemble_mass_matrix(k);
  const VecDof v = state.v();
  double e = 0.5 * v.dot(M * v);
  for (const BodyKin& b : k.body) e += b.mass * params.gravity * b.com.y();
  const auto Minv = M.ldlt();
  const auto contacts = prepare_contacts(model, k, contact_candidates(model, k, &terrain),
                                         terrain, v, Minv, params.dt, params);
  for (const ActiveContact& c : contacts) e += 0.5 * c.k_eff * c.depth * c.depth;
  return e;
}

std::vector<ContactPoint> compute_contacts(const RobotModel& model, const SimState& state,
                                           const Terrain& terrain, const SimParams& params) {
  const Kinematics k = compute_kinematics(model, state);
  const MatDof M = assemble_mass_matrix(k);
  const auto Minv = M.ldlt();
  const VecDof v = state.v();

  VecDof force = VecDof::Zero();
  for (const BodyKin& b : k.body) {
    force += b.J.transpose() * Vec2(0.0, -b.mass * params.gravity);
    force -= b.mass * (b.J.transpose() * b.bias);
  }
  auto contacts = prepare_contacts(model, k, contact_candidates(model, k, &terrain), terrain,
                                   v, Minv, params.dt, params);
  // torque-free force estimate, consistent with what a zero-torque step applies
  std::array<WheelServo, kNumWheels> servos{};
  const VecDof v_next = solve_velocities(model, M, v, state.q(), force, contacts, servos,
                                         terrain, params.dt, params);
  std::vector<ContactPoint> out;
  report_contacts(contacts, v_next, terrain, params, &out);
  return out;
}

}  // namespace recoverlab
