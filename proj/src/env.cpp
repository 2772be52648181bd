#include "recoverlab/env.hpp"

#include <cmath>
#include <stdexcept>

#include "recoverlab/errors.hpp"

namespace recoverlab {

ActionTargets apply_action(const ActionCommand& cmd, const RobotModel& model) {
  if (!cmd.joint_actions.allFinite() || !cmd.wheel_actions.allFinite())
    throw std::invalid_argument("apply_action: non-finite action");
  ActionTargets t;
  t.joint_position = cmd.position_scale * cmd.joint_actions + model.default_joint_angles;
  for (int j = 0; j < kNumJoints; ++j) {
    const JointLimit& lim = model.joint_position_limits[j];
    t.joint_position[j] = std::clamp(t.joint_position[j], lim.min, lim.max);
  }
  t.wheel_velocity = cmd.velocity_scale * cmd.wheel_actions + model.default_wheel_speed;
  t.wheel_velocity = t.wheel_velocity.cwiseMax(-model.wheel_velocity_limit)
                         .cwiseMin(model.wheel_velocity_limit);
  return t;
}

Snapshot Snapshot::from_state(const SimState& s) {
  Snapshot snap;
  snap.lin_vel = s.base_linear_velocity;
  snap.ang_vel = s.base_angular_velocity;
  snap.gravity_b = s.projected_gravity();
  snap.joint_pos = s.joint_angles;
  snap.joint_vel = s.joint_velocities;
  snap.wheel_vel = s.wheel_velocities;
  return snap;
}

PrivilegedObservation build_privileged(const SimState& state, double base_height,
                                       const std::vector<ContactPoint>& contacts,
                                       const RobotModel& model, const RewardScales& scales) {
  PrivilegedObservation p;
  std::array<Vec2, 7> force_sum{};
  for (auto& f : force_sum) f.setZero();

  auto group = [](BodyId id) -> int {
    switch (id) {
      case BodyId::wheel_front: return 0;
      case BodyId::wheel_rear: return 1;
      case BodyId::shank_front:
      case BodyId::knee_front: return 2;
      case BodyId::shank_rear:
      case BodyId::knee_rear: return 3;
      case BodyId::thigh_front: return 4;
      case BodyId::thigh_rear: return 5;
      case BodyId::base_front_corner:
      case BodyId::base_rear_corner: return 6;
    }
    return 6;
  };

  for (const ContactPoint& c : contacts) {
    if (c.normal_force <= 0.0) continue;
    const int g = group(c.body);
    p.contact_flags[g] = true;
    const Vec2 t(c.normal.y(), -c.normal.x());
    force_sum[g] += c.normal_force * c.normal + c.tangent_force * t;
  }
  const double weight = model.total_mass() * kGravity;
  for (int g = 0; g < 7; ++g) p.contact_forces[g] = force_sum[g].norm() / weight;

  p.height_error = std::max(scales.target_height - base_height, 0.0);
  p.orientation_error =
      (state.projected_gravity() - scales.upright_gravity).squaredNorm();
  p.joint_error_norm = (scales.target_joint_angles - state.joint_angles).norm();
  return p;
}

Eigen::VectorXd build_actor_obs(const std::vector<Snapshot>& history, const Vec6& prev_action,
                                const ObservationSpec& spec, Rng* rng) {
  const int H = spec.history_length;
  if (static_cast<int>(history.size()) != H)
    throw std::invalid_argument("build_actor_obs: history must hold exactly H snapshots");
  Eigen::VectorXd obs(H * kSnapshotDim + kActionDim);
  auto noise = [&](double std) { return (rng && std > 0.0) ? rng->normal(0.0, std) : 0.0; };
  int i = 0;
  for (int h = 0; h < H; ++h) {
    const Snapshot& s = history[h];
    obs[i++] = s.lin_vel.x() + noise(spec.noise_lin_vel);
    obs[i++] = s.lin_vel.y() + noise(spec.noise_lin_vel);
    obs[i++] = s.ang_vel + noise(spec.noise_ang_vel);
    obs[i++] = s.gravity_b.x() + noise(spec.noise_gravity);
    obs[i++] = s.gravity_b.y() + noise(spec.noise_gravity);
    for (int j = 0; j < 4; ++j) obs[i++] = s.joint_pos[j] + noise(spec.noise_joint_pos);
    for (int j = 0; j < 4; ++j) obs[i++] = s.joint_vel[j] + noise(spec.noise_joint_vel);
    for (int w = 0; w < 2; ++w) obs[i++] = s.wheel_vel[w] + noise(spec.noise_wheel_vel);
  }
  obs.segment<kActionDim>(i) = prev_action;  // most recent action stays exact
  return obs;
}

Eigen::VectorXd build_critic_obs(const Eigen::VectorXd& actor_obs_noise_free,
                                 const PrivilegedObservation& priv) {
  Eigen::VectorXd obs(actor_obs_noise_free.size() + kPrivilegedDim);
  obs.head(actor_obs_noise_free.size()) = actor_obs_noise_free;
  int i = static_cast<int>(actor_obs_noise_free.size());
  for (int g = 0; g < 7; ++g) obs[i++] = priv.contact_flags[g] ? 1.0 : 0.0;
  for (int g = 0; g < 7; ++g) obs[i++] = priv.contact_forces[g];
  obs[i++] = priv.height_error;
  obs[i++] = priv.orientation_error;
  obs[i++] = priv.joint_error_norm;
  return obs;
}

TerrainKind terrain_kind_from_string(const std::string& s) {
  if (s == "flat") return TerrainKind::flat;
  if (s == "random_boxes") return TerrainKind::random_boxes;
  if (s == "rough") return TerrainKind::rough;
  if (s == "slope") return TerrainKind::slope;
  if (s == "stairs") return TerrainKind::stairs;
  if (s == "inverted_stairs") return TerrainKind::inverted_stairs;
  throw UnknownTerrainKind("unknown terrain kind: " + s);
}

const char* terrain_kind_name(TerrainKind k) {
  switch (k) {
    case TerrainKind::flat: return "flat";
    case TerrainKind::random_boxes: return "random_boxes";
    case TerrainKind::rough: return "rough";
    case TerrainKind::slope: return "slope";
    case TerrainKind::stairs: return "stairs";
    case TerrainKind::inverted_stairs: return "inverted_stairs";
  }
  return "unknown";
}

namespace {

constexpr double kTerrainExtent = 8.0;  // field spans [-extent, extent]

Terrain make_field(double spacing) {
  Terrain t;
  t.sample_spacing = spacing;
  t.origin_x = -kTerrainExtent;
  t.heights.assign(static_cast<std::size_t>(2.0 * kTerrainExtent / spacing) + 1, 0.0);
  return t;
}

double stairs_profile(double x, double step_height, double tread) {
  const double a = std::abs(x);
  const double ramp = std::min(a, 2.0 * kTerrainExtent / 2.0 - a);  // up, then back down
  return step_height * std::floor(std::max(ramp, 0.0) / tread);
}

}  // namespace

Terrain generate_terrain(TerrainKind kind, double difficulty, Rng& rng) {
  const double d = std::clamp(difficulty, 0.0, 1.0);
  switch (kind) {
    case TerrainKind::flat:
      return Terrain::flat();
    case TerrainKind::random_boxes: {
      // plateaus with heights in [0, 0.05 + 0.15 d]
      Terrain t = make_field(0.1);
      const double h_max = 0.05 + 0.15 * d;
      std::size_t i = 0;
      while (i < t.heights.size()) {
        const double width = rng.uniform(0.4, 0.9);
        const double h = rng.uniform(0.0, h_max);
        auto n = static_cast<std::size_t>(width / t.sample_spacing);
        for (std::size_t j = 0; j < n && i < t.heights.size(); ++j) t.heights[i++] = h;
      }
      return t;
    }
    case TerrainKind::rough: {
      // per-sample noise, amplitude 0.02 + 0.08 d, centered on zero
      Terrain t = make_field(0.05);
      const double amp = 0.02 + 0.08 * d;
      for (double& h : t.heights) h = rng.uniform(-0.5 * amp, 0.5 * amp);
      return t;
    }
    case TerrainKind::slope: {
      // uniform gradient 0.20 + 0.40 d
      Terrain t = make_field(0.1);
      const double g = 0.20 + 0.40 * d;
      for (std::size_t i = 0; i < t.heights.size(); ++i) {
        t.heights[i] = g * (t.origin_x + static_cast<double>(i) * t.sample_spacing);
      }
      return t;
    }
    case TerrainKind::stairs:
    case TerrainKind::inverted_stairs: {
      // step height 0.05 + 0.18 d, 0.3 m treads, ascending then descending
      Terrain t = make_field(0.05);
      const double s = 0.05 + 0.18 * d;
      const double sign = kind == TerrainKind::stairs ? 1.0 : -1.0;
      for (std::size_t i = 0; i < t.heights.size(); ++i) {
        const double x = t.origin_x + static_cast<double>(i) * t.sample_spacing;
        t.heights[i] = sign * stairs_profile(x, s, 0.3);
      }
      return t;
    }
  }
  throw UnknownTerrainKind("unknown terrain kind enum");
}

RandomizedModel randomize_domain(const RobotModel& model, const DomainRandomizationConfig& cfg,
                                 Rng& rng) {
  if (cfg.friction_min > cfg.friction_max || cfg.friction_min <= 0.0)
    throw std::invalid_argument("randomize_domain: invalid friction range");
  RandomizedModel out;
  out.model = model;
  if (!cfg.enabled) {
    out.friction = 1.0;
    return out;
  }
  out.model.base_mass = model.base_mass * (1.0 + rng.uniform(-cfg.base_mass_delta, cfg.base_mass_delta));
  out.model.base_inertia = model.base_inertia * (out.model.base_mass / model.base_mass);
  for (int l = 0; l < 2; ++l) {
    auto scale = [&] { return 1.0 + rng.uniform(-cfg.link_mass_scale, cfg.link_mass_scale); };
    out.model.leg[l].thigh_mass = model.leg[l].thigh_mass * scale();
    out.model.leg[l].shank_mass = model.leg[l].shank_mass * scale();
    const double ws = scale();
    out.model.leg[l].wheel_mass = model.leg[l].wheel_mass * ws;
    out.model.leg[l].wheel_inertia = model.leg[l].wheel_inertia * ws;
  }
  out.friction = rng.uniform(cfg.friction_min, cfg.friction_max);
  out.model.pd_stiffness =
      std::max(0.1, model.pd_stiffness + rng.uniform(-cfg.stiffness_delta, cfg.stiffness_delta));
  out.model.pd_damping =
      std::max(0.0, model.pd_damping + rng.uniform(-cfg.damping_delta, cfg.damping_delta));
  return out;
}

SimState init_fallen_state(const RobotModel& model, const Terrain& terrain,
                           const EpisodeConfig& cfg, const SimParams& params, Rng& rng) {
  SimState s;
  s.base_pitch = rng.uniform(-M_PI, M_PI);
  for (int j = 0; j < kNumJoints; ++j) {
    const JointLimit& lim = model.joint_position_limits[j];
    s.joint_angles[j] = rng.uniform(lim.min, lim.max);
  }
  s.base_position = Vec2(0.0, terrain.height_at(0.0) + cfg.drop_height);

  const int n = static_cast<int>(std::round(cfg.settle_duration / params.dt));
  for (int i = 0; i < n; ++i) {
    s = step(model, s, Vec4::Zero(), Vec2::Zero(), terrain, params.dt, params);
  }
  s.sim_time = 0.0;
  return s;
}

SimState init_stand_state(const RobotModel& model, const Terrain& terrain) {
  SimState s;
  s.joint_angles = model.default_joint_angles;
  const FrameSet f = forward_kinematics(model, s);
  double lowest = 0.0;
  for (int l = 0; l < 2; ++l) {
    lowest = std::min(lowest, f.wheel_center[l].y() - model.leg[l].wheel_radius);
  }
  s.base_position = Vec2(0.0, terrain.height_at(0.0) - lowest);

  // seat the contacts under PD hold
  SimParams params;
  const Vec2 hold = Vec2::Zero();
  const Vec2* servo = model.wheel_mode == WheelMode::active ? &hold : nullptr;
  const int n = static_cast<int>(std::round(0.5 / params.dt));
  for (int i = 0; i < n; ++i) {
    const Vec4 tau = pd_joint_torque(model, model.default_joint_angles, s);
    s = step(model, s, tau, Vec2::Zero(), terrain, params.dt, params, nullptr, servo);
  }
  s.sim_time = 0.0;
  return s;
}

Env::Env(const RobotModel& nominal, const EnvConfig& cfg, std::uint64_t seed,
         std::uint64_t stream)
    : nominal_(nominal), cfg_(cfg), rng_(seed, stream), model_(nominal) {
  nominal_.validate();
  reset();
}

void Env::reset() {
  terrain_ = generate_terrain(cfg_.terrain_kind, cfg_.terrain_difficulty, rng_);
  const RandomizedModel rm = randomize_domain(nominal_, cfg_.randomization, rng_);
  model_ = rm.model;
  if (cfg_.randomization.enabled) terrain_.friction = rm.friction;

  if (cfg_.episode.init_mode == EpisodeConfig::InitMode::stand) {
    state_ = init_stand_state(model_, terrain_);
  } else {
    state_ = init_fallen_state(model_, terrain_, cfg_.episode, cfg_.sim, rng_);
  }
  contacts_ = compute_contacts(model_, state_, terrain_, cfg_.sim);
  snapshots_.clear();
  record_snapshot();
  prev_action_ = Vec6::Zero();
  t_ = 0;
  failed_ = false;
}

void Env::reset_with_stream(std::uint64_t seed, std::uint64_t stream) {
  rng_ = Rng(seed, stream);
  reset();
}

void Env::record_snapshot() {
  snapshots_.push_back(Snapshot::from_state(state_));
  while (static_cast<int>(snapshots_.size()) > cfg_.observation.history_length) {
    snapshots_.pop_front();
  }
}

std::vector<Snapshot> Env::history_view() const {
  std::vector<Snapshot> h(cfg_.observation.history_length);
  for (int i = 0; i < cfg_.observation.history_length; ++i) {
    if (i < static_cast<int>(snapshots_.size())) {
      h[i] = snapshots_[snapshots_.size() - 1 - i];  // newest first
    } else {
      h[i] = Snapshot{};  // zero pad
      h[i].gravity_b.setZero();
    }
  }
  return h;
}

double Env::base_height() const {
  return state_.base_position.y() - terrain_.height_at(state_.base_position.x());
}

Eigen::VectorXd Env::actor_obs() {
  Rng* noise = cfg_.observation.noise_enabled ? &rng_ : nullptr;
  return build_actor_obs(history_view(), prev_action_, cfg_.observation, noise);
}

Eigen::VectorXd Env::actor_obs_noise_free() const {
  return build_actor_obs(history_view(), prev_action_, cfg_.observation, nullptr);
}

Eigen::VectorXd Env::critic_obs() const {
  const PrivilegedObservation priv =
      build_privileged(state_, base_height(), contacts_, model_, cfg_.reward);
  return build_critic_obs(actor_obs_noise_free(), priv);
}

EnvStepResult Env::step(const Vec6& action) {
  if (done()) throw std::logic_error("Env::step called on a finished episode");

  Vec6 executed = action;
  if (cfg_.randomization.enabled && cfg_.randomization.action_noise_std > 0.0) {
    for (int i = 0; i < kActionDim; ++i) {
      executed[i] += rng_.normal(0.0, cfg_.randomization.action_noise_std);
    }
  }

  ActionCommand cmd;
  cmd.joint_actions = executed.head<4>();
  cmd.wheel_actions = executed.tail<2>();
  cmd.position_scale = cfg_.action_position_scale;
  cmd.velocity_scale = cfg_.action_velocity_scale;
  const ActionTargets targets = apply_action(cmd, model_);

  const int snap_every = std::max(
      1, static_cast<int>(std::round(cfg_.observation.snapshot_interval / cfg_.sim.dt)));

  EnvStepResult out;
  const Vec2* servo =
      model_.wheel_mode == WheelMode::active ? &targets.wheel_velocity : nullptr;
  try {
    for (int s = 1; s <= cfg_.episode.physics_substeps; ++s) {
      const Vec4 tau_j = pd_joint_torque(model_, targets.joint_position, state_);
      state_ = recoverlab::step(model_, state_, tau_j, Vec2::Zero(), terrain_, cfg_.sim.dt,
                                cfg_.sim, &contacts_, servo);
      if (s % snap_every == 0) record_snapshot();
    }
  } catch (const NonFiniteState&) {
    failed_ = true;
    out.done = true;
    out.failed = true;
    out.reward = 0.0;
    out.actor_obs = Eigen::VectorXd::Zero(kActorObsDim);
    out.critic_obs = Eigen::VectorXd::Zero(kCriticObsDim);
    t_ = cfg_.episode.episode_length;
    return out;
  }

  out.terms = compute_step_reward(state_, base_height(), contacts_, action, prev_action_,
                                  model_, cfg_.reward, cfg_.shaping, static_cast<double>(t_));
  out.reward = out.terms.total;
  prev_action_ = action;
  ++t_;
  out.done = t_ >= cfg_.episode.episode_length;
  out.actor_obs = actor_obs();
  out.critic_obs = critic_obs();
  return out;
}

void Env::push_base(const Vec2& delta_v) { state_.base_linear_velocity += delta_v; }

}  // namespace recoverlab
