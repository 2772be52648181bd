#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "recoverlab/model.hpp"
#include "recoverlab/reward.hpp"
#include "recoverlab/rng.hpp"
#include "recoverlab/sim.hpp"

namespace recoverlab {

struct EpisodeConfig {
  int episode_length = 250;      // control steps (5 s at 50 Hz)
  double control_dt = 0.02;      // s
  int physics_substeps = 4;      // control_dt / SimParams::dt
  double drop_height = 1.1;      // m above local terrain
  double settle_duration = 2.0;  // s of torque-free settling
  enum class InitMode { fallen, stand };
  InitMode init_mode = InitMode::fallen;
};

struct DomainRandomizationConfig {
  bool enabled = true;
  double base_mass_delta = 0.20;   // fraction of base mass
  double link_mass_scale = 0.10;   // fraction, per link
  double friction_min = 0.7;
  double friction_max = 1.3;
  double stiffness_delta = 1.0;    // N*m/rad
  double damping_delta = 0.1;      // N*m*s/rad
  double action_noise_std = 0.02;
};

struct ObservationSpec {
  int history_length = 3;
  double snapshot_interval = 0.01;  // s
  double noise_lin_vel = 0.10;
  double noise_ang_vel = 0.15;
  double noise_gravity = 0.03;
  double noise_joint_pos = 0.0;   // kept exact
  double noise_joint_vel = 0.15;
  double noise_wheel_vel = 0.10;
  bool noise_enabled = true;
};

inline constexpr int kSnapshotDim = 15;  // lin vel 2, ang vel 1, gravity 2, q 4, dq 4, wheels 2
inline constexpr int kActorObsDim = 3 * kSnapshotDim + kActionDim;  // 51
inline constexpr int kPrivilegedDim = 7 + 7 + 3;
inline constexpr int kCriticObsDim = kActorObsDim + kPrivilegedDim;  // 68

struct ActionCommand {
  Vec4 joint_actions = Vec4::Zero();   // a_p
  Vec2 wheel_actions = Vec2::Zero();   // a_v
  double position_scale = 0.5;         // s_p, rad per unit
  double velocity_scale = 0.8;         // s_v, rad/s per unit, < 1
};

struct ActionTargets {
  Vec4 joint_position;   // rad, inside position limits
  Vec2 wheel_velocity;   // rad/s, inside velocity limit
};

/// Decode actions into PD / wheel-speed targets around the model defaults.
ActionTargets apply_action(const ActionCommand& cmd, const RobotModel& model);

/// One proprioceptive snapshot, recorded every ObservationSpec::snapshot_interval.
struct Snapshot {
  Vec2 lin_vel = Vec2::Zero();
  double ang_vel = 0.0;
  Vec2 gravity_b{0.0, -1.0};
  Vec4 joint_pos = Vec4::Zero();
  Vec4 joint_vel = Vec4::Zero();
  Vec2 wheel_vel = Vec2::Zero();

  static Snapshot from_state(const SimState& s);
};

/// Simulation-only signals fed to the critic: per-body contact flags and
/// weight-normalized force magnitudes, plus distances to the stand target.
/// The target-delta block is a stand-in for the target-trajectory features of
/// the original observation design.
struct PrivilegedObservation {
  // order: wheel F, wheel R, shank F, shank R, thigh F, thigh R, base
  std::array<bool, 7> contact_flags{};
  std::array<double, 7> contact_forces{};  // ||force|| / (m_total * g)
  double height_error = 0.0;       // max(h* - h_b, 0)
  double orientation_error = 0.0;  // ||g_b - g*||^2
  double joint_error_norm = 0.0;   // sqrt(sum (q* - q)^2)
};

PrivilegedObservation build_privileged(const SimState& state, double base_height,
                                       const std::vector<ContactPoint>& contacts,
                                       const RobotModel& model, const RewardScales& scales);

/// Concatenated snapshot history (newest first, zero-padded before episode
/// start) plus the previous action, with per-channel Gaussian noise. Pass a
/// null rng for the noise-free readout.
Eigen::VectorXd build_actor_obs(const std::vector<Snapshot>& history, const Vec6& prev_action,
                                const ObservationSpec& spec, Rng* rng);

/// Noise-free actor observation followed by the privileged block.
Eigen::VectorXd build_critic_obs(const Eigen::VectorXd& actor_obs_noise_free,
                                 const PrivilegedObservation& priv);

enum class TerrainKind { flat, random_boxes, rough, slope, stairs, inverted_stairs };

TerrainKind terrain_kind_from_string(const std::string& s);  // throws UnknownTerrainKind
const char* terrain_kind_name(TerrainKind k);

/// 1D heightfield analogs of the evaluation terrains; difficulty in [0, 1]
/// interpolates each kind's documented parameter range.
Terrain generate_terrain(TerrainKind kind, double difficulty, Rng& rng);

struct RandomizedModel {
  RobotModel model;
  double friction = 1.0;
};

/// Perturbed copy of the model plus a friction draw; the input is unchanged.
RandomizedModel randomize_domain(const RobotModel& model, const DomainRandomizationConfig& cfg,
                                 Rng& rng);

/// Sample a fallen pose: random pitch and joint angles, drop from
/// EpisodeConfig::drop_height, settle torque-free, return with sim_time 0.
SimState init_fallen_state(const RobotModel& model, const Terrain& terrain,
                           const EpisodeConfig& cfg, const SimParams& params, Rng& rng);

/// Default stand placed on the terrain (perturbation trials, probe tests).
SimState init_stand_state(const RobotModel& model, const Terrain& terrain);

struct EnvConfig {
  EpisodeConfig episode;
  DomainRandomizationConfig randomization;
  ObservationSpec observation;
  RewardScales reward;
  ShapingState shaping;
  SimParams sim;
  TerrainKind terrain_kind = TerrainKind::flat;
  double terrain_difficulty = 0.5;
  double action_position_scale = 0.5;
  double action_velocity_scale = 0.8;
};

struct EnvStepResult {
  Eigen::VectorXd actor_obs;
  Eigen::VectorXd critic_obs;
  double reward = 0.0;
  RewardTerms terms;
  bool done = false;
  bool failed = false;  // integrator blow-up; episode counts as non-recovered
};

/// One episodic environment with its own rng stream, model perturbation and
/// terrain. Instances are independent; step them concurrently at will.
class Env {
 public:
  Env(const RobotModel& nominal, const EnvConfig& cfg, std::uint64_t seed,
      std::uint64_t stream);

  /// Start a new episode (samples randomization, terrain and initial state).
  void reset();
  /// Re-seed the rng stream, then reset. Used for paired evaluations.
  void reset_with_stream(std::uint64_t seed, std::uint64_t stream);

  EnvStepResult step(const Vec6& action);

  Eigen::VectorXd actor_obs();             // draws observation noise
  Eigen::VectorXd actor_obs_noise_free() const;
  Eigen::VectorXd critic_obs() const;

  int t() const { return t_; }
  bool done() const { return t_ >= cfg_.episode.episode_length || failed_; }
  const SimState& state() const { return state_; }
  const RobotModel& episode_model() const { return model_; }
  const Terrain& terrain() const { return terrain_; }
  const std::vector<ContactPoint>& contacts() const { return contacts_; }
  double base_height() const;  // above local terrain
  Rng& rng() { return rng_; }
  const Vec6& prev_action() const { return prev_action_; }
  EnvConfig& config() { return cfg_; }
  const EnvConfig& config() const { return cfg_; }

  /// Apply a base-velocity impulse (perturbation trials).
  void push_base(const Vec2& delta_v);

 private:
  void record_snapshot();
  std::vector<Snapshot> history_view() const;

  RobotModel nominal_;
  EnvConfig cfg_;
  Rng rng_;
  RobotModel model_;     // per-episode randomized copy
  Terrain terrain_;
  SimState state_;
  std::vector<ContactPoint> contacts_;
  std::deque<Snapshot> snapshots_;
  Vec6 prev_action_ = Vec6::Zero();
  int t_ = 0;
  bool failed_ = false;
};

}  // namespace recoverlab
