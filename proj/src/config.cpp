#include "recoverlab/config.hpp"

#include <filesystem>
#include <fstream>

#include "recoverlab/errors.hpp"

namespace recoverlab {

using nlohmann::json;

nlohmann::json to_json(const RunConfig& c) {
  json j;
  j["run"] = {{"seed", c.seed},
              {"out_dir", c.out_dir},
              {"workers", c.workers},
              {"total_env_steps", c.total_env_steps},
              {"checkpoint_interval", c.checkpoint_interval},
              {"probe_interval", c.probe_interval},
              {"probe_episodes", c.probe_episodes},
              {"target_success", c.target_success}};
  j["robot"] = {{"preset", c.preset}, {"wheels", c.wheels}};
  j["shaping"] = {{"mode", c.shaping_mode},
                  {"interpretation", c.ed_interpretation},
                  {"expected_recovery_step", c.expected_recovery_step},
                  {"growth_rate", c.growth_rate},
                  {"cw0", c.cw0},
                  {"progress_rate", c.progress_rate}};
  j["terrain"] = {{"kind", c.terrain}, {"difficulty", c.difficulty}};
  j["episode"] = {{"length", c.episode.episode_length},
                  {"control_dt", c.episode.control_dt},
                  {"physics_substeps", c.episode.physics_substeps},
                  {"drop_height", c.episode.drop_height},
                  {"settle_duration", c.episode.settle_duration}};
  j["randomization"] = {{"enabled", c.randomization.enabled},
                        {"base_mass_delta", c.randomization.base_mass_delta},
                        {"link_mass_scale", c.randomization.link_mass_scale},
                        {"friction_min", c.randomization.friction_min},
                        {"friction_max", c.randomization.friction_max},
                        {"stiffness_delta", c.randomization.stiffness_delta},
                        {"damping_delta", c.randomization.damping_delta},
                        {"action_noise_std", c.randomization.action_noise_std}};
  j["observation"] = {{"history_length", c.observation.history_length},
                      {"snapshot_interval", c.observation.snapshot_interval},
                      {"noise_lin_vel", c.observation.noise_lin_vel},
                      {"noise_ang_vel", c.observation.noise_ang_vel},
                      {"noise_gravity", c.observation.noise_gravity},
                      {"noise_joint_pos", c.observation.noise_joint_pos},
                      {"noise_joint_vel", c.observation.noise_joint_vel},
                      {"noise_wheel_vel", c.observation.noise_wheel_vel},
                      {"noise_enabled", c.observation.noise_enabled}};
  j["action"] = {{"position_scale", c.action_position_scale},
                 {"velocity_scale", c.action_velocity_scale}};
  j["reward"] = {{"stand_joint_position", c.reward.stand_joint_position},
                 {"base_height", c.reward.base_height},
                 {"base_orientation", c.reward.base_orientation},
                 {"body_collision", c.reward.body_collision},
                 {"action_rate", c.reward.action_rate},
                 {"joint_velocity", c.reward.joint_velocity},
                 {"torques", c.reward.torques},
                 {"acceleration", c.reward.acceleration},
                 {"wheel_velocity", c.reward.wheel_velocity},
                 {"sigma_p", c.reward.sigma_p},
                 {"sigma_h", c.reward.sigma_h},
                 {"target_height", c.reward.target_height},
                 {"support_bonus", c.reward.support_bonus},
                 {"support_bonus_enabled", c.reward.support_bonus_enabled},
                 {"normalize_contact_forces", c.reward.normalize_contact_forces}};
  j["sim"] = {{"dt", c.sim.dt},
              {"contact_stiffness", c.sim.contact_stiffness},
              {"contact_damping", c.sim.contact_damping},
              {"tangent_damping", c.sim.tangent_damping}};
  j["ppo"] = {{"gamma", c.ppo.gamma},
              {"learning_rate", c.ppo.learning_rate},
              {"gae_lambda", c.ppo.gae_lambda},
              {"clip_ratio", c.ppo.clip_ratio},
              {"update_epochs", c.ppo.update_epochs},
              {"minibatches", c.ppo.minibatches},
              {"entropy_coef", c.ppo.entropy_coef},
              {"value_coef", c.ppo.value_coef},
              {"max_grad_norm", c.ppo.max_grad_norm},
              {"horizon", c.ppo.horizon},
              {"log_std_init", c.ppo.log_std_init},
              {"log_std_min", c.ppo.log_std_min},
              {"log_std_max", c.ppo.log_std_max},
              {"value_output_scale", c.ppo.value_output_scale},
              {"actor_hidden", c.ppo.actor_hidden},
              {"critic_hidden", c.ppo.critic_hidden}};
  j["rollout"] = {{"num_envs", c.num_envs}};
  j["eval"] = {{"episodes", c.eval_episodes},
               {"seed", c.eval_seed},
               {"randomization", c.eval_randomization},
               {"pca_mode", c.pca_mode}};
  return j;
}

namespace {

void check_keys(const json& input, const json& reference, const std::string& path) {
  if (!input.is_object()) return;
  if (!reference.is_object())
    throw ConfigError("config: unexpected object at " + (path.empty() ? "<root>" : path));
  for (const auto& [key, value] : input.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!reference.contains(key)) throw ConfigError("config: unknown key " + here);
    if (value.is_object()) check_keys(value, reference.at(key), here);
  }
}

void merge(json& base, const json& overlay) {
  for (const auto& [key, value] : overlay.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      merge(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value at ") + section + "." + key + ": " +
                      e.what());
  }
}

}  // namespace

RunConfig config_from_json(const json& input) {
  const json defaults = to_json(RunConfig{});
  check_keys(input, defaults, "");
  json j = defaults;
  merge(j, input);

  RunConfig c;
  c.seed = get<std::uint64_t>(j, "run", "seed");
  c.out_dir = get<std::string>(j, "run", "out_dir");
  c.workers = get<int>(j, "run", "workers");
  c.total_env_steps = get<long>(j, "run", "total_env_steps");
  c.checkpoint_interval = get<int>(j, "run", "checkpoint_interval");
  c.probe_interval = get<int>(j, "run", "probe_interval");
  c.probe_episodes = get<int>(j, "run", "probe_episodes");
  c.target_success = get<double>(j, "run", "target_success");

  c.preset = get<std::string>(j, "robot", "preset");
  c.wheels = get<std::string>(j, "robot", "wheels");

  c.shaping_mode = get<std::string>(j, "shaping", "mode");
  c.ed_interpretation = get<std::string>(j, "shaping", "interpretation");
  c.expected_recovery_step = get<double>(j, "shaping", "expected_recovery_step");
  c.growth_rate = get<double>(j, "shaping", "growth_rate");
  c.cw0 = get<double>(j, "shaping", "cw0");
  c.progress_rate = get<double>(j, "shaping", "progress_rate");

  c.terrain = get<std::string>(j, "terrain", "kind");
  c.difficulty = get<double>(j, "terrain", "difficulty");

  c.episode.episode_length = get<int>(j, "episode", "length");
  c.episode.control_dt = get<double>(j, "episode", "control_dt");
  c.episode.physics_substeps = get<int>(j, "episode", "physics_substeps");
  c.episode.drop_height = get<double>(j, "episode", "drop_height");
  c.episode.settle_duration = get<double>(j, "episode", "settle_duration");

  c.randomization.enabled = get<bool>(j, "randomization", "enabled");
  c.randomization.base_mass_delta = get<double>(j, "randomization", "base_mass_delta");
  c.randomization.link_mass_scale = get<double>(j, "randomization", "link_mass_scale");
  c.randomization.friction_min = get<double>(j, "randomization", "friction_min");
  c.randomization.friction_max = get<double>(j, "randomization", "friction_max");
  c.randomization.stiffness_delta = get<double>(j, "randomization", "stiffness_delta");
  c.randomization.damping_delta = get<double>(j, "randomization", "damping_delta");
  c.randomization.action_noise_std = get<double>(j, "randomization", "action_noise_std");

  c.observation.history_length = get<int>(j, "observation", "history_length");
  c.observation.snapshot_interval = get<double>(j, "observation", "snapshot_interval");
  c.observation.noise_lin_vel = get<double>(j, "observation", "noise_lin_vel");
  c.observation.noise_ang_vel = get<double>(j, "observation", "noise_ang_vel");
  c.observation.noise_gravity = get<double>(j, "observation", "noise_gravity");
  c.observation.noise_joint_pos = get<double>(j, "observation", "noise_joint_pos");
  c.observation.noise_joint_vel = get<double>(j, "observation", "noise_joint_vel");
  c.observation.noise_wheel_vel = get<double>(j, "observation", "noise_wheel_vel");
  c.observation.noise_enabled = get<bool>(j, "observation", "noise_enabled");

  c.action_position_scale = get<double>(j, "action", "position_scale");
  c.action_velocity_scale = get<double>(j, "action", "velocity_scale");

  c.reward.stand_joint_position = get<double>(j, "reward", "stand_joint_position");
  c.reward.base_height = get<double>(j, "reward", "base_height");
  c.reward.base_orientation = get<double>(j, "reward", "base_orientation");
  c.reward.body_collision = get<double>(j, "reward", "body_collision");
  c.reward.action_rate = get<double>(j, "reward", "action_rate");
  c.reward.joint_velocity = get<double>(j, "reward", "joint_velocity");
  c.reward.torques = get<double>(j, "reward", "torques");
  c.reward.acceleration = get<double>(j, "reward", "acceleration");
  c.reward.wheel_velocity = get<double>(j, "reward", "wheel_velocity");
  c.reward.sigma_p = get<double>(j, "reward", "sigma_p");
  c.reward.sigma_h = get<double>(j, "reward", "sigma_h");
  c.reward.target_height = get<double>(j, "reward", "target_height");
  c.reward.support_bonus = get<double>(j, "reward", "support_bonus");
  c.reward.support_bonus_enabled = get<bool>(j, "reward", "support_bonus_enabled");
  c.reward.normalize_contact_forces = get<bool>(j, "reward", "normalize_contact_forces");

  c.sim.dt = get<double>(j, "sim", "dt");
  c.sim.contact_stiffness = get<double>(j, "sim", "contact_stiffness");
  c.sim.contact_damping = get<double>(j, "sim", "contact_damping");
  c.sim.tangent_damping = get<double>(j, "sim", "tangent_damping");

  c.ppo.gamma = get<double>(j, "ppo", "gamma");
  c.ppo.learning_rate = get<double>(j, "ppo", "learning_rate");
  c.ppo.gae_lambda = get<double>(j, "ppo", "gae_lambda");
  c.ppo.clip_ratio = get<double>(j, "ppo", "clip_ratio");
  c.ppo.update_epochs = get<int>(j, "ppo", "update_epochs");
  c.ppo.minibatches = get<int>(j, "ppo", "minibatches");
  c.ppo.entropy_coef = get<double>(j, "ppo", "entropy_coef");
  c.ppo.value_coef = get<double>(j, "ppo", "value_coef");
  c.ppo.max_grad_norm = get<double>(j, "ppo", "max_grad_norm");
  c.ppo.horizon = get<int>(j, "ppo", "horizon");
  c.ppo.log_std_init = get<double>(j, "ppo", "log_std_init");
  c.ppo.log_std_min = get<double>(j, "ppo", "log_std_min");
  c.ppo.log_std_max = get<double>(j, "ppo", "log_std_max");
  c.ppo.value_output_scale = get<double>(j, "ppo", "value_output_scale");
  c.ppo.actor_hidden = get<std::vector<int>>(j, "ppo", "actor_hidden");
  c.ppo.critic_hidden = get<std::vector<int>>(j, "ppo", "critic_hidden");

  c.num_envs = get<int>(j, "rollout", "num_envs");

  c.eval_episodes = get<int>(j, "eval", "episodes");
  c.eval_seed = get<std::uint64_t>(j, "eval", "seed");
  c.eval_randomization = get<bool>(j, "eval", "randomization");
  c.pca_mode = get<std::string>(j, "eval", "pca_mode");

  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (preset != "light" && preset != "heavy") fail("robot.preset must be light|heavy");
  if (wheels != "active" && wheels != "fixed") fail("robot.wheels must be active|fixed");
  if (shaping_mode != "ed" && shaping_mode != "baseline")
    fail("shaping.mode must be ed|baseline");
  if (ed_interpretation != "normalized" && ed_interpretation != "literal")
    fail("shaping.interpretation must be normalized|literal");
  if (pca_mode != "per_step" && pca_mode != "flattened_episode")
    fail("eval.pca_mode must be per_step|flattened_episode");
  try {
    terrain_kind_from_string(terrain);
  } catch (const UnknownTerrainKind& e) {
    fail(e.what());
  }
  if (difficulty < 0.0 || difficulty > 1.0) fail("terrain.difficulty must lie in [0, 1]");
  if (episode.episode_length < 1) fail("episode.length must be >= 1");
  if (!(action_velocity_scale < 1.0)) fail("action.velocity_scale must be < 1.0");
  if (action_velocity_scale <= 0.0 || action_position_scale <= 0.0)
    fail("action scales must be positive");
  const double substep = episode.control_dt / episode.physics_substeps;
  if (std::abs(substep - sim.dt) > 1e-12)
    fail("episode.control_dt must equal physics_substeps * sim.dt");
  if (sim.dt <= 0.0 || sim.dt > 0.01) fail("sim.dt must lie in (0, 0.01]");
  const double snaps = observation.snapshot_interval / sim.dt;
  if (std::abs(snaps - std::round(snaps)) > 1e-9 || snaps < 1.0)
    fail("observation.snapshot_interval must be a multiple of sim.dt");
  if (cw0 <= 0.0 || cw0 > 1.0) fail("shaping.cw0 must lie in (0, 1]");
  if (progress_rate <= 0.0 || progress_rate >= 1.0)
    fail("shaping.progress_rate must lie in (0, 1)");
  if (expected_recovery_step <= 0.0 || growth_rate <= 0.0)
    fail("shaping.expected_recovery_step and growth_rate must be positive");
  if (ppo.gamma <= 0.0 || ppo.gamma > 1.0) fail("ppo.gamma must lie in (0, 1]");
  if (ppo.gae_lambda < 0.0 || ppo.gae_lambda > 1.0) fail("ppo.gae_lambda must lie in [0, 1]");
  if (ppo.clip_ratio <= 0.0) fail("ppo.clip_ratio must be positive");
  if (ppo.update_epochs < 1 || ppo.minibatches < 1)
    fail("ppo.update_epochs and minibatches must be >= 1");
  if (ppo.horizon < 1) fail("ppo.horizon must be >= 1");
  if (num_envs < 1) fail("rollout.num_envs must be >= 1");
  if (workers < 1) fail("run.workers must be >= 1");
  for (double n : {observation.noise_lin_vel, observation.noise_ang_vel,
                   observation.noise_gravity, observation.noise_joint_pos,
                   observation.noise_joint_vel, observation.noise_wheel_vel}) {
    if (n < 0.0) fail("observation noise stds must be >= 0");
  }
  if (observation.noise_joint_pos != 0.0)
    fail("observation.noise_joint_pos is kept exact (must be 0)");
  if (reward.sigma_p <= 0.0 || reward.sigma_h <= 0.0) fail("reward sigmas must be positive");
  if (reward.support_bonus < 0.0) fail("reward.support_bonus must be >= 0");
}

RobotModel RunConfig::make_robot() const {
  RobotModel m = make_preset(preset);
  m.wheel_mode = wheels == "fixed" ? WheelMode::fixed : WheelMode::active;
  return m;
}

EnvConfig RunConfig::make_env_config(const RobotModel& model) const {
  EnvConfig e;
  e.episode = episode;
  e.randomization = randomization;
  e.observation = observation;
  e.reward = reward;
  e.reward.target_joint_angles = model.default_joint_angles;
  if (model.wheel_mode == WheelMode::fixed) {
    e.reward.wheel_velocity = 0.0;  // no wheel-speed penalty without wheel actuation
  }
  e.shaping = make_shaping();
  e.sim = sim;
  e.terrain_kind = terrain_kind_from_string(terrain);
  e.terrain_difficulty = difficulty;
  e.action_position_scale = action_position_scale;
  e.action_velocity_scale = action_velocity_scale;
  return e;
}

ShapingState RunConfig::make_shaping() const {
  ShapingState s;
  s.expected_recovery_step = expected_recovery_step;
  s.growth_rate = growth_rate;
  s.cw = cw0;
  s.cw0 = cw0;
  s.progress_rate = progress_rate;
  s.episode_length = episode.episode_length;
  s.mode = ed_interpretation == "literal" ? ShapingState::Mode::literal
                                          : ShapingState::Mode::normalized;
  s.dynamic = shaping_mode == "ed";
  return s;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void write_config_file(const std::string& path, const RunConfig& cfg) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot write " + path);
  out << to_json(cfg).dump(2) << "\n";
}

}  // namespace recoverlab
