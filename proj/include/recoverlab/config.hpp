#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "recoverlab/env.hpp"
#include "recoverlab/ppo.hpp"

namespace recoverlab {

/// Everything a run needs, loadable from a single JSON file. Unknown keys are
/// rejected; every field has a default; the effective config is echoed into
/// the output directory.
struct RunConfig {
  // run
  std::uint64_t seed = 1;
  std::string out_dir = "runs/out";
  int workers = 1;
  long total_env_steps = 6'000'000;
  int checkpoint_interval = 200;  // iterations
  int probe_interval = 25;        // iterations between success probes
  int probe_episodes = 64;
  double target_success = -1.0;   // > 0 stops training once the probe reaches it

  // robot
  std::string preset = "light";
  std::string wheels = "active";  // active | fixed

  // shaping
  std::string shaping_mode = "ed";                // ed | baseline
  std::string ed_interpretation = "normalized";   // normalized | literal
  double expected_recovery_step = 125.0;
  double growth_rate = 3.0;
  double cw0 = 0.3;
  double progress_rate = 0.968;

  // terrain
  std::string terrain = "flat";
  double difficulty = 0.5;

  EpisodeConfig episode;
  DomainRandomizationConfig randomization;
  ObservationSpec observation;
  RewardScales reward;
  SimParams sim;
  PpoConfig ppo;

  double action_position_scale = 0.5;
  double action_velocity_scale = 0.8;

  int num_envs = 256;

  // eval
  int eval_episodes = 256;
  std::uint64_t eval_seed = 9001;
  bool eval_randomization = true;
  std::string pca_mode = "per_step";  // per_step | flattened_episode

  RobotModel make_robot() const;
  EnvConfig make_env_config(const RobotModel& model) const;
  ShapingState make_shaping() const;

  /// Consistency checks beyond per-field defaults (throws ConfigError).
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);  // throws ConfigError

RunConfig load_config_file(const std::string& path);  // throws ConfigError
void write_config_file(const std::string& path, const RunConfig& cfg);

}  // namespace recoverlab
