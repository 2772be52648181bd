#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "recoverlab/ppo.hpp"

namespace recoverlab {

inline constexpr std::uint32_t kCheckpointMagic = 0x524C434Bu;  // "RLCK"
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned training snapshot: config echo, network parameters, optimizer
/// state, curriculum weight and step counters. save -> load -> save is
/// byte-identical.
struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  nlohmann::json config_echo;
  GaussianPolicy<float> policy;
  ValueNet<float> value;
  AdamState<float> policy_adam;
  Eigen::VectorXf log_std_m, log_std_v;
  AdamState<float> value_adam;
  double cw = 0.3;
  std::uint64_t master_seed = 0;
  long env_steps = 0;
  long iteration = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);  // throws CheckpointError

}  // namespace recoverlab
