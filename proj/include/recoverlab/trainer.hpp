#pragma once

#include <optional>
#include <string>

#include "recoverlab/checkpoint.hpp"
#include "recoverlab/config.hpp"
#include "recoverlab/evalstats.hpp"
#include "recoverlab/rollout.hpp"

namespace recoverlab {

struct TrainResult {
  long env_steps = 0;
  int iterations = 0;
  double last_probe_success = -1.0;
  bool reached_target = false;
  double wall_seconds = 0.0;
  std::string final_checkpoint;
};

/// Orchestrates one training run: vectorized collection, PPO updates,
/// curriculum bookkeeping, periodic success probes, metrics and checkpoints.
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);
  /// Continue from a checkpoint (parameters, optimizer, curriculum, step
  /// counters). The checkpoint's preset must match the config.
  Trainer(const RunConfig& cfg, const Checkpoint& resume);

  TrainResult run();

  /// Deterministic success probe on the run's terrain (fresh eval streams).
  double probe_success(int episodes, std::uint64_t seed);

  Checkpoint snapshot() const;
  const GaussianPolicy<float>& policy() const { return policy_; }
  const RunConfig& config() const { return cfg_; }

 private:
  void init_networks();

  RunConfig cfg_;
  RobotModel robot_;
  EnvConfig env_cfg_;
  PpoConfig ppo_cfg_;
  ShapingState shaping_;
  GaussianPolicy<float> policy_;
  ValueNet<float> value_;
  AdamState<float> policy_adam_, value_adam_;
  Eigen::VectorXf log_std_m_, log_std_v_;
  Rng update_rng_;
  long env_steps_ = 0;
  long iteration_ = 0;
};

/// Evaluate a policy under a run config: deterministic actions, noise off,
/// `episodes` paired streams derived from `seed`.
EvalRun run_evaluation(const RunConfig& cfg, const GaussianPolicy<float>& policy,
                       TerrainKind kind, double difficulty, int episodes,
                       std::uint64_t seed, ThreadPool& pool);

}  // namespace recoverlab
