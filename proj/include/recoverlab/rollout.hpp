#pragma once

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "recoverlab/env.hpp"
#include "recoverlab/ppo.hpp"

namespace recoverlab {

/// Persistent worker pool. parallel_for splits [0, n) into fixed contiguous
/// chunks, so results never depend on scheduling; with 1 worker it runs
/// inline.
class ThreadPool {
 public:
  explicit ThreadPool(int workers);
  ~ThreadPool();
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  void parallel_for(int n, const std::function<void(int)>& fn);
  int workers() const { return static_cast<int>(threads_.size()) + 1; }

 private:
  void worker_loop(int slot);

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable start_cv_, done_cv_;
  std::function<void(int, int)> task_;  // [begin, end)
  std::vector<std::pair<int, int>> ranges_;
  long generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

/// N independent environments with per-index rng streams derived from the
/// master seed. Batch assembly is by env index, so results are identical for
/// any worker count.
class VecEnv {
 public:
  VecEnv(const RobotModel& nominal, const EnvConfig& cfg, int n, std::uint64_t master_seed);

  int size() const { return static_cast<int>(envs_.size()); }
  Env& env(int i) { return *envs_[i]; }
  const RobotModel& nominal() const { return nominal_; }
  const EnvConfig& config() const { return cfg_; }
  std::uint64_t master_seed() const { return master_seed_; }

  /// Propagate a new curriculum weight to every env (effective next reset).
  void set_curriculum(double cw);

 private:
  RobotModel nominal_;
  EnvConfig cfg_;
  std::uint64_t master_seed_;
  std::vector<std::unique_ptr<Env>> envs_;
};

struct CollectStats {
  double reward_mean = 0.0;
  RewardTerms term_means;  // unscaled term averages over the batch
  int episodes_finished = 0;
  double curriculum = 0.0;
  long env_steps = 0;
};

/// Step all envs for `horizon` control steps under the sampling policy.
/// Episodes that time out are reset in place after one curriculum update per
/// reset wave (episodes are fixed-length, so waves are synchronized).
CollectStats collect(VecEnv& vec, GaussianPolicy<float>& policy, ValueNet<float>& value,
                     const PpoConfig& cfg, ShapingState& shaping, ThreadPool& pool,
                     TrajectoryBatch& batch);

/// One evaluation episode's logs (one sample per control step).
struct EpisodeLog {
  int episode_index = 0;
  bool failed = false;
  SimState final_state;
  RobotModel model;  // the episode's randomized model
  TerrainKind terrain_kind = TerrainKind::flat;
  Terrain terrain;
  std::vector<double> base_height;
  std::vector<Vec4> joint_torque;
  std::vector<Vec4> joint_velocity;
  std::vector<Vec2> wheel_velocity;
  std::vector<Vec6> action;
};

struct EvalRun {
  std::vector<EpisodeLog> episodes;
};

/// Run n full episodes with the deterministic (mean-action) policy and
/// observation/action noise off. Episode i uses rng stream (seed, i), so runs
/// are paired across policies and worker counts.
EvalRun evaluate(const RobotModel& nominal, const EnvConfig& cfg,
                 const GaussianPolicy<float>& policy, int n_episodes, std::uint64_t seed,
                 ThreadPool& pool);

}  // namespace recoverlab
