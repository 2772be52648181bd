#include "recoverlab/rollout.hpp"

#include <algorithm>
#include <cmath>

namespace recoverlab {

ThreadPool::ThreadPool(int workers) {
  const int extra = std::max(0, workers - 1);
  ranges_.resize(extra);
  threads_.reserve(extra);
  for (int i = 0; i < extra; ++i) {
    threads_.emplace_back([this, i] { worker_loop(i); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadPool::worker_loop(int slot) {
  long seen = 0;
  for (;;) {
    std::function<void(int, int)> task;
    std::pair<int, int> range;
    {
      std::unique_lock lock(mutex_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      task = task_;
      range = ranges_[slot];
    }
    if (range.second > range.first) task(range.first, range.second);
    {
      std::lock_guard lock(mutex_);
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }
}

void ThreadPool::parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  auto run_range = [&fn](int begin, int end) {
    for (int i = begin; i < end; ++i) fn(i);
  };
  const int nw = workers();
  if (nw <= 1 || n == 1) {
    run_range(0, n);
    return;
  }
  const int chunks = nw;
  const int per = (n + chunks - 1) / chunks;
  {
    std::lock_guard lock(mutex_);
    task_ = run_range;
    for (std::size_t s = 0; s < ranges_.size(); ++s) {
      const int begin = static_cast<int>(s + 1) * per;
      ranges_[s] = {std::min(begin, n), std::min(begin + per, n)};
    }
    pending_ = static_cast<int>(threads_.size());
    ++generation_;
  }
  start_cv_.notify_all();
  run_range(0, std::min(per, n));  // chunk 0 on the calling thread
  std::unique_lock lock(mutex_);
  done_cv_.wait(lock, [&] { return pending_ == 0; });
}

VecEnv::VecEnv(const RobotModel& nominal, const EnvConfig& cfg, int n,
               std::uint64_t master_seed)
    : nominal_(nominal), cfg_(cfg), master_seed_(master_seed) {
  envs_.reserve(n);
  for (int i = 0; i < n; ++i) {
    envs_.push_back(std::make_unique<Env>(nominal_, cfg_, master_seed_, i));
  }
}

void VecEnv::set_curriculum(double cw) {
  for (auto& e : envs_) e->config().shaping.cw = cw;
}

CollectStats collect(VecEnv& vec, GaussianPolicy<float>& policy, ValueNet<float>& value,
                     const PpoConfig& cfg, ShapingState& shaping, ThreadPool& pool,
                     TrajectoryBatch& batch) {
  const int n = vec.size();
  const int actor_dim = kActorObsDim, critic_dim = kCriticObsDim;
  batch.resize(n, cfg.horizon, actor_dim, critic_dim, kActionDim);

  vec.set_curriculum(shaping.cw);

  // current observations, refreshed from each step's result
  Eigen::MatrixXf obs(n, actor_dim), cobs(n, critic_dim);
  pool.parallel_for(n, [&](int i) {
    Env& e = vec.env(i);
    obs.row(i) = e.actor_obs().cast<float>();
    cobs.row(i) = e.critic_obs().cast<float>();
  });

  CollectStats stats;
  stats.curriculum = shaping.cw;
  Eigen::MatrixXf means(n, kActionDim);
  Eigen::VectorXf values(n);
  DenseNet<float>::Workspace ws_a, ws_c;
  std::vector<RewardTerms> step_terms(n);
  std::vector<std::uint8_t> step_failed(n);

  double reward_sum = 0.0;
  RewardTerms term_sum;
  auto accumulate_terms = [](RewardTerms& acc, const RewardTerms& t) {
    acc.joint_position += t.joint_position;
    acc.height += t.height;
    acc.orientation_error += t.orientation_error;
    acc.collision += t.collision;
    acc.action_rate += t.action_rate;
    acc.joint_velocity += t.joint_velocity;
    acc.torque += t.torque;
    acc.acceleration += t.acceleration;
    acc.wheel_velocity += t.wheel_velocity;
    acc.support += t.support;
    acc.task_group += t.task_group;
    acc.behavior_group += t.behavior_group;
    acc.wheel_term += t.wheel_term;
    acc.total += t.total;
  };

  for (int t = 0; t < cfg.horizon; ++t) {
    batch.actor_obs.middleRows(t * n, n) = obs;
    batch.critic_obs.middleRows(t * n, n) = cobs;

    means = policy.net.forward(obs, ws_a);
    values = value.net.forward(cobs, ws_c).col(0) * value.output_scale;

    pool.parallel_for(n, [&](int i) {
      Env& e = vec.env(i);
      const Eigen::VectorXf mean_i = means.row(i).transpose();
      auto [action, logp] = policy_sample<float>(mean_i, policy.log_std, e.rng());
      const int r = batch.row(t, i);
      batch.actions.row(r) = action.transpose();
      batch.log_probs[r] = logp;
      batch.values[r] = values[i];

      const EnvStepResult res = e.step(action.cast<double>());
      batch.rewards[r] = static_cast<float>(res.reward);
      batch.dones[r] = res.done ? 1 : 0;
      step_terms[i] = res.terms;
      step_failed[i] = res.failed ? 1 : 0;
      if (!res.done) {
        obs.row(i) = res.actor_obs.cast<float>();
        cobs.row(i) = res.critic_obs.cast<float>();
      }
    });

    bool timeout_wave = false;
    bool any_done = false;
    for (int i = 0; i < n; ++i) {
      const int r = batch.row(t, i);
      reward_sum += batch.rewards[r];
      accumulate_terms(term_sum, step_terms[i]);
      if (batch.dones[r]) {
        any_done = true;
        ++stats.episodes_finished;
        if (!step_failed[i]) timeout_wave = true;
      }
    }

    if (any_done) {
      // fixed-length episodes: timeouts hit every env on the same step, so
      // one curriculum update covers the whole reset wave; lone failure
      // resets do not advance the curriculum
      if (timeout_wave) {
        shaping.cw = curriculum_step(shaping.cw, shaping.progress_rate);
        vec.set_curriculum(shaping.cw);
      }
      pool.parallel_for(n, [&](int i) {
        Env& e = vec.env(i);
        if (!e.done()) return;
        e.reset();
        obs.row(i) = e.actor_obs().cast<float>();
        cobs.row(i) = e.critic_obs().cast<float>();
      });
    }
  }

  values = value.net.forward(cobs, ws_c).col(0) * value.output_scale;
  batch.bootstrap_values = values;

  const double inv = 1.0 / batch.rows();
  stats.reward_mean = reward_sum * inv;
  term_sum.joint_position *= inv;
  term_sum.height *= inv;
  term_sum.orientation_error *= inv;
  term_sum.collision *= inv;
  term_sum.action_rate *= inv;
  term_sum.joint_velocity *= inv;
  term_sum.torque *= inv;
  term_sum.acceleration *= inv;
  term_sum.wheel_velocity *= inv;
  term_sum.support *= inv;
  term_sum.task_group *= inv;
  term_sum.behavior_group *= inv;
  term_sum.wheel_term *= inv;
  term_sum.total *= inv;
  stats.term_means = term_sum;
  stats.env_steps = static_cast<long>(n) * cfg.horizon;
  return stats;
}

EvalRun evaluate(const RobotModel& nominal, const EnvConfig& cfg,
                 const GaussianPolicy<float>& policy, int n_episodes, std::uint64_t seed,
                 ThreadPool& pool) {
  EvalRun run;
  run.episodes.resize(n_episodes);

  EnvConfig eval_cfg = cfg;
  eval_cfg.observation.noise_enabled = false;
  eval_cfg.randomization.action_noise_std = 0.0;

  pool.parallel_for(n_episodes, [&](int e) {
    Env env(nominal, eval_cfg, seed, static_cast<std::uint64_t>(e));
    EpisodeLog& log = run.episodes[e];
    log.episode_index = e;
    log.terrain_kind = eval_cfg.terrain_kind;
    log.model = env.episode_model();
    log.terrain = env.terrain();
    const int T = eval_cfg.episode.episode_length;
    log.base_height.reserve(T);
    log.joint_torque.reserve(T);
    log.joint_velocity.reserve(T);
    log.wheel_velocity.reserve(T);
    log.action.reserve(T);

    Eigen::VectorXf obs = env.actor_obs().cast<float>();
    while (!env.done()) {
      const Eigen::VectorXf mean = policy.net.forward_one(obs);
      const Vec6 action = mean.cast<double>();
      const EnvStepResult res = env.step(action);
      log.base_height.push_back(env.base_height());
      log.joint_torque.push_back(env.state().applied_torques.head<4>());
      log.joint_velocity.push_back(env.state().joint_velocities);
      log.wheel_velocity.push_back(env.state().wheel_velocities);
      log.action.push_back(action);
      if (res.failed) {
        log.failed = true;
        break;
      }
      if (!res.done) obs = res.actor_obs.cast<float>();
    }
    log.final_state = env.state();
  });
  return run;
}

}  // namespace recoverlab
