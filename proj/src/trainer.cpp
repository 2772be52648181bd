#include "recoverlab/trainer.hpp"

#include <chrono>
#include <filesystem>

#include "recoverlab/metrics.hpp"

namespace recoverlab {

namespace {

int resolve_workers(const RunConfig& cfg) {
  if (const char* env = std::getenv("RECOVERLAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return cfg.workers;
}

std::vector<int> net_widths(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w;
  w.push_back(in);
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg)
    : cfg_(cfg),
      robot_(cfg.make_robot()),
      env_cfg_(cfg.make_env_config(robot_)),
      ppo_cfg_(cfg.ppo),
      shaping_(cfg.make_shaping()),
      update_rng_(cfg.seed, 0x5F0FFEull) {
  init_networks();
}

Trainer::Trainer(const RunConfig& cfg, const Checkpoint& resume) : Trainer(cfg) {
  const std::string ckpt_preset =
      resume.config_echo.at("robot").at("preset").get<std::string>();
  if (ckpt_preset != cfg_.preset) {
    throw CheckpointError("checkpoint preset '" + ckpt_preset +
                          "' does not match configured preset '" + cfg_.preset + "'");
  }
  policy_ = resume.policy;
  value_ = resume.value;
  policy_adam_ = resume.policy_adam;
  value_adam_ = resume.value_adam;
  log_std_m_ = resume.log_std_m;
  log_std_v_ = resume.log_std_v;
  shaping_.cw = resume.cw;
  env_steps_ = resume.env_steps;
  iteration_ = resume.iteration;
}

void Trainer::init_networks() {
  Rng net_rng(cfg_.seed, 0xA110Cull);
  policy_.net = make_dense_net<float>(
      net_widths(kActorObsDim, ppo_cfg_.actor_hidden, kActionDim), net_rng, 0.01);
  policy_.log_std = Eigen::VectorXf::Constant(kActionDim,
                                              static_cast<float>(ppo_cfg_.log_std_init));
  value_.net = make_dense_net<float>(net_widths(kCriticObsDim, ppo_cfg_.critic_hidden, 1),
                                     net_rng, 1.0);
  value_.output_scale = static_cast<float>(ppo_cfg_.value_output_scale);
  policy_adam_.init_like(policy_.net);
  value_adam_.init_like(value_.net);
  log_std_m_ = Eigen::VectorXf::Zero(kActionDim);
  log_std_v_ = Eigen::VectorXf::Zero(kActionDim);
}

Checkpoint Trainer::snapshot() const {
  Checkpoint c;
  c.config_echo = to_json(cfg_);
  c.policy = policy_;
  c.value = value_;
  c.policy_adam = policy_adam_;
  c.value_adam = value_adam_;
  c.log_std_m = log_std_m_;
  c.log_std_v = log_std_v_;
  c.cw = shaping_.cw;
  c.master_seed = cfg_.seed;
  c.env_steps = env_steps_;
  c.iteration = iteration_;
  return c;
}

double Trainer::probe_success(int episodes, std::uint64_t seed) {
  ThreadPool pool(resolve_workers(cfg_));
  EnvConfig probe_cfg = env_cfg_;
  probe_cfg.randomization.enabled = cfg_.eval_randomization;
  const EvalRun run = evaluate(robot_, probe_cfg, policy_, episodes, seed, pool);
  return success_rate(run, SuccessCriteria{}).rate;
}

TrainResult Trainer::run() {
  namespace fs = std::filesystem;
  const auto t_start = std::chrono::steady_clock::now();
  fs::create_directories(cfg_.out_dir);
  write_config_file(cfg_.out_dir + "/config.json", cfg_);
  MetricsWriter metrics(cfg_.out_dir + "/metrics.jsonl");

  ThreadPool pool(resolve_workers(cfg_));
  VecEnv vec(robot_, env_cfg_, cfg_.num_envs, cfg_.seed);
  TrajectoryBatch batch;

  TrainResult result;
  double probe = -1.0;

  while (env_steps_ < cfg_.total_env_steps) {
    const CollectStats cstats =
        collect(vec, policy_, value_, ppo_cfg_, shaping_, pool, batch);
    const UpdateStats ustats = ppo_update(batch, policy_, value_, policy_adam_, log_std_m_,
                                          log_std_v_, value_adam_, ppo_cfg_, update_rng_);
    env_steps_ += cstats.env_steps;
    ++iteration_;

    const bool probe_now =
        cfg_.probe_interval > 0 && (iteration_ % cfg_.probe_interval == 0);
    if (probe_now) {
      probe = probe_success(cfg_.probe_episodes, cfg_.eval_seed + 0x9E3779B9ull);
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    nlohmann::json rec{{"iter", iteration_},
                       {"env_steps", env_steps_},
                       {"reward_mean", cstats.reward_mean},
                       {"cw", cstats.curriculum},
                       {"episodes_finished", cstats.episodes_finished},
                       {"policy_loss", ustats.policy_loss},
                       {"value_loss", ustats.value_loss},
                       {"entropy", ustats.entropy},
                       {"approx_kl", ustats.approx_kl},
                       {"clip_fraction", ustats.clip_fraction},
                       {"wall_s", wall}};
    rec["terms"] = {{"joint_position", cstats.term_means.joint_position},
                    {"height", cstats.term_means.height},
                    {"orientation_error", cstats.term_means.orientation_error},
                    {"collision", cstats.term_means.collision},
                    {"action_rate", cstats.term_means.action_rate},
                    {"joint_velocity", cstats.term_means.joint_velocity},
                    {"torque", cstats.term_means.torque},
                    {"acceleration", cstats.term_means.acceleration},
                    {"wheel_velocity", cstats.term_means.wheel_velocity},
                    {"support", cstats.term_means.support},
                    {"task_group", cstats.term_means.task_group},
                    {"behavior_group", cstats.term_means.behavior_group},
                    {"total", cstats.term_means.total}};
    if (probe_now) rec["probe_success"] = probe;
    metrics.write(rec);

    if (cfg_.checkpoint_interval > 0 && iteration_ % cfg_.checkpoint_interval == 0) {
      save_checkpoint(cfg_.out_dir + "/ckpt_iter" + std::to_string(iteration_) + ".bin",
                      snapshot());
    }
    if (probe_now && cfg_.target_success > 0.0 && probe >= cfg_.target_success) {
      result.reached_target = true;
      break;
    }
  }

  result.env_steps = env_steps_;
  result.iterations = static_cast<int>(iteration_);
  result.last_probe_success = probe;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  result.final_checkpoint = cfg_.out_dir + "/ckpt_final.bin";
  save_checkpoint(result.final_checkpoint, snapshot());
  return result;
}

EvalRun run_evaluation(const RunConfig& cfg, const GaussianPolicy<float>& policy,
                       TerrainKind kind, double difficulty, int episodes,
                       std::uint64_t seed, ThreadPool& pool) {
  const RobotModel robot = cfg.make_robot();
  EnvConfig env_cfg = cfg.make_env_config(robot);
  env_cfg.terrain_kind = kind;
  env_cfg.terrain_difficulty = difficulty;
  env_cfg.randomization.enabled = cfg.eval_randomization;
  return evaluate(robot, env_cfg, policy, episodes, seed, pool);
}

}  // namespace recoverlab
