// Command-line front end: training, evaluation and the comparison studies.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "recoverlab/checkpoint.hpp"
#include "recoverlab/config.hpp"
#include "recoverlab/errors.hpp"
#include "recoverlab/evalstats.hpp"
#include "recoverlab/metrics.hpp"
#include "recoverlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace recoverlab;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheckpoint = 4;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> preset, wheels, shaping, terrain, out;
  std::optional<double> difficulty;
  std::optional<int> episodes, envs;
  std::optional<long> steps;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--workers", f.workers, "worker threads (RECOVERLAB_THREADS overrides)");
  cmd->add_option("--preset", f.preset, "robot preset: light|heavy");
  cmd->add_option("--wheels", f.wheels, "wheel mode: active|fixed");
  cmd->add_option("--shaping", f.shaping, "reward shaping: ed|baseline");
  cmd->add_option("--terrain", f.terrain,
                  "flat|random_boxes|rough|slope|stairs|inverted_stairs");
  cmd->add_option("--difficulty", f.difficulty, "terrain difficulty in [0,1]");
  cmd->add_option("--episodes", f.episodes, "evaluation episodes");
  cmd->add_option("--steps", f.steps, "total environment steps to train");
  cmd->add_option("--envs", f.envs, "parallel environments");
  cmd->add_option("--out", f.out, "output directory");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = load_config_file(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.workers) cfg.workers = *f.workers;
  if (f.preset) cfg.preset = *f.preset;
  if (f.wheels) cfg.wheels = *f.wheels;
  if (f.shaping) cfg.shaping_mode = *f.shaping;
  if (f.terrain) cfg.terrain = *f.terrain;
  if (f.difficulty) cfg.difficulty = *f.difficulty;
  if (f.episodes) cfg.eval_episodes = *f.episodes;
  if (f.steps) cfg.total_env_steps = *f.steps;
  if (f.envs) cfg.num_envs = *f.envs;
  if (f.out) cfg.out_dir = *f.out;
  cfg.validate();
  return cfg;
}

int resolve_workers(const RunConfig& cfg) {
  if (const char* env = std::getenv("RECOVERLAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return cfg.workers;
}

SuccessCriteria criteria_from_config(const RunConfig& cfg) {
  SuccessCriteria c;
  c.min_base_height = cfg.reward.target_height;
  return c;
}

void write_eval_outputs(const std::string& dir, const RunConfig& cfg, const EvalRun& run,
                        const EvalReport& rep) {
  fs::create_directories(dir);
  json j{{"terrain", rep.terrain},
         {"episodes", rep.episodes},
         {"success_rate", rep.success_rate},
         {"mean_joint_torque", rep.mean_joint_torque},
         {"pca_variances", rep.pca_variances},
         {"failed_episodes", rep.failed_episodes}};
  j["joints"] = {{"max_velocity_mean", rep.joints.max_velocity_mean},
                 {"max_velocity_std", rep.joints.max_velocity_std},
                 {"torque_mean", rep.joints.torque_mean},
                 {"torque_std", rep.joints.torque_std},
                 {"velocity_violations", rep.joints.velocity_violations},
                 {"torque_violations", rep.joints.torque_violations}};
  std::ofstream(dir + "/eval_report.json") << j.dump(2) << "\n";

  std::vector<std::vector<double>> height_rows;
  for (std::size_t t = 0; t < rep.height.mean.size(); ++t) {
    height_rows.push_back({static_cast<double>(t), t * cfg.episode.control_dt,
                           rep.height.mean[t], rep.height.variance[t]});
  }
  write_csv(dir + "/height_series.csv", {"step", "time_s", "mean", "variance"}, height_rows);

  std::vector<std::vector<double>> joint_rows;
  for (int jnt = 0; jnt < kNumJoints; ++jnt) {
    joint_rows.push_back({static_cast<double>(jnt), rep.joints.max_velocity_mean[jnt],
                          rep.joints.max_velocity_std[jnt], rep.joints.torque_mean[jnt],
                          rep.joints.torque_std[jnt]});
  }
  write_csv(dir + "/joint_stats.csv",
            {"joint", "max_velocity_mean", "max_velocity_std", "torque_mean", "torque_std"},
            joint_rows);

  std::vector<std::vector<double>> pca_rows;
  for (std::size_t k = 0; k < rep.pca_variances.size(); ++k) {
    pca_rows.push_back({static_cast<double>(k + 1), rep.pca_variances[k]});
  }
  write_csv(dir + "/pca.csv", {"component", "variance"}, pca_rows);

  const SuccessResult sr = success_rate(run, criteria_from_config(cfg));
  std::vector<std::vector<double>> ep_rows;
  for (std::size_t e = 0; e < sr.per_episode.size(); ++e) {
    ep_rows.push_back({static_cast<double>(e), static_cast<double>(sr.per_episode[e]),
                       static_cast<double>(run.episodes[e].failed)});
  }
  write_csv(dir + "/per_episode.csv", {"episode", "success", "failed"}, ep_rows);
}

EvalReport run_and_report(const RunConfig& cfg, const GaussianPolicy<float>& policy,
                          const std::string& out_dir) {
  ThreadPool pool(resolve_workers(cfg));
  const TerrainKind kind = terrain_kind_from_string(cfg.terrain);
  const EvalRun run =
      run_evaluation(cfg, policy, kind, cfg.difficulty, cfg.eval_episodes, cfg.eval_seed, pool);
  const PcaSampleMode mode = cfg.pca_mode == "flattened_episode"
                                 ? PcaSampleMode::flattened_episode
                                 : PcaSampleMode::per_step;
  const EvalReport rep =
      make_report(run, cfg.make_robot(), criteria_from_config(cfg), kind, mode);
  write_eval_outputs(out_dir, cfg, run, rep);
  return rep;
}

RunConfig config_from_checkpoint(const Checkpoint& ckpt, const CommonFlags& f) {
  RunConfig cfg = config_from_json(ckpt.config_echo);
  if (f.preset && *f.preset != cfg.preset) {
    throw CheckpointError("checkpoint was trained with preset '" + cfg.preset +
                          "', requested '" + *f.preset + "'");
  }
  if (f.seed) cfg.eval_seed = *f.seed;
  if (f.workers) cfg.workers = *f.workers;
  if (f.terrain) cfg.terrain = *f.terrain;
  if (f.difficulty) cfg.difficulty = *f.difficulty;
  if (f.episodes) cfg.eval_episodes = *f.episodes;
  if (f.out) cfg.out_dir = *f.out;
  cfg.validate();
  return cfg;
}

int cmd_train(const CommonFlags& flags, const std::string& resume_path) {
  RunConfig cfg = resolve_config(flags);
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);
  Trainer trainer = resume ? Trainer(cfg, *resume) : Trainer(cfg);
  const TrainResult result = trainer.run();
  std::cout << "trained " << result.env_steps << " env steps in " << result.iterations
            << " iterations (" << result.wall_seconds << " s)\n"
            << "final checkpoint: " << result.final_checkpoint << "\n";
  if (result.last_probe_success >= 0.0) {
    std::cout << "last probe success: " << result.last_probe_success << "\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const CommonFlags& flags) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig cfg = config_from_checkpoint(ckpt, flags);
  const std::string out = flags.out ? *flags.out : cfg.out_dir + "/eval";
  const EvalReport rep = run_and_report(cfg, ckpt.policy, out);
  std::cout << "terrain " << rep.terrain << ": success " << rep.success_rate * 100.0
            << "% over " << rep.episodes << " episodes, mean joint torque "
            << rep.mean_joint_torque << " N*m\n"
            << "report written to " << out << "\n";
  return kExitOk;
}

struct ArmResult {
  std::string name;
  std::uint64_t seed;
  double success = 0.0;
  double mean_torque = 0.0;
  std::vector<double> pca;
};

int cmd_ablate(const CommonFlags& flags, const std::string& arms, int n_seeds) {
  RunConfig base = resolve_config(flags);
  const std::string out_root = base.out_dir;

  std::vector<std::pair<std::string, std::string>> arm_specs;  // (shaping, wheels)
  if (arms == "shaping" || arms == "all") {
    arm_specs.emplace_back("ed", base.wheels);
    arm_specs.emplace_back("baseline", base.wheels);
  }
  if (arms == "wheels" || arms == "all") {
    arm_specs.emplace_back(base.shaping_mode, "active");
    arm_specs.emplace_back(base.shaping_mode, "fixed");
  }
  if (arm_specs.empty()) throw ConfigError("ablate: --arms must be shaping|wheels|all");

  std::vector<ArmResult> results;
  for (const auto& [shaping, wheels] : arm_specs) {
    for (int k = 0; k < n_seeds; ++k) {
      RunConfig cfg = base;
      cfg.shaping_mode = shaping;
      cfg.wheels = wheels;
      cfg.seed = base.seed + static_cast<std::uint64_t>(k);
      const std::string arm_name = shaping + "_" + wheels;
      cfg.out_dir = out_root + "/" + arm_name + "/seed" + std::to_string(cfg.seed);

      std::cout << "=== arm " << arm_name << " seed " << cfg.seed << " ===\n";
      Trainer trainer(cfg);
      trainer.run();

      const EvalReport rep =
          run_and_report(cfg, trainer.policy(), cfg.out_dir + "/eval");
      ArmResult r;
      r.name = arm_name;
      r.seed = cfg.seed;
      r.success = rep.success_rate;
      r.mean_torque = rep.mean_joint_torque;
      r.pca = rep.pca_variances;
      results.push_back(r);
      std::cout << arm_name << " seed " << cfg.seed << ": success " << r.success * 100.0
                << "%, torque " << r.mean_torque << "\n";
    }
  }

  fs::create_directories(out_root);
  std::vector<std::vector<double>> success_rows, pca_rows;
  json summary = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const ArmResult& r = results[i];
    success_rows.push_back({static_cast<double>(i), static_cast<double>(r.seed),
                            r.success, r.mean_torque});
    pca_rows.push_back({static_cast<double>(i), static_cast<double>(r.seed),
                        r.pca.size() > 0 ? r.pca[0] : 0.0, r.pca.size() > 1 ? r.pca[1] : 0.0});
    summary.push_back({{"arm", r.name},
                       {"seed", r.seed},
                       {"success_rate", r.success},
                       {"mean_joint_torque", r.mean_torque},
                       {"pca_variances", r.pca}});
  }
  write_csv(out_root + "/success_table.csv",
            {"arm_index", "seed", "success_rate", "mean_torque"}, success_rows);
  write_csv(out_root + "/pca_table.csv", {"arm_index", "seed", "pc1", "pc2"}, pca_rows);

  // paired torque reduction for the wheel arm
  json torque_cmp;
  double active_sum = 0.0, fixed_sum = 0.0;
  int active_n = 0, fixed_n = 0;
  for (const ArmResult& r : results) {
    if (r.name.ends_with("_active")) {
      active_sum += r.mean_torque;
      ++active_n;
    }
    if (r.name.ends_with("_fixed")) {
      fixed_sum += r.mean_torque;
      ++fixed_n;
    }
  }
  if (active_n > 0 && fixed_n > 0) {
    const double active_mean = active_sum / active_n;
    const double fixed_mean = fixed_sum / fixed_n;
    torque_cmp = {{"wheel_active", active_mean},
                  {"wheel_fixed", fixed_mean},
                  {"reduction_percent", 100.0 * (fixed_mean - active_mean) / fixed_mean}};
    write_csv(out_root + "/torque_table.csv",
              {"wheel_active", "wheel_fixed", "reduction_percent"},
              {{active_mean, fixed_mean,
                100.0 * (fixed_mean - active_mean) / fixed_mean}});
  }
  json out{{"arms", summary}};
  if (!torque_cmp.is_null()) out["torque_comparison"] = torque_cmp;
  std::ofstream(out_root + "/ablate_summary.json") << out.dump(2) << "\n";
  std::cout << "summary written to " << out_root << "\n";
  return kExitOk;
}

int cmd_terrain_eval(const std::string& ckpt_path, const CommonFlags& flags) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig cfg = config_from_checkpoint(ckpt, flags);
  const std::string out = flags.out ? *flags.out : cfg.out_dir + "/terrain_eval";
  fs::create_directories(out);
  ThreadPool pool(resolve_workers(cfg));

  std::vector<std::vector<double>> rows;
  json summary = json::array();
  for (int k = 0; k < 6; ++k) {
    const auto kind = static_cast<TerrainKind>(k);
    const EvalRun run = run_evaluation(cfg, ckpt.policy, kind, cfg.difficulty,
                                       cfg.eval_episodes, cfg.eval_seed, pool);
    const double rate = success_rate(run, criteria_from_config(cfg)).rate;
    rows.push_back({static_cast<double>(k), rate, static_cast<double>(cfg.eval_episodes)});
    summary.push_back({{"terrain", terrain_kind_name(kind)}, {"success_rate", rate}});
    std::cout << terrain_kind_name(kind) << ": " << rate * 100.0 << "%\n";
  }
  write_csv(out + "/terrain_success.csv", {"terrain_index", "success_rate", "episodes"}, rows);
  std::ofstream(out + "/terrain_success.json") << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_perturb(const std::string& ckpt_path, const CommonFlags& flags, int pushes,
                double imp_min, double imp_max) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig cfg = config_from_checkpoint(ckpt, flags);
  const RobotModel model = cfg.make_robot();
  const EnvConfig env_cfg = cfg.make_env_config(model);
  const PerturbationResult r = perturbation_trial(
      model, env_cfg, ckpt.policy, criteria_from_config(cfg), pushes, imp_min, imp_max,
      cfg.eval_seed);
  json j{{"pushes", r.pushes},
         {"recovered", r.recovered},
         {"per_push", r.per_push},
         {"impulse_min", imp_min},
         {"impulse_max", imp_max}};
  const std::string out = flags.out ? *flags.out : cfg.out_dir + "/perturb";
  fs::create_directories(out);
  std::ofstream(out + "/perturb.json") << j.dump(2) << "\n";
  std::cout << "recovered " << r.recovered << "/" << r.pushes << " pushes\n";
  return kExitOk;
}

int cmd_export(const std::string& run_dir, const CommonFlags& flags) {
  const std::string metrics_path = run_dir + "/metrics.jsonl";
  std::ifstream in(metrics_path);
  if (!in) throw ConfigError("export: cannot open " + metrics_path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    rows.push_back({j.value("iter", 0.0), j.value("env_steps", 0.0),
                    j.value("reward_mean", 0.0), j.value("cw", 0.0),
                    j.value("policy_loss", 0.0), j.value("value_loss", 0.0),
                    j.value("entropy", 0.0), j.value("approx_kl", 0.0),
                    j.value("probe_success", -1.0), j.value("wall_s", 0.0)});
  }
  const std::string out = flags.out ? *flags.out : run_dir;
  write_csv(out + "/training_curve.csv",
            {"iter", "env_steps", "reward_mean", "cw", "policy_loss", "value_loss", "entropy",
             "approx_kl", "probe_success", "wall_s"},
            rows);
  std::cout << "wrote " << out << "/training_curve.csv (" << rows.size() << " rows)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planar wheeled-legged fall-recovery lab"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, ablate_flags, terrain_flags, perturb_flags,
      export_flags;
  std::string resume_path, ckpt_path, run_dir, arms = "shaping";
  int seeds = 3, pushes = 5;
  double imp_min = 1.8, imp_max = 2.6;

  CLI::App* train = app.add_subcommand("train", "train a recovery policy");
  add_common(train, train_flags);
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  add_common(eval, eval_flags);

  CLI::App* ablate = app.add_subcommand("ablate", "train and compare study arms");
  add_common(ablate, ablate_flags);
  ablate->add_option("--arms", arms, "shaping|wheels|all");
  ablate->add_option("--seeds", seeds, "paired seeds per arm");

  CLI::App* terrain = app.add_subcommand("terrain-eval", "evaluate across all terrains");
  terrain->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  add_common(terrain, terrain_flags);

  CLI::App* perturb = app.add_subcommand("perturb", "repeated push-recovery trial");
  perturb->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
  add_common(perturb, perturb_flags);
  perturb->add_option("--pushes", pushes, "number of pushes");
  perturb->add_option("--impulse-min", imp_min, "smallest base speed impulse, m/s");
  perturb->add_option("--impulse-max", imp_max, "largest base speed impulse, m/s");

  CLI::App* exp = app.add_subcommand("export", "metrics.jsonl -> CSV");
  exp->add_option("run_dir", run_dir, "training output directory")->required();
  add_common(exp, export_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_flags, resume_path);
    if (eval->parsed()) return cmd_eval(ckpt_path, eval_flags);
    if (ablate->parsed()) return cmd_ablate(ablate_flags, arms, seeds);
    if (terrain->parsed()) return cmd_terrain_eval(ckpt_path, terrain_flags);
    if (perturb->parsed()) return cmd_perturb(ckpt_path, perturb_flags, pushes, imp_min, imp_max);
    if (exp->parsed()) return cmd_export(run_dir, export_flags);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NonFiniteState& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
