#include "recoverlab/evalstats.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "recoverlab/errors.hpp"

namespace recoverlab {

bool is_recovered(const SimState& final_state, const RobotModel& model,
                  const SuccessCriteria& criteria, TerrainKind kind, const Terrain& terrain) {
  const double dev =
      (final_state.joint_angles - model.default_joint_angles).cwiseAbs().maxCoeff();
  if (dev > criteria.max_joint_deviation) return false;

  if (kind == TerrainKind::flat) {
    const double h = final_state.base_position.y() -
                     terrain.height_at(final_state.base_position.x());
    if (!(h > criteria.min_base_height)) return false;
    const double vmax = final_state.joint_velocities.cwiseAbs().maxCoeff();
    return vmax < criteria.max_joint_velocity;
  }
  const double ori = (final_state.projected_gravity() - Vec2(0.0, -1.0)).squaredNorm();
  return ori < criteria.max_orientation_error;
}

SuccessResult success_rate(const EvalRun& run, const SuccessCriteria& criteria) {
  SuccessResult res;
  res.per_episode.reserve(run.episodes.size());
  int ok = 0;
  for (const EpisodeLog& ep : run.episodes) {
    const bool good = !ep.failed && is_recovered(ep.final_state, ep.model, criteria,
                                                 ep.terrain_kind, ep.terrain);
    res.per_episode.push_back(good ? 1 : 0);
    if (good) ++ok;
  }
  res.rate = run.episodes.empty() ? 0.0 : static_cast<double>(ok) / run.episodes.size();
  return res;
}

double mean_joint_torque(const EvalRun& run) {
  double sum = 0.0;
  long count = 0;
  for (const EpisodeLog& ep : run.episodes) {
    for (const Vec4& tau : ep.joint_torque) {
      sum += tau.cwiseAbs().sum();
      count += kNumJoints;
    }
  }
  if (count == 0) throw EmptyLogs("mean_joint_torque: no torque samples");
  return sum / static_cast<double>(count);
}

Eigen::MatrixXd pca_action_matrix(const EvalRun& run, PcaSampleMode mode) {
  if (mode == PcaSampleMode::per_step) {
    long rows = 0;
    for (const EpisodeLog& ep : run.episodes) rows += static_cast<long>(ep.action.size());
    Eigen::MatrixXd X(rows, kActionDim);
    long r = 0;
    for (const EpisodeLog& ep : run.episodes) {
      for (const Vec6& a : ep.action) X.row(r++) = a.transpose();
    }
    return X;
  }
  // one row per episode; episodes must share the step count
  std::size_t steps = 0;
  for (const EpisodeLog& ep : run.episodes) steps = std::max(steps, ep.action.size());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<long>(run.episodes.size()),
                                            static_cast<long>(steps) * kActionDim);
  for (std::size_t e = 0; e < run.episodes.size(); ++e) {
    const auto& actions = run.episodes[e].action;
    for (std::size_t t = 0; t < actions.size(); ++t) {
      X.block<1, kActionDim>(static_cast<long>(e), static_cast<long>(t) * kActionDim) =
          actions[t].transpose();
    }
  }
  return X;
}

std::vector<double> pca_top_variances(const Eigen::MatrixXd& samples, int k) {
  const long n = samples.rows();
  if (n < 2) throw InsufficientData("pca_top_variances: need at least 2 samples");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::VectorXd ev = solver.eigenvalues();  // ascending
  std::vector<double> top;
  const int kk = std::min<int>(k, static_cast<int>(ev.size()));
  for (int i = 0; i < kk; ++i) {
    top.push_back(std::max(0.0, ev[ev.size() - 1 - i]));
  }
  return top;
}

HeightStats height_trajectory_stats(const EvalRun& run) {
  std::size_t steps = 0;
  for (const EpisodeLog& ep : run.episodes) steps = std::max(steps, ep.base_height.size());
  if (steps == 0) throw EmptyLogs("height_trajectory_stats: no height samples");
  HeightStats out;
  out.mean.assign(steps, 0.0);
  out.variance.assign(steps, 0.0);
  std::vector<long> counts(steps, 0);
  for (const EpisodeLog& ep : run.episodes) {
    for (std::size_t t = 0; t < ep.base_height.size(); ++t) {
      out.mean[t] += ep.base_height[t];
      ++counts[t];
    }
  }
  for (std::size_t t = 0; t < steps; ++t) {
    if (counts[t] > 0) out.mean[t] /= static_cast<double>(counts[t]);
  }
  for (const EpisodeLog& ep : run.episodes) {
    for (std::size_t t = 0; t < ep.base_height.size(); ++t) {
      const double d = ep.base_height[t] - out.mean[t];
      out.variance[t] += d * d;
    }
  }
  for (std::size_t t = 0; t < steps; ++t) {
    if (counts[t] > 0) out.variance[t] /= static_cast<double>(counts[t]);
  }
  return out;
}

JointStats joint_motion_stats(const EvalRun& run, const RobotModel& model) {
  JointStats stats;
  bool any = false;
  constexpr double tol = 1e-9;
  // per-episode peak velocities, then mean +- std over episodes
  std::array<std::vector<double>, kNumJoints> peaks;
  std::array<std::vector<double>, kNumJoints> torques;
  for (const EpisodeLog& ep : run.episodes) {
    if (ep.joint_velocity.empty()) continue;
    any = true;
    std::array<double, kNumJoints> peak{};
    for (const Vec4& v : ep.joint_velocity) {
      for (int j = 0; j < kNumJoints; ++j) {
        const double a = std::abs(v[j]);
        peak[j] = std::max(peak[j], a);
        if (a > model.joint_velocity_limit + tol) ++stats.velocity_violations;
      }
    }
    for (const Vec4& tau : ep.joint_torque) {
      for (int j = 0; j < kNumJoints; ++j) {
        const double a = std::abs(tau[j]);
        torques[j].push_back(a);
        if (a > model.joint_torque_limit[j] + tol) ++stats.torque_violations;
      }
    }
    for (int j = 0; j < kNumJoints; ++j) peaks[j].push_back(peak[j]);
  }
  if (!any) throw EmptyLogs("joint_motion_stats: no samples");

  auto mean_std = [](const std::vector<double>& xs, double& mean, double& std_out) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    std_out = std::sqrt(var / static_cast<double>(xs.size()));
  };
  for (int j = 0; j < kNumJoints; ++j) {
    mean_std(peaks[j], stats.max_velocity_mean[j], stats.max_velocity_std[j]);
    mean_std(torques[j], stats.torque_mean[j], stats.torque_std[j]);
  }
  return stats;
}

PerturbationResult perturbation_trial(const RobotModel& nominal, const EnvConfig& cfg,
                                      const GaussianPolicy<float>& policy,
                                      const SuccessCriteria& criteria, int n_pushes,
                                      double impulse_min, double impulse_max,
                                      std::uint64_t seed) {
  EnvConfig trial_cfg = cfg;
  trial_cfg.observation.noise_enabled = false;
  trial_cfg.randomization.action_noise_std = 0.0;
  trial_cfg.episode.init_mode = EpisodeConfig::InitMode::stand;
  const int T = cfg.episode.episode_length;
  // the pushes run without reset, so the episode clock must cover them all
  trial_cfg.episode.episode_length = (n_pushes + 1) * T;

  Env env(nominal, trial_cfg, seed, 0);
  Rng push_rng(seed, 0xFDB97531);

  PerturbationResult result;
  result.pushes = n_pushes;

  for (int p = 0; p < n_pushes; ++p) {
    const double mag = push_rng.uniform(impulse_min, impulse_max);
    const double sign = push_rng.uniform01() < 0.5 ? -1.0 : 1.0;
    env.push_base(Vec2(sign * mag, 0.25 * mag));

    bool recovered = false;
    for (int t = 0; t < T && !recovered && !env.done(); ++t) {
      Eigen::VectorXf obs = env.actor_obs().cast<float>();
      const Vec6 action = policy.net.forward_one(obs).cast<double>();
      const EnvStepResult res = env.step(action);
      if (res.failed) break;
      recovered = is_recovered(env.state(), env.episode_model(), criteria,
                               trial_cfg.terrain_kind, env.terrain());
    }
    result.per_push.push_back(recovered ? 1 : 0);
    if (recovered) ++result.recovered;
    if (env.done()) break;  // integrator failure ended the trial
  }
  return result;
}

EvalReport make_report(const EvalRun& run, const RobotModel& model,
                       const SuccessCriteria& criteria, TerrainKind kind,
                       PcaSampleMode pca_mode) {
  EvalReport rep;
  rep.terrain = terrain_kind_name(kind);
  rep.episodes = static_cast<int>(run.episodes.size());
  if (run.episodes.empty()) return rep;
  rep.success_rate = success_rate(run, criteria).rate;
  rep.mean_joint_torque = mean_joint_torque(run);
  rep.pca_variances = pca_top_variances(pca_action_matrix(run, pca_mode), 2);
  rep.height = height_trajectory_stats(run);
  rep.joints = joint_motion_stats(run, model);
  for (const EpisodeLog& ep : run.episodes) {
    if (ep.failed) ++rep.failed_episodes;
  }
  return rep;
}

}  // namespace recoverlab
