#pragma once

#include <array>
#include <string>
#include <vector>

#include "recoverlab/rollout.hpp"

namespace recoverlab {

/// Terminal-state recovery test. Flat terrain adds the base-height and
/// joint-velocity checks; non-flat terrain uses the orientation error
/// instead (no height test).
struct SuccessCriteria {
  double min_base_height = 0.42;      // m, strict >
  double max_joint_deviation = 0.5;   // rad, inclusive
  double max_joint_velocity = 0.1;    // rad/s, strict <
  double max_orientation_error = 0.1; // ||g_b - g*||^2, strict <
};

bool is_recovered(const SimState& final_state, const RobotModel& model,
                  const SuccessCriteria& criteria, TerrainKind kind, const Terrain& terrain);

struct SuccessResult {
  double rate = 0.0;
  std::vector<std::uint8_t> per_episode;
};

SuccessResult success_rate(const EvalRun& run, const SuccessCriteria& criteria);

/// Mean |tau| across the four leg joints, all steps, all episodes.
double mean_joint_torque(const EvalRun& run);

enum class PcaSampleMode { per_step, flattened_episode };

/// Rows of the PCA input: every action vector pooled across episodes, or one
/// flattened action sequence per episode.
Eigen::MatrixXd pca_action_matrix(const EvalRun& run, PcaSampleMode mode);

/// Largest k eigenvalues (descending) of the sample covariance.
std::vector<double> pca_top_variances(const Eigen::MatrixXd& samples, int k = 2);

struct HeightStats {
  std::vector<double> mean;      // per control step
  std::vector<double> variance;  // population variance per control step
};

HeightStats height_trajectory_stats(const EvalRun& run);

struct JointStats {
  // per joint
  std::array<double, kNumJoints> max_velocity_mean{}, max_velocity_std{};
  std::array<double, kNumJoints> torque_mean{}, torque_std{};
  long velocity_violations = 0;
  long torque_violations = 0;
};

JointStats joint_motion_stats(const EvalRun& run, const RobotModel& model);

struct PerturbationResult {
  int pushes = 0;
  int recovered = 0;
  std::vector<std::uint8_t> per_push;
};

/// From a recovered stand, apply `n_pushes` random base-velocity impulses
/// without resetting; after each push the policy gets up to one episode
/// length to pass is_recovered again.
PerturbationResult perturbation_trial(const RobotModel& nominal, const EnvConfig& cfg,
                                      const GaussianPolicy<float>& policy,
                                      const SuccessCriteria& criteria, int n_pushes,
                                      double impulse_min, double impulse_max,
                                      std::uint64_t seed);

struct EvalReport {
  std::string terrain;
  int episodes = 0;
  double success_rate = 0.0;
  double mean_joint_torque = 0.0;
  std::vector<double> pca_variances;
  HeightStats height;
  JointStats joints;
  int failed_episodes = 0;
};

EvalReport make_report(const EvalRun& run, const RobotModel& model,
                       const SuccessCriteria& criteria, TerrainKind kind,
                       PcaSampleMode pca_mode = PcaSampleMode::per_step);

}  // namespace recoverlab
