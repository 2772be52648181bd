#pragma once

#include <cstdint>
#include <vector>

#include "recoverlab/net.hpp"
#include "recoverlab/rng.hpp"

namespace recoverlab {

struct PpoConfig {
  double gamma = 0.99;
  double learning_rate = 0.001;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  int update_epochs = 5;
  int minibatches = 4;
  double entropy_coef = 0.005;
  double value_coef = 0.5;
  double max_grad_norm = 1.0;
  int horizon = 48;  // control steps per env per iteration
  double log_std_init = 0.0;
  double log_std_min = -4.0;
  double log_std_max = 1.0;
  double advantage_eps = 1e-8;
  double value_output_scale = 1000.0;  // fixed critic head gain
  std::vector<int> actor_hidden{128, 128};
  std::vector<int> critic_hidden{128, 128};
};

/// Diagonal-Gaussian policy: MLP mean head plus a learned, state-independent
/// log-std vector.
template <typename T>
struct GaussianPolicy {
  DenseNet<T> net;
  typename DenseNet<T>::Vec log_std;
};

/// Critic with a fixed output gain so unit-scale head weights can express
/// returns in the thousands.
template <typename T>
struct ValueNet {
  DenseNet<T> net;
  T output_scale = T(1000);
};

inline constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2*pi))

/// Sample a ~ N(mean, diag(exp(log_std)^2)) and its log-density.
template <typename T>
std::pair<Eigen::Matrix<T, Eigen::Dynamic, 1>, T> policy_sample(
    const Eigen::Matrix<T, Eigen::Dynamic, 1>& mean,
    const Eigen::Matrix<T, Eigen::Dynamic, 1>& log_std, Rng& rng) {
  Eigen::Matrix<T, Eigen::Dynamic, 1> a(mean.size());
  T lp = 0;
  for (int i = 0; i < mean.size(); ++i) {
    const T s = std::exp(log_std[i]);
    const T xi = static_cast<T>(rng.normal());
    a[i] = mean[i] + s * xi;
    lp += T(-0.5) * xi * xi - log_std[i] - T(kLogSqrt2Pi);
  }
  return {a, lp};
}

template <typename T>
T policy_log_prob(const Eigen::Matrix<T, Eigen::Dynamic, 1>& mean,
                  const Eigen::Matrix<T, Eigen::Dynamic, 1>& log_std,
                  const Eigen::Matrix<T, Eigen::Dynamic, 1>& action) {
  T lp = 0;
  for (int i = 0; i < mean.size(); ++i) {
    const T z = (action[i] - mean[i]) / std::exp(log_std[i]);
    lp += T(-0.5) * z * z - log_std[i] - T(kLogSqrt2Pi);
  }
  return lp;
}

template <typename T>
T policy_entropy(const Eigen::Matrix<T, Eigen::Dynamic, 1>& log_std) {
  return log_std.sum() + T(log_std.size()) * T(0.5 + kLogSqrt2Pi);
}

/// delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t,
/// A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}, returns = A + V.
/// `bootstrap` is V(s_T) past the horizon end.
void compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                 const std::vector<std::uint8_t>& dones, double bootstrap, double gamma,
                 double lambda, std::vector<double>& advantages, std::vector<double>& returns);

/// Aligned rollout storage; row index = t * num_envs + env.
struct TrajectoryBatch {
  int num_envs = 0;
  int horizon = 0;
  Eigen::MatrixXf actor_obs;   // (N*H) x actor dim
  Eigen::MatrixXf critic_obs;  // (N*H) x critic dim
  Eigen::MatrixXf actions;     // (N*H) x action dim
  Eigen::VectorXf log_probs;
  Eigen::VectorXf values;
  Eigen::VectorXf rewards;
  std::vector<std::uint8_t> dones;
  Eigen::VectorXf bootstrap_values;  // per env

  int rows() const { return num_envs * horizon; }
  int row(int t, int env) const { return t * num_envs + env; }
  void resize(int n_envs, int h, int actor_dim, int critic_dim, int action_dim);
  void check_aligned() const;  // throws ShapeMismatch
};

template <typename T>
struct PolicyLossStats {
  T loss = 0;          // clipped surrogate (no entropy part)
  T entropy = 0;
  T approx_kl = 0;     // mean(ratio - 1 - log ratio)
  T clip_fraction = 0;
};

/// Clipped-surrogate policy loss with the entropy bonus; accumulates exact
/// gradients into `net_grads` / `log_std_grad`. Total contribution is
/// loss - entropy_coef * entropy.
template <typename T>
PolicyLossStats<T> policy_loss_backward(
    const DenseNet<T>& net, const typename DenseNet<T>::Vec& log_std,
    const typename DenseNet<T>::Mat& obs, const typename DenseNet<T>::Mat& actions,
    const typename DenseNet<T>::Vec& logp_old, const typename DenseNet<T>::Vec& advantages,
    T clip_ratio, T entropy_coef, typename DenseNet<T>::Grads& net_grads,
    typename DenseNet<T>::Vec& log_std_grad) {
  using Mat = typename DenseNet<T>::Mat;
  const int B = static_cast<int>(obs.rows());
  const int D = static_cast<int>(log_std.size());
  if (actions.rows() != B || logp_old.size() != B || advantages.size() != B)
    throw ShapeMismatch("policy_loss_backward: batch sizes");

  typename DenseNet<T>::Workspace ws;
  const Mat& mean = net.forward(obs, ws);

  Eigen::Array<T, Eigen::Dynamic, 1> inv_var(D), sigma(D);
  for (int d = 0; d < D; ++d) {
    sigma[d] = std::exp(log_std[d]);
    inv_var[d] = T(1) / (sigma[d] * sigma[d]);
  }

  PolicyLossStats<T> stats;
  Mat dmean = Mat::Zero(B, mean.cols());
  for (int i = 0; i < B; ++i) {
    T lp = 0;
    for (int d = 0; d < D; ++d) {
      const T z2 = (actions(i, d) - mean(i, d)) * (actions(i, d) - mean(i, d)) * inv_var[d];
      lp += T(-0.5) * z2 - log_std[d] - T(kLogSqrt2Pi);
    }
    const T logratio = lp - logp_old[i];
    const T ratio = std::exp(logratio);
    const T A = advantages[i];
    const T unclipped = -A * ratio;
    const T clipped = -A * std::clamp(ratio, T(1) - clip_ratio, T(1) + clip_ratio);
    const bool take_unclipped = unclipped >= clipped;  // ties keep the ratio branch
    stats.loss += std::max(unclipped, clipped);
    stats.approx_kl += (ratio - T(1)) - logratio;
    if (ratio < T(1) - clip_ratio || ratio > T(1) + clip_ratio) stats.clip_fraction += T(1);

    // d(loss_i)/d(logp) is -A*ratio on the ratio branch, 0 on the clip plateau
    const T dlp = take_unclipped ? -A * ratio : T(0);
    if (dlp != T(0)) {
      for (int d = 0; d < D; ++d) {
        const T diff = actions(i, d) - mean(i, d);
        dmean(i, d) = dlp * diff * inv_var[d] / T(B);  // dlp/dmean = (a-mu)/sigma^2
        log_std_grad[d] += dlp * (diff * diff * inv_var[d] - T(1)) / T(B);
      }
    }
  }
  stats.loss /= T(B);
  stats.approx_kl /= T(B);
  stats.clip_fraction /= T(B);
  stats.entropy = policy_entropy(log_std);

  // entropy bonus: d(-c_e * entropy)/d(log_std_d) = -c_e
  log_std_grad.array() -= entropy_coef;

  net.backward(ws, dmean, net_grads);
  return stats;
}

/// Mean-squared-error value loss; critic output is net(obs) * output_scale.
template <typename T>
T value_loss_backward(const DenseNet<T>& net, T output_scale,
                      const typename DenseNet<T>::Mat& obs,
                      const typename DenseNet<T>::Vec& value_targets, T loss_weight,
                      typename DenseNet<T>::Grads& net_grads) {
  using Mat = typename DenseNet<T>::Mat;
  const int B = static_cast<int>(obs.rows());
  if (value_targets.size() != B) throw ShapeMismatch("value_loss_backward: batch sizes");
  typename DenseNet<T>::Workspace ws;
  const Mat& raw = net.forward(obs, ws);
  typename DenseNet<T>::Vec err = raw.col(0) * output_scale - value_targets;
  const T loss = err.squaredNorm() / T(B);
  Mat dout = (T(2) * loss_weight * output_scale / T(B)) * err;
  net.backward(ws, dout, net_grads);
  return loss;
}

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double approx_kl = 0;
  double clip_fraction = 0;
  double grad_norm_actor = 0;
  double grad_norm_critic = 0;
};

/// Full PPO update: batch-level advantage normalization, shuffled minibatches
/// over `update_epochs` epochs, per-network gradient-norm clipping, Adam.
/// Throws NonFiniteLoss (with the minibatch index) on a non-finite loss.
UpdateStats ppo_update(const TrajectoryBatch& batch, GaussianPolicy<float>& policy,
                       ValueNet<float>& value, AdamState<float>& policy_adam,
                       Eigen::VectorXf& log_std_m, Eigen::VectorXf& log_std_v,
                       AdamState<float>& value_adam, const PpoConfig& cfg, Rng& rng);

/// Advantages and returns for every row of the batch (GAE per env sequence).
void batch_advantages(const TrajectoryBatch& batch, double gamma, double lambda,
                      Eigen::VectorXf& advantages, Eigen::VectorXf& returns);

}  // namespace recoverlab
