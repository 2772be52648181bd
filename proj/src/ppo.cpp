#include "recoverlab/ppo.hpp"

#include <cmath>
#include <numeric>

#include "recoverlab/errors.hpp"

namespace recoverlab {

void compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                 const std::vector<std::uint8_t>& dones, double bootstrap, double gamma,
                 double lambda, std::vector<double>& advantages, std::vector<double>& returns) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw ShapeMismatch("compute_gae: misaligned arrays");
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
  double gae = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double nonterminal = dones[k] ? 0.0 : 1.0;
    const double next_value = (k + 1 < n) ? values[k + 1] : bootstrap;
    const double delta = rewards[k] + gamma * next_value * nonterminal - values[k];
    gae = delta + gamma * lambda * nonterminal * gae;
    advantages[k] = gae;
    returns[k] = gae + values[k];
  }
}

void TrajectoryBatch::resize(int n_envs, int h, int actor_dim, int critic_dim,
                             int action_dim) {
  num_envs = n_envs;
  horizon = h;
  const int n = rows();
  actor_obs.resize(n, actor_dim);
  critic_obs.resize(n, critic_dim);
  actions.resize(n, action_dim);
  log_probs.resize(n);
  values.resize(n);
  rewards.resize(n);
  dones.assign(n, 0);
  bootstrap_values.resize(n_envs);
}

void TrajectoryBatch::check_aligned() const {
  const int n = rows();
  if (actor_obs.rows() != n || critic_obs.rows() != n || actions.rows() != n ||
      log_probs.size() != n || values.size() != n || rewards.size() != n ||
      static_cast<int>(dones.size()) != n || bootstrap_values.size() != num_envs)
    throw ShapeMismatch("TrajectoryBatch: misaligned fields");
}

void batch_advantages(const TrajectoryBatch& batch, double gamma, double lambda,
                      Eigen::VectorXf& advantages, Eigen::VectorXf& returns) {
  batch.check_aligned();
  advantages.resize(batch.rows());
  returns.resize(batch.rows());
  std::vector<double> r(batch.horizon), v(batch.horizon), adv, ret;
  std::vector<std::uint8_t> d(batch.horizon);
  for (int e = 0; e < batch.num_envs; ++e) {
    for (int t = 0; t < batch.horizon; ++t) {
      const int i = batch.row(t, e);
      r[t] = batch.rewards[i];
      v[t] = batch.values[i];
      d[t] = batch.dones[i];
    }
    compute_gae(r, v, d, batch.bootstrap_values[e], gamma, lambda, adv, ret);
    for (int t = 0; t < batch.horizon; ++t) {
      const int i = batch.row(t, e);
      advantages[i] = static_cast<float>(adv[t]);
      returns[i] = static_cast<float>(ret[t]);
    }
  }
}

namespace {

float clip_grad_norm(DenseNet<float>::Grads& g, Eigen::VectorXf* extra, float max_norm) {
  double sq = g.squared_norm();
  if (extra) sq += extra->squaredNorm();
  const float norm = static_cast<float>(std::sqrt(sq));
  if (norm > max_norm && norm > 0.0f) {
    const float s = max_norm / norm;
    g.scale(s);
    if (extra) *extra *= s;
  }
  return norm;
}

}  // namespace

UpdateStats ppo_update(const TrajectoryBatch& batch, GaussianPolicy<float>& policy,
                       ValueNet<float>& value, AdamState<float>& policy_adam,
                       Eigen::VectorXf& log_std_m, Eigen::VectorXf& log_std_v,
                       AdamState<float>& value_adam, const PpoConfig& cfg, Rng& rng) {
  batch.check_aligned();
  Eigen::VectorXf advantages, returns;
  batch_advantages(batch, cfg.gamma, cfg.gae_lambda, advantages, returns);

  // batch-level normalization
  const float mean = advantages.mean();
  const float var = (advantages.array() - mean).square().sum() / advantages.size();
  advantages = (advantages.array() - mean) /
               (std::sqrt(var) + static_cast<float>(cfg.advantage_eps));

  const int n = batch.rows();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int mb_count = std::max(1, cfg.minibatches);
  const int mb_size = n / mb_count;

  UpdateStats stats;
  int stat_batches = 0;
  DenseNet<float>::Grads actor_grads, critic_grads;
  actor_grads.init_like(policy.net);
  critic_grads.init_like(value.net);
  Eigen::VectorXf log_std_grad = Eigen::VectorXf::Zero(policy.log_std.size());

  Eigen::MatrixXf mb_obs, mb_cobs, mb_actions;
  Eigen::VectorXf mb_logp, mb_adv, mb_ret;

  for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start + mb_size <= n; start += mb_size) {
      const int B = mb_size;
      mb_obs.resize(B, batch.actor_obs.cols());
      mb_cobs.resize(B, batch.critic_obs.cols());
      mb_actions.resize(B, batch.actions.cols());
      mb_logp.resize(B);
      mb_adv.resize(B);
      mb_ret.resize(B);
      for (int i = 0; i < B; ++i) {
        const int src = order[start + i];
        mb_obs.row(i) = batch.actor_obs.row(src);
        mb_cobs.row(i) = batch.critic_obs.row(src);
        mb_actions.row(i) = batch.actions.row(src);
        mb_logp[i] = batch.log_probs[src];
        mb_adv[i] = advantages[src];
        mb_ret[i] = returns[src];
      }

      actor_grads.zero();
      critic_grads.zero();
      log_std_grad.setZero();

      const auto pstats = policy_loss_backward<float>(
          policy.net, policy.log_std, mb_obs, mb_actions, mb_logp, mb_adv,
          static_cast<float>(cfg.clip_ratio), static_cast<float>(cfg.entropy_coef),
          actor_grads, log_std_grad);
      const float vloss = value_loss_backward<float>(
          value.net, value.output_scale, mb_cobs, mb_ret,
          static_cast<float>(cfg.value_coef), critic_grads);

      if (!std::isfinite(pstats.loss) || !std::isfinite(vloss)) {
        throw NonFiniteLoss("non-finite loss in minibatch " +
                            std::to_string(start / mb_size) + " of epoch " +
                            std::to_string(epoch));
      }

      stats.grad_norm_actor += clip_grad_norm(actor_grads, &log_std_grad,
                                              static_cast<float>(cfg.max_grad_norm));
      stats.grad_norm_critic +=
          clip_grad_norm(critic_grads, nullptr, static_cast<float>(cfg.max_grad_norm));

      policy_adam.update(policy.net, actor_grads, cfg.learning_rate);
      adam_update(policy.log_std, log_std_grad, log_std_m, log_std_v, policy_adam.step,
                  cfg.learning_rate, policy_adam.beta1, policy_adam.beta2, policy_adam.eps);
      policy.log_std = policy.log_std.cwiseMax(static_cast<float>(cfg.log_std_min))
                           .cwiseMin(static_cast<float>(cfg.log_std_max));
      value_adam.update(value.net, critic_grads, cfg.learning_rate);

      stats.policy_loss += pstats.loss;
      stats.value_loss += vloss;
      stats.entropy += pstats.entropy;
      stats.approx_kl += pstats.approx_kl;
      stats.clip_fraction += pstats.clip_fraction;
      ++stat_batches;
    }
  }
  if (stat_batches > 0) {
    stats.policy_loss /= stat_batches;
    stats.value_loss /= stat_batches;
    stats.entropy /= stat_batches;
    stats.approx_kl /= stat_batches;
    stats.clip_fraction /= stat_batches;
    stats.grad_norm_actor /= stat_batches;
    stats.grad_norm_critic /= stat_batches;
  }
  return stats;
}

}  // namespace recoverlab
