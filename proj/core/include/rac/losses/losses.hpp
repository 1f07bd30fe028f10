#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rac/nets/nets.hpp"

namespace rac::losses {

using diff::Tensor;
using nets::DiagGaussian;
using nets::ModelShape;

struct LossConfig {
  double gamma = 0.99;
  double alpha = 0.01;
  double lambda = 0.5;
  double decay_episodes = 5000.0;  // C

  void validate() const;
};

// Closed forms, one value per row, summed over dimensions: [B, 1].
Tensor gaussian_kl(const DiagGaussian& p, const DiagGaussian& q);
Tensor gaussian_entropy(const DiagGaussian& p);
Tensor gaussian_log_density(const DiagGaussian& p, const Tensor& x);

// b = sum_a pi(a) Q(a) per row.
Tensor baseline(const Tensor& probs, const Tensor& q);

// Reductions over the batch rows with a {0,1} validity mask [B, 1].
Tensor masked_sum(const Tensor& x, const Tensor& mask);
Tensor masked_mean(const Tensor& x, const Tensor& mask);

// A loss value together with the number of (agent or pair) terms summed.
struct TermSum {
  Tensor value;
  std::size_t terms = 0;
};

// sum_i KL(P_i || q_i) + H(P_i), summed over valid rows.
TermSum mi_loss(std::span<const DiagGaussian> self_roles, std::span<const DiagGaussian> posteriors,
                const Tensor& mask);

// Sum over ordered teammate pairs (i, j), i != j, of the density
// q(rho_i | o_j, a_i_prev, tau_j_prev). The log-density would be unbounded
// below and lets q's std collapse; the density is bounded by 0.
// posterior(i, j) returns that distribution for the batch.
TermSum diversity_loss(const ModelShape& shape, std::span<const Tensor> role_values,
                       const std::function<DiagGaussian(std::size_t, std::size_t)>& posterior, const Tensor& mask);

// Sum over cross-team ordered pairs of KL(P_hat_i(j) || P_j) with P_j detached.
// predicted[i] holds agent i's opponent slots in ModelShape::opponents_of order.
TermSum opponent_loss(const ModelShape& shape, const std::vector<std::vector<DiagGaussian>>& predicted,
                      std::span<const DiagGaussian> self_roles, const Tensor& mask);

// y = r + gamma (1 - done) (Q_target(a') - alpha log pi_target(a')), detached.
Tensor td_target(const Tensor& reward, const Tensor& done, const Tensor& next_q, const Tensor& next_log_prob,
                 const LossConfig& cfg);

// (Q(a) - y)^2 averaged over valid rows.
Tensor critic_loss(const Tensor& q_taken, const Tensor& target, const Tensor& mask);

// Q(a) - b - alpha log pi(a) per row, as a constant [B, 1].
Tensor policy_advantage(const Tensor& logits, std::span<const int> actions, const Tensor& q, double alpha);

// -log pi(a) * advantage averaged over valid rows; advantage is a constant.
Tensor policy_surrogate(const Tensor& logits, std::span<const int> actions, const Tensor& advantage,
                        const Tensor& mask);

// policy_surrogate with policy_advantage; q is treated as a constant.
Tensor policy_loss(const Tensor& logits, std::span<const int> actions, const Tensor& q, double alpha,
                   const Tensor& mask);

// lambda^(u / C).
double role_weight(double episodes, double lambda, double decay_episodes);

struct LossBundle {
  Tensor q, mi, d, opp, role, total;
  double role_weight = 1.0;
};

LossBundle total_loss(const Tensor& l_q, const Tensor& l_mi, const Tensor& l_d, const Tensor& l_opp,
                      double episodes, const LossConfig& cfg);

}  // namespace rac::losses
