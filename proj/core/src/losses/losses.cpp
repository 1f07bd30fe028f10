#include "rac/losses/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rac::losses {

using namespace rac::diff;

namespace {

void check_same(const DiagGaussian& p, const DiagGaussian& q, const char* op) {
  if (p.dim() != q.dim() || p.batch() != q.batch()) {
    throw ShapeError(std::string(op) + ": distributions differ in shape " + to_string(p.mean.shape()) + " vs " +
                     to_string(q.mean.shape()));
  }
}

double mask_count(const Tensor& mask) {
  double n = 0.0;
  for (double m : mask.data()) n += m;
  return n;
}

Tensor zero() { return Tensor::scalar(0.0); }

}  // namespace

void LossConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in [0, 1]");
  if (!(decay_episodes > 0.0)) throw std::invalid_argument("decay constant C must be positive");
}

Tensor gaussian_kl(const DiagGaussian& p, const DiagGaussian& q) {
  check_same(p, q, "gaussian_kl");
  const Tensor var_ratio = square(p.std / q.std);
  const Tensor mean_term = square((p.mean - q.mean) / q.std);
  return sum_rows((var_ratio + mean_term - 1.0 - log(var_ratio)) * 0.5);
}

Tensor gaussian_entropy(const DiagGaussian& p) {
  const double c = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return sum_rows(log(p.std) + c);
}

Tensor gaussian_log_density(const DiagGaussian& p, const Tensor& x) {
  if (x.rows() != p.batch() || x.cols() != p.dim()) throw ShapeError("gaussian_log_density: sample shape mismatch");
  const double c = 0.5 * std::log(2.0 * std::numbers::pi);
  return sum_rows(square((x - p.mean) / p.std) * -0.5 - log(p.std) - c);
}

Tensor baseline(const Tensor& probs, const Tensor& q) {
  if (probs.shape() != q.shape()) throw ShapeError("baseline: policy and Q shapes differ");
  return sum_rows(probs * q);
}

Tensor masked_sum(const Tensor& x, const Tensor& mask) {
  if (x.cols() != 1 || mask.rows() != x.rows()) throw ShapeError("masked_sum expects [B,1] values and mask");
  return sum(x * mask);
}

Tensor masked_mean(const Tensor& x, const Tensor& mask) {
  const double n = mask_count(mask);
  if (n == 0.0) return zero();
  return masked_sum(x, mask) * (1.0 / n);
}

TermSum mi_loss(std::span<const DiagGaussian> self_roles, std::span<const DiagGaussian> posteriors,
                const Tensor& mask) {
  if (self_roles.size() != posteriors.size()) throw std::invalid_argument("mi_loss: one posterior per agent");
  TermSum out{zero(), 0};
  for (std::size_t i = 0; i < self_roles.size(); ++i) {
    out.value = out.value + masked_sum(gaussian_kl(self_roles[i], posteriors[i]) + gaussian_entropy(self_roles[i]), mask);
    ++out.terms;
  }
  return out;
}

TermSum diversity_loss(const ModelShape& shape, std::span<const Tensor> role_values,
                       const std::function<DiagGaussian(std::size_t, std::size_t)>& posterior, const Tensor& mask) {
  if (role_values.size() != shape.agents()) throw std::invalid_argument("diversity_loss: one role per agent");
  TermSum out{zero(), 0};
  for (std::size_t i = 0; i < shape.agents(); ++i) {
    for (std::size_t j : shape.teammates_of(i)) {
      out.value = out.value + masked_sum(exp(gaussian_log_density(posterior(i, j), role_values[i])), mask);
      ++out.terms;
    }
  }
  return out;
}

TermSum opponent_loss(const ModelShape& shape, const std::vector<std::vector<DiagGaussian>>& predicted,
                      std::span<const DiagGaussian> self_roles, const Tensor& mask) {
  if (predicted.size() != shape.agents() || self_roles.size() != shape.agents()) {
    throw std::invalid_argument("opponent_loss: one prediction set and self role per agent");
  }
  TermSum out{zero(), 0};
  for (std::size_t i = 0; i < shape.agents(); ++i) {
    const auto opponents = shape.opponents_of(i);
    if (predicted[i].size() != opponents.size()) throw std::invalid_argument("opponent_loss: wrong slot count");
    for (std::size_t s = 0; s < opponents.size(); ++s) {
      out.value = out.value + masked_sum(gaussian_kl(predicted[i][s], self_roles[opponents[s]].detach()), mask);
      ++out.terms;
    }
  }
  return out;
}

Tensor td_target(const Tensor& reward, const Tensor& done, const Tensor& next_q, const Tensor& next_log_prob,
                 const LossConfig& cfg) {
  const Tensor soft = next_q.detach() - next_log_prob.detach() * cfg.alpha;
  const Tensor cont = (done.detach() * -1.0) + 1.0;
  return (reward.detach() + cont * soft * cfg.gamma).detach();
}

Tensor critic_loss(const Tensor& q_taken, const Tensor& target, const Tensor& mask) {
  return masked_mean(square(q_taken - target.detach()), mask);
}

Tensor policy_advantage(const Tensor& logits, std::span<const int> actions, const Tensor& q, double alpha) {
  if (logits.shape() != q.shape()) throw ShapeError("policy_advantage: logits and Q shapes differ");
  const Tensor log_probs = log_softmax(logits.detach());
  const Tensor qc = q.detach();
  const Tensor advantage = gather(qc, actions) - baseline(exp(log_probs), qc) - gather(log_probs, actions) * alpha;
  for (double a : advantage.data()) {
    if (!std::isfinite(a)) throw NonFiniteError("policy_loss: non-finite advantage");
  }
  return advantage.detach();
}

Tensor policy_surrogate(const Tensor& logits, std::span<const int> actions, const Tensor& advantage,
                        const Tensor& mask) {
  const Tensor log_pi = gather(log_softmax(logits), actions);
  return masked_mean(-(log_pi * advantage.detach()), mask);
}

Tensor policy_loss(const Tensor& logits, std::span<const int> actions, const Tensor& q, double alpha,
                   const Tensor& mask) {
  return policy_surrogate(logits, actions, policy_advantage(logits, actions, q, alpha), mask);
}

double role_weight(double episodes, double lambda, double decay_episodes) {
  if (episodes < 0) throw std::invalid_argument("role_weight: negative episode count");
  if (episodes == 0) return 1.0;
  return std::pow(lambda, episodes / decay_episodes);
}

LossBundle total_loss(const Tensor& l_q, const Tensor& l_mi, const Tensor& l_d, const Tensor& l_opp,
                      double episodes, const LossConfig& cfg) {
  LossBundle b;
  b.q = l_q;
  b.mi = l_mi;
  b.d = l_d;
  b.opp = l_opp;
  b.role_weight = role_weight(episodes, cfg.lambda, cfg.decay_episodes);
  b.role = l_d + l_mi + l_opp;
  b.total = l_q + b.role * b.role_weight;
  return b;
}

}  // namespace rac::losses
