#include "rac/train/adam.hpp"

#include <cmath>

namespace rac::train {

using diff::ParamSet;
using diff::Tensor;

Adam::Adam(ParamSet params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& [name, p] : params_) {
    m_.add(name, Tensor::zeros(p.shape()));
    v_.add(name, Tensor::zeros(p.shape()));
  }
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& [name, p] : params_) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (options_.lr == 0.0) {
    zero_grad();
    return norm;
  }
  const double scale = options_.clip_norm > 0.0 && norm > options_.clip_norm ? options_.clip_norm / norm : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  // Moments are rounded like parameters so checkpoints restore them exactly.
  auto m_it = m_.begin();
  auto v_it = v_.begin();
  for (auto& [name, p] : params_) {
    auto m = m_it++->second.mutable_data();
    auto v = v_it++->second.mutable_data();
    auto grad = p.grad();
    if (grad.empty()) continue;
    auto value = p.mutable_data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * scale;
      m[i] = diff::round_to_precision(options_.beta1 * m[i] + (1.0 - options_.beta1) * g);
      v[i] = diff::round_to_precision(options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g);
      value[i] = diff::round_to_precision(value[i] - options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps));
    }
  }
  zero_grad();
  return norm;
}

void Adam::load_state(const ParamSet& m, const ParamSet& v, std::uint64_t steps) {
  m_.copy_values_from(m);
  v_.copy_values_from(v);
  t_ = steps;
}

}  // namespace rac::train
