#pragma once

#include <cstdint>

#include "rac/diff/param_set.hpp"

namespace rac::train {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Rescale the group's gradient to this global L2 norm when larger; 0 disables.
  double clip_norm = 0.0;
};

// Adam over a fixed parameter group. Moments live in ParamSets mirroring the
// group's names so they can be checkpointed in the same format.
class Adam {
 public:
  Adam(diff::ParamSet params, AdamOptions options);

  // Applies one step from the accumulated gradients, then zeroes them.
  // Returns the pre-clip gradient norm.
  double step();
  void zero_grad() { params_.zero_grad(); }

  const diff::ParamSet& params() const { return params_; }
  const diff::ParamSet& first_moment() const { return m_; }
  const diff::ParamSet& second_moment() const { return v_; }
  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

  void load_state(const diff::ParamSet& m, const diff::ParamSet& v, std::uint64_t steps);

 private:
  diff::ParamSet params_;
  AdamOptions options_;
  diff::ParamSet m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace rac::train
