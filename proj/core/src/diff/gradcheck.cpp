#include "rac/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace rac::diff {

GradcheckReport gradcheck(const std::function<Tensor()>& f, ParamSet params, const GradcheckOptions& options) {
  PrecisionScope high(Precision::kHigh);
  params.zero_grad();
  const Tensor base = f();
  if (base.numel() != 1) throw std::invalid_argument("gradcheck: function must return a scalar");
  backward(base);

  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : params) {
    std::vector<double> g(t.numel(), 0.0);
    auto grad = t.grad();
    std::copy(grad.begin(), grad.end(), g.begin());
    analytic.push_back(std::move(g));
  }
  params.zero_grad();

  NoGradScope no_grad;
  if (f().item() != base.item()) throw std::runtime_error("gradcheck: function is not deterministic");

  GradcheckReport report;
  std::size_t p = 0;
  for (auto& [name, t] : params) {
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.eps;
      const double up = f().item();
      values[i] = original - options.eps;
      const double down = f().item();
      values[i] = original;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double exact = analytic[p][i];
      const double abs_err = std::abs(exact - numeric);
      const double rel_err =
          abs_err / std::max({std::abs(exact), std::abs(numeric), options.denominator_floor});
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (report.checked == 0 || rel_err > report.max_relative_error) {
        report.max_relative_error = rel_err;
        report.worst_parameter = name;
        report.worst_index = i;
      }
      ++report.checked;
    }
    ++p;
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace rac::diff
