#include "equipose/finite_diff.hpp"

#include <cmath>

#include "equipose/common.hpp"

namespace equipose::ad {

FiniteDiffReport check_gradients(ParamStore& params, const LossFn& loss,
                                 double step, double floor) {
  params.zero_grads();
  loss(params, /*want_grads=*/true);

  // Copy analytic gradients before the probing evaluations overwrite state.
  std::map<std::string, Tensor> analytic;
  for (const auto& name : params.names()) analytic.emplace(name, params.grad(name));

  FiniteDiffReport report;
  for (const auto& name : params.names()) {
    if (params.frozen(name)) continue;
    Tensor& v = params.value(name);
    const Tensor& a = analytic.at(name);
    FiniteDiffEntry entry;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + step;
      const double up = loss(params, false);
      v[i] = keep - step;
      const double dn = loss(params, false);
      v[i] = keep;
      const double fd = (up - dn) / (2.0 * step);
      const double abs_err = std::abs(a[i] - fd);
      const double denom = std::max({std::abs(a[i]), std::abs(fd), floor});
      const double rel = (std::abs(a[i]) < floor && std::abs(fd) < floor)
                             ? 0.0
                             : abs_err / denom;
      entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
      ++entry.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_tensor.emplace(name, entry);
  }
  return report;
}

}  // namespace equipose::ad
