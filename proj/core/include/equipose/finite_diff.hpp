#pragma once

#include <functional>
#include <map>
#include <string>

#include "equipose/params.hpp"

namespace equipose::ad {

/// A differentiable scalar objective over a parameter store. The callable
/// must be deterministic: repeated evaluation at the same parameters returns
/// the same value. When `want_grads` is false only the value is needed.
using LossFn = std::function<double(ParamStore&, bool want_grads)>;

struct FiniteDiffEntry {
  double max_rel_err = 0.0;   // worst coordinate of the tensor
  double max_abs_err = 0.0;
  std::size_t checked = 0;
};

struct FiniteDiffReport {
  std::map<std::string, FiniteDiffEntry> per_tensor;
  double max_rel_err = 0.0;
  bool passed(double tol) const { return max_rel_err <= tol; }
};

/// Central-difference check of every (non-frozen) parameter coordinate
/// against the analytic gradients the loss deposits into the store.
/// rel = |a - fd| / max(|a|, |fd|, floor); coordinates where both sides are
/// below `floor` count as exact.
FiniteDiffReport check_gradients(ParamStore& params, const LossFn& loss,
                                 double step = 1e-5, double floor = 1e-6);

}  // namespace equipose::ad
