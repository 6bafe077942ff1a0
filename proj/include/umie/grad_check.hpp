#pragma once

#include <functional>
#include <string>
#include <vector>

#include "umie/tensor.hpp"

namespace umie {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central finite differences against the analytic gradient of a scalar-valued
// forward. Relative error per coordinate is |a-n| / max(|a|,|n|,1e-8).
// Non-finite values raise an error naming the offending coordinate.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& leaves,
                           double h);

}  // namespace umie
