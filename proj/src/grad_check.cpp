#include "umie/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace umie {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& leaves,
                           double h) {
  if (h <= 0.0) throw std::runtime_error("grad_check: h must be positive");

  // Analytic pass.
  for (const auto& [name, t] : leaves) {
    (void)name;
    const_cast<Tensor&>(t).zero_grad();
  }
  Tensor loss = loss_fn();
  if (loss.numel() != 1) throw std::runtime_error("grad_check: loss must be scalar");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : leaves) {
    (void)name;
    analytic.push_back(t.grad ? *t.grad : std::vector<double>(t.numel(), 0.0));
  }

  GradCheckReport rep;
  NoGradGuard ng;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const std::string& name = leaves[li].first;
    Tensor t = leaves[li].second;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = (*t.data)[i];
      (*t.data)[i] = orig + h;
      const double lp = loss_fn().item();
      (*t.data)[i] = orig - h;
      const double lm = loss_fn().item();
      (*t.data)[i] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[li][i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        throw std::runtime_error("grad_check: non-finite gradient at " + name + "[" +
                                 std::to_string(i) + "] analytic=" + std::to_string(a) +
                                 " numeric=" + std::to_string(numeric));
      }
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_tensor = name;
        rep.worst_index = i;
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace umie
