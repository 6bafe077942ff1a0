#include "umie/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace umie {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)) {
  value.requires_grad = true;
  value.ensure_grad();  // copies share this buffer; allocate before any capture
  m.assign(value.numel(), 0.0);
  v.assign(value.numel(), 0.0);
}

void adamw_step(std::vector<Parameter*>& params, const AdamWConfig& cfg) {
  for (Parameter* p : params) {
    if (!p->value.grad) {
      throw std::runtime_error("adamw_step: parameter '" + p->name + "' has no gradient");
    }
    p->step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
    std::vector<double>& w = *p->value.data;
    const std::vector<double>& g = *p->value.grad;
    for (std::size_t i = 0; i < w.size(); ++i) {
      p->m[i] = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * g[i];
      p->v[i] = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = p->m[i] / bc1;
      const double vhat = p->v[i] / bc2;
      w[i] -= cfg.lr * cfg.weight_decay * w[i];
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void zero_grads(std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->value.zero_grad();
}

double clip_grad_norm(std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (Parameter* p : params) {
    if (!p->value.grad) continue;
    for (double g : *p->value.grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params) {
      if (!p->value.grad) continue;
      for (double& g : *p->value.grad) g *= s;
    }
  }
  return norm;
}

}  // namespace umie
