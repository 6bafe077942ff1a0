#pragma once

#include <string>
#include <vector>

#include "umie/tensor.hpp"

namespace umie {

// Named trainable tensor with AdamW moment state.
struct Parameter {
  std::string name;
  Tensor value;           // requires_grad = true
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  long step = 0;

  Parameter() = default;
  Parameter(std::string name, Tensor value);
};

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight-decay AdamW with bias correction. Every parameter must
// have a populated gradient buffer.
void adamw_step(std::vector<Parameter*>& params, const AdamWConfig& cfg);

void zero_grads(std::vector<Parameter*>& params);

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(std::vector<Parameter*>& params, double max_norm);

}  // namespace umie
