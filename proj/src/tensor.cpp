#include "umie/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace umie {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::runtime_error("Tensor: non-positive dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(n, 0.0);
  t.requires_grad = requires_grad;
  // Copies are shallow, so the grad buffer must exist before any copy is
  // captured on the tape; otherwise accumulation lands in a private buffer.
  if (requires_grad) t.ensure_grad();
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  Tensor t = zeros(shape, requires_grad);
  if (values.size() != t.numel()) {
    throw std::runtime_error("Tensor: " + std::to_string(values.size()) +
                             " values for shape " + shape_str(t.shape));
  }
  *t.data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1, 1}, {v}, requires_grad);
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

int Tensor::rows() const {
  if (shape.size() != 2) throw std::runtime_error("Tensor: expected 2-D, got " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (shape.size() != 2) throw std::runtime_error("Tensor: expected 2-D, got " + shape_str(shape));
  return shape[1];
}

double Tensor::item() const {
  if (numel() != 1) throw std::runtime_error("Tensor::item on shape " + shape_str(shape));
  return (*data)[0];
}

void Tensor::ensure_grad() {
  if (!grad) grad = std::make_shared<std::vector<double>>(numel(), 0.0);
}

void Tensor::zero_grad() {
  ensure_grad();
  std::fill(grad->begin(), grad->end(), 0.0);
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::runtime_error("backward: loss must be scalar, got " + shape_str(loss.shape));
  }
  const_cast<Tensor&>(loss).ensure_grad();
  (*loss.grad)[0] = 1.0;
  if (!loss.node) return;

  // Reverse post-order over parent edges: every consumer runs before its
  // producers, so intermediate grads are complete when used.
  std::vector<std::pair<Tensor, bool>> stack;  // (tensor-with-node, expanded)
  std::vector<Tensor> order;
  std::unordered_set<const Node*> seen;
  stack.emplace_back(loss, false);
  while (!stack.empty()) {
    auto [t, expanded] = stack.back();
    stack.pop_back();
    if (!t.node) continue;
    if (expanded) {
      order.push_back(t);
      continue;
    }
    if (!seen.insert(t.node.get()).second) continue;
    stack.emplace_back(t, true);
    for (const Tensor& p : t.node->parents) {
      if (p.node && !seen.count(p.node.get())) stack.emplace_back(p, false);
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor& t = *it;
    t.ensure_grad();
    if (t.node->backward) t.node->backward(*t.grad);
  }
}

double Rng::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::runtime_error("Rng::uniform_int: n must be positive");
  // rejection sampling keeps the draw unbiased
  uint64_t un = static_cast<uint64_t>(n);
  uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

}  // namespace umie
