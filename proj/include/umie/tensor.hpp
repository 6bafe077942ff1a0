#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace umie {

struct Node;

// Dense 2-D double tensor. Scalars are {1,1}, row vectors {1,n}.
// Copies are shallow handles sharing data/grad/node.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;
  std::shared_ptr<Node> node;
  bool requires_grad = false;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(data); }
  std::size_t numel() const;
  int rows() const;
  int cols() const;

  double& at(int i, int j) { return (*data)[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return (*data)[static_cast<std::size_t>(i) * cols() + j]; }
  double item() const;

  // Allocates a zeroed grad buffer if absent.
  void ensure_grad();
  void zero_grad();
};

struct Node {
  std::vector<Tensor> parents;
  // Receives the output gradient; accumulates into parent grads.
  std::function<void(const std::vector<double>& out_grad)> backward;
};

bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Reverse-mode sweep from a scalar loss. Seeds loss grad with 1 and runs
// every recorded node in reverse topological order.
void backward(const Tensor& loss);

std::string shape_str(const std::vector<int>& shape);

// Deterministic RNG. std::normal_distribution is implementation-defined,
// so uniform/normal are derived from raw mt19937_64 output by hand.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }
  double uniform();  // [0, 1)
  double normal();   // mean 0, stddev 1
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  int uniform_int(int n);  // [0, n)

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace umie
