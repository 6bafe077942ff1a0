#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "umie/ops.hpp"
#include "umie/tensor.hpp"

using namespace umie;

TEST_CASE("tensor construction and accessors") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == 6.0);

  Tensor s = Tensor::scalar(2.5);
  CHECK(s.item() == 2.5);
  CHECK_THROWS_AS((void)t.item(), std::runtime_error);
  CHECK_THROWS_AS((void)Tensor::zeros({0, 3}), std::runtime_error);
  CHECK_THROWS_AS((void)Tensor::from({2, 2}, {1, 2, 3}), std::runtime_error);
}

TEST_CASE("copies are shallow handles") {
  Tensor a = Tensor::from({1, 2}, {1, 2});
  Tensor b = a;
  b.at(0, 0) = 7.0;
  CHECK(a.at(0, 0) == 7.0);
}

TEST_CASE("backward through a diamond accumulates both paths") {
  // loss = sum(x + x) => dloss/dx = 2 per element
  Tensor x = Tensor::from({1, 2}, {3, 4}, true);
  Tensor y = add(x, x);
  Tensor ones = Tensor::from({2, 1}, {1, 1});
  Tensor loss = matmul(y, ones);
  backward(loss);
  CHECK((*x.grad)[0] == doctest::Approx(2.0));
  CHECK((*x.grad)[1] == doctest::Approx(2.0));
}

TEST_CASE("backward reuses a node shared by two consumers exactly once") {
  // z = x*W; loss = sum(z) + sum(z)  => dloss/dx = 2*W row sums
  Tensor x = Tensor::from({1, 2}, {1, 1}, true);
  Tensor w = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor z = matmul(x, w);
  Tensor ones = Tensor::from({2, 1}, {1, 1});
  Tensor loss = add(matmul(z, ones), matmul(z, ones));
  backward(loss);
  CHECK((*x.grad)[0] == doctest::Approx(2 * (1 + 2)));
  CHECK((*x.grad)[1] == doctest::Approx(2 * (3 + 4)));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::from({1, 2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(add(x, x)), std::runtime_error);
}

TEST_CASE("NoGradGuard suppresses tape recording") {
  Tensor x = Tensor::from({1, 2}, {1, 2}, true);
  {
    NoGradGuard ng;
    Tensor y = add(x, x);
    CHECK(y.node == nullptr);
    CHECK(grad_enabled() == false);
  }
  CHECK(grad_enabled() == true);
}

TEST_CASE("rng is deterministic and well-ranged") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    int k = r.uniform_int(5);
    CHECK(k >= 0);
    CHECK(k < 5);
  }
  CHECK_THROWS_AS((void)r.uniform_int(0), std::runtime_error);
}

TEST_CASE("rng normal has roughly unit moments") {
  Rng r(123);
  const int n = 20000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    double v = r.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("shuffle is a seed-deterministic permutation") {
  std::vector<int> v1 = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> v2 = v1;
  Rng a(9), b(9);
  a.shuffle(v1);
  b.shuffle(v2);
  CHECK(v1 == v2);
  std::vector<int> sorted = v1;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
}
