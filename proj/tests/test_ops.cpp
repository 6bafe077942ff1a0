#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "umie/codec.hpp"
#include "umie/grad_check.hpp"
#include "umie/ops.hpp"

using namespace umie;

namespace {

// scalarizes a tensor with fixed random-ish weights so grad_check can probe
// every output coordinate
Tensor weighted_sum(const Tensor& t) {
  Tensor w = Tensor::zeros({t.cols(), 1});
  for (int j = 0; j < t.cols(); ++j) w.at(j, 0) = 0.3 + 0.1 * j;
  Tensor col = matmul(t, w);
  Tensor ones = Tensor::zeros({1, t.rows()});
  for (int i = 0; i < t.rows(); ++i) ones.at(0, i) = 1.0 - 0.05 * i;
  return matmul(ones, col);
}

}  // namespace

TEST_CASE("matmul forward values") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 19);
  CHECK(c.at(0, 1) == 22);
  CHECK(c.at(1, 0) == 43);
  CHECK(c.at(1, 1) == 50);
  CHECK_THROWS_AS((void)matmul(a, Tensor::zeros({3, 2})), std::runtime_error);
}

TEST_CASE("transpose and add") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose(a);
  CHECK(t.rows() == 3);
  CHECK(t.at(2, 1) == 6);
  CHECK_THROWS_AS((void)add(a, t), std::runtime_error);
  Tensor s = add(a, a);
  CHECK(s.at(1, 2) == 12);
}

TEST_CASE("add_row broadcasts a bias row") {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({1, 2}, {10, 20});
  Tensor y = add_row(x, b);
  CHECK(y.at(0, 1) == 22);
  CHECK(y.at(1, 0) == 13);
  CHECK_THROWS_AS((void)add_row(x, Tensor::zeros({1, 3})), std::runtime_error);
}

TEST_CASE("softmax rows: normalization, masking, full-mask error") {
  Tensor x = Tensor::from({1, 3}, {1, 2, 3});
  Tensor p = softmax_rows(x);
  CHECK(p.at(0, 0) + p.at(0, 1) + p.at(0, 2) == doctest::Approx(1.0));
  CHECK(p.at(0, 2) > p.at(0, 1));

  std::vector<uint8_t> keep = {1, 0, 1};
  Tensor pm = softmax_rows(x, &keep);
  CHECK(pm.at(0, 1) == 0.0);
  CHECK(pm.at(0, 0) + pm.at(0, 2) == doctest::Approx(1.0));

  std::vector<uint8_t> none = {0, 0, 0};
  CHECK_THROWS_WITH_AS((void)softmax_rows(x, &none), "softmax_rows: row 0 fully masked",
                       std::runtime_error);
}

TEST_CASE("layer_norm normalizes each row") {
  Tensor x = Tensor::from({1, 3}, {1, 2, 3});
  Tensor gain = Tensor::from({1, 3}, {1, 1, 1});
  Tensor bias = Tensor::from({1, 3}, {0, 0, 0});
  Tensor y = layer_norm(x, gain, bias, 0.0);
  // variance of {1,2,3} with a 1/d estimator is 2/3, so (x - mean)/std = +-sqrt(1.5)
  const double r = std::sqrt(1.5);
  CHECK(y.at(0, 0) == doctest::Approx(-r).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.0));
  CHECK(y.at(0, 2) == doctest::Approx(r));
  CHECK_THROWS_AS((void)layer_norm(x, gain, bias, -1.0), std::runtime_error);
}

TEST_CASE("leaky_relu and relu") {
  Tensor x = Tensor::from({1, 2}, {-2, 3});
  Tensor y = leaky_relu(x, 0.1);
  CHECK(y.at(0, 0) == doctest::Approx(-0.2));
  CHECK(y.at(0, 1) == 3.0);
  CHECK_THROWS_AS((void)leaky_relu(x, 0.0), std::runtime_error);
  CHECK_THROWS_AS((void)leaky_relu(x, 1.0), std::runtime_error);
  Tensor z = relu(x);
  CHECK(z.at(0, 0) == 0.0);
  CHECK(z.at(0, 1) == 3.0);
}

TEST_CASE("embed_rows gathers and validates ids") {
  Tensor table = Tensor::from({3, 2}, {0, 1, 10, 11, 20, 21});
  Tensor out = embed_rows(table, {2, 0});
  CHECK(out.at(0, 1) == 21);
  CHECK(out.at(1, 0) == 0);
  CHECK_THROWS_AS((void)embed_rows(table, {3}), std::runtime_error);
  CHECK_THROWS_AS((void)embed_rows(table, {-1}), std::runtime_error);
}

TEST_CASE("slice and concat are inverses") {
  Tensor x = Tensor::from({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor a = slice_cols(x, 0, 2);
  Tensor b = slice_cols(x, 2, 2);
  Tensor back = concat_cols({a, b});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) CHECK(back.at(i, j) == x.at(i, j));
  CHECK_THROWS_AS((void)slice_cols(x, 3, 2), std::runtime_error);
}

TEST_CASE("mean_rows with a row mask") {
  Tensor x = Tensor::from({3, 2}, {1, 2, 100, 200, 3, 4});
  std::vector<uint8_t> keep = {1, 0, 1};
  Tensor m = mean_rows(x, &keep);
  CHECK(m.at(0, 0) == doctest::Approx(2.0));
  CHECK(m.at(0, 1) == doctest::Approx(3.0));
  std::vector<uint8_t> none = {0, 0, 0};
  CHECK_THROWS_AS((void)mean_rows(x, &none), std::runtime_error);
}

TEST_CASE("scaled_dot_attention with zero queries averages values") {
  Tensor q = Tensor::zeros({1, 2});
  Tensor k = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor v = Tensor::from({2, 2}, {2, 4, 6, 8});
  Tensor out = scaled_dot_attention(q, k, v);
  CHECK(out.at(0, 0) == doctest::Approx(4.0));
  CHECK(out.at(0, 1) == doctest::Approx(6.0));
}

TEST_CASE("label-smoothed cross entropy") {
  const int vsz = 8;
  Tensor logits = Tensor::zeros({2, vsz});  // uniform
  Tensor l0 = cross_entropy_label_smoothed(logits, {3, 5}, 0.0, kPadId);
  CHECK(l0.item() == doctest::Approx(std::log(vsz)));

  // pad positions are excluded from the mean
  Tensor logits3 = Tensor::zeros({3, vsz});
  Tensor lp = cross_entropy_label_smoothed(logits3, {3, kPadId, 5}, 0.0, kPadId);
  CHECK(lp.item() == doctest::Approx(std::log(vsz)));
  CHECK_THROWS_AS(
      (void)cross_entropy_label_smoothed(logits, {kPadId, kPadId}, 0.0, kPadId),
      std::runtime_error);
  CHECK_THROWS_AS((void)cross_entropy_label_smoothed(logits, {3, vsz}, 0.0, kPadId),
                  std::runtime_error);

  // a confident correct model still pays a smoothing floor with eps > 0
  Tensor sharp = Tensor::zeros({1, vsz});
  sharp.at(0, 3) = 50.0;
  CHECK(cross_entropy_label_smoothed(sharp, {3}, 0.0, kPadId).item() ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(cross_entropy_label_smoothed(sharp, {3}, 0.1, kPadId).item() > 0.5);
}

TEST_CASE("gradient checks for every differentiable op") {
  Rng rng(31);
  auto randn = [&](std::vector<int> shape) {
    Tensor t = Tensor::zeros(shape, true);
    for (double& v : *t.data) v = rng.normal();
    return t;
  };

  SUBCASE("matmul") {
    Tensor a = randn({2, 3}), b = randn({3, 2});
    auto rep = grad_check([&] { return weighted_sum(matmul(a, b)); },
                          {{"a", a}, {"b", b}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("add_row") {
    Tensor x = randn({3, 2}), b = randn({1, 2});
    auto rep = grad_check([&] { return weighted_sum(add_row(x, b)); },
                          {{"x", x}, {"b", b}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("scale_by") {
    Tensor x = randn({2, 2}), s = randn({1, 1});
    auto rep = grad_check([&] { return weighted_sum(scale_by(x, s)); },
                          {{"x", x}, {"s", s}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("softmax with mask") {
    Tensor x = randn({2, 4});
    std::vector<uint8_t> keep = {1, 1, 0, 1, 1, 1, 1, 0};
    auto rep = grad_check([&] { return weighted_sum(softmax_rows(x, &keep)); },
                          {{"x", x}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-5);
  }
  SUBCASE("layer_norm") {
    Tensor x = randn({2, 4}), g = randn({1, 4}), b = randn({1, 4});
    auto rep = grad_check(
        [&] { return weighted_sum(layer_norm(x, g, b, 1e-5)); },
        {{"x", x}, {"g", g}, {"b", b}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-5);
  }
  SUBCASE("leaky_relu away from the kink") {
    Tensor x = randn({2, 3});
    for (double& v : *x.data) v += (v >= 0 ? 0.5 : -0.5);
    auto rep = grad_check([&] { return weighted_sum(leaky_relu(x, 0.01)); },
                          {{"x", x}}, 1e-6);
    CHECK(rep.max_rel_err < 1e-5);
  }
  SUBCASE("embed_rows with a repeated id") {
    Tensor t = randn({4, 3});
    auto rep = grad_check([&] { return weighted_sum(embed_rows(t, {1, 3, 1})); },
                          {{"t", t}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("mean_rows with mask") {
    Tensor x = randn({3, 3});
    std::vector<uint8_t> keep = {1, 0, 1};
    auto rep = grad_check([&] { return weighted_sum(mean_rows(x, &keep)); },
                          {{"x", x}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("scaled_dot_attention with mask") {
    Tensor q = randn({2, 3}), k = randn({3, 3}), v = randn({3, 2});
    std::vector<uint8_t> keep = {1, 1, 0, 1, 1, 1};
    auto rep = grad_check(
        [&] { return weighted_sum(scaled_dot_attention(q, k, v, &keep)); },
        {{"q", q}, {"k", k}, {"v", v}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-5);
  }
  SUBCASE("cross entropy with smoothing and pad") {
    Tensor logits = randn({3, 6});
    auto rep = grad_check(
        [&] { return cross_entropy_label_smoothed(logits, {2, kPadId, 5}, 0.1, kPadId); },
        {{"logits", logits}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("transpose / slice / concat composite") {
    Tensor x = randn({2, 4});
    auto rep = grad_check(
        [&] {
          Tensor a = slice_cols(x, 0, 2), b = slice_cols(x, 2, 2);
          return weighted_sum(transpose(concat_cols({b, a})));
        },
        {{"x", x}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
  }
}
