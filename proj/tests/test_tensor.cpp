#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "admix/optim.hpp"
#include "admix/tensor.hpp"
#include "testutil.hpp"

using namespace admix;
using testutil::check_gradients;
using testutil::project;
using testutil::random_tensor;

using T = TensorT<double>;

TEST_CASE("softmax of zeros is uniform") {
  auto y = softmax(T({2}, {0.0, 0.0}));
  CHECK(y.data()[0] == doctest::Approx(0.5));
  CHECK(y.data()[1] == doctest::Approx(0.5));
}

TEST_CASE("matmul by the identity is the identity map") {
  Rng rng(1);
  auto a = random_tensor({3, 3}, rng);
  T eye({3, 3}, 0.0);
  for (int i = 0; i < 3; ++i) eye.data()[static_cast<size_t>(i * 3 + i)] = 1.0;
  auto out = matmul(eye, a);
  for (size_t i = 0; i < 9; ++i) CHECK(out.data()[i] == doctest::Approx(a.data()[i]));
}

TEST_CASE("shape mismatch errors name both shapes and the operation") {
  T a({2, 3}), b({3, 2});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::runtime_error);
  try {
    mul(a, b);
    FAIL("expected throw");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
    CHECK(msg.find("mul") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(T({2, 3}), T({2, 3})), std::runtime_error);
  CHECK_THROWS_AS(reshape(T({2, 3}), {7}), std::runtime_error);
}

TEST_CASE("softmax rows are nonnegative and sum to one") {
  Rng rng(2);
  for (const auto& shape : {Shape{5}, Shape{3, 7}, Shape{2, 3, 4}}) {
    auto y = softmax(random_tensor(shape, rng, -8.0, 8.0));
    const int64_t c = shape.back();
    const int64_t rows = numel(shape) / c;
    for (int64_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int64_t i = 0; i < c; ++i) {
        const double v = y.data()[static_cast<size_t>(r * c + i)];
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("gradient: d/dx sum(softmax(x) * w) matches finite differences (dim 7)") {
  Rng rng(3);
  std::vector<T> inputs{random_tensor({7}, rng, -2.0, 2.0).set_requires_grad(true)};
  check_gradients(inputs, [](std::vector<T>& in) { return project(softmax(in[0]), 7); });
}

TEST_CASE("gradients: elementwise ops on three random shapes each") {
  Rng rng(4);
  for (const auto& shape : {Shape{4}, Shape{2, 5}, Shape{2, 3, 2}}) {
    SUBCASE(("shape " + shape_str(shape)).c_str()) {
      std::vector<T> ab{random_tensor(shape, rng).set_requires_grad(true),
                        random_tensor(shape, rng).set_requires_grad(true)};
      check_gradients(ab, [](std::vector<T>& in) { return project(add(in[0], in[1])); });
      check_gradients(ab, [](std::vector<T>& in) { return project(sub(in[0], in[1])); });
      check_gradients(ab, [](std::vector<T>& in) { return project(mul(in[0], in[1])); });
      check_gradients(ab, [](std::vector<T>& in) { return project(scale(in[0], -1.7)); });

      std::vector<T> pos{random_tensor(shape, rng, 0.5, 3.0).set_requires_grad(true)};
      check_gradients(pos, [](std::vector<T>& in) { return project(elem_log(in[0])); });
      check_gradients(pos, [](std::vector<T>& in) { return project(elem_exp(in[0])); });

      // keep inputs away from the relu/clamp kinks
      std::vector<T> shifted{random_tensor(shape, rng, 0.2, 1.0).set_requires_grad(true)};
      check_gradients(shifted, [](std::vector<T>& in) { return project(relu(in[0])); });
      check_gradients(shifted, [](std::vector<T>& in) { return project(clamp_min(in[0], 0.1)); });
      std::vector<T> below{random_tensor(shape, rng, -1.0, -0.2).set_requires_grad(true)};
      check_gradients(below, [](std::vector<T>& in) { return project(clamp_min(in[0], 0.1)); });
    }
  }
}

TEST_CASE("gradient: bias-broadcast add") {
  Rng rng(5);
  std::vector<T> in{random_tensor({3, 4}, rng).set_requires_grad(true),
                    random_tensor({4}, rng).set_requires_grad(true)};
  check_gradients(in, [](std::vector<T>& i) { return project(add(i[0], i[1])); });
}

TEST_CASE("gradient: scale_rows") {
  Rng rng(6);
  std::vector<T> in{random_tensor({3, 2, 2}, rng).set_requires_grad(true)};
  const std::vector<double> factors{0.3, -1.2, 2.0};
  check_gradients(in, [&](std::vector<T>& i) { return project(scale_rows(i[0], factors)); });
}

TEST_CASE("gradients: reductions and reshapes on three shapes") {
  Rng rng(7);
  for (const auto& shape : {Shape{6}, Shape{2, 3}, Shape{2, 2, 3}}) {
    std::vector<T> in{random_tensor(shape, rng).set_requires_grad(true)};
    check_gradients(in, [](std::vector<T>& i) { return sum_all(i[0]); });
    check_gradients(in, [](std::vector<T>& i) { return project(sum_last(i[0])); });
    check_gradients(in, [&](std::vector<T>& i) { return project(reshape(i[0], {numel(shape)})); });
  }
}

TEST_CASE("gradients: transpose on assorted axis pairs") {
  Rng rng(8);
  std::vector<T> in{random_tensor({2, 3, 4}, rng).set_requires_grad(true)};
  check_gradients(in, [](std::vector<T>& i) { return project(transpose(i[0], 0, 1)); });
  check_gradients(in, [](std::vector<T>& i) { return project(transpose(i[0], 1, 2)); });
  check_gradients(in, [](std::vector<T>& i) { return project(transpose(i[0], 0, 2)); });
  std::vector<T> in4{random_tensor({2, 2, 3, 2}, rng).set_requires_grad(true)};
  check_gradients(in4, [](std::vector<T>& i) { return project(transpose(i[0], 1, 3)); });

  // value sanity
  T m({2, 3}, {1, 2, 3, 4, 5, 6});
  auto mt = transpose(m, 0, 1);
  CHECK(mt.shape() == Shape{3, 2});
  CHECK(mt.data() == std::vector<double>{1, 4, 2, 5, 3, 6});
}

TEST_CASE("gradients: matmul in matrix, batched-matrix, and batched-batched forms") {
  Rng rng(9);
  {
    std::vector<T> in{random_tensor({3, 4}, rng).set_requires_grad(true),
                      random_tensor({4, 2}, rng).set_requires_grad(true)};
    check_gradients(in, [](std::vector<T>& i) { return project(matmul(i[0], i[1])); });
  }
  {
    std::vector<T> in{random_tensor({2, 3, 4}, rng).set_requires_grad(true),
                      random_tensor({4, 2}, rng).set_requires_grad(true)};
    check_gradients(in, [](std::vector<T>& i) { return project(matmul(i[0], i[1])); });
  }
  {
    std::vector<T> in{random_tensor({2, 2, 2, 3}, rng).set_requires_grad(true),
                      random_tensor({2, 2, 3, 2}, rng).set_requires_grad(true)};
    check_gradients(in, [](std::vector<T>& i) { return project(matmul(i[0], i[1])); });
  }
}

TEST_CASE("gradients: softmax and log_softmax on three shapes") {
  Rng rng(10);
  for (const auto& shape : {Shape{5}, Shape{3, 6}, Shape{2, 2, 4}}) {
    std::vector<T> in{random_tensor(shape, rng, -3.0, 3.0).set_requires_grad(true)};
    check_gradients(in, [](std::vector<T>& i) { return project(softmax(i[0])); });
    check_gradients(in, [](std::vector<T>& i) { return project(log_softmax(i[0])); });
  }
}

TEST_CASE("gradients: layer_norm w.r.t. input, gain, and bias") {
  Rng rng(11);
  for (const auto& shape : {Shape{2, 6}, Shape{2, 2, 5}, Shape{1, 8}}) {
    const int64_t c = shape.back();
    std::vector<T> in{random_tensor(shape, rng).set_requires_grad(true),
                      random_tensor({c}, rng, 0.5, 1.5).set_requires_grad(true),
                      random_tensor({c}, rng).set_requires_grad(true)};
    check_gradients(
        in, [](std::vector<T>& i) { return project(layer_norm(i[0], i[1], i[2])); }, 1e-5, 2e-4);
  }
}

TEST_CASE("gradients: gather_rows scatter-accumulates into the table") {
  Rng rng(12);
  std::vector<T> in{random_tensor({6, 3}, rng).set_requires_grad(true)};
  IdMat ids(2, 4);
  ids.v = {0, 5, 2, 2, 1, 0, 3, 5};  // repeats exercise accumulation
  check_gradients(in, [&](std::vector<T>& i) { return project(gather_rows(i[0], ids)); });
  CHECK_THROWS_AS(
      [&] {
        IdMat bad(1, 1);
        bad.v = {7};
        gather_rows(in[0], bad);
      }(),
      std::runtime_error);
}

TEST_CASE("gradients: pick_last routes into picked classes only") {
  Rng rng(13);
  std::vector<T> in{random_tensor({2, 3, 5}, rng).set_requires_grad(true)};
  IdMat ids(2, 3);
  ids.v = {0, 4, 2, 2, 2, 1};
  check_gradients(in, [&](std::vector<T>& i) { return project(pick_last(i[0], ids)); });
}

TEST_CASE("gradients: where_rows routes by mask") {
  Rng rng(14);
  std::vector<T> in{random_tensor({2, 3, 4}, rng).set_requires_grad(true),
                    random_tensor({2, 3, 4}, rng).set_requires_grad(true)};
  BoolMat mask(2, 3);
  mask.v = {1, 0, 1, 0, 0, 1};
  check_gradients(in, [&](std::vector<T>& i) { return project(where_rows(mask, i[0], i[1])); });
}

TEST_CASE("convex combinations stay inside the coordinatewise hull") {
  Rng rng(15);
  for (int rep = 0; rep < 50; ++rep) {
    const auto k = 2 + rng.uniform_int(3);
    std::vector<T> es;
    for (size_t i = 0; i < k; ++i) es.push_back(random_tensor({3, 4}, rng, -2.0, 2.0));
    const auto w = rng.dirichlet(k, 0.7);
    T out = scale(es[0], w[0]);
    for (size_t i = 1; i < k; ++i) out = add(out, scale(es[i], w[i]));
    for (size_t j = 0; j < out.data().size(); ++j) {
      double lo = es[0].data()[j], hi = es[0].data()[j];
      for (size_t i = 1; i < k; ++i) {
        lo = std::min(lo, es[i].data()[j]);
        hi = std::max(hi, es[i].data()[j]);
      }
      CHECK(out.data()[j] >= lo - 1e-12);
      CHECK(out.data()[j] <= hi + 1e-12);
    }
  }
}

TEST_CASE("detach blocks gradient flow") {
  Rng rng(16);
  auto x = random_tensor({3}, rng).set_requires_grad(true);
  auto d = x.detach();
  CHECK_FALSE(d.requires_grad());
  auto loss2 = sum_all(mul(d, d));
  CHECK_FALSE(loss2.requires_grad());
}

TEST_CASE("backward accumulates across uses of the same tensor") {
  T x({1}, {3.0});
  x.set_requires_grad(true);
  auto y = add(mul(x, x), x);  // y = x^2 + x, dy/dx = 2x + 1 = 7
  sum_all(y).backward();
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("adam: first step on f(x)=x^2 moves x by about lr (hand-computed)") {
  const double lr = 0.1, beta1 = 0.9, beta2 = 0.98, eps = 1e-9;
  TensorT<float> x({1}, std::vector<float>{1.0f});
  x.set_requires_grad(true);
  x.set_name("x");
  std::vector<TensorT<float>> params{x};
  AdamT<float> adam(lr, 0, beta1, beta2, eps);  // warmup 0 = constant lr

  auto loss = sum_all(mul(params[0], params[0]));
  loss.backward();
  adam.step(params);

  // grad = 2; m_hat = 2, v_hat = 4 => step = lr * 2 / (2 + eps)
  const double expected = 1.0 - lr * 2.0 / (2.0 + eps);
  CHECK(params[0].data()[0] == doctest::Approx(expected).epsilon(1e-6));
  CHECK_FALSE(params[0].has_grad());  // grads cleared afterwards
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
  TensorT<float> x({2}, std::vector<float>{1.5f, -2.0f});
  x.set_requires_grad(true);
  std::vector<TensorT<float>> params{x};
  AdamT<float> adam(0.1, 0);
  auto loss = sum_all(scale(params[0], 0.0));
  loss.backward();
  adam.step(params);
  CHECK(params[0].data()[0] == 1.5f);
  CHECK(params[0].data()[1] == -2.0f);
}

TEST_CASE("adam: missing gradient raises a training error naming the parameter") {
  TensorT<float> x({1}, std::vector<float>{1.0f});
  x.set_requires_grad(true);
  x.set_name("enc.0.wq");
  std::vector<TensorT<float>> params{x};
  AdamT<float> adam(0.1, 100);
  CHECK_THROWS_WITH_AS(adam.step(params), doctest::Contains("enc.0.wq"), std::runtime_error);
}

TEST_CASE("inverse-sqrt schedule: linear warmup, lr(warmup)=lr_base, then decay") {
  AdamT<float> adam(2e-3, 400);
  for (int64_t t = 1; t <= 400; ++t)
    CHECK(adam.lr(t) == doctest::Approx(2e-3 * static_cast<double>(t) / 400.0).epsilon(1e-12));
  CHECK(adam.lr(400) == doctest::Approx(2e-3).epsilon(1e-12));
  CHECK(adam.lr(1600) == doctest::Approx(2e-3 * std::sqrt(400.0 / 1600.0)).epsilon(1e-12));
  CHECK(adam.lr(800) < adam.lr(400));
}

TEST_CASE("gradient clipping rescales to the requested global norm") {
  TensorT<float> a({2}, std::vector<float>{3.0f, 0.0f});
  TensorT<float> b({1}, std::vector<float>{0.0f});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  std::vector<TensorT<float>> params{a, b};
  auto loss = add(sum_all(mul(params[0], params[0])), sum_all(mul(params[1], params[1])));
  loss.backward();
  // grads: a = (6, 0), b = (0) => norm 6
  const double norm = AdamT<float>::clip_grad_norm(params, 1.0);
  CHECK(norm == doctest::Approx(6.0));
  CHECK(params[0].grad()[0] == doctest::Approx(1.0));
}
