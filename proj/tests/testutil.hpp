#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <doctest.h>

#include "admix/rng.hpp"
#include "admix/tensor.hpp"

namespace admix::testutil {

// Central finite-difference gradient check. `f` must rebuild its graph from
// `inputs` on every call and return a scalar tensor. Every element of every
// input marked requires_grad is perturbed.
template <class F>
void check_gradients(std::vector<TensorT<double>>& inputs, F f, double eps = 1e-5,
                     double tol = 1e-4) {
  for (auto& in : inputs) in.zero_grad();
  auto loss = f(inputs);
  REQUIRE(loss.size() == 1);
  loss.backward();

  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs)
    analytic.push_back(in.has_grad() ? in.grad() : std::vector<double>(in.data().size(), 0.0));

  NoGradGuard ng;
  for (size_t t = 0; t < inputs.size(); ++t) {
    if (!inputs[t].requires_grad()) continue;
    auto& data = inputs[t].data();
    for (size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + eps;
      const double up = f(inputs).item();
      data[j] = saved - eps;
      const double down = f(inputs).item();
      data[j] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double g = analytic[t][j];
      const double denom = std::max(std::abs(fd), std::abs(g));
      if (denom < 1e-7) {
        CHECK(std::abs(fd - g) <= 1e-7);
      } else {
        INFO("input ", t, " element ", j, " fd=", fd, " analytic=", g);
        CHECK(std::abs(fd - g) / denom <= tol);
      }
    }
  }
}

inline TensorT<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorT<double> t(shape);
  for (auto& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Fixed random projection to a scalar so every output element gets a
// distinct gradient signal.
inline TensorT<double> project(const TensorT<double>& t, uint64_t seed = 99) {
  Rng rng(seed);
  TensorT<double> w(t.shape());
  for (auto& v : w.data()) v = rng.uniform() * 2.0 - 1.0;
  return sum_all(mul(t, w));
}

}  // namespace admix::testutil
