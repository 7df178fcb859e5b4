#include <doctest.h>

#include <cmath>
#include <vector>

#include "poselift/ops.hpp"
#include "poselift/optimizer.hpp"

using namespace poselift;

TEST_CASE("first adam step moves each entry by roughly lr times the gradient sign") {
  Tensor x = Tensor::from_values({3}, {1.0, -2.0, 3.0}, true);
  x.mutable_grad() = {2.0, -0.5, 4.0};
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamOptimizer opt({{"x", x}}, cfg);
  opt.step();

  CHECK(x.at({0}) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(x.at({1}) == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(x.at({2}) == doctest::Approx(3.0 - 0.01).epsilon(1e-6));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("learning rate decays multiplicatively") {
  Tensor x = Tensor::zeros({1}, true);
  AdamConfig cfg;
  cfg.learning_rate = 0.0003;
  AdamOptimizer opt({{"x", x}}, cfg);
  for (int epoch = 0; epoch < 3; ++epoch) opt.scale_learning_rate(0.95);
  CHECK(opt.learning_rate() == 0.0003 * 0.95 * 0.95 * 0.95);
}

TEST_CASE("zero gradient leaves the parameter unchanged on the first step") {
  Tensor x = Tensor::from_values({2}, {5.0, -7.0}, true);
  x.mutable_grad() = {0.0, 0.0};
  AdamOptimizer opt({{"x", x}});
  opt.step();
  CHECK(x.at({0}) == 5.0);
  CHECK(x.at({1}) == -7.0);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("a parameter without a gradient buffer is skipped") {
  Tensor moving = Tensor::from_values({1}, {1.0}, true);
  Tensor parked = Tensor::from_values({1}, {9.0}, true);
  moving.mutable_grad() = {1.0};
  AdamOptimizer opt({{"moving", moving}, {"parked", parked}});
  opt.step();
  CHECK(moving.at({0}) != 1.0);
  CHECK(parked.at({0}) == 9.0);
}

TEST_CASE("non-finite gradient aborts the step without touching any parameter") {
  Tensor a = Tensor::from_values({2}, {1.0, 2.0}, true);
  Tensor b = Tensor::from_values({1}, {3.0}, true);
  a.mutable_grad() = {0.5, 0.5};
  b.mutable_grad() = {std::nan("")};
  AdamOptimizer opt({{"layer.weight", a}, {"layer.bias", b}});

  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("layer.bias"), NonFiniteError);
  CHECK(a.at({0}) == 1.0);
  CHECK(a.at({1}) == 2.0);
  CHECK(b.at({0}) == 3.0);
  CHECK(opt.step_count() == 0);
}

TEST_CASE("zero_grad clears every accumulated gradient") {
  Tensor a = Tensor::from_values({2}, {1.0, 2.0}, true);
  a.mutable_grad() = {4.0, 5.0};
  AdamOptimizer opt({{"a", a}});
  opt.zero_grad();
  CHECK(a.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("adam minimises a quadratic") {
  Tensor x = Tensor::from_values({3}, {4.0, -3.0, 2.0}, true);
  Tensor target = Tensor::from_values({3}, {1.0, 1.0, 1.0});
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  AdamOptimizer opt({{"x", x}}, cfg);
  for (int i = 0; i < 400; ++i) {
    opt.zero_grad();
    Tensor diff = ops::sub(x, target);
    ops::sum_all(ops::mul(diff, diff)).backward();
    opt.step();
  }
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(x.at({i}) - 1.0) < 1e-3);
  }
}

TEST_CASE("step size is linear in the learning rate for fixed gradients") {
  auto step_norm = [](double lr) {
    Tensor x = Tensor::from_values({3}, {1.0, 2.0, 3.0}, true);
    x.mutable_grad() = {0.3, -1.7, 0.9};
    AdamConfig cfg;
    cfg.learning_rate = lr;
    AdamOptimizer opt({{"x", x}}, cfg);
    opt.step();
    double sq = 0.0;
    const std::vector<double> start = {1.0, 2.0, 3.0};
    for (std::size_t i = 0; i < 3; ++i) {
      const double d = x.at({i}) - start[i];
      sq += d * d;
    }
    return std::sqrt(sq);
  };
  const double full = step_norm(0.01);
  const double half = step_norm(0.005);
  CHECK(full == doctest::Approx(2.0 * half).epsilon(1e-12));
  CHECK(step_norm(0.0) == 0.0);
}

TEST_CASE("optimizer rejects malformed configuration") {
  Tensor x = Tensor::zeros({1}, true);
  AdamConfig bad;
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(AdamOptimizer({{"x", x}}, bad), ConfigError);
  bad = AdamConfig{};
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(AdamOptimizer({{"x", x}}, bad), ConfigError);
  CHECK_THROWS_AS(AdamOptimizer({{"x", Tensor{}}}, AdamConfig{}), ConfigError);
}
