// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "wnorm/errors.hpp"
#include "wnorm/tasks.hpp"

using namespace wnorm;

namespace {

bool near(double a, double b, double rel = 1e-14) {
  return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1e-300});
}

Batch make_batch(std::size_t rows, std::size_t cols, std::size_t targets, std::vector<double> x,
                 std::vector<double> y) {
  return Batch{rows, cols, targets, std::move(x), std::move(y)};
}

}  // namespace

TEST_CASE("quadratic examples") {
  std::vector<double> ones{1.0, 1.0}, zeros{0.0, 0.0}, theta{1.0, 2.0};
  auto r = quadratic_loss_grad(theta, ones, zeros);
  CHECK(r.loss == 2.5);
  CHECK(r.grad == std::vector<double>{1.0, 2.0});

  std::vector<double> a{2.0}, b{4.0}, t1{1.0};
  r = quadratic_loss_grad(t1, a, b);
  CHECK(r.loss == -3.0);
  CHECK(r.grad == std::vector<double>{-2.0});

  std::vector<double> star{2.0};
  CHECK(quadratic_loss_grad(star, a, b).grad == std::vector<double>{0.0});

  std::vector<double> bad{0.0};
  CHECK_THROWS_AS(quadratic_loss_grad(t1, bad, b), NumericError);
  CHECK_THROWS_AS(quadratic_loss_grad(theta, a, b), NumericError);
}

TEST_CASE("logistic examples") {
  std::vector<double> zero1{0.0};
  auto one = make_batch(1, 1, 1, {1.0}, {1.0});
  auto r = logistic_loss_grad(zero1, one);
  CHECK(r.grad == std::vector<double>{-0.5});
  CHECK(near(r.loss, std::numbers::ln2));

  std::vector<double> zero2{0.0, 0.0};
  auto balanced = make_batch(4, 2, 1, {1, 2, -3, 0.5, 0.1, 0.1, 7, -1}, {1, 0, 1, 0});
  CHECK(near(logistic_loss_grad(zero2, balanced).loss, std::numbers::ln2));

  CHECK_THROWS_AS(logistic_loss_grad(zero1, Batch{}), NumericError);
}

TEST_CASE("logistic loss is stable for large margins") {
  std::vector<double> theta{1000.0};
  auto batch = make_batch(2, 1, 1, {1.0, -1.0}, {1.0, 1.0});
  const auto r = logistic_loss_grad(theta, batch);
  CHECK(std::isfinite(r.loss));
  CHECK(near(r.loss, 500.0));
  CHECK(near(r.grad[0], 0.5));
}

TEST_CASE("mlp zero parameters and targets") {
  const MlpShape shape{3, 4, 2};
  std::vector<double> theta(shape.parameter_count(), 0.0);
  auto batch = make_batch(2, 3, 2, {1, 2, 3, -1, 0.5, 2}, {0, 0, 0, 0});
  const auto r = mlp_loss_grad(theta, shape, batch);
  CHECK(r.loss == 0.0);
  for (double g : r.grad) CHECK(g == 0.0);
}

TEST_CASE("mlp 1-1-1 network matches the hand chain rule") {
  const MlpShape shape{1, 1, 1};
  const double w1 = 0.7, b1 = -0.2, w2 = 1.3, b2 = 0.4, x = 0.9, y = -0.5;
  std::vector<double> theta{w1, b1, w2, b2};
  auto batch = make_batch(1, 1, 1, {x}, {y});
  const auto r = mlp_loss_grad(theta, shape, batch);

  const double h = std::tanh(w1 * x + b1);
  const double e = w2 * h + b2 - y;
  const double dz = e * w2 * (1.0 - h * h);
  CHECK(near(r.loss, 0.5 * e * e));
  CHECK(near(r.grad[0], dz * x));
  CHECK(near(r.grad[1], dz));
  CHECK(near(r.grad[2], e * h));
  CHECK(near(r.grad[3], e));
}

TEST_CASE("mlp shape mismatch") {
  const MlpShape shape{2, 3, 1};
  std::vector<double> theta(5, 0.0);
  auto batch = make_batch(1, 2, 1, {1, 2}, {0});
  CHECK_THROWS_AS(mlp_loss_grad(theta, shape, batch), NumericError);
  std::vector<double> ok(shape.parameter_count(), 0.0);
  auto wrong_cols = make_batch(1, 3, 1, {1, 2, 3}, {0});
  CHECK_THROWS_AS(mlp_loss_grad(ok, shape, wrong_cols), NumericError);
}

TEST_CASE("task layouts and stores") {
  MlpOptions opts;
  auto mlp = make_mlp_task(opts, 5);
  CHECK(mlp->dim() == opts.shape.parameter_count());
  auto store = mlp->make_store(5);
  CHECK(store.size() == mlp->dim());
  CHECK(store.groups().size() == 4);
  CHECK(store.group("W1").controlled);
  CHECK_FALSE(store.group("b1").controlled);

  opts.control_biases = true;
  auto biased = make_mlp_task(opts, 5)->make_store(5);
  CHECK(biased.group("b2").controlled);

  auto quad = make_quadratic_task({}, 1);
  for (double a : quadratic_curvature(*quad)) CHECK(a > 0.0);
  CHECK(quad->make_store(1).initial_norm() > 0.0);
}

TEST_CASE("data generation is deterministic") {
  auto a = make_logistic_task({}, 42);
  auto b = make_logistic_task({}, 42);
  CHECK(a->train_pool().x == b->train_pool().x);
  CHECK(a->validation().y == b->validation().y);
  auto ra = make_rng(42, 100), rb = make_rng(42, 100);
  CHECK(a->sample_batch(ra, 16).x == b->sample_batch(rb, 16).x);
  auto c = make_logistic_task({}, 43);
  CHECK(a->train_pool().x != c->train_pool().x);
  for (double y : a->train_pool().y) CHECK((y == 0.0 || y == 1.0));
}

TEST_CASE("rng streams differ") {
  auto a = make_rng(1, 1), b = make_rng(1, 2);
  CHECK(a() != b());
}

TEST_CASE("finite differences") {
  auto quad = make_quadratic_task({}, 3);
  auto theta = quad->initial_theta(3);
  CHECK(finite_diff_check(*quad, theta, quad->train_pool(), 1e-3) <= 1e-9);

  auto logit = make_logistic_task({}, 3);
  auto rng = make_rng(3, 0);
  auto batch = logit->sample_batch(rng, 16);
  CHECK(finite_diff_check(*logit, logit->initial_theta(3), batch, 1e-5) <= 1e-6);

  auto mlp = make_mlp_task({}, 3);
  auto mb = mlp->sample_batch(rng, 16);
  CHECK(finite_diff_check(*mlp, mlp->initial_theta(3), mb, 1e-5) <= 1e-5);
}
