// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wnorm/param_store.hpp"

namespace wnorm {

/// Row-major block of examples: `rows` feature rows of width `cols` and
/// `rows` target rows of width `targets`.
struct Batch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t targets = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::span<const double> row(std::size_t r) const { return {x.data() + r * cols, cols}; }
  std::span<const double> target(std::size_t r) const {
    return {y.data() + r * targets, targets};
  }
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Closed-form objectives ----------------------------------------------------

/// ½·θᵀdiag(a)·θ − bᵀθ. Throws NumericError for a non-positive diagonal
/// entry or mismatched sizes.
LossGrad quadratic_loss_grad(std::span<const double> theta, std::span<const double> a_diag,
                             std::span<const double> b);

/// Mean sigmoid cross-entropy; labels in batch.y must be 0 or 1.
LossGrad logistic_loss_grad(std::span<const double> theta, const Batch& batch);

/// input → tanh hidden → linear output network, loss = Σ‖ŷ − y‖² / (2·rows).
struct MlpShape {
  std::size_t inputs = 8;
  std::size_t hidden = 32;
  std::size_t outputs = 1;

  std::size_t parameter_count() const {
    return hidden * inputs + hidden + outputs * hidden + outputs;
  }
};

/// θ packs W1 [hidden×inputs], b1 [hidden], W2 [outputs×hidden], b2 [outputs].
LossGrad mlp_loss_grad(std::span<const double> theta, const MlpShape& shape, const Batch& batch);

// Tasks ---------------------------------------------------------------------

struct GroupLayout {
  std::string name;
  std::vector<std::size_t> shape;
  bool controlled = true;

  std::size_t size() const;
};

/// A differentiable objective together with its synthetic data. Data pools
/// are generated once at construction from the data seed; training batches
/// are drawn from the train pool with replacement.
class Task {
 public:
  virtual ~Task() = default;

  virtual std::string name() const = 0;
  virtual std::vector<GroupLayout> layout() const = 0;
  virtual LossGrad loss_and_grad(std::span<const double> theta, const Batch& batch) const = 0;
  virtual std::vector<double> initial_theta(std::uint64_t seed) const = 0;

  std::size_t dim() const;
  const Batch& train_pool() const { return train_; }
  const Batch& validation() const { return validation_; }

  Batch sample_batch(std::mt19937_64& rng, std::size_t batch_size) const;

  /// Fresh parameter store laid out per layout(), initialized from `seed`.
  ParamStore make_store(std::uint64_t seed) const;

 protected:
  Batch train_;
  Batch validation_;
};

struct QuadraticOptions {
  std::size_t dim = 16;
  std::size_t pool = 256;
  double noise = 0.5;
};

struct LogisticOptions {
  std::size_t dim = 10;
  std::size_t pool = 512;
};

struct MlpOptions {
  MlpShape shape;
  std::size_t pool = 512;
  double noise = 0.05;
  /// Whether b1/b2 take part in decay and norm control.
  bool control_biases = false;
};

std::unique_ptr<Task> make_quadratic_task(const QuadraticOptions& opts, std::uint64_t data_seed);
std::unique_ptr<Task> make_logistic_task(const LogisticOptions& opts, std::uint64_t data_seed);
std::unique_ptr<Task> make_mlp_task(const MlpOptions& opts, std::uint64_t data_seed);

/// Diagonal of the quadratic task's curvature, for tests.
std::vector<double> quadratic_curvature(const Task& task);

/// Maximum over checked coordinates of |analytic − numeric| / max(|analytic|,
/// |numeric|, 1e-6), numeric being the central difference with step h.
/// For dim > max_coords a seeded random subset of coordinates is checked.
double finite_diff_check(const Task& task, std::span<const double> theta, const Batch& batch,
                         double h, std::size_t max_coords = 200, std::uint64_t seed = 0);

/// Independent random stream `stream` derived from `seed`.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace wnorm
