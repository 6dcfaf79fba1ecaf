// SPDX-License-Identifier: Apache-2.0

#include "wnorm/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wnorm/errors.hpp"

namespace wnorm {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw NumericError(what);
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Batch gaussian_features(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                        std::size_t targets) {
  std::normal_distribution<double> normal;
  Batch b;
  b.rows = rows;
  b.cols = cols;
  b.targets = targets;
  b.x.resize(rows * cols);
  for (double& v : b.x) v = normal(rng);
  b.y.assign(rows * targets, 0.0);
  return b;
}

}  // namespace

LossGrad quadratic_loss_grad(std::span<const double> theta, std::span<const double> a_diag,
                             std::span<const double> b) {
  require(theta.size() == a_diag.size() && theta.size() == b.size(),
          "quadratic_loss_grad: dimension mismatch");
  LossGrad out{0.0, std::vector<double>(theta.size())};
  for (std::size_t i = 0; i < theta.size(); ++i) {
    require(a_diag[i] > 0.0, "quadratic_loss_grad: curvature entries must be positive");
    out.loss += 0.5 * a_diag[i] * theta[i] * theta[i] - b[i] * theta[i];
    out.grad[i] = a_diag[i] * theta[i] - b[i];
  }
  return out;
}

LossGrad logistic_loss_grad(std::span<const double> theta, const Batch& batch) {
  require(batch.rows > 0, "logistic_loss_grad: empty batch");
  require(batch.cols == theta.size(), "logistic_loss_grad: feature dimension mismatch");
  require(batch.targets == 1, "logistic_loss_grad: expected one label per row");
  LossGrad out{0.0, std::vector<double>(theta.size(), 0.0)};
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const auto x = batch.row(r);
    const double y = batch.y[r];
    require(y == 0.0 || y == 1.0, "logistic_loss_grad: labels must be 0 or 1");
    const double z = std::inner_product(x.begin(), x.end(), theta.begin(), 0.0);
    out.loss += softplus(z) - y * z;
    const double residual = sigmoid(z) - y;
    for (std::size_t j = 0; j < x.size(); ++j) out.grad[j] += residual * x[j];
  }
  const double inv = 1.0 / static_cast<double>(batch.rows);
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

LossGrad mlp_loss_grad(std::span<const double> theta, const MlpShape& shape, const Batch& batch) {
  const std::size_t in = shape.inputs, hid = shape.hidden, out_dim = shape.outputs;
  require(theta.size() == shape.parameter_count(), "mlp_loss_grad: parameter count mismatch");
  require(batch.cols == in && batch.targets == out_dim, "mlp_loss_grad: batch shape mismatch");
  require(batch.rows > 0, "mlp_loss_grad: empty batch");

  const double* w1 = theta.data();
  const double* b1 = w1 + hid * in;
  const double* w2 = b1 + hid;
  const double* b2 = w2 + out_dim * hid;

  LossGrad result{0.0, std::vector<double>(theta.size(), 0.0)};
  double* gw1 = result.grad.data();
  double* gb1 = gw1 + hid * in;
  double* gw2 = gb1 + hid;
  double* gb2 = gw2 + out_dim * hid;

  const double inv_rows = 1.0 / static_cast<double>(batch.rows);
  std::vector<double> act(hid), delta_out(out_dim), delta_hid(hid);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const auto x = batch.row(r);
    const auto y = batch.target(r);
    for (std::size_t h = 0; h < hid; ++h) {
      double z = b1[h];
      for (std::size_t i = 0; i < in; ++i) z += w1[h * in + i] * x[i];
      act[h] = std::tanh(z);
    }
    for (std::size_t o = 0; o < out_dim; ++o) {
      double pred = b2[o];
      for (std::size_t h = 0; h < hid; ++h) pred += w2[o * hid + h] * act[h];
      const double err = pred - y[o];
      result.loss += 0.5 * err * err;
      delta_out[o] = err * inv_rows;
    }
    std::fill(delta_hid.begin(), delta_hid.end(), 0.0);
    for (std::size_t o = 0; o < out_dim; ++o) {
      gb2[o] += delta_out[o];
      for (std::size_t h = 0; h < hid; ++h) {
        gw2[o * hid + h] += delta_out[o] * act[h];
        delta_hid[h] += w2[o * hid + h] * delta_out[o];
      }
    }
    for (std::size_t h = 0; h < hid; ++h) {
      const double dz = delta_hid[h] * (1.0 - act[h] * act[h]);
      gb1[h] += dz;
      for (std::size_t i = 0; i < in; ++i) gw1[h * in + i] += dz * x[i];
    }
  }
  result.loss *= inv_rows;
  return result;
}

std::size_t GroupLayout::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t Task::dim() const {
  std::size_t n = 0;
  for (const auto& g : layout()) n += g.size();
  return n;
}

Batch Task::sample_batch(std::mt19937_64& rng, std::size_t batch_size) const {
  require(train_.rows > 0, "sample_batch: empty training pool");
  std::uniform_int_distribution<std::size_t> pick(0, train_.rows - 1);
  Batch b;
  b.rows = batch_size;
  b.cols = train_.cols;
  b.targets = train_.targets;
  b.x.reserve(batch_size * b.cols);
  b.y.reserve(batch_size * b.targets);
  for (std::size_t r = 0; r < batch_size; ++r) {
    const std::size_t src = pick(rng);
    const auto x = train_.row(src);
    const auto y = train_.target(src);
    b.x.insert(b.x.end(), x.begin(), x.end());
    b.y.insert(b.y.end(), y.begin(), y.end());
  }
  return b;
}

ParamStore Task::make_store(std::uint64_t seed) const {
  std::vector<ParamGroup> groups;
  std::size_t offset = 0;
  for (const auto& g : layout()) {
    groups.push_back({g.name, offset, g.size(), g.controlled});
    offset += g.size();
  }
  return ParamStore(initial_theta(seed), std::move(groups));
}

namespace {

// Data streams per seed.
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kValStream = 2;
constexpr std::uint64_t kTeacherStream = 3;
constexpr std::uint64_t kInitStream = 4;

class QuadraticTask final : public Task {
 public:
  QuadraticTask(const QuadraticOptions& opts, std::uint64_t seed) : dim_(opts.dim) {
    require(opts.dim > 0 && opts.pool > 0, "quadratic task: dim and pool must be positive");
    auto teacher = make_rng(seed, kTeacherStream);
    std::uniform_real_distribution<double> curvature(0.5, 2.0);
    std::normal_distribution<double> normal;
    a_.resize(dim_);
    b_.resize(dim_);
    for (double& a : a_) a = curvature(teacher);
    for (double& b : b_) b = normal(teacher);
    // Each pool row is a noisy draw of the linear term b.
    auto fill = [&](std::uint64_t stream) {
      auto rng = make_rng(seed, stream);
      Batch batch = gaussian_features(rng, opts.pool, dim_, 0);
      for (std::size_t r = 0; r < batch.rows; ++r) {
        for (std::size_t j = 0; j < dim_; ++j) {
          batch.x[r * dim_ + j] = b_[j] + opts.noise * batch.x[r * dim_ + j];
        }
      }
      return batch;
    };
    train_ = fill(kTrainStream);
    validation_ = fill(kValStream);
  }

  std::string name() const override { return "quadratic"; }
  std::vector<GroupLayout> layout() const override { return {{"theta", {dim_}, true}}; }

  LossGrad loss_and_grad(std::span<const double> theta, const Batch& batch) const override {
    require(batch.rows > 0 && batch.cols == dim_, "quadratic task: batch shape mismatch");
    std::vector<double> mean_b(dim_, 0.0);
    for (std::size_t r = 0; r < batch.rows; ++r) {
      const auto row = batch.row(r);
      for (std::size_t j = 0; j < dim_; ++j) mean_b[j] += row[j];
    }
    for (double& v : mean_b) v /= static_cast<double>(batch.rows);
    return quadratic_loss_grad(theta, a_, mean_b);
  }

  std::vector<double> initial_theta(std::uint64_t seed) const override {
    auto rng = make_rng(seed, kInitStream);
    std::normal_distribution<double> normal;
    std::vector<double> theta(dim_);
    for (double& v : theta) v = normal(rng);
    return theta;
  }

  const std::vector<double>& curvature() const { return a_; }

 private:
  std::size_t dim_;
  std::vector<double> a_;
  std::vector<double> b_;
};

class LogisticTask final : public Task {
 public:
  LogisticTask(const LogisticOptions& opts, std::uint64_t seed) : dim_(opts.dim) {
    require(opts.dim > 0 && opts.pool > 0, "logistic task: dim and pool must be positive");
    auto teacher = make_rng(seed, kTeacherStream);
    std::normal_distribution<double> normal(0.0, 2.0 / std::sqrt(static_cast<double>(dim_)));
    std::vector<double> w(dim_);
    for (double& v : w) v = normal(teacher);
    auto fill = [&](std::uint64_t stream) {
      auto rng = make_rng(seed, stream);
      Batch batch = gaussian_features(rng, opts.pool, dim_, 1);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (std::size_t r = 0; r < batch.rows; ++r) {
        const auto x = batch.row(r);
        const double p = sigmoid(std::inner_product(x.begin(), x.end(), w.begin(), 0.0));
        batch.y[r] = unit(rng) < p ? 1.0 : 0.0;
      }
      return batch;
    };
    train_ = fill(kTrainStream);
    validation_ = fill(kValStream);
  }

  std::string name() const override { return "logistic"; }
  std::vector<GroupLayout> layout() const override { return {{"w", {dim_}, true}}; }

  LossGrad loss_and_grad(std::span<const double> theta, const Batch& batch) const override {
    return logistic_loss_grad(theta, batch);
  }

  std::vector<double> initial_theta(std::uint64_t seed) const override {
    auto rng = make_rng(seed, kInitStream);
    std::normal_distribution<double> normal(0.0, 0.1);
    std::vector<double> theta(dim_);
    for (double& v : theta) v = normal(rng);
    return theta;
  }

 private:
  std::size_t dim_;
};

class MlpTask final : public Task {
 public:
  MlpTask(const MlpOptions& opts, std::uint64_t seed)
      : shape_(opts.shape), control_biases_(opts.control_biases) {
    require(shape_.inputs > 0 && shape_.hidden > 0 && shape_.outputs > 0 && opts.pool > 0,
            "mlp task: all sizes must be positive");
    // Teacher network of the same shape with larger weights than the
    // student's initialization, so fitting it has to grow the weight norm.
    auto teacher_rng = make_rng(seed, kTeacherStream);
    std::vector<double> teacher(shape_.parameter_count());
    {
      std::normal_distribution<double> normal;
      const double s1 = 2.0 / std::sqrt(static_cast<double>(shape_.inputs));
      const double s2 = 2.0 / std::sqrt(static_cast<double>(shape_.hidden));
      std::size_t k = 0;
      for (std::size_t i = 0; i < shape_.hidden * shape_.inputs; ++i) teacher[k++] = s1 * normal(teacher_rng);
      for (std::size_t i = 0; i < shape_.hidden; ++i) teacher[k++] = 0.5 * normal(teacher_rng);
      for (std::size_t i = 0; i < shape_.outputs * shape_.hidden; ++i) teacher[k++] = s2 * normal(teacher_rng);
      for (std::size_t i = 0; i < shape_.outputs; ++i) teacher[k++] = 0.5 * normal(teacher_rng);
    }
    auto fill = [&](std::uint64_t stream) {
      auto rng = make_rng(seed, stream);
      Batch batch = gaussian_features(rng, opts.pool, shape_.inputs, shape_.outputs);
      std::normal_distribution<double> noise(0.0, opts.noise);
      std::vector<double> act(shape_.hidden);
      const double* w1 = teacher.data();
      const double* b1 = w1 + shape_.hidden * shape_.inputs;
      const double* w2 = b1 + shape_.hidden;
      const double* b2 = w2 + shape_.outputs * shape_.hidden;
      for (std::size_t r = 0; r < batch.rows; ++r) {
        const auto x = batch.row(r);
        for (std::size_t h = 0; h < shape_.hidden; ++h) {
          double z = b1[h];
          for (std::size_t i = 0; i < shape_.inputs; ++i) z += w1[h * shape_.inputs + i] * x[i];
          act[h] = std::tanh(z);
        }
        for (std::size_t o = 0; o < shape_.outputs; ++o) {
          double y = b2[o];
          for (std::size_t h = 0; h < shape_.hidden; ++h) y += w2[o * shape_.hidden + h] * act[h];
          batch.y[r * shape_.outputs + o] = y + noise(rng);
        }
      }
      return batch;
    };
    train_ = fill(kTrainStream);
    validation_ = fill(kValStream);
  }

  std::string name() const override { return "mlp"; }

  std::vector<GroupLayout> layout() const override {
    return {{"W1", {shape_.hidden, shape_.inputs}, true},
            {"b1", {shape_.hidden}, control_biases_},
            {"W2", {shape_.outputs, shape_.hidden}, true},
            {"b2", {shape_.outputs}, control_biases_}};
  }

  LossGrad loss_and_grad(std::span<const double> theta, const Batch& batch) const override {
    return mlp_loss_grad(theta, shape_, batch);
  }

  std::vector<double> initial_theta(std::uint64_t seed) const override {
    auto rng = make_rng(seed, kInitStream);
    std::normal_distribution<double> normal;
    std::vector<double> theta(shape_.parameter_count(), 0.0);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(shape_.inputs));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(shape_.hidden));
    std::size_t k = 0;
    for (std::size_t i = 0; i < shape_.hidden * shape_.inputs; ++i) theta[k++] = s1 * normal(rng);
    k += shape_.hidden;  // b1 = 0
    for (std::size_t i = 0; i < shape_.outputs * shape_.hidden; ++i) theta[k++] = s2 * normal(rng);
    return theta;  // b2 = 0
  }

 private:
  MlpShape shape_;
  bool control_biases_;
};

}  // namespace

std::unique_ptr<Task> make_quadratic_task(const QuadraticOptions& opts, std::uint64_t data_seed) {
  return std::make_unique<QuadraticTask>(opts, data_seed);
}

std::unique_ptr<Task> make_logistic_task(const LogisticOptions& opts, std::uint64_t data_seed) {
  return std::make_unique<LogisticTask>(opts, data_seed);
}

std::unique_ptr<Task> make_mlp_task(const MlpOptions& opts, std::uint64_t data_seed) {
  return std::make_unique<MlpTask>(opts, data_seed);
}

std::vector<double> quadratic_curvature(const Task& task) {
  const auto* quad = dynamic_cast<const QuadraticTask*>(&task);
  if (quad == nullptr) throw NumericError("quadratic_curvature: not a quadratic task");
  return quad->curvature();
}

double finite_diff_check(const Task& task, std::span<const double> theta, const Batch& batch,
                         double h, std::size_t max_coords, std::uint64_t seed) {
  const LossGrad analytic = task.loss_and_grad(theta, batch);
  std::vector<std::size_t> coords(theta.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > max_coords) {
    auto rng = make_rng(seed, 0);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }
  std::vector<double> probe(theta.begin(), theta.end());
  double worst = 0.0;
  for (const std::size_t i : coords) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double plus = task.loss_and_grad(probe, batch).loss;
    probe[i] = saved - h;
    const double minus = task.loss_and_grad(probe, batch).loss;
    probe[i] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = analytic.grad[i];
    const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / scale);
  }
  return worst;
}

}  // namespace wnorm
