// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wnorm/optim.hpp"
#include "wnorm/schedules.hpp"
#include "wnorm/tasks.hpp"

namespace wnorm {

enum class TaskKind { Quadratic, Logistic, Mlp };

struct TaskSpec {
  TaskKind kind = TaskKind::Mlp;
  std::size_t dim = 8;      ///< feature / parameter dimension (MLP: inputs)
  std::size_t hidden = 32;  ///< MLP only
  std::size_t pool = 512;   ///< rows in each of the train and validation pools
  bool control_biases = false;
};

std::unique_ptr<Task> make_task(const TaskSpec& spec, std::uint64_t seed);

std::string_view to_string(TaskKind kind);
/// "quadratic", "logistic" or "mlp"; throws ValidationError otherwise.
TaskKind parse_task_kind(std::string_view name);

/// Random stream run() draws mini-batches from; tasks use streams 1-4.
inline constexpr std::uint64_t kSamplerStream = 100;

struct RunConfig {
  TaskSpec task;
  OptimizerConfig optimizer;
  ScheduleSpec schedule;  ///< schedule.horizon is the step count T
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Step eval_every = 100;
  std::string output_path;  ///< trace CSV; empty means do not write

  Step steps() const noexcept { return schedule.horizon; }
  void validate() const;
};

/// Parses a config file: schedule keys plus task, dim, hidden, pool,
/// batch_size, seed, eval_every, variant, lambda, alpha, beta1, beta2,
/// epsilon, control_biases.
RunConfig parse_run_config(std::string_view text);

/// Applies the keys in `text` on top of an existing config. Later keys win.
void apply_config_text(RunConfig& cfg, std::string_view text);

std::string read_text_file(const std::string& path);

struct TraceRow {
  Step t = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double eta_t = 0.0;
  double r_t = 0.0;
  double k_t = 0.0;
  double target_norm = 0.0;
  double actual_norm = 0.0;
  double norm_ratio = 0.0;
  double grad_norm = 0.0;
};

struct RunTrace {
  double initial_norm = 0.0;
  std::vector<TraceRow> rows;
  std::vector<std::string> notes;  ///< warnings raised during the run

  double final_ratio() const { return rows.empty() ? 0.0 : rows.back().norm_ratio; }
  double final_val_loss() const { return rows.empty() ? 0.0 : rows.back().val_loss; }

  /// Header `t,train_loss,val_loss,eta_t,r_t,k_t,target_norm,actual_norm,
  /// norm_ratio,grad_norm`, reals with 17 significant digits.
  std::string to_csv() const;
};

inline constexpr std::string_view kTraceHeader =
    "t,train_loss,val_loss,eta_t,r_t,k_t,target_norm,actual_norm,norm_ratio,grad_norm";

/// Row t=0 holds full-train-pool loss and gradient norm at θ₀. A row at
/// step t>0 holds the mean mini-batch loss since the previous row and the
/// norm of step t's mini-batch gradient.
RunTrace run(const RunConfig& config);

/// Optional per-step observer for callers that need θ after every step.
using StepObserver = std::function<void(const StepReport&, const ParamStore&)>;
RunTrace run(const RunConfig& config, const StepObserver& observer);

/// r_t = 1.0 at t=0 rising linearly to the reference run's final norm
/// ratio at t=ramp_steps, constant afterwards. Throws NumericError when that
/// ratio is not positive.
PiecewiseLinearSpec calibrate_rt_from_run(const RunTrace& reference, Step ramp_steps);

/// Default calibration ramp: 5% of the horizon.
Step default_ramp_steps(Step horizon);

struct ComparisonReport {
  RunTrace trace_a;
  RunTrace trace_b;
  PiecewiseLinearSpec calibrated_rt;
  double final_ratio_a = 0.0;
  double final_ratio_b = 0.0;
  double ratio_gap = 0.0;
  double final_val_loss_a = 0.0;
  double final_val_loss_b = 0.0;
  /// (t, val_loss_B / val_loss_A) at every step logged by both runs.
  std::vector<std::pair<Step, double>> relative_val_loss;

  std::string to_json() const;
};

/// Runs `config_a` (a decay baseline), calibrates r_t from its final norm
/// ratio and runs `template_b` (NormControl) with that schedule.
ComparisonReport compare(const RunConfig& config_a, const RunConfig& template_b,
                         std::optional<Step> ramp_steps = std::nullopt);

/// Runs both configs as given, without calibration.
ComparisonReport compare_uncalibrated(const RunConfig& config_a, const RunConfig& config_b);

/// CSV `t,eta_t,r_t,k_t` at t = 0, stride, 2·stride, … and at T.
std::string emit_schedule_table(const ScheduleSpec& spec, Step stride);

/// `%.17g` formatting used by all CSV output.
std::string format_csv_real(double value);

}  // namespace wnorm
