// SPDX-License-Identifier: Apache-2.0

#include "wnorm/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wnorm/errors.hpp"

namespace wnorm {

namespace {

bool parse_bool(const KeyValueLine& kv) {
  if (kv.value == "true" || kv.value == "1") return true;
  if (kv.value == "false" || kv.value == "0") return false;
  throw ParseError(kv.line, kv.key + " must be true or false");
}

std::size_t parse_count(const KeyValueLine& kv) {
  const auto n = parse_integer(kv.value, kv.line);
  if (n < 0) throw ParseError(kv.line, kv.key + " must be nonnegative");
  return static_cast<std::size_t>(n);
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Quadratic: return "quadratic";
    case TaskKind::Logistic: return "logistic";
    case TaskKind::Mlp: return "mlp";
  }
  return "mlp";
}

TaskKind parse_task_kind(std::string_view name) {
  for (const TaskKind k : {TaskKind::Quadratic, TaskKind::Logistic, TaskKind::Mlp}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("task", "must be quadratic, logistic or mlp, got '" + std::string(name) + "'");
}

std::unique_ptr<Task> make_task(const TaskSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case TaskKind::Quadratic:
      return make_quadratic_task({.dim = spec.dim, .pool = spec.pool}, seed);
    case TaskKind::Logistic:
      return make_logistic_task({.dim = spec.dim, .pool = spec.pool}, seed);
    case TaskKind::Mlp: {
      MlpOptions opts;
      opts.shape = {spec.dim, spec.hidden, 1};
      opts.pool = spec.pool;
      opts.control_biases = spec.control_biases;
      return make_mlp_task(opts, seed);
    }
  }
  throw ConfigError("unknown task kind");
}

void RunConfig::validate() const {
  optimizer.validate();
  wnorm::validate(schedule);
  if (task.dim == 0) throw ValidationError("dim", "must be positive");
  if (task.kind == TaskKind::Mlp && task.hidden == 0) throw ValidationError("hidden", "must be positive");
  if (task.pool == 0) throw ValidationError("pool", "must be positive");
  if (batch_size == 0) throw ValidationError("batch_size", "must be positive");
  if (eval_every < 1) throw ValidationError("eval_every", "must be positive");
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  for (const auto& kv : split_key_values(text)) {
    if (apply_schedule_key(cfg.schedule, kv)) continue;
    if (kv.key == "task") {
      try {
        cfg.task.kind = parse_task_kind(kv.value);
      } catch (const ConfigError& e) {
        throw ParseError(kv.line, e.what());
      }
    } else if (kv.key == "dim") {
      cfg.task.dim = parse_count(kv);
    } else if (kv.key == "hidden") {
      cfg.task.hidden = parse_count(kv);
    } else if (kv.key == "pool") {
      cfg.task.pool = parse_count(kv);
    } else if (kv.key == "control_biases") {
      cfg.task.control_biases = parse_bool(kv);
    } else if (kv.key == "batch_size") {
      cfg.batch_size = parse_count(kv);
    } else if (kv.key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_count(kv));
    } else if (kv.key == "eval_every") {
      cfg.eval_every = parse_integer(kv.value, kv.line);
    } else if (kv.key == "variant") {
      try {
        cfg.optimizer.variant = parse_variant(kv.value);
      } catch (const ConfigError& e) {
        throw ParseError(kv.line, e.what());
      }
    } else if (kv.key == "lambda") {
      cfg.optimizer.lambda = parse_real(kv.value, kv.line);
    } else if (kv.key == "alpha") {
      cfg.optimizer.alpha = parse_real(kv.value, kv.line);
    } else if (kv.key == "beta1") {
      cfg.optimizer.beta1 = parse_real(kv.value, kv.line);
    } else if (kv.key == "beta2") {
      cfg.optimizer.beta2 = parse_real(kv.value, kv.line);
    } else if (kv.key == "epsilon") {
      cfg.optimizer.epsilon = parse_real(kv.value, kv.line);
    } else {
      throw ParseError(kv.line, "unknown key '" + kv.key + "'");
    }
  }
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  apply_config_text(cfg, text);
  bool saw_horizon = false;
  for (const auto& kv : split_key_values(text)) saw_horizon = saw_horizon || kv.key == "T";
  if (!saw_horizon) throw ValidationError("T", "missing horizon");
  cfg.validate();
  return cfg;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string format_csv_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string RunTrace::to_csv() const {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.t);
    for (const double v : {r.train_loss, r.val_loss, r.eta_t, r.r_t, r.k_t, r.target_norm,
                           r.actual_norm, r.norm_ratio, r.grad_norm}) {
      out += ',';
      out += format_csv_real(v);
    }
    out += '\n';
  }
  return out;
}

namespace {

void write_file(const std::string& path, const std::string& contents) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericError("cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw NumericError("failed writing '" + path + "'");
}

double l2(std::span<const double> v) { return std::sqrt(sum_of_squares(v)); }

}  // namespace

RunTrace run(const RunConfig& config) { return run(config, StepObserver{}); }

RunTrace run(const RunConfig& config, const StepObserver& observer) {
  config.validate();
  const auto task = make_task(config.task, config.seed);
  ParamStore store = task->make_store(config.seed);
  OptimizerState state(store.size());
  auto sampler = make_rng(config.seed, kSamplerStream);
  const ScheduleSpec& schedule = config.schedule;
  const bool absolute = schedule.target_mode == TargetNormMode::Absolute;

  RunTrace trace;
  trace.initial_norm = store.initial_norm();

  auto make_row = [&](Step t, const ScheduleValues& values, double train_loss, double grad_norm) {
    TraceRow row;
    row.t = t;
    row.train_loss = train_loss;
    row.val_loss = task->loss_and_grad(store.theta(), task->validation()).loss;
    row.eta_t = values.eta;
    row.r_t = values.rt;
    row.k_t = values.kt;
    row.target_norm = absolute ? values.rt : values.rt * store.initial_norm();
    row.actual_norm = store.controlled_norm();
    row.norm_ratio = store.norm_ratio();
    row.grad_norm = grad_norm;
    return row;
  };

  {
    const LossGrad full = task->loss_and_grad(store.theta(), task->train_pool());
    trace.rows.push_back(make_row(0, evaluate(schedule, 0), full.loss, l2(full.grad)));
  }

  double loss_sum = 0.0;
  Step loss_count = 0;
  bool noted_degenerate = false;
  for (Step t = 1; t <= config.steps(); ++t) {
    try {
      const Batch batch = task->sample_batch(sampler, config.batch_size);
      const LossGrad lg = task->loss_and_grad(store.theta(), batch);
      if (!std::isfinite(lg.loss)) throw NumericError("non-finite training loss");
      const StepReport report = step(store, state, lg.grad, schedule, config.optimizer);
      if (!std::isfinite(report.norm_end)) throw NumericError("non-finite parameter norm");
      if (report.degenerate && !noted_degenerate) {
        noted_degenerate = true;
        trace.notes.push_back("step " + std::to_string(t) + ": controlled norm below " +
                              format_csv_real(kZeroNorm) + ", norm control skipped");
      }
      loss_sum += lg.loss;
      ++loss_count;
      if (t % config.eval_every == 0 || t == config.steps()) {
        const ScheduleValues values{report.eta, report.rt, report.kt};
        trace.rows.push_back(make_row(t, values, loss_sum / static_cast<double>(loss_count), l2(lg.grad)));
        loss_sum = 0.0;
        loss_count = 0;
      }
      if (observer) observer(report, store);
    } catch (const ConfigError& e) {
      throw ConfigError("step " + std::to_string(t) + ": " + e.what());
    } catch (const std::exception& e) {
      throw NumericError("step " + std::to_string(t) + ": " + e.what());
    }
  }

  if (!config.output_path.empty()) write_file(config.output_path, trace.to_csv());
  return trace;
}

Step default_ramp_steps(Step horizon) { return std::max<Step>(1, horizon / 20); }

PiecewiseLinearSpec calibrate_rt_from_run(const RunTrace& reference, Step ramp_steps) {
  if (reference.rows.empty()) throw NumericError("calibration needs a non-empty reference trace");
  const double rho = reference.final_ratio();
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw NumericError("calibration: final norm ratio must be positive, got " + format_csv_real(rho));
  }
  if (ramp_steps < 1) throw ConfigError("calibration ramp must be at least one step");
  if (rho == 1.0) return PiecewiseLinearSpec::constant(1.0);
  return PiecewiseLinearSpec::linear({{0, 1.0}, {ramp_steps, rho}});
}

namespace {

ComparisonReport summarize(RunTrace a, RunTrace b, PiecewiseLinearSpec rt) {
  ComparisonReport report;
  report.final_ratio_a = a.final_ratio();
  report.final_ratio_b = b.final_ratio();
  report.ratio_gap = std::abs(report.final_ratio_a - report.final_ratio_b);
  report.final_val_loss_a = a.final_val_loss();
  report.final_val_loss_b = b.final_val_loss();
  std::size_t j = 0;
  for (const auto& row_a : a.rows) {
    while (j < b.rows.size() && b.rows[j].t < row_a.t) ++j;
    if (j < b.rows.size() && b.rows[j].t == row_a.t) {
      report.relative_val_loss.emplace_back(row_a.t, b.rows[j].val_loss / row_a.val_loss);
    }
  }
  report.trace_a = std::move(a);
  report.trace_b = std::move(b);
  report.calibrated_rt = std::move(rt);
  return report;
}

}  // namespace

ComparisonReport compare(const RunConfig& config_a, const RunConfig& template_b,
                         std::optional<Step> ramp_steps) {
  if (config_a.optimizer.variant == Variant::NormControl) {
    throw ConfigError("compare: config A must be a decay baseline, not norm_control");
  }
  if (template_b.optimizer.variant != Variant::NormControl) {
    throw ConfigError("compare: template B must use variant norm_control");
  }
  RunTrace a = run(config_a);
  RunConfig config_b = template_b;
  config_b.schedule.rt =
      calibrate_rt_from_run(a, ramp_steps.value_or(default_ramp_steps(config_b.steps())));
  config_b.schedule.target_mode = TargetNormMode::RelativeToInit;
  RunTrace b = run(config_b);
  return summarize(std::move(a), std::move(b), config_b.schedule.rt);
}

ComparisonReport compare_uncalibrated(const RunConfig& config_a, const RunConfig& config_b) {
  RunTrace a = run(config_a);
  RunTrace b = run(config_b);
  return summarize(std::move(a), std::move(b), config_b.schedule.rt);
}

std::string ComparisonReport::to_json() const {
  nlohmann::json j;
  j["final_ratio_a"] = final_ratio_a;
  j["final_ratio_b"] = final_ratio_b;
  j["ratio_gap"] = ratio_gap;
  j["relative_ratio_gap"] = final_ratio_a > 0.0 ? ratio_gap / final_ratio_a : 0.0;
  j["final_val_loss_a"] = final_val_loss_a;
  j["final_val_loss_b"] = final_val_loss_b;
  j["calibrated_rt"] = nlohmann::json::array();
  for (const auto& p : calibrated_rt.points) j["calibrated_rt"].push_back({p.t, p.value});
  j["relative_val_loss"] = nlohmann::json::array();
  for (const auto& [t, ratio] : relative_val_loss) j["relative_val_loss"].push_back({t, ratio});
  return j.dump(2) + "\n";
}

std::string emit_schedule_table(const ScheduleSpec& spec, Step stride) {
  if (stride < 1) throw ConfigError("stride must be at least 1");
  validate(spec);
  std::string out = "t,eta_t,r_t,k_t\n";
  auto emit = [&](Step t) {
    const ScheduleValues v = evaluate(spec, t);
    out += std::to_string(t) + ',' + format_csv_real(v.eta) + ',' + format_csv_real(v.rt) + ',' +
           format_csv_real(v.kt) + '\n';
  };
  for (Step t = 0; t < spec.horizon; t += stride) emit(t);
  emit(spec.horizon);
  return out;
}

}  // namespace wnorm
