// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "wnorm/errors.hpp"
#include "wnorm/harness.hpp"

using namespace wnorm;

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

RunConfig small_mlp(Variant variant, Step horizon) {
  RunConfig cfg;
  cfg.task.kind = TaskKind::Mlp;
  cfg.task.dim = 4;
  cfg.task.hidden = 8;
  cfg.task.pool = 128;
  cfg.optimizer.variant = variant;
  cfg.optimizer.lambda = 0.1;
  cfg.schedule.horizon = horizon;
  cfg.eval_every = 50;
  cfg.batch_size = 16;
  cfg.seed = 11;
  return cfg;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

RunTrace trace_ending_at(double ratio) {
  RunTrace trace;
  trace.initial_norm = 1.0;
  trace.rows.push_back({});
  trace.rows.back().norm_ratio = ratio;
  return trace;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_run_config(
      "task = logistic\n"
      "dim = 6\n"
      "T = 300\n"
      "batch_size = 8\n"
      "seed = 9\n"
      "eval_every = 30\n"
      "variant = decay_decoupled\n"
      "lambda = 0.05\n"
      "alpha = 0.01\n"
      "beta1 = 0.8\n"
      "beta2 = 0.99\n"
      "epsilon = 1e-6\n"
      "control_biases = true\n"
      "rt = const(1.5)\n");
  CHECK(cfg.task.kind == TaskKind::Logistic);
  CHECK(cfg.task.dim == 6);
  CHECK(cfg.steps() == 300);
  CHECK(cfg.batch_size == 8);
  CHECK(cfg.seed == 9);
  CHECK(cfg.eval_every == 30);
  CHECK(cfg.optimizer.variant == Variant::DecayDecoupled);
  CHECK(cfg.optimizer.lambda == 0.05);
  CHECK(cfg.optimizer.alpha == 0.01);
  CHECK(cfg.optimizer.beta1 == 0.8);
  CHECK(cfg.optimizer.beta2 == 0.99);
  CHECK(cfg.optimizer.epsilon == 1e-6);
  CHECK(cfg.task.control_biases);
  CHECK(cfg.schedule.rt == PiecewiseLinearSpec::constant(1.5));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_run_config("task = mlp\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("T = 10\ntask = resnet\n"), ParseError);
  CHECK_THROWS_AS(parse_run_config("T = 10\nvariant = sgd\n"), ParseError);
  CHECK_THROWS_AS(parse_run_config("T = 10\nbatch_size = 0\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("T = 10\nwidth = 3\n"), ParseError);
  CHECK_THROWS_AS(parse_run_config("T = 10\nbeta2 = 1\n"), ValidationError);
  CHECK_THROWS_AS(parse_task_kind("cnn"), ValidationError);
}

TEST_CASE("plain adam descends on the quadratic task") {
  RunConfig cfg;
  cfg.task.kind = TaskKind::Quadratic;
  cfg.task.dim = 16;
  cfg.optimizer.variant = Variant::None;
  cfg.optimizer.alpha = 0.01;
  cfg.schedule.horizon = 1000;
  const auto trace = run(cfg);
  CHECK(trace.rows.front().t == 0);
  CHECK(trace.rows.back().t == 1000);
  CHECK(trace.rows.size() == 11);
  CHECK(trace.rows.back().train_loss < trace.rows.front().train_loss);
  CHECK(trace.final_val_loss() < trace.rows.front().val_loss);
}

TEST_CASE("runs are deterministic") {
  auto cfg = small_mlp(Variant::NormControl, 300);
  cfg.schedule.rt = PiecewiseLinearSpec::linear({{0, 1.0}, {100, 1.5}});
  const auto path = (std::filesystem::temp_directory_path() / "wnorm_det_trace.csv").string();
  cfg.output_path = path;
  const auto first = run(cfg).to_csv();
  const auto on_disk = read_text_file(path);
  const auto second = run(cfg).to_csv();
  CHECK(first == second);
  CHECK(first == on_disk);
  std::filesystem::remove(path);
}

TEST_CASE("trace csv layout") {
  const auto trace = run(small_mlp(Variant::DecayCoupledLR, 120));
  const auto rows = lines(trace.to_csv());
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == kTraceHeader);
  CHECK(rows[1].starts_with("0,"));
  CHECK(rows[2].starts_with("50,"));
  CHECK(rows[4].starts_with("120,"));
  CHECK(format_csv_real(0.1) == "0.10000000000000001");
}

TEST_CASE("k = 1 keeps the norm on target at every logged step") {
  auto cfg = small_mlp(Variant::NormControl, 400);
  cfg.eval_every = 1;
  cfg.schedule.rt = PiecewiseLinearSpec::linear({{0, 1.0}, {200, 1.8}});
  cfg.schedule.kt = PiecewiseLinearSpec::constant(1.0);
  const auto trace = run(cfg);
  CHECK(trace.rows.size() == 401);
  for (const auto& row : trace.rows)
    CHECK(std::abs(row.actual_norm - row.target_norm) <= 8 * kEps * row.target_norm);
}

TEST_CASE("absolute target mode") {
  auto cfg = small_mlp(Variant::NormControl, 50);
  cfg.schedule.rt = PiecewiseLinearSpec::constant(3.0);
  cfg.schedule.kt = PiecewiseLinearSpec::constant(1.0);
  cfg.schedule.target_mode = TargetNormMode::Absolute;
  const auto trace = run(cfg);
  CHECK(trace.rows.back().target_norm == 3.0);
  CHECK(std::abs(trace.rows.back().actual_norm - 3.0) <= 8 * kEps * 3.0);
}

TEST_CASE("observer sees every step") {
  Step calls = 0;
  run(small_mlp(Variant::None, 37), [&](const StepReport& r, const ParamStore&) {
    ++calls;
    CHECK(r.t == calls);
  });
  CHECK(calls == 37);
}

TEST_CASE("calibration examples") {
  const auto ramp = calibrate_rt_from_run(trace_ending_at(2.415), 2500);
  CHECK(ramp.points == std::vector<Breakpoint>{{0, 1.0}, {2500, 2.415}});
  CHECK(calibrate_rt_from_run(trace_ending_at(1.0), 2500) == PiecewiseLinearSpec::constant(1.0));
  CHECK(rt_schedule_eval(calibrate_rt_from_run(trace_ending_at(2.0), 1250), 625) == 1.5);
  CHECK_THROWS_AS(calibrate_rt_from_run(trace_ending_at(0.0), 10), NumericError);
  CHECK_THROWS_AS(calibrate_rt_from_run(trace_ending_at(-1.0), 10), NumericError);
  CHECK(default_ramp_steps(10000) == 500);
  CHECK(default_ramp_steps(5) == 1);
}

TEST_CASE("compare with a decay-free baseline") {
  auto a = small_mlp(Variant::None, 600);
  auto b = a;
  b.optimizer.variant = Variant::NormControl;
  b.schedule.kt = PiecewiseLinearSpec::constant(0.05);
  const auto report = compare(a, b);
  REQUIRE_FALSE(report.relative_val_loss.empty());
  CHECK(report.relative_val_loss.front().first == 0);
  CHECK(report.relative_val_loss.front().second == 1.0);
  CHECK(report.calibrated_rt.points.back().value == report.final_ratio_a);
  CHECK(report.ratio_gap <= 0.05 * report.final_ratio_a);
  CHECK(report.to_json().find("\"ratio_gap\"") != std::string::npos);
}

TEST_CASE("compare argument checks") {
  const auto nc = small_mlp(Variant::NormControl, 10);
  const auto decay = small_mlp(Variant::DecayCoupledLR, 10);
  CHECK_THROWS_AS(compare(nc, nc), ConfigError);
  CHECK_THROWS_AS(compare(decay, decay), ConfigError);
}

TEST_CASE("decay and its norm-control equivalent produce the same losses") {
  auto a = small_mlp(Variant::DecayCoupledLR, 500);
  auto b = a;
  b.optimizer.variant = Variant::NormControl;
  b.schedule.rt = PiecewiseLinearSpec::constant(0.0);
  b.schedule.kt = PiecewiseLinearSpec::constant(a.optimizer.alpha * a.optimizer.lambda);
  b.schedule.kt_scaled_by_eta = true;
  const auto report = compare_uncalibrated(a, b);
  REQUIRE(report.trace_a.rows.size() == report.trace_b.rows.size());
  for (std::size_t i = 0; i < report.trace_a.rows.size(); ++i) {
    const auto& ra = report.trace_a.rows[i];
    const auto& rb = report.trace_b.rows[i];
    CHECK(std::abs(ra.val_loss - rb.val_loss) <= 1e-10 * std::abs(ra.val_loss));
    CHECK(std::abs(ra.train_loss - rb.train_loss) <= 1e-10 * std::abs(ra.train_loss));
  }
}

TEST_CASE("schedule table") {
  ScheduleSpec spec;
  spec.horizon = 1000;
  auto rows = lines(emit_schedule_table(spec, 1000));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "t,eta_t,r_t,k_t");
  CHECK(rows[1] == "0,1,1,0.01");
  CHECK(rows[2].starts_with("1000,0.10000000000000001,"));

  spec.rt = PiecewiseLinearSpec::constant(0.0);
  rows = lines(emit_schedule_table(spec, 100));
  CHECK(rows.size() == 12);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::istringstream in(rows[i]);
    std::string t, eta, rt;
    std::getline(in, t, ',');
    std::getline(in, eta, ',');
    std::getline(in, rt, ',');
    CHECK(rt == "0");
  }

  spec.horizon = 1030;
  CHECK(lines(emit_schedule_table(spec, 100)).back().starts_with("1030,"));
  CHECK_THROWS_AS(emit_schedule_table(spec, 0), ConfigError);
}

TEST_CASE("schedule table reproduces a doubling ramp at its breakpoints") {
  ScheduleSpec spec;
  spec.horizon = 4000;
  spec.rt = PiecewiseLinearSpec::linear({{0, 1.0}, {1000, 2.0}});
  const auto rows = lines(emit_schedule_table(spec, 250));
  CHECK(rows.size() == 18);
  auto rt_at = [&](std::size_t i) {
    std::istringstream in(rows[i]);
    std::string field;
    for (int k = 0; k < 3; ++k) std::getline(in, field, ',');
    return std::stod(field);
  };
  CHECK(rt_at(1) == 1.0);
  CHECK(rt_at(3) == 1.5);
  CHECK(rt_at(5) == 2.0);
  CHECK(rt_at(17) == 2.0);
  for (std::size_t i = 2; i <= 5; ++i) CHECK(rt_at(i) > rt_at(i - 1));
}

TEST_CASE("invalid configs are rejected before running") {
  auto cfg = small_mlp(Variant::None, 10);
  CHECK_NOTHROW(run(cfg));
  cfg.task.dim = 0;
  CHECK_THROWS_AS(run(cfg), ValidationError);
}
