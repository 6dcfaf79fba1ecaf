// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wnorm/harness.hpp"
#include "wnorm/optim.hpp"
#include "wnorm/param_store.hpp"
#include "wnorm/schedules.hpp"
#include "wnorm/tasks.hpp"
#include "wnorm/verify.hpp"

using namespace wnorm;

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;  // <= 0 means none
  std::function<Outcome()> body;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

long double reference_norm(std::span<const double> theta) {
  long double s = 0.0L;
  for (double x : theta) s += static_cast<long double>(x) * x;
  return std::sqrt(s);
}

ParamStore random_store(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 1000);
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
  std::normal_distribution<double> normal;
  const std::size_t n = dim(rng);
  const double scale = std::pow(10.0, log_scale(rng));
  std::vector<double> theta(n);
  for (double& x : theta) x = scale * normal(rng);
  auto store = ParamStore::single_group(std::move(theta));
  std::uniform_real_distribution<double> drift(0.25, 4.0);
  store.scale_controlled(drift(rng));
  return store;
}

RunConfig mlp_config(Variant variant, Step horizon, std::uint64_t seed) {
  RunConfig cfg;
  cfg.task.kind = TaskKind::Mlp;
  cfg.optimizer.variant = variant;
  cfg.schedule.horizon = horizon;
  cfg.seed = seed;
  cfg.eval_every = 500;
  return cfg;
}

std::vector<std::vector<double>> trajectory(const RunConfig& cfg) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(cfg.steps()));
  run(cfg, [&](const StepReport&, const ParamStore& store) {
    out.emplace_back(store.theta().begin(), store.theta().end());
  });
  return out;
}

double trajectory_gap(const RunConfig& a, const RunConfig& b) {
  const auto ta = trajectory(a);
  const auto tb = trajectory(b);
  if (ta.size() != tb.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i)
    worst = std::max(worst, verify::max_relative_diff(ta[i], tb[i]));
  return worst;
}

Outcome special_case_equivalence() {
  const double lambda = 0.1;
  auto a = mlp_config(Variant::DecayCoupledLR, 10000, 0);
  a.optimizer.lambda = lambda;
  auto c = mlp_config(Variant::NormControl, 10000, 0);
  c.schedule.rt = PiecewiseLinearSpec::constant(0.0);
  c.schedule.kt = PiecewiseLinearSpec::constant(a.optimizer.alpha * lambda);
  c.schedule.kt_scaled_by_eta = true;
  const double gap_a = trajectory_gap(a, c);

  auto b = mlp_config(Variant::DecayDecoupled, 10000, 0);
  b.optimizer.lambda = lambda;
  c.schedule.kt = PiecewiseLinearSpec::constant(lambda);
  const double gap_b = trajectory_gap(b, c);

  return {gap_a <= 1e-12 && gap_b <= 1e-12,
          "13.a vs 13.c max rel " + fmt("%.3g", gap_a) + ", 13.b vs 13.c max rel " + fmt("%.3g", gap_b)};
}

Outcome projection_exactness() {
  auto rng = make_rng(2, 0);
  std::uniform_real_distribution<double> ratio(0.01, 3.0);
  double worst = 0.0, worst_ref = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto store = random_store(rng);
    const double r = ratio(rng);
    const double target = r * store.initial_norm();
    regularize_norm_control(store, r, 1.0, TargetNormMode::RelativeToInit);
    worst = std::max(worst, rel_err(store.controlled_norm(), target));
    worst_ref = std::max(worst_ref, rel_err(static_cast<double>(reference_norm(store.theta())), target));
  }
  return {worst <= 8 * kEps && worst_ref <= 8 * kEps,
          "max rel " + fmt("%.3g", worst / kEps) + " eps (extended-precision check " +
              fmt("%.3g", worst_ref / kEps) + " eps)"};
}

Outcome convex_combination() {
  auto rng = make_rng(3, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto store = random_store(rng);
    const double k = unit(rng);
    const double r = 3.0 * (1.0 - unit(rng));
    const double n = store.controlled_norm();
    const double expected = (1.0 - k) * n + k * r * store.initial_norm();
    regularize_norm_control(store, r, k, TargetNormMode::RelativeToInit);
    worst = std::max(worst, rel_err(store.controlled_norm(), expected));
  }
  return {worst <= 1e-10, "max rel " + fmt("%.3g", worst)};
}

Outcome norm_tracking() {
  auto cfg = mlp_config(Variant::NormControl, 5000, 0);
  cfg.schedule.rt = PiecewiseLinearSpec::linear({{0, 1.0}, {250, 2.0}});
  cfg.schedule.kt = PiecewiseLinearSpec::constant(1e-2);

  // Oracle simulation of the same run: same task, initialization and batches.
  const auto task = make_task(cfg.task, cfg.seed);
  auto oracle = verify::make_oracle(task->make_store(cfg.seed));
  auto sampler = make_rng(cfg.seed, kSamplerStream);
  double oracle_worst = 0.0;
  for (Step t = 1; t <= cfg.steps(); ++t) {
    const auto batch = task->sample_batch(sampler, cfg.batch_size);
    const auto lg = task->loss_and_grad(oracle.theta, batch);
    const auto values = evaluate(cfg.schedule, t);
    verify::oracle_step(oracle, lg.grad, values, cfg.schedule.target_mode, cfg.optimizer);
    if (t > 500) {
      const double ratio = verify::two_pass_norm(oracle.theta, oracle.controlled) / oracle.initial_norm;
      oracle_worst = std::max(oracle_worst, std::abs(ratio - values.rt) / values.rt);
    }
  }

  double worst = 0.0;
  run(cfg, [&](const StepReport& r, const ParamStore& store) {
    if (r.t > 500) worst = std::max(worst, std::abs(store.norm_ratio() - r.rt) / r.rt);
  });
  return {worst <= 0.05 && oracle_worst <= 0.05,
          "max |ratio - r_t|/r_t for t > 500: " + fmt("%.4f", worst) + " (oracle " +
              fmt("%.4f", oracle_worst) + ")"};
}

Outcome calibration_protocol() {
  auto a = mlp_config(Variant::DecayCoupledLR, 10000, 0);
  a.optimizer.lambda = 0.1;
  auto b = a;
  b.optimizer.variant = Variant::NormControl;
  b.schedule.kt = PiecewiseLinearSpec::constant(1e-2);
  const auto report = compare(a, b);
  const double gap = report.ratio_gap / report.final_ratio_a;
  const double loss = std::abs(report.final_val_loss_b - report.final_val_loss_a) / report.final_val_loss_a;
  return {gap <= 0.05 && loss <= 0.05,
          "ratio A " + fmt("%.5f", report.final_ratio_a) + ", B " + fmt("%.5f", report.final_ratio_b) +
              " (gap " + fmt("%.4f", gap) + "); val loss A " + fmt("%.5g", report.final_val_loss_a) +
              ", B " + fmt("%.5g", report.final_val_loss_b) + " (rel " + fmt("%.4f", loss) + ")"};
}

Outcome schedule_endpoints() {
  bool ok = true;
  const CosineSpec cosine{1.0, 0.1, 0};
  for (Step horizon : {1, 7, 1000, 5000, 100000})
    ok = ok && eta_schedule_eval(cosine, 0, horizon) == 1.0 && eta_schedule_eval(cosine, horizon, horizon) == 0.1;

  const auto spec = parse_run_config("T = 5000\nrt = linear(0:1.0, 2500:2.415)\n").schedule;
  std::istringstream table(emit_schedule_table(spec, 500));
  std::string line;
  std::getline(table, line);
  ok = ok && line == "t,eta_t,r_t,k_t";
  int breakpoints_seen = 0;
  while (std::getline(table, line)) {
    std::istringstream row(line);
    std::string t, eta, rt;
    std::getline(row, t, ',');
    std::getline(row, eta, ',');
    std::getline(row, rt, ',');
    const Step step = std::stoll(t);
    const double value = std::strtod(rt.c_str(), nullptr);
    if (step == 0) {
      ok = ok && value == 1.0 && std::strtod(eta.c_str(), nullptr) == 1.0;
      ++breakpoints_seen;
    } else if (step == 2500) {
      ok = ok && value == 2.415;
      ++breakpoints_seen;
    } else if (step > 2500) {
      ok = ok && value == 2.415;
    }
    if (step == 5000) ok = ok && std::strtod(eta.c_str(), nullptr) == 0.1;
  }
  ok = ok && breakpoints_seen == 2;
  return {ok, "eta(0) = 1.0, eta(T) = 0.1; r_t table exact at (0, 1.0) and (2500, 2.415)"};
}

Outcome bias_correction() {
  auto rng = make_rng(7, 0);
  std::uniform_real_distribution<double> log_scale(-6.0, 6.0);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  std::normal_distribution<double> normal;
  const OptimizerConfig cfg;
  int mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> g(dim(rng));
    for (double& x : g) x = normal(rng) * std::pow(10.0, log_scale(rng));
    OptimizerState state(g.size());
    state.t = 1;
    const auto bc = adam_moment_update(state, g, cfg);
    for (std::size_t j = 0; j < g.size(); ++j)
      if (bc.m_hat[j] != g[j] || bc.v_hat[j] != g[j] * g[j]) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " inexact elements over 100 gradients"};
}

Outcome gradient_correctness() {
  bool ok = true;
  std::string detail;
  for (TaskKind kind : {TaskKind::Quadratic, TaskKind::Logistic, TaskKind::Mlp}) {
    TaskSpec spec;
    spec.kind = kind;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = verify::check_task_gradient(spec, seed);
      worst = std::max(worst, r.max_rel_error);
    }
    const double tol = verify::gradient_tolerance(kind);
    ok = ok && worst <= tol;
    if (!detail.empty()) detail += ", ";
    detail += std::string(to_string(kind)) + " " + fmt("%.3g", worst) + " <= " + fmt("%.0e", tol);
  }
  return {ok, detail};
}

Outcome coupled_sgd_closed_form() {
  const double lambda = 0.1;
  auto rng = make_rng(9, 0);
  std::normal_distribution<double> normal;
  std::vector<double> theta0(32);
  for (double& x : theta0) x = normal(rng);
  auto store = ParamStore::single_group(theta0);
  const std::vector<double> zero(theta0.size(), 0.0);
  for (int t = 0; t < 100; ++t) sgd_step_coupled_decay(store, zero, 0.01, lambda);
  const double decay = std::pow(1.0 - lambda, 100);
  double worst = 0.0;
  for (std::size_t i = 0; i < theta0.size(); ++i)
    worst = std::max(worst, rel_err(store.theta()[i], decay * theta0[i]));
  return {worst <= 1e-12, "max rel " + fmt("%.3g", worst)};
}

Outcome oracle_equivalence() {
  const auto report = verify::property_suite(10, 1000);
  std::size_t cases = 0;
  for (const auto& r : report.results) cases += r.cases;
  std::string detail = std::to_string(report.results.size()) + " properties, " + std::to_string(cases) +
                       " cases, " + std::to_string(report.total_failures()) + " failures, " +
                       std::to_string(report.total_non_finite()) + " non-finite";
  if (!report.passed()) detail += "\n" + report.to_text();
  return {report.passed(), detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "special-case equivalence", 30, special_case_equivalence},
      {2, "projection exactness", 5, projection_exactness},
      {3, "convex-combination law", 5, convex_combination},
      {4, "norm tracking", 60, norm_tracking},
      {5, "calibration protocol", 120, calibration_protocol},
      {6, "schedule endpoints", 0, schedule_endpoints},
      {7, "bias correction", 0, bias_correction},
      {8, "gradient correctness", 30, gradient_correctness},
      {9, "coupled SGD closed form", 0, coupled_sgd_closed_form},
      {10, "oracle equivalence", 60, oracle_equivalence},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.body();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool passed = outcome.passed;
    std::string timing = fmt("%.2fs", seconds);
    if (c.time_limit_s > 0) {
      timing += fmt(" / %.0fs", c.time_limit_s);
      if (seconds >= c.time_limit_s) {
        passed = false;
        timing += " over budget";
      }
    }
    if (!passed) ++failed;
    std::printf("%s %2d %-26s %s [%s]\n", passed ? "PASS" : "FAIL", c.id, c.name, outcome.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
