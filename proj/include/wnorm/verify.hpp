// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wnorm/harness.hpp"
#include "wnorm/optim.hpp"
#include "wnorm/param_store.hpp"
#include "wnorm/schedules.hpp"

namespace wnorm::verify {

/// Scalar mirror of OptimizerState + ParamStore. Kept deliberately plain:
/// literal m and v, a per-element control mask, and its own ‖θ₀‖.
struct OracleState {
  Step t = 0;
  std::vector<double> theta;
  std::vector<double> m;
  std::vector<double> v;
  std::vector<char> controlled;
  double initial_norm = 0.0;
};

/// Copies θ and the control mask out of `store`; m = v = 0, t = 0, and the
/// initial norm is recomputed with the oracle's own two-pass norm.
OracleState make_oracle(const ParamStore& store);

/// max|x| then Σ(x/max)², over controlled elements only.
double two_pass_norm(std::span<const double> theta, std::span<const char> controlled);

/// One full iteration, transcribed element by element from the algorithm.
void oracle_step(OracleState& oracle, std::span<const double> grad, const ScheduleValues& values,
                 TargetNormMode mode, const OptimizerConfig& cfg);

/// |a − b| ≤ max(rel·max(|a|, |b|), 1e-15).
bool close_relative(double a, double b, double rel);

/// Largest elementwise relative difference (with the 1e-15 absolute floor
/// treated as zero error).
double max_relative_diff(std::span<const double> a, std::span<const double> b);

struct PropertyResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::size_t non_finite = 0;
  std::string counterexample;  ///< first failure, empty if none

  bool passed() const { return failures == 0 && non_finite == 0; }
};

struct PropertyReport {
  std::vector<PropertyResult> results;

  bool passed() const;
  std::size_t total_failures() const;
  std::size_t total_non_finite() const;
  std::string to_text() const;
};

/// Runs every registered property over `cases` randomized inputs each.
PropertyReport property_suite(std::uint64_t seed, std::size_t cases);

struct GradientCheck {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error <= tolerance; }
};

/// Acceptance tolerance: 1e-9 quadratic, 1e-6 logistic, 1e-5 MLP.
double gradient_tolerance(TaskKind kind);

/// Finite-difference step: 1e-3 for the quadratic, 1e-5 otherwise.
double gradient_check_step(TaskKind kind);

/// Finite-difference check of the task's gradient at a random θ (the
/// task's initialization plus Gaussian noise) on a random batch, all drawn
/// from `seed`.
GradientCheck check_task_gradient(const TaskSpec& spec, std::uint64_t seed);

/// Names of the registered properties, in run order.
std::vector<std::string> property_names();

}  // namespace wnorm::verify
