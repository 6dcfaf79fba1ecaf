// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wnorm/param_store.hpp"
#include "wnorm/schedules.hpp"

namespace wnorm {

/// Which regularization step follows the Adam update.
enum class Variant {
  DecayCoupledLR,  ///< θ ← θ − η_t·α₀·λ·θ (the usual AdamW implementation)
  DecayDecoupled,  ///< θ ← θ − η_t·λ·θ (AdamW as originally published)
  NormControl,     ///< θ ← θ − k_t·(1 − target/‖θ‖)·θ (AdamWN)
  CoupledSGD,      ///< plain SGD with decay fused into the update, no Adam
  None,            ///< bare Adam
};

std::string_view to_string(Variant v);
/// Accepts the names produced by to_string(Variant). Throws ConfigError.
Variant parse_variant(std::string_view name);

struct OptimizerConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda = 0.0;
  Variant variant = Variant::None;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Adam state. The moment estimates are kept as unnormalized exponential
/// sums, m_sum = m/(1−β₁) and v_sum = v/(1−β₂), so that bias correction is
/// a division by Σβⁱ, which is exactly 1 at t=1.
struct OptimizerState {
  Step t = 0;
  std::vector<double> m_sum;
  std::vector<double> v_sum;

  OptimizerState() = default;
  explicit OptimizerState(std::size_t n) : m_sum(n, 0.0), v_sum(n, 0.0) {}

  std::size_t size() const noexcept { return m_sum.size(); }

  /// The conventional moments m_t and v_t.
  std::vector<double> first_moment(const OptimizerConfig& cfg) const;
  std::vector<double> second_moment(const OptimizerConfig& cfg) const;
};

struct BiasCorrected {
  std::vector<double> m_hat;
  std::vector<double> v_hat;
};

/// Moment update and bias correction for step state.t (caller increments t
/// first). Throws NumericError on shape mismatch or t < 1.
BiasCorrected adam_moment_update(OptimizerState& state, std::span<const double> grad,
                                 const OptimizerConfig& cfg);

/// θ ← θ − η·α·m̂/(√v̂ + ε) on every group, controlled or not.
void adam_param_update(ParamStore& store, std::span<const double> m_hat,
                       std::span<const double> v_hat, double eta, const OptimizerConfig& cfg);

/// θ ← (1 − rate)·θ on controlled groups.
void regularize_decay(ParamStore& store, double rate);

struct NormControlResult {
  double norm_before = 0.0;
  double target = 0.0;
  /// Set when r_t > 0 but ‖θ‖ < kZeroNorm; θ is left unchanged.
  bool degenerate = false;
};

inline constexpr double kZeroNorm = 1e-30;

/// Moves the controlled norm toward its target:
///   θ ← θ − k·(1 − target/‖θ‖)·θ,   target = r·‖θ₀‖ or r (Absolute).
/// With r = 0 this is exactly regularize_decay(store, k).
NormControlResult regularize_norm_control(ParamStore& store, double rt, double kt,
                                          TargetNormMode mode);

/// θ ← (1−λ)·θ − α·g on controlled groups, θ ← θ − α·g elsewhere.
void sgd_step_coupled_decay(ParamStore& store, std::span<const double> grad, double alpha,
                            double lambda);

struct StepReport {
  Step t = 0;
  double eta = 0.0;
  double rt = 0.0;
  double kt = 0.0;
  double target_norm = 0.0;
  double norm_start = 0.0;       ///< controlled norm entering the step
  double norm_after_loss = 0.0;  ///< after the loss-based update
  double norm_end = 0.0;         ///< after regularization
  bool degenerate = false;
};

/// One full iteration with explicitly supplied schedule values: increment
/// t, Adam moments and bias correction, loss update, then exactly one
/// regularization variant.
StepReport step(ParamStore& store, OptimizerState& state, std::span<const double> grad,
                const ScheduleValues& values, TargetNormMode mode, const OptimizerConfig& cfg);

/// Same, with η_t, r_t, k_t looked up from `schedule` at the new t.
StepReport step(ParamStore& store, OptimizerState& state, std::span<const double> grad,
                const ScheduleSpec& schedule, const OptimizerConfig& cfg);

}  // namespace wnorm
