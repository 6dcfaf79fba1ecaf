// SPDX-License-Identifier: Apache-2.0

#include "wnorm/optim.hpp"

#include <cmath>

#include "wnorm/errors.hpp"

namespace wnorm {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::DecayCoupledLR: return "decay_coupled_lr";
    case Variant::DecayDecoupled: return "decay_decoupled";
    case Variant::NormControl: return "norm_control";
    case Variant::CoupledSGD: return "coupled_sgd";
    case Variant::None: return "none";
  }
  return "none";
}

Variant parse_variant(std::string_view name) {
  for (const Variant v : {Variant::DecayCoupledLR, Variant::DecayDecoupled, Variant::NormControl,
                          Variant::CoupledSGD, Variant::None}) {
    if (to_string(v) == name) return v;
  }
  throw ValidationError("variant", "unknown variant '" + std::string(name) +
                                       "' (expected decay_coupled_lr, decay_decoupled, "
                                       "norm_control, coupled_sgd or none)");
}

void OptimizerConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha", "must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("beta2", "must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon", "must be > 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda", "must be >= 0");
}

namespace {

void check_shape(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw NumericError(std::string(what) + ": expected " + std::to_string(expected) +
                       " elements, got " + std::to_string(got));
  }
}

// Σ_{i<t} βⁱ = (1 − βᵗ)/(1 − β). Exactly 1 at t=1.
double geometric_weight(double beta, Step t) {
  return (1.0 - std::pow(beta, static_cast<double>(t))) / (1.0 - beta);
}

void scale_span(std::span<double> xs, double factor) {
  for (double& x : xs) x *= factor;
}

}  // namespace

std::vector<double> OptimizerState::first_moment(const OptimizerConfig& cfg) const {
  std::vector<double> m(m_sum);
  scale_span(m, 1.0 - cfg.beta1);
  return m;
}

std::vector<double> OptimizerState::second_moment(const OptimizerConfig& cfg) const {
  std::vector<double> v(v_sum);
  scale_span(v, 1.0 - cfg.beta2);
  return v;
}

BiasCorrected adam_moment_update(OptimizerState& state, std::span<const double> grad,
                                 const OptimizerConfig& cfg) {
  check_shape(state.size(), grad.size(), "adam_moment_update");
  check_shape(state.m_sum.size(), state.v_sum.size(), "adam_moment_update (v)");
  if (state.t < 1) throw NumericError("adam_moment_update: step counter must be >= 1");

  const double w1 = geometric_weight(cfg.beta1, state.t);
  const double w2 = geometric_weight(cfg.beta2, state.t);
  BiasCorrected out{std::vector<double>(grad.size()), std::vector<double>(grad.size())};
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    state.m_sum[i] = cfg.beta1 * state.m_sum[i] + g;
    state.v_sum[i] = cfg.beta2 * state.v_sum[i] + g * g;
    out.m_hat[i] = state.m_sum[i] / w1;
    out.v_hat[i] = state.v_sum[i] / w2;
  }
  return out;
}

void adam_param_update(ParamStore& store, std::span<const double> m_hat,
                       std::span<const double> v_hat, double eta, const OptimizerConfig& cfg) {
  check_shape(store.size(), m_hat.size(), "adam_param_update (m_hat)");
  check_shape(store.size(), v_hat.size(), "adam_param_update (v_hat)");
  const double lr = eta * cfg.alpha;
  auto theta = store.theta();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] -= lr * m_hat[i] / (std::sqrt(v_hat[i]) + cfg.epsilon);
  }
}

void regularize_decay(ParamStore& store, double rate) {
  store.scale_controlled(1.0 - rate);
}

NormControlResult regularize_norm_control(ParamStore& store, double rt, double kt,
                                          TargetNormMode mode) {
  NormControlResult result;
  result.target = mode == TargetNormMode::Absolute ? rt : rt * store.initial_norm();
  if (rt == 0.0) {
    // Plain decay; no norm is needed and none is divided by.
    result.norm_before = store.controlled_norm();
    store.scale_controlled(1.0 - kt);
    return result;
  }
  const double norm = store.controlled_norm();
  result.norm_before = norm;
  if (norm < kZeroNorm) {
    result.degenerate = true;
    return result;
  }
  // 1 − k·(1 − target/n) in convex form: it is exactly target/n when k = 1
  // and never negative for k in [0, 1].
  const double factor = (1.0 - kt) + kt * (result.target / norm);
  store.scale_controlled(factor);
  return result;
}

void sgd_step_coupled_decay(ParamStore& store, std::span<const double> grad, double alpha,
                            double lambda) {
  check_shape(store.size(), grad.size(), "sgd_step_coupled_decay");
  const double keep = 1.0 - lambda;
  auto theta = store.theta();
  for (const auto& g : store.groups()) {
    const std::size_t end = g.offset + g.length;
    if (g.controlled) {
      for (std::size_t i = g.offset; i < end; ++i) theta[i] = keep * theta[i] - alpha * grad[i];
    } else {
      for (std::size_t i = g.offset; i < end; ++i) theta[i] = theta[i] - alpha * grad[i];
    }
  }
}

StepReport step(ParamStore& store, OptimizerState& state, std::span<const double> grad,
                const ScheduleValues& values, TargetNormMode mode, const OptimizerConfig& cfg) {
  check_shape(store.size(), grad.size(), "step");
  StepReport report;
  report.norm_start = store.controlled_norm();
  report.t = ++state.t;
  report.eta = values.eta;
  report.rt = values.rt;
  report.kt = values.kt;
  report.target_norm = mode == TargetNormMode::Absolute ? values.rt : values.rt * store.initial_norm();

  if (cfg.variant == Variant::CoupledSGD) {
    sgd_step_coupled_decay(store, grad, values.eta * cfg.alpha, cfg.lambda);
    report.norm_after_loss = report.norm_end = store.controlled_norm();
    return report;
  }

  const BiasCorrected corrected = adam_moment_update(state, grad, cfg);
  adam_param_update(store, corrected.m_hat, corrected.v_hat, values.eta, cfg);
  report.norm_after_loss = store.controlled_norm();

  switch (cfg.variant) {
    case Variant::DecayCoupledLR:
      regularize_decay(store, values.eta * (cfg.alpha * cfg.lambda));
      break;
    case Variant::DecayDecoupled:
      regularize_decay(store, values.eta * cfg.lambda);
      break;
    case Variant::NormControl:
      report.degenerate = regularize_norm_control(store, values.rt, values.kt, mode).degenerate;
      break;
    case Variant::CoupledSGD:
    case Variant::None:
      break;
  }
  report.norm_end = store.controlled_norm();
  return report;
}

StepReport step(ParamStore& store, OptimizerState& state, std::span<const double> grad,
                const ScheduleSpec& schedule, const OptimizerConfig& cfg) {
  const ScheduleValues values = evaluate(schedule, state.t + 1);
  return step(store, state, grad, values, schedule.target_mode, cfg);
}

}  // namespace wnorm
