// SPDX-License-Identifier: Apache-2.0

#include "wnorm/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "wnorm/errors.hpp"
#include "wnorm/tasks.hpp"

namespace wnorm::verify {

// ---------------------------------------------------------------------------
// Oracle. Nothing below calls into optim or ParamStore arithmetic.

double two_pass_norm(std::span<const double> theta, std::span<const char> controlled) {
  double scale = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (controlled[i]) scale = std::max(scale, std::abs(theta[i]));
  }
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (controlled[i]) {
      const double r = theta[i] / scale;
      sum += r * r;
    }
  }
  return scale * std::sqrt(sum);
}

OracleState make_oracle(const ParamStore& store) {
  OracleState o;
  o.theta.assign(store.theta().begin(), store.theta().end());
  o.m.assign(o.theta.size(), 0.0);
  o.v.assign(o.theta.size(), 0.0);
  o.controlled.assign(o.theta.size(), 0);
  for (const auto& g : store.groups()) {
    for (std::size_t i = g.offset; i < g.offset + g.length; ++i) o.controlled[i] = g.controlled ? 1 : 0;
  }
  o.initial_norm = two_pass_norm(o.theta, o.controlled);
  return o;
}

void oracle_step(OracleState& o, std::span<const double> grad, const ScheduleValues& values,
                 TargetNormMode mode, const OptimizerConfig& cfg) {
  if (grad.size() != o.theta.size()) throw NumericError("oracle_step: gradient size mismatch");
  const double eta = values.eta;
  const double alpha = cfg.alpha;
  const double lambda = cfg.lambda;
  const std::size_t n = o.theta.size();
  o.t = o.t + 1;

  if (cfg.variant == Variant::CoupledSGD) {
    for (std::size_t i = 0; i < n; ++i) {
      if (o.controlled[i]) {
        o.theta[i] = (1.0 - lambda) * o.theta[i] - eta * alpha * grad[i];
      } else {
        o.theta[i] = o.theta[i] - eta * alpha * grad[i];
      }
    }
    return;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    o.m[i] = cfg.beta1 * o.m[i] + (1.0 - cfg.beta1) * g;
    o.v[i] = cfg.beta2 * o.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = o.m[i] / (1.0 - std::pow(cfg.beta1, static_cast<double>(o.t)));
    const double v_hat = o.v[i] / (1.0 - std::pow(cfg.beta2, static_cast<double>(o.t)));
    o.theta[i] = o.theta[i] - eta * alpha * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }

  switch (cfg.variant) {
    case Variant::DecayCoupledLR:
      for (std::size_t i = 0; i < n; ++i) {
        if (o.controlled[i]) o.theta[i] = o.theta[i] - eta * alpha * lambda * o.theta[i];
      }
      break;
    case Variant::DecayDecoupled:
      for (std::size_t i = 0; i < n; ++i) {
        if (o.controlled[i]) o.theta[i] = o.theta[i] - eta * lambda * o.theta[i];
      }
      break;
    case Variant::NormControl: {
      const double k = values.kt;
      const double r = values.rt;
      if (r == 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
          if (o.controlled[i]) o.theta[i] = o.theta[i] - k * o.theta[i];
        }
        break;
      }
      const double norm = two_pass_norm(o.theta, o.controlled);
      if (norm < kZeroNorm) break;
      const double target = mode == TargetNormMode::Absolute ? r : r * o.initial_norm;
      for (std::size_t i = 0; i < n; ++i) {
        if (o.controlled[i]) o.theta[i] = o.theta[i] - k * (1.0 - target / norm) * o.theta[i];
      }
      break;
    }
    case Variant::CoupledSGD:
    case Variant::None:
      break;
  }
}

bool close_relative(double a, double b, double rel) {
  return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), 1e-15);
}

double max_relative_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = std::abs(a[i] - b[i]);
    if (diff <= 1e-15) continue;
    if (!std::isfinite(diff)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, diff / std::max(std::abs(a[i]), std::abs(b[i])));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Property suite

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

enum class Verdict { Pass, Fail, NonFinite };

struct Outcome {
  Verdict verdict = Verdict::Pass;
  std::string detail;
};

Outcome pass() { return {}; }
Outcome fail(std::string detail) { return {Verdict::Fail, std::move(detail)}; }
Outcome non_finite(std::string detail) { return {Verdict::NonFinite, std::move(detail)}; }

using Rng = std::mt19937_64;
using Property = std::function<Outcome(Rng&)>;

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

// Random dimension in [1, max_dim] split into up to four groups with random
// control flags; at least one controlled element is nonzero.
ParamStore random_store(Rng& rng, std::size_t max_dim, double scale) {
  const std::size_t dim = uniform_size(rng, 1, max_dim);
  const std::size_t n_groups = uniform_size(rng, 1, std::min<std::size_t>(4, dim));
  std::vector<std::size_t> cuts;
  while (cuts.size() + 1 < n_groups) {
    const std::size_t c = uniform_size(rng, 1, dim - 1);
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(dim);
  std::vector<ParamGroup> groups;
  std::size_t start = 0;
  std::bernoulli_distribution coin(0.6);
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    groups.push_back({"g" + std::to_string(i), start, cuts[i] - start, coin(rng)});
    start = cuts[i];
  }
  groups[uniform_size(rng, 0, groups.size() - 1)].controlled = true;
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> theta(dim);
  for (double& x : theta) {
    do {
      x = normal(rng);
    } while (x == 0.0);
  }
  return ParamStore(std::move(theta), std::move(groups));
}

double random_scale(Rng& rng) { return std::pow(10.0, uniform(rng, -3.0, 3.0)); }

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

OptimizerConfig random_config(Rng& rng, Variant variant) {
  OptimizerConfig cfg;
  cfg.alpha = std::pow(10.0, uniform(rng, -4.0, -2.0));
  cfg.beta1 = uniform(rng, 0.0, 0.99);
  cfg.beta2 = uniform(rng, 0.9, 0.9999);
  cfg.lambda = uniform(rng, 0.0, 0.2);
  cfg.variant = variant;
  return cfg;
}

std::vector<double> uncontrolled_values(const ParamStore& store) {
  std::vector<double> out;
  for (const auto& g : store.groups()) {
    if (g.controlled) continue;
    const auto view = store.group_view(g);
    out.insert(out.end(), view.begin(), view.end());
  }
  return out;
}

// param-store ---------------------------------------------------------------

Outcome scale_homogeneity(Rng& rng) {
  ParamStore store = random_store(rng, 1000, random_scale(rng));
  const double c = uniform(rng, 0.0, 4.0);
  const double before = store.controlled_norm();
  store.scale_controlled(c);
  const double after = store.controlled_norm();
  if (!std::isfinite(after)) return non_finite("norm after scaling");
  const double expected = c * before;
  if (std::abs(after - expected) > 4.0 * kEps * expected) {
    return fail("c=" + fmt(c) + " norm=" + fmt(before) + " scaled=" + fmt(after) +
                " expected=" + fmt(expected));
  }
  return pass();
}

Outcome ratio_at_init(Rng& rng) {
  const ParamStore store = random_store(rng, 1000, random_scale(rng));
  const double ratio = store.norm_ratio();
  if (ratio != 1.0) return fail("ratio at t=0 is " + fmt(ratio));
  return pass();
}

Outcome uncontrolled_mutation(Rng& rng) {
  ParamStore store = random_store(rng, 1000, random_scale(rng));
  const double before = store.controlled_norm();
  std::normal_distribution<double> normal(0.0, 100.0);
  for (const auto& g : store.groups()) {
    if (g.controlled) continue;
    for (double& x : store.group_view(g)) x = normal(rng);
  }
  const double after = store.controlled_norm();
  if (after != before) return fail("controlled norm moved from " + fmt(before) + " to " + fmt(after));
  return pass();
}

// schedules -----------------------------------------------------------------

CosineSpec random_cosine(Rng& rng, Step horizon) {
  CosineSpec spec;
  spec.eta_max = uniform(rng, 0.1, 1.0);
  spec.eta_min = spec.eta_max * uniform(rng, 0.01, 1.0);
  spec.warmup_steps = static_cast<Step>(uniform_size(rng, 0, static_cast<std::size_t>(horizon / 4)));
  return spec;
}

PiecewiseLinearSpec random_piecewise(Rng& rng, Step horizon, double lo, double hi) {
  const std::size_t n = uniform_size(rng, 1, 5);
  std::vector<Step> ts{0};
  while (ts.size() < n) {
    const Step t = static_cast<Step>(uniform_size(rng, 1, static_cast<std::size_t>(horizon)));
    if (std::find(ts.begin(), ts.end(), t) == ts.end()) ts.push_back(t);
  }
  std::sort(ts.begin(), ts.end());
  std::vector<Breakpoint> pts;
  for (const Step t : ts) pts.push_back({t, uniform(rng, lo, hi)});
  return PiecewiseLinearSpec::linear(std::move(pts));
}

ScheduleSpec random_schedule(Rng& rng) {
  ScheduleSpec spec;
  spec.horizon = static_cast<Step>(uniform_size(rng, 8, 5000));
  spec.eta = random_cosine(rng, spec.horizon);
  spec.rt = random_piecewise(rng, spec.horizon, 0.0, 3.0);
  if (std::bernoulli_distribution(0.3)(rng)) {
    spec.kt = PiecewiseLinearSpec::constant(uniform(rng, 0.0, 1.0));
    spec.kt_scaled_by_eta = std::bernoulli_distribution(0.5)(rng);
  } else {
    spec.kt = random_piecewise(rng, spec.horizon, 0.0, 1.0);
  }
  spec.target_mode = std::bernoulli_distribution(0.5)(rng) ? TargetNormMode::Absolute
                                                           : TargetNormMode::RelativeToInit;
  return spec;
}

Outcome eta_monotone(Rng& rng) {
  const Step horizon = static_cast<Step>(uniform_size(rng, 2, 2000));
  const CosineSpec spec = random_cosine(rng, horizon);
  double prev = eta_schedule_eval(spec, spec.warmup_steps, horizon);
  for (Step t = spec.warmup_steps + 1; t <= horizon; ++t) {
    const double eta = eta_schedule_eval(spec, t, horizon);
    if (!std::isfinite(eta)) return non_finite("eta at t=" + std::to_string(t));
    if (eta > prev) {
      return fail("eta rose at t=" + std::to_string(t) + " T=" + std::to_string(horizon) + ": " +
                  fmt(prev) + " -> " + fmt(eta));
    }
    if (eta < spec.eta_min || eta > spec.eta_max) return fail("eta out of range at t=" + std::to_string(t));
    prev = eta;
  }
  return pass();
}

Outcome rt_exact_at_breakpoints(Rng& rng) {
  const Step horizon = static_cast<Step>(uniform_size(rng, 8, 100000));
  const PiecewiseLinearSpec spec = random_piecewise(rng, horizon, 0.0, 3.0);
  for (const auto& p : spec.points) {
    const double v = rt_schedule_eval(spec, p.t);
    if (v != p.value) return fail("t=" + std::to_string(p.t) + " gives " + fmt(v) + " not " + fmt(p.value));
  }
  const double tail = rt_schedule_eval(spec, horizon * 10);
  if (tail != spec.points.back().value) return fail("not held constant after last breakpoint");
  return pass();
}

Outcome schedules_pure(Rng& rng) {
  const ScheduleSpec spec = random_schedule(rng);
  const Step t = static_cast<Step>(uniform_size(rng, 0, static_cast<std::size_t>(spec.horizon)));
  const ScheduleValues a = evaluate(spec, t);
  const ScheduleValues b = evaluate(spec, t);
  if (a.eta != b.eta || a.rt != b.rt || a.kt != b.kt) return fail("t=" + std::to_string(t));
  if (!std::isfinite(a.eta) || !std::isfinite(a.rt) || !std::isfinite(a.kt)) return non_finite("schedule value");
  if (!(a.eta > 0.0 && a.eta <= 1.0) || a.rt < 0.0 || a.kt < 0.0 || a.kt > 1.0) {
    return fail("value outside its range at t=" + std::to_string(t));
  }
  return pass();
}

Outcome schedule_text_round_trip(Rng& rng) {
  const ScheduleSpec spec = random_schedule(rng);
  const std::string text = to_text(spec);
  const ScheduleSpec back = parse_schedule_spec(text);
  if (!(back == spec)) return fail("round trip changed:\n" + text);
  return pass();
}

// optim ---------------------------------------------------------------------

Outcome convex_combination(Rng& rng) {
  ParamStore store = random_store(rng, 1000, random_scale(rng));
  store.scale_controlled(uniform(rng, 0.2, 4.0));  // start away from the target
  const double k = uniform(rng, 0.0, 1.0);
  const double r = uniform(rng, 1e-6, 3.0);
  const double n = store.controlled_norm();
  const double target = r * store.initial_norm();
  regularize_norm_control(store, r, k, TargetNormMode::RelativeToInit);
  const double after = store.controlled_norm();
  if (!std::isfinite(after)) return non_finite("norm after control");
  const double expected = (1.0 - k) * n + k * target;
  if (std::abs(after - expected) > 1e-10 * std::max(1.0, target)) {
    return fail("k=" + fmt(k) + " r=" + fmt(r) + " n=" + fmt(n) + " got " + fmt(after) +
                " expected " + fmt(expected));
  }
  return pass();
}

Outcome projection_exact(Rng& rng) {
  ParamStore store = random_store(rng, 1000, random_scale(rng));
  store.scale_controlled(uniform(rng, 0.1, 5.0));
  const double r = uniform(rng, 1e-3, 3.0);
  regularize_norm_control(store, r, 1.0, TargetNormMode::RelativeToInit);
  const double after = store.controlled_norm();
  const double target = r * store.initial_norm();
  if (!std::isfinite(after)) return non_finite("norm after projection");
  if (std::abs(after - target) > 8.0 * kEps * target) {
    return fail("r=" + fmt(r) + " got " + fmt(after) + " target " + fmt(target) + " rel err " +
                fmt(std::abs(after - target) / target));
  }
  return pass();
}

Outcome fixed_point(Rng& rng) {
  ParamStore store = random_store(rng, 1000, random_scale(rng));
  const std::vector<double> before(store.theta().begin(), store.theta().end());
  const double k = uniform(rng, 0.0, 1.0);
  // Target equal to the current norm, in raw units.
  regularize_norm_control(store, store.controlled_norm(), k, TargetNormMode::Absolute);
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (std::abs(store.theta()[i] - before[i]) > 4.0 * kEps * std::abs(before[i])) {
      return fail("element " + std::to_string(i) + " moved from " + fmt(before[i]) + " to " +
                  fmt(store.theta()[i]));
    }
  }
  return pass();
}

Outcome direction_preservation(Rng& rng) {
  ParamStore store = random_store(rng, 1000, random_scale(rng));
  store.scale_controlled(uniform(rng, 0.1, 10.0));
  const std::vector<double> before(store.theta().begin(), store.theta().end());
  const bool snap = std::bernoulli_distribution(0.2)(rng);
  const double k = snap ? 1.0 : uniform(rng, 0.0, 1.0);
  const double r = uniform(rng, 1e-6, 3.0);
  regularize_norm_control(store, r, k, TargetNormMode::RelativeToInit);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double x = store.theta()[i];
    if (!std::isfinite(x)) return non_finite("element " + std::to_string(i));
    if (std::signbit(x) != std::signbit(before[i]) || (before[i] != 0.0 && x == 0.0)) {
      return fail("element " + std::to_string(i) + " flipped: " + fmt(before[i]) + " -> " + fmt(x) +
                  " (k=" + fmt(k) + ", r=" + fmt(r) + ")");
    }
  }
  return pass();
}

Outcome bias_correction(Rng& rng) {
  const std::size_t n = uniform_size(rng, 1, 64);
  const std::vector<double> g = random_vector(rng, n, random_scale(rng));
  const OptimizerConfig cfg = random_config(rng, Variant::None);
  OptimizerState state(n);
  state.t = 1;
  const BiasCorrected bc = adam_moment_update(state, g, cfg);
  for (std::size_t i = 0; i < n; ++i) {
    if (bc.m_hat[i] != g[i]) return fail("m_hat[" + std::to_string(i) + "]=" + fmt(bc.m_hat[i]) + " g=" + fmt(g[i]));
    if (bc.v_hat[i] != g[i] * g[i]) return fail("v_hat[" + std::to_string(i) + "]=" + fmt(bc.v_hat[i]));
  }
  return pass();
}

Outcome uncontrolled_invariant(Rng& rng) {
  ParamStore store = random_store(rng, 500, random_scale(rng));
  const std::vector<double> before = uncontrolled_values(store);
  regularize_decay(store, uniform(rng, 0.0, 1.0));
  regularize_norm_control(store, uniform(rng, 0.0, 3.0), uniform(rng, 0.0, 1.0),
                          TargetNormMode::RelativeToInit);
  regularize_norm_control(store, 0.0, uniform(rng, 0.0, 1.0), TargetNormMode::Absolute);
  if (uncontrolled_values(store) != before) return fail("uncontrolled group modified");
  return pass();
}

// Two production trajectories: a decay variant vs. norm control with the
// equivalent (r=0, k) schedule.
Outcome special_case_equivalence(Rng& rng, Variant decay) {
  ParamStore a = random_store(rng, 64, uniform(rng, 0.1, 3.0));
  ParamStore b = a.snapshot();
  OptimizerConfig cfg_a = random_config(rng, decay);
  if (decay == Variant::DecayDecoupled) cfg_a.lambda = uniform(rng, 0.0, 0.02);
  OptimizerConfig cfg_b = cfg_a;
  cfg_b.variant = Variant::NormControl;
  OptimizerState sa(a.size()), sb(b.size());
  const Step steps = static_cast<Step>(uniform_size(rng, 10, 60));
  CosineSpec cosine;
  for (Step t = 1; t <= steps; ++t) {
    const auto g = random_vector(rng, a.size(), 1.0);
    const double eta = eta_schedule_eval(cosine, t, steps);
    const double k = decay == Variant::DecayCoupledLR ? eta * (cfg_a.alpha * cfg_a.lambda)
                                                      : eta * cfg_a.lambda;
    step(a, sa, g, ScheduleValues{eta, 0.0, 0.0}, TargetNormMode::RelativeToInit, cfg_a);
    step(b, sb, g, ScheduleValues{eta, 0.0, k}, TargetNormMode::RelativeToInit, cfg_b);
    const double diff = max_relative_diff(a.theta(), b.theta());
    if (!std::isfinite(diff)) return non_finite("trajectory at t=" + std::to_string(t));
    if (diff > 1e-12) return fail("t=" + std::to_string(t) + " rel diff " + fmt(diff));
  }
  return pass();
}

// One production step vs. one oracle_step from the same state. The state is
// warmed up by a few production steps and then copied into the oracle.
Outcome oracle_equivalence(Rng& rng, Variant variant) {
  ParamStore store = random_store(rng, 16, uniform(rng, 0.1, 10.0));
  OracleState oracle = make_oracle(store);
  OptimizerState state(store.size());
  const OptimizerConfig cfg = random_config(rng, variant);
  const TargetNormMode mode = std::bernoulli_distribution(0.5)(rng) ? TargetNormMode::Absolute
                                                                    : TargetNormMode::RelativeToInit;
  auto draw_values = [&] {
    ScheduleValues values;
    values.eta = uniform(rng, 0.1, 1.0);
    values.rt = std::bernoulli_distribution(0.2)(rng) ? 0.0 : uniform(rng, 0.0, 3.0);
    if (mode == TargetNormMode::Absolute) values.rt *= store.initial_norm();
    values.kt = uniform(rng, 0.0, 1.0);
    return values;
  };
  const std::size_t warmup = uniform_size(rng, 0, 4);
  for (std::size_t w = 0; w < warmup; ++w) {
    step(store, state, random_vector(rng, store.size(), random_scale(rng)), draw_values(), mode, cfg);
  }
  oracle.t = state.t;
  oracle.theta.assign(store.theta().begin(), store.theta().end());
  oracle.m = state.first_moment(cfg);
  oracle.v = state.second_moment(cfg);

  const auto g = random_vector(rng, store.size(), random_scale(rng));
  const ScheduleValues values = draw_values();
  step(store, state, g, values, mode, cfg);
  oracle_step(oracle, g, values, mode, cfg);
  if (!all_finite(store.theta())) return non_finite("production theta");
  const double diff = max_relative_diff(store.theta(), oracle.theta);
  if (diff > 1e-13) {
    return fail(std::string(to_string(variant)) + " t=" + std::to_string(state.t) + " rel diff " +
                fmt(diff));
  }
  return pass();
}

Outcome near_zero_no_nan(Rng& rng) {
  const double tiny = std::pow(10.0, uniform(rng, -40.0, -10.0));
  ParamStore store = random_store(rng, 64, 1.0);
  // Shrink after construction so the initial norm stays O(1).
  store.scale_controlled(tiny);
  OptimizerState state(store.size());
  OptimizerConfig cfg = random_config(rng, Variant::NormControl);
  for (int i = 0; i < 3; ++i) {
    const auto g = random_vector(rng, store.size(), tiny);
    ScheduleValues values{uniform(rng, 0.1, 1.0), uniform(rng, 1e-3, 3.0), uniform(rng, 0.0, 1.0)};
    const StepReport report = step(store, state, g, values, TargetNormMode::RelativeToInit, cfg);
    regularize_norm_control(store, values.rt, values.kt, TargetNormMode::Absolute);
    if (!all_finite(store.theta()) || !std::isfinite(report.norm_end)) {
      return non_finite("tiny=" + fmt(tiny));
    }
  }
  // Exactly zero controlled vector: a fixed point.
  ParamStore zero = random_store(rng, 32, 1.0);
  zero.scale_controlled(0.0);
  const auto r = regularize_norm_control(zero, 1.5, 0.5, TargetNormMode::RelativeToInit);
  if (!r.degenerate) return fail("zero vector not reported degenerate");
  if (!all_finite(zero.theta())) return non_finite("zero vector");
  return pass();
}

Outcome range_sweep(Rng& rng) {
  ParamStore store = random_store(rng, 128, std::pow(10.0, uniform(rng, -8.0, 8.0)));
  OptimizerState state(store.size());
  const Variant variants[] = {Variant::DecayCoupledLR, Variant::DecayDecoupled,
                              Variant::NormControl, Variant::CoupledSGD, Variant::None};
  for (int i = 0; i < 5; ++i) {
    OptimizerConfig cfg = random_config(rng, variants[uniform_size(rng, 0, 4)]);
    const auto g = random_vector(rng, store.size(), std::pow(10.0, uniform(rng, -8.0, 4.0)));
    ScheduleValues values{uniform(rng, 1e-3, 1.0), uniform(rng, 0.0, 3.0), uniform(rng, 0.0, 1.0)};
    step(store, state, g, values, TargetNormMode::RelativeToInit, cfg);
    if (!all_finite(store.theta())) return non_finite(std::string("after ") + std::string(to_string(cfg.variant)));
  }
  return pass();
}

struct NamedProperty {
  std::string name;
  Property fn;
};

std::vector<NamedProperty> registry() {
  return {
      {"param_store.scale_homogeneity", scale_homogeneity},
      {"param_store.ratio_at_init_is_one", ratio_at_init},
      {"param_store.uncontrolled_mutation_invisible", uncontrolled_mutation},
      {"schedules.eta_monotone_after_warmup", eta_monotone},
      {"schedules.rt_exact_at_breakpoints", rt_exact_at_breakpoints},
      {"schedules.pure_and_in_range", schedules_pure},
      {"schedules.text_round_trip", schedule_text_round_trip},
      {"optim.convex_combination", convex_combination},
      {"optim.projection_exact", projection_exact},
      {"optim.fixed_point", fixed_point},
      {"optim.direction_preservation", direction_preservation},
      {"optim.bias_correction_t1", bias_correction},
      {"optim.uncontrolled_invariant", uncontrolled_invariant},
      {"optim.equivalence_decay_coupled_lr",
       [](Rng& rng) { return special_case_equivalence(rng, Variant::DecayCoupledLR); }},
      {"optim.equivalence_decay_decoupled",
       [](Rng& rng) { return special_case_equivalence(rng, Variant::DecayDecoupled); }},
      {"oracle.decay_coupled_lr", [](Rng& rng) { return oracle_equivalence(rng, Variant::DecayCoupledLR); }},
      {"oracle.decay_decoupled", [](Rng& rng) { return oracle_equivalence(rng, Variant::DecayDecoupled); }},
      {"oracle.norm_control", [](Rng& rng) { return oracle_equivalence(rng, Variant::NormControl); }},
      {"oracle.coupled_sgd", [](Rng& rng) { return oracle_equivalence(rng, Variant::CoupledSGD); }},
      {"oracle.none", [](Rng& rng) { return oracle_equivalence(rng, Variant::None); }},
      {"numerics.near_zero_theta", near_zero_no_nan},
      {"numerics.range_sweep", range_sweep},
  };
}

}  // namespace

bool PropertyReport::passed() const {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed(); });
}

std::size_t PropertyReport::total_failures() const {
  std::size_t n = 0;
  for (const auto& r : results) n += r.failures;
  return n;
}

std::size_t PropertyReport::total_non_finite() const {
  std::size_t n = 0;
  for (const auto& r : results) n += r.non_finite;
  return n;
}

std::string PropertyReport::to_text() const {
  std::ostringstream out;
  for (const auto& r : results) {
    out << (r.passed() ? "PASS " : "FAIL ") << r.name << " cases=" << r.cases
        << " failures=" << r.failures << " non_finite=" << r.non_finite;
    if (!r.counterexample.empty()) out << "\n    first counterexample: " << r.counterexample;
    out << '\n';
  }
  return out.str();
}

double gradient_tolerance(TaskKind kind) {
  switch (kind) {
    case TaskKind::Quadratic: return 1e-9;
    case TaskKind::Logistic: return 1e-6;
    case TaskKind::Mlp: return 1e-5;
  }
  return 0.0;
}

double gradient_check_step(TaskKind kind) {
  // Central differences are exact for a quadratic at any h; a larger step
  // only shrinks the cancellation error in f(θ+h) − f(θ−h).
  return kind == TaskKind::Quadratic ? 1e-3 : 1e-5;
}

GradientCheck check_task_gradient(const TaskSpec& spec, std::uint64_t seed) {
  const auto task = make_task(spec, seed);
  std::vector<double> theta = task->initial_theta(seed);
  auto rng = make_rng(seed, 7);
  std::normal_distribution<double> noise(0.0, 0.5);
  for (double& x : theta) x += noise(rng);
  const Batch batch = task->sample_batch(rng, 16);
  GradientCheck result;
  result.tolerance = gradient_tolerance(spec.kind);
  result.max_rel_error = finite_diff_check(*task, theta, batch, gradient_check_step(spec.kind), 200, seed);
  return result;
}

std::vector<std::string> property_names() {
  std::vector<std::string> names;
  for (const auto& p : registry()) names.push_back(p.name);
  return names;
}

PropertyReport property_suite(std::uint64_t seed, std::size_t cases) {
  PropertyReport report;
  std::uint64_t index = 0;
  for (const auto& prop : registry()) {
    PropertyResult result;
    result.name = prop.name;
    Rng rng = make_rng(seed, 1000 + index++);
    for (std::size_t c = 0; c < cases; ++c) {
      ++result.cases;
      Outcome outcome;
      try {
        outcome = prop.fn(rng);
      } catch (const std::exception& e) {
        outcome = fail(std::string("threw: ") + e.what());
      }
      if (outcome.verdict == Verdict::Pass) continue;
      if (outcome.verdict == Verdict::NonFinite) {
        ++result.non_finite;
      } else {
        ++result.failures;
      }
      if (result.counterexample.empty()) {
        result.counterexample = "case " + std::to_string(c) + ": " + outcome.detail;
      }
    }
    report.results.push_back(std::move(result));
  }
  return report;
}

}  // namespace wnorm::verify
