// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace wnorm {

using Step = std::int64_t;

/// Half-cosine annealing of the learning-rate multiplier η_t with an
/// optional linear warmup.
struct CosineSpec {
  double eta_max = 1.0;
  double eta_min = 0.1;
  Step warmup_steps = 0;

  bool operator==(const CosineSpec&) const = default;
};

struct Breakpoint {
  Step t = 0;
  double value = 0.0;

  bool operator==(const Breakpoint&) const = default;
};

/// Piecewise-linear function of the step index. A single breakpoint at t=0
/// is a constant. Values are held constant after the last breakpoint.
struct PiecewiseLinearSpec {
  std::vector<Breakpoint> points{{0, 0.0}};

  static PiecewiseLinearSpec constant(double value) { return {{{0, value}}}; }
  static PiecewiseLinearSpec linear(std::vector<Breakpoint> points) { return {std::move(points)}; }

  bool is_constant() const noexcept { return points.size() == 1; }

  bool operator==(const PiecewiseLinearSpec&) const = default;
};

/// How r_t is turned into a target norm: r_t·‖θ₀‖ or r_t in raw units.
enum class TargetNormMode { RelativeToInit, Absolute };

/// All per-step schedules of a run over horizon T.
struct ScheduleSpec {
  Step horizon = 1;
  CosineSpec eta;
  PiecewiseLinearSpec rt = PiecewiseLinearSpec::constant(1.0);
  PiecewiseLinearSpec kt = PiecewiseLinearSpec::constant(0.01);
  /// When set, k_t is additionally multiplied by η_t. Lets norm control
  /// reproduce learning-rate-coupled decay (r_t = 0, k_t = η_t·α₀·λ).
  bool kt_scaled_by_eta = false;
  TargetNormMode target_mode = TargetNormMode::RelativeToInit;

  bool operator==(const ScheduleSpec&) const = default;
};

/// The three scheduled scalars at one step.
struct ScheduleValues {
  double eta = 1.0;
  double rt = 0.0;
  double kt = 0.0;
};

/// η_t. Throws NumericError("schedule exhausted") when t > horizon.
double eta_schedule_eval(const CosineSpec& spec, Step t, Step horizon);

/// Linear interpolation between the enclosing breakpoints; exact at
/// breakpoints, constant before the first and after the last.
double rt_schedule_eval(const PiecewiseLinearSpec& spec, Step t);

/// Same evaluator as rt_schedule_eval, named for k_t call sites.
inline double kt_schedule_eval(const PiecewiseLinearSpec& spec, Step t) {
  return rt_schedule_eval(spec, t);
}

ScheduleValues evaluate(const ScheduleSpec& spec, Step t);

/// Checks every type invariant; throws ValidationError naming the field.
void validate(const ScheduleSpec& spec);

/// Parses the line-oriented schedule format (`T`, `eta`, `rt`, `kt`,
/// `target_mode`; `#` starts a comment). Unknown keys are parse errors.
ScheduleSpec parse_schedule_spec(std::string_view text);

/// Inverse of parse_schedule_spec; numbers are written in shortest
/// round-trip form so parse(to_text(s)) == s.
std::string to_text(const ScheduleSpec& spec);

// Lower-level pieces shared with the run-config parser.

struct KeyValueLine {
  std::size_t line = 0;
  std::string key;
  std::string value;
};

/// Splits text into `key = value` lines, skipping blanks and comments.
std::vector<KeyValueLine> split_key_values(std::string_view text);

/// Applies one schedule key to `spec`. Returns false if the key is not a
/// schedule key. Throws ParseError on malformed values.
bool apply_schedule_key(ScheduleSpec& spec, const KeyValueLine& kv);

/// Strict number parsing for config values; throws ParseError.
double parse_real(std::string_view text, std::size_t line);
std::int64_t parse_integer(std::string_view text, std::size_t line);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_real(double value);

}  // namespace wnorm
