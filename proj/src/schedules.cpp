// SPDX-License-Identifier: Apache-2.0

#include "wnorm/schedules.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "wnorm/errors.hpp"

namespace wnorm {

double eta_schedule_eval(const CosineSpec& spec, Step t, Step horizon) {
  if (t < 0) throw NumericError("negative step index " + std::to_string(t));
  if (t > horizon) {
    throw NumericError("schedule exhausted: step " + std::to_string(t) + " past horizon " +
                       std::to_string(horizon));
  }
  if (t < spec.warmup_steps) {
    return spec.eta_max * static_cast<double>(t + 1) / static_cast<double>(spec.warmup_steps);
  }
  const Step span = horizon - spec.warmup_steps;
  const Step into = t - spec.warmup_steps;
  // Endpoints returned verbatim so η(start) and η(T) are exact.
  if (into == 0) return spec.eta_max;
  if (into >= span) return spec.eta_min;
  const double progress = static_cast<double>(into) / static_cast<double>(span);
  return spec.eta_min +
         0.5 * (spec.eta_max - spec.eta_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

double rt_schedule_eval(const PiecewiseLinearSpec& spec, Step t) {
  const auto& pts = spec.points;
  if (pts.empty()) return 0.0;
  if (t <= pts.front().t) return pts.front().value;
  if (t >= pts.back().t) return pts.back().value;
  std::size_t hi = 1;
  while (pts[hi].t < t) ++hi;
  const Breakpoint& b = pts[hi];
  if (b.t == t) return b.value;
  const Breakpoint& a = pts[hi - 1];
  const double frac = static_cast<double>(t - a.t) / static_cast<double>(b.t - a.t);
  return a.value + (b.value - a.value) * frac;
}

ScheduleValues evaluate(const ScheduleSpec& spec, Step t) {
  ScheduleValues values;
  values.eta = eta_schedule_eval(spec.eta, t, spec.horizon);
  values.rt = rt_schedule_eval(spec.rt, t);
  values.kt = kt_schedule_eval(spec.kt, t);
  if (spec.kt_scaled_by_eta) values.kt *= values.eta;
  return values;
}

namespace {

void validate_breakpoints(const PiecewiseLinearSpec& spec, Step horizon,
                          const std::string& field, double lo, double hi) {
  const auto& pts = spec.points;
  if (pts.empty()) throw ValidationError(field, "needs at least one breakpoint");
  if (pts.front().t != 0) throw ValidationError(field, "first breakpoint must be at t=0");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    if (i > 0 && p.t <= pts[i - 1].t) {
      throw ValidationError(field, "breakpoints must be strictly increasing in t");
    }
    if (!std::isfinite(p.value) || p.value < lo || p.value > hi) {
      std::ostringstream msg;
      msg << "value " << format_real(p.value) << " at t=" << p.t << " outside [" << lo << ", "
          << (std::isinf(hi) ? std::string("inf") : format_real(hi)) << "]";
      throw ValidationError(field, msg.str());
    }
  }
  if (pts.back().t > horizon) {
    throw ValidationError(field, "last breakpoint t=" + std::to_string(pts.back().t) +
                                     " is past horizon T=" + std::to_string(horizon));
  }
}

}  // namespace

void validate(const ScheduleSpec& spec) {
  if (spec.horizon < 1) throw ValidationError("T", "horizon must be a positive integer");
  const auto& eta = spec.eta;
  if (!(eta.eta_min > 0.0)) throw ValidationError("eta", "eta_min must be > 0");
  if (!(eta.eta_min <= eta.eta_max)) throw ValidationError("eta", "eta_min must be <= eta_max");
  if (!(eta.eta_max <= 1.0)) throw ValidationError("eta", "eta_max must be <= 1");
  if (eta.warmup_steps < 0) throw ValidationError("eta", "warmup must be nonnegative");
  if (eta.warmup_steps >= spec.horizon) {
    throw ValidationError("eta", "warmup must be shorter than the horizon");
  }
  validate_breakpoints(spec.rt, spec.horizon, "rt", 0.0, HUGE_VAL);
  validate_breakpoints(spec.kt, spec.horizon, "kt", 0.0, 1.0);
  if (spec.kt_scaled_by_eta && !spec.kt.is_constant()) {
    throw ValidationError("kt", "eta_scaled() takes a single constant");
  }
}

// ---------------------------------------------------------------------------
// Text format

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Call {
  std::string name;
  std::vector<std::string> args;
};

// name(arg, arg, ...)
Call parse_call(std::string_view text, std::size_t line) {
  text = trim(text);
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') {
    throw ParseError(line, "expected name(...) but got '" + std::string(text) + "'");
  }
  Call call;
  call.name = std::string(trim(text.substr(0, open)));
  std::string_view inner = text.substr(open + 1, text.size() - open - 2);
  if (trim(inner).empty()) return call;
  std::size_t start = 0;
  while (true) {
    const auto comma = inner.find(',', start);
    const auto arg = trim(inner.substr(start, comma == std::string_view::npos ? inner.npos : comma - start));
    if (arg.empty()) throw ParseError(line, "empty argument in '" + std::string(text) + "'");
    call.args.emplace_back(arg);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return call;
}

PiecewiseLinearSpec parse_piecewise(std::string_view text, std::size_t line) {
  const Call call = parse_call(text, line);
  if (call.name == "const") {
    if (call.args.size() != 1) throw ParseError(line, "const() takes exactly one value");
    return PiecewiseLinearSpec::constant(parse_real(call.args[0], line));
  }
  if (call.name == "linear") {
    if (call.args.empty()) throw ParseError(line, "linear() needs at least one t:value pair");
    std::vector<Breakpoint> points;
    for (const auto& arg : call.args) {
      const auto colon = arg.find(':');
      if (colon == std::string::npos) {
        throw ParseError(line, "expected t:value but got '" + arg + "'");
      }
      points.push_back({parse_integer(trim(std::string_view(arg).substr(0, colon)), line),
                        parse_real(trim(std::string_view(arg).substr(colon + 1)), line)});
    }
    return PiecewiseLinearSpec::linear(std::move(points));
  }
  throw ParseError(line, "unknown schedule form '" + call.name + "'");
}

CosineSpec parse_cosine(std::string_view text, std::size_t line) {
  const Call call = parse_call(text, line);
  if (call.name != "cosine") throw ParseError(line, "eta must be cosine(max, min[, warmup=n])");
  if (call.args.size() < 2 || call.args.size() > 3) {
    throw ParseError(line, "cosine() takes max, min and an optional warmup=n");
  }
  CosineSpec spec;
  spec.eta_max = parse_real(call.args[0], line);
  spec.eta_min = parse_real(call.args[1], line);
  if (call.args.size() == 3) {
    std::string_view w = call.args[2];
    const auto eq = w.find('=');
    if (eq == std::string_view::npos || trim(w.substr(0, eq)) != "warmup") {
      throw ParseError(line, "third cosine() argument must be warmup=<int>");
    }
    spec.warmup_steps = parse_integer(trim(w.substr(eq + 1)), line);
  }
  return spec;
}

}  // namespace

double parse_real(std::string_view text, std::size_t line) {
  text = trim(text);
  double value = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ParseError(line, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::int64_t parse_integer(std::string_view text, std::size_t line) {
  text = trim(text);
  std::int64_t value = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ParseError(line, "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::vector<KeyValueLine> split_key_values(std::string_view text) {
  std::vector<KeyValueLine> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(line_no, "expected 'key = value' but got '" + std::string(raw) + "'");
    }
    KeyValueLine kv{line_no, std::string(trim(raw.substr(0, eq))), std::string(trim(raw.substr(eq + 1)))};
    if (kv.key.empty()) throw ParseError(line_no, "missing key before '='");
    if (kv.value.empty()) throw ParseError(line_no, "missing value for '" + kv.key + "'");
    out.push_back(std::move(kv));
  }
  return out;
}

bool apply_schedule_key(ScheduleSpec& spec, const KeyValueLine& kv) {
  if (kv.key == "T") {
    spec.horizon = parse_integer(kv.value, kv.line);
  } else if (kv.key == "eta") {
    spec.eta = parse_cosine(kv.value, kv.line);
  } else if (kv.key == "rt") {
    spec.rt = parse_piecewise(kv.value, kv.line);
  } else if (kv.key == "kt") {
    const Call call = parse_call(kv.value, kv.line);
    if (call.name == "eta_scaled") {
      if (call.args.size() != 1) throw ParseError(kv.line, "eta_scaled() takes exactly one value");
      spec.kt = PiecewiseLinearSpec::constant(parse_real(call.args[0], kv.line));
      spec.kt_scaled_by_eta = true;
    } else {
      spec.kt = parse_piecewise(kv.value, kv.line);
      spec.kt_scaled_by_eta = false;
    }
  } else if (kv.key == "target_mode") {
    if (kv.value == "relative") {
      spec.target_mode = TargetNormMode::RelativeToInit;
    } else if (kv.value == "absolute") {
      spec.target_mode = TargetNormMode::Absolute;
    } else {
      throw ParseError(kv.line, "target_mode must be 'relative' or 'absolute'");
    }
  } else {
    return false;
  }
  return true;
}

ScheduleSpec parse_schedule_spec(std::string_view text) {
  ScheduleSpec spec;
  bool saw_horizon = false;
  for (const auto& kv : split_key_values(text)) {
    if (!apply_schedule_key(spec, kv)) {
      throw ParseError(kv.line, "unknown key '" + kv.key + "'");
    }
    saw_horizon = saw_horizon || kv.key == "T";
  }
  if (!saw_horizon) throw ValidationError("T", "missing horizon");
  validate(spec);
  return spec;
}

namespace {

std::string piecewise_text(const PiecewiseLinearSpec& spec) {
  if (spec.is_constant() && spec.points.front().t == 0) {
    return "const(" + format_real(spec.points.front().value) + ")";
  }
  std::string out = "linear(";
  for (std::size_t i = 0; i < spec.points.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(spec.points[i].t) + ":" + format_real(spec.points[i].value);
  }
  return out + ")";
}

}  // namespace

std::string to_text(const ScheduleSpec& spec) {
  std::ostringstream out;
  out << "T = " << spec.horizon << '\n';
  out << "eta = cosine(" << format_real(spec.eta.eta_max) << ", " << format_real(spec.eta.eta_min);
  if (spec.eta.warmup_steps != 0) out << ", warmup=" << spec.eta.warmup_steps;
  out << ")\n";
  out << "rt = " << piecewise_text(spec.rt) << '\n';
  if (spec.kt_scaled_by_eta) {
    out << "kt = eta_scaled(" << format_real(spec.kt.points.front().value) << ")\n";
  } else {
    out << "kt = " << piecewise_text(spec.kt) << '\n';
  }
  out << "target_mode = "
      << (spec.target_mode == TargetNormMode::Absolute ? "absolute" : "relative") << '\n';
  return out.str();
}

}  // namespace wnorm
