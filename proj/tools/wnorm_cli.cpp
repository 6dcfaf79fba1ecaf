// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "wnorm/errors.hpp"
#include "wnorm/harness.hpp"
#include "wnorm/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw wnorm::ConfigError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw wnorm::ConfigError("write failed: " + path);
}

void print_notes(const wnorm::RunTrace& trace, const char* label) {
  for (const auto& note : trace.notes) std::cerr << label << note << '\n';
}

int cmd_run(const std::string& config_path, const std::string& out_path) {
  auto cfg = wnorm::parse_run_config(wnorm::read_text_file(config_path));
  cfg.output_path = out_path;
  const auto trace = wnorm::run(cfg);
  print_notes(trace, "warning: ");
  std::cout << "final norm_ratio " << wnorm::format_csv_real(trace.final_ratio()) << ", val_loss "
            << wnorm::format_csv_real(trace.final_val_loss()) << '\n';
  return kExitOk;
}

int cmd_compare(const std::string& config_a, const std::string& template_b,
                const std::string& out_dir, std::optional<wnorm::Step> ramp) {
  const auto a = wnorm::parse_run_config(wnorm::read_text_file(config_a));
  auto b = a;
  b.output_path.clear();
  wnorm::apply_config_text(b, wnorm::read_text_file(template_b));
  b.validate();

  const auto report = wnorm::compare(a, b, ramp);
  print_notes(report.trace_a, "warning (A): ");
  print_notes(report.trace_b, "warning (B): ");

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  write_text((dir / "trace_a.csv").string(), report.trace_a.to_csv());
  write_text((dir / "trace_b.csv").string(), report.trace_b.to_csv());
  write_text((dir / "report.json").string(), report.to_json());

  std::cout << "ratio A " << wnorm::format_csv_real(report.final_ratio_a) << ", ratio B "
            << wnorm::format_csv_real(report.final_ratio_b) << ", val_loss A "
            << wnorm::format_csv_real(report.final_val_loss_a) << ", val_loss B "
            << wnorm::format_csv_real(report.final_val_loss_b) << '\n';
  return kExitOk;
}

int cmd_schedule(const std::string& config_path, wnorm::Step stride, const std::string& out_path) {
  const auto cfg = wnorm::parse_run_config(wnorm::read_text_file(config_path));
  const auto table = wnorm::emit_schedule_table(cfg.schedule, stride);
  if (out_path.empty() || out_path == "-")
    std::cout << table;
  else
    write_text(out_path, table);
  return kExitOk;
}

int cmd_check_grad(const std::string& task, std::uint64_t seed) {
  wnorm::TaskSpec spec;
  spec.kind = wnorm::parse_task_kind(task);
  const auto result = wnorm::verify::check_task_gradient(spec, seed);
  std::cout << task << " seed " << seed << ": max_rel_error "
            << wnorm::format_csv_real(result.max_rel_error) << " tolerance "
            << wnorm::format_csv_real(result.tolerance) << (result.passed() ? " PASS" : " FAIL")
            << '\n';
  return result.passed() ? kExitOk : kExitNumeric;
}

int cmd_properties(std::uint64_t seed, std::size_t cases) {
  const auto report = wnorm::verify::property_suite(seed, cases);
  std::cout << report.to_text();
  return report.passed() ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adam with decoupled weight decay and weight norm control"};
  app.require_subcommand(1);

  std::string config, out, config_a, template_b, out_dir, task;
  wnorm::Step stride = 100;
  wnorm::Step ramp = 0;
  std::uint64_t seed = 0;
  std::size_t cases = 1000;

  auto* run = app.add_subcommand("run", "Train one configuration and write its trace");
  run->add_option("--config", config, "Config file")->required();
  run->add_option("--out", out, "Trace CSV")->required();

  auto* cmp = app.add_subcommand("compare", "Run a decay baseline and a calibrated norm-control run");
  cmp->add_option("--config-a", config_a, "Baseline config")->required();
  cmp->add_option("--template-b", template_b, "Keys applied on top of A for run B")->required();
  cmp->add_option("--out-dir", out_dir, "Output directory")->required();
  auto* ramp_opt = cmp->add_option("--ramp-steps", ramp, "Calibration ramp length")
                       ->check(CLI::PositiveNumber);

  auto* sched = app.add_subcommand("schedule", "Tabulate eta_t, r_t and k_t");
  sched->add_option("--config", config, "Config or schedule file")->required();
  sched->add_option("--stride", stride, "Row spacing")->required();
  sched->add_option("--out", out, "CSV path, '-' for stdout");

  auto* grad = app.add_subcommand("check-grad", "Finite-difference check of a task gradient");
  grad->add_option("--task", task, "quadratic, logistic or mlp")->required();
  grad->add_option("--seed", seed, "Seed")->required();

  auto* props = app.add_subcommand("properties", "Run the randomized property suite");
  props->add_option("--seed", seed, "Seed");
  props->add_option("--cases", cases, "Cases per property");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, out);
    if (*cmp) {
      std::optional<wnorm::Step> r;
      if (*ramp_opt) r = ramp;
      return cmd_compare(config_a, template_b, out_dir, r);
    }
    if (*sched) return cmd_schedule(config, stride, out);
    if (*grad) return cmd_check_grad(task, seed);
    if (*props) return cmd_properties(seed, cases);
  } catch (const wnorm::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}
