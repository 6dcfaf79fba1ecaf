// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace wnorm {

/// A named contiguous slice of the flat parameter vector.
///
/// Only controlled groups take part in decay / norm control and in norm
/// measurement. Uncontrolled groups (LayerNorm gains, optionally biases)
/// still receive the loss-based update.
struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  bool controlled = true;

  bool operator==(const ParamGroup&) const = default;
};

/// Sum of squares accumulated sequentially over `values` with error-free
/// transformations, so the result is as accurate as if computed in twice
/// the working precision. Order of summation is the order of `values`.
double sum_of_squares(std::span<const double> values);

/// Owns θ, its partition into groups, and the frozen norm of the controlled
/// subset at construction time.
class ParamStore {
 public:
  ParamStore() = default;

  /// Validates that `groups` tile `theta` and caches the initial norm.
  /// Throws ConfigError on overlap, gaps, or duplicate names.
  ParamStore(std::vector<double> theta, std::vector<ParamGroup> groups);

  /// One controlled group spanning all of `theta`.
  static ParamStore single_group(std::vector<double> theta,
                                 std::string name = "theta");

  /// Rebuild a store whose initial norm was recorded elsewhere (checkpoints).
  static ParamStore restore(std::vector<double> theta,
                            std::vector<ParamGroup> groups,
                            double initial_norm);

  std::span<double> theta() noexcept { return theta_; }
  std::span<const double> theta() const noexcept { return theta_; }
  std::size_t size() const noexcept { return theta_.size(); }

  const std::vector<ParamGroup>& groups() const noexcept { return groups_; }
  const ParamGroup& group(const std::string& name) const;
  std::span<double> group_view(const ParamGroup& g) noexcept {
    return std::span<double>(theta_).subspan(g.offset, g.length);
  }
  std::span<const double> group_view(const ParamGroup& g) const noexcept {
    return std::span<const double>(theta_).subspan(g.offset, g.length);
  }

  double initial_norm() const noexcept { return initial_norm_; }

  /// L2 norm over the concatenation of all controlled groups.
  double controlled_norm() const;

  /// controlled_norm() / initial_norm(). Throws NumericError
  /// ("degenerate initialization") when the initial norm is zero.
  double norm_ratio() const;

  /// Multiply every controlled element by `factor` in place.
  void scale_controlled(double factor);

  /// Deep copy.
  ParamStore snapshot() const { return *this; }

 private:
  void validate_layout() const;

  std::vector<double> theta_;
  std::vector<ParamGroup> groups_;  // sorted by offset
  double initial_norm_ = 0.0;
};

/// Checkpoint format: one line of JSON text describing the groups and the
/// initial norm, a newline, then size() little-endian IEEE-754 doubles.
void save_checkpoint(const ParamStore& store, std::ostream& out);
ParamStore load_checkpoint(std::istream& in);

void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace wnorm
