// SPDX-License-Identifier: Apache-2.0

#include "wnorm/param_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>

#include <json.hpp>

#include "wnorm/errors.hpp"

namespace wnorm {

namespace {

// Dot2 (Ogita, Rump, Oishi): TwoProduct via fma, TwoSum for accumulation.
class SquareAccumulator {
 public:
  void add(double x) {
    const double p = x * x;
    const double p_err = std::fma(x, x, -p);
    const double s = sum_ + p;
    const double z = s - sum_;
    const double s_err = (sum_ - (s - z)) + (p - z);
    sum_ = s;
    comp_ += s_err + p_err;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace

double sum_of_squares(std::span<const double> values) {
  SquareAccumulator acc;
  for (const double x : values) acc.add(x);
  return acc.value();
}

ParamStore::ParamStore(std::vector<double> theta, std::vector<ParamGroup> groups)
    : theta_(std::move(theta)), groups_(std::move(groups)) {
  std::sort(groups_.begin(), groups_.end(),
            [](const ParamGroup& a, const ParamGroup& b) { return a.offset < b.offset; });
  validate_layout();
  initial_norm_ = controlled_norm();
}

ParamStore ParamStore::single_group(std::vector<double> theta, std::string name) {
  const std::size_t n = theta.size();
  std::vector<ParamGroup> groups;
  if (n > 0) groups.push_back({std::move(name), 0, n, true});
  return ParamStore(std::move(theta), std::move(groups));
}

ParamStore ParamStore::restore(std::vector<double> theta, std::vector<ParamGroup> groups,
                               double initial_norm) {
  if (!(initial_norm >= 0.0) || !std::isfinite(initial_norm)) {
    throw ConfigError("checkpoint initial_norm must be finite and nonnegative");
  }
  ParamStore store(std::move(theta), std::move(groups));
  store.initial_norm_ = initial_norm;
  return store;
}

void ParamStore::validate_layout() const {
  std::size_t cursor = 0;
  std::set<std::string> names;
  for (const auto& g : groups_) {
    if (g.offset != cursor) {
      throw ConfigError("parameter group '" + g.name + "' at offset " +
                        std::to_string(g.offset) + " does not continue at " +
                        std::to_string(cursor));
    }
    if (!names.insert(g.name).second) {
      throw ConfigError("duplicate parameter group name '" + g.name + "'");
    }
    cursor += g.length;
  }
  if (cursor != theta_.size()) {
    throw ConfigError("parameter groups cover " + std::to_string(cursor) + " of " +
                      std::to_string(theta_.size()) + " elements");
  }
}

const ParamGroup& ParamStore::group(const std::string& name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw ConfigError("no parameter group named '" + name + "'");
}

double ParamStore::controlled_norm() const {
  // Controlled groups are visited in offset order and their elements are
  // fed through one accumulator, i.e. sequentially over the flat vector.
  SquareAccumulator acc;
  for (const auto& g : groups_) {
    if (!g.controlled) continue;
    for (const double x : group_view(g)) acc.add(x);
  }
  return std::sqrt(acc.value());
}

double ParamStore::norm_ratio() const {
  if (initial_norm_ == 0.0) {
    throw NumericError("degenerate initialization: initial controlled norm is zero");
  }
  return controlled_norm() / initial_norm_;
}

void ParamStore::scale_controlled(double factor) {
  for (const auto& g : groups_) {
    if (!g.controlled) continue;
    for (double& x : group_view(g)) x *= factor;
  }
}

namespace {

using nlohmann::json;

std::uint64_t to_little_endian(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) {
    return bits;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) {
      out = (out << 8) | ((bits >> (8 * i)) & 0xffu);
    }
    return out;
  }
}

}  // namespace

void save_checkpoint(const ParamStore& store, std::ostream& out) {
  json header;
  header["initial_norm"] = store.initial_norm();
  header["size"] = store.size();
  header["groups"] = json::array();
  for (const auto& g : store.groups()) {
    header["groups"].push_back(
        {{"name", g.name}, {"offset", g.offset}, {"length", g.length}, {"controlled", g.controlled}});
  }
  out << header.dump() << '\n';
  for (const double x : store.theta()) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(x));
    char buf[8];
    std::memcpy(buf, &bits, sizeof buf);
    out.write(buf, sizeof buf);
  }
  if (!out) throw NumericError("failed writing checkpoint");
}

ParamStore load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("checkpoint: missing header line");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: bad header: ") + e.what());
  }
  std::vector<ParamGroup> groups;
  std::size_t size = 0;
  double initial_norm = 0.0;
  try {
    size = header.at("size").get<std::size_t>();
    initial_norm = header.at("initial_norm").get<double>();
    for (const auto& g : header.at("groups")) {
      groups.push_back({g.at("name").get<std::string>(), g.at("offset").get<std::size_t>(),
                        g.at("length").get<std::size_t>(), g.at("controlled").get<bool>()});
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: bad header: ") + e.what());
  }
  std::vector<double> theta(size);
  for (double& x : theta) {
    char buf[8];
    if (!in.read(buf, sizeof buf)) throw ConfigError("checkpoint: truncated payload");
    std::uint64_t bits = 0;
    std::memcpy(&bits, buf, sizeof bits);
    x = std::bit_cast<double>(to_little_endian(bits));
  }
  return ParamStore::restore(std::move(theta), std::move(groups), initial_norm);
}

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericError("cannot open '" + path + "' for writing");
  save_checkpoint(store, out);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace wnorm
