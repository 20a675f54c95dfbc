#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "umafd/autograd.hpp"

namespace umafd {

struct Parameter {
  std::string name;
  Var var;
};

/// Ordered registry of trainable leaves. Copies share the underlying nodes.
class ParameterSet {
 public:
  Var add(std::string name, Tensor init);
  const std::vector<Parameter>& items() const { return items_; }
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t scalar_count() const;
  void zero_grad();
  /// FNV-1a over names, shapes and raw value bytes in registration order.
  std::uint64_t checksum() const;

 private:
  std::vector<Parameter> items_;
};

std::string hex64(std::uint64_t v);

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng);

/// SGD with momentum: v <- m v - lr g; theta <- theta + v.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}

  void step(const ParameterSet& params, double lr);
  double momentum() const { return momentum_; }
  std::vector<Tensor>& velocity() { return velocity_; }
  const std::vector<Tensor>& velocity() const { return velocity_; }

 private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

/// Binary blob: parameters (and optionally velocity buffers) by name.
void save_blob(const std::filesystem::path& path, const ParameterSet& params, const std::vector<Tensor>* velocity);

/// Loads values into matching parameter names. Parameters missing from the blob
/// keep their current values when `allow_missing`; otherwise FileError.
/// Velocity buffers, when present and requested, are restored as well.
void load_blob(const std::filesystem::path& path, const ParameterSet& params, std::vector<Tensor>* velocity,
               bool allow_missing = false);

}  // namespace umafd
