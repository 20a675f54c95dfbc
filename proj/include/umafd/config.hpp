#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "umafd/backbone.hpp"
#include "umafd/data.hpp"
#include "umafd/losses.hpp"
#include "umafd/synth.hpp"

namespace umafd {

struct TrainConfig {
  std::size_t epochs = 120;
  double base_lr = 1e-4;
  std::size_t lr_decay_epoch = 60;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double tau = 0.7;
  double margin = 0.3;
  std::size_t xbm_capacity = 128;
  WeightMode weight_mode = WeightMode::Adaptive;
  std::array<bool, kLossTerms> enabled{true, true, true, true, true};
  std::array<double, kLossTerms> lambdas{1.0, 1.0, 1.0, 1.0, 1.0};
  std::uint64_t seed = 0;
  double grl_lambda = 1.0;
  /// Fraction of RGB TRAIN held out for best-checkpoint selection; 0 disables.
  double val_fraction = 0.0;
  /// Depth TRAIN labels are revealed and trained with the classification loss
  /// (supervised-target protocol only).
  bool supervised_depth = false;

  bool uses(LossTerm t) const { return enabled[static_cast<std::size_t>(t)]; }
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Learning rate for a 0-based epoch: base_lr before lr_decay_epoch, base_lr * factor after.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

/// Everything a run needs, as read from a flat key=value file.
struct RunConfig {
  synth::SynthConfig synth;
  BackboneConfig backbone;
  TrainConfig train;

  data::ClipDims dims() const { return {synth.frames, synth.height, synth.width}; }
  void set_seed(std::uint64_t seed);
  void validate() const;

  bool operator==(const RunConfig& o) const;
};

/// Parses key=value lines; '#' starts a comment. Unknown keys and malformed
/// values raise ConfigError naming the key. Absent keys keep their defaults.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical text form: every key, fixed order, shortest round-trip numbers.
std::string echo_run_config(const RunConfig& cfg);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace umafd
