#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "umafd/backbone.hpp"
#include "umafd/config.hpp"
#include "umafd/data.hpp"
#include "umafd/heads.hpp"
#include "umafd/idm.hpp"
#include "umafd/losses.hpp"
#include "umafd/params.hpp"
#include "umafd/xbm.hpp"

namespace umafd {

/// Backbone, IDM and the three heads over one parameter registry. Every part is
/// always constructed (in a fixed order from one seeded stream) so checkpoints
/// from any protocol or ablation stage share one layout.
class UmaModel {
 public:
  UmaModel(const BackboneConfig& cfg, double grl_lambda, std::uint64_t seed);
  UmaModel(const UmaModel&) = delete;
  UmaModel& operator=(const UmaModel&) = delete;

  const BackboneConfig& config() const { return backbone.config(); }

  ParameterSet params;

 private:
  std::mt19937_64 init_rng_;

 public:
  Tiny3D backbone;
  IdmBlock idm;
  ClassifierHead classifier;
  ModalityHead modality;
  WeightHead weight_head;

  /// Pooled embeddings (N, d) of clips (3, T, H, W) or (N, 3, T, H, W).
  Var embed(const Tensor& clips) const;
  /// Classifier scores for one clip or a batch.
  std::vector<double> scores(const Tensor& clips) const;
};

struct TrainState {
  TrainState(const BackboneConfig& backbone, const TrainConfig& train);

  UmaModel model;
  SgdMomentum optimizer;
  XbmMemory memory;
  std::size_t epoch = 0;
  std::size_t step = 0;
  /// Checkpoint the parameters were initialised from, and its parameter checksum.
  std::optional<std::filesystem::path> init_from;
  std::string init_checksum;
};

/// One paired step. `depth` may be null when no enabled term needs the depth
/// stream; `depth_label` is set only by the supervised-target protocol.
struct StepInput {
  const Tensor* rgb = nullptr;
  int rgb_label = 0;
  const Tensor* depth = nullptr;
  std::optional<int> depth_label;
};

struct StepResult {
  LossBundle losses;
  std::array<double, kLossTerms> weights{};
  double total = 0.0;
};

/// True when the configuration needs depth tensors during training.
bool needs_depth_stream(const TrainConfig& cfg);

/// Forward, loss assembly, backward and one momentum-SGD update at rate `lr`.
/// Throws NumericError naming the term when a loss is not finite.
StepResult train_step(const StepInput& input, TrainState& state, const TrainConfig& cfg, double lr);

/// Loss-trace CSV header.
inline constexpr const char* kTrainLogHeader =
    "step,cls,pseudo,modality,bridge,triplet,total,w1,w2,w3,w4,w5,pseudo_count";
std::string format_log_row(std::size_t step, const StepResult& r);

struct FitOptions {
  std::filesystem::path out_dir;
  /// Parameters to start from (missing names keep their fresh initialisation).
  std::optional<std::filesystem::path> init_checkpoint;
  /// Continue after the newest ckpt_epoch_*.bin in out_dir, if any.
  bool resume = false;
  /// Called after every step; used by tests and progress reporting.
  std::function<void(std::size_t step, const StepResult&)> on_step;
};

struct FitResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;  // == final when no validation split
  std::size_t steps_run = 0;
  std::uint64_t checksum = 0;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch);

/// Writes `<stem>.bin` and the sidecar `<stem>.meta.json`.
void save_checkpoint(const std::filesystem::path& bin_path, const TrainState& state, const RunConfig& cfg);
/// Loads parameters (and velocity when `state_too`) into `state`.
void load_checkpoint(const std::filesystem::path& bin_path, TrainState& state, bool state_too, bool allow_missing);

/// Validates the dataset, then runs cfg.train.epochs epochs of paired steps.
FitResult fit(const std::vector<data::ClipRecord>& records, data::ClipSource& source, const RunConfig& cfg,
              const FitOptions& options);

}  // namespace umafd
