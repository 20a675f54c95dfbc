#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "umafd/config.hpp"
#include "umafd/data.hpp"
#include "umafd/metrics.hpp"
#include "umafd/trainer.hpp"

namespace umafd {

enum class Protocol { Baseline, Umafd, SupervisedTarget };

/// "baseline", "umafd", "supervised-target".
std::string_view to_string(Protocol p);
/// Throws ConfigError for unknown names.
Protocol protocol_from_name(std::string_view name);

/// Training configuration a protocol actually runs with. BASELINE and
/// SUPERVISED_TARGET are cls-only with fixed weights; UMAFD keeps `cfg`.
RunConfig protocol_config(Protocol p, const RunConfig& cfg);

struct ProtocolResult {
  Protocol protocol = Protocol::Umafd;
  MetricsReport metrics;
  std::uint64_t seed = 0;
  std::string config_echo;
  std::filesystem::path checkpoint;
  std::vector<double> scores;  // DEPTH TEST scores in manifest order
};

/// Scores every DEPTH TEST clip with `model` and assembles the metrics.
MetricsReport evaluate_depth_test(const UmaModel& model, const std::vector<data::ClipRecord>& records,
                                  data::ClipSource& source, std::vector<double>* scores = nullptr);

inline constexpr const char* kReportHeader = "protocol,seed,accuracy,precision,recall,f1,auc";

struct ProtocolOptions {
  std::optional<std::filesystem::path> init_checkpoint;
  bool resume = false;
  bool write_report = true;
};

/// Trains under the protocol into out_dir, evaluates on DEPTH TEST and writes
/// report_<protocol>.csv.
ProtocolResult run_protocol(Protocol p, const std::vector<data::ClipRecord>& records, data::ClipSource& source,
                            const RunConfig& cfg, const std::filesystem::path& out_dir,
                            const ProtocolOptions& options = {});

inline constexpr std::size_t kAblationStages = 6;
inline constexpr std::array<const char*, kAblationStages> kStageIds{"V-01", "V-02", "V-03", "V-04", "V-05", "V-06"};
inline constexpr const char* kAblationHeader = "stage,accuracy,precision,recall,f1,auc";

/// Configuration for ladder stage `index` (0-based) derived from `base`.
RunConfig ablation_config(std::size_t index, const RunConfig& base);

struct AblationRow {
  std::string stage;
  ProtocolResult result;
  bool skipped = false;  // restored from an earlier run
};

/// Runs the six-stage ladder under out_dir/<stage>, each stage starting from
/// the previous one's best checkpoint. Finished stages are not retrained.
std::vector<AblationRow> ablation(const std::vector<data::ClipRecord>& records, data::ClipSource& source,
                                  const RunConfig& cfg, const std::filesystem::path& out_dir);

inline constexpr const char* kEmbeddingPrefix = "clip_id,modality,label";

/// One row per TEST clip sorted by clip_id: clip_id, modality, label, e0..e{d-1}.
void export_embeddings(const std::filesystem::path& checkpoint, const std::vector<data::ClipRecord>& records,
                       data::ClipSource& source, const BackboneConfig& backbone, const std::filesystem::path& out);

}  // namespace umafd
