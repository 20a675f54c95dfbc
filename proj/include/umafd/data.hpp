#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "umafd/tensor.hpp"

namespace umafd::data {

enum class Modality { Rgb, Depth };
enum class Split { Train, Test };

std::string to_string(Modality m);
std::string to_string(Split s);

/// One manifest row. Depth TRAIN labels may be present on disk but the
/// adaptation pipeline never reads them.
struct ClipRecord {
  std::string clip_id;
  Modality modality = Modality::Rgb;
  Split split = Split::Train;
  std::optional<int> label;
  std::filesystem::path frame_dir;

  bool operator==(const ClipRecord&) const = default;
};

/// Temporal and spatial size every clip is sampled/resized to.
struct ClipDims {
  std::size_t frames = 8;
  std::size_t height = 256;
  std::size_t width = 256;
};

/// Clip data shaped (3, T, H, W) with values in [0, 1].
struct ClipTensor {
  Tensor data;
  Modality modality = Modality::Rgb;
  std::optional<int> label;
};

struct PairedBatch {
  ClipTensor rgb;
  ClipTensor depth;
};

inline constexpr const char* kManifestHeader = "clip_id,modality,split,label,frame_dir";

/// Reads `<root>/manifest.csv`. frame_dir entries are resolved against root.
std::vector<ClipRecord> load_manifest(const std::filesystem::path& root);

/// Writes records back in manifest order, with frame_dir relative to root when possible.
void write_manifest(const std::filesystem::path& root, const std::vector<ClipRecord>& records);

/// Number of records per (split, modality), e.g. {"train/rgb", 200}.
std::map<std::string, std::size_t> count_records(const std::vector<ClipRecord>& records);

std::vector<ClipRecord> select(const std::vector<ClipRecord>& records, Split split, Modality modality);

/// Uniformly spaced frame indices floor(i (N-1) / (T-1)); when N < T the last
/// available index is repeated.
std::vector<std::size_t> sample_indices(std::size_t available, std::size_t frames);

/// Half-pixel bilinear resize of one interleaved plane; identity when sizes agree.
std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t src_h, std::size_t src_w,
                                    std::size_t channels, std::size_t dst_h, std::size_t dst_w);

std::filesystem::path frame_path(const std::filesystem::path& frame_dir, std::size_t index);

ClipTensor decode_clip(const ClipRecord& record, const ClipDims& dims);

/// Index pairs (rgb, depth) for one epoch: independent seeded permutations of
/// both sides truncated to min(|rgb|, |depth|).
std::vector<std::pair<std::size_t, std::size_t>> make_pairs(std::size_t rgb_count, std::size_t depth_count,
                                                             std::uint64_t seed);

/// make_pairs over record lists; materialises the tensors.
std::vector<PairedBatch> make_pairs(const std::vector<ClipRecord>& rgb, const std::vector<ClipRecord>& depth,
                                    std::uint64_t seed, const ClipDims& dims);

/// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Decoding front-end used by training and evaluation. Caches decoded clips and
/// counts every access to depth TRAIN tensors and labels so protocols can be
/// audited.
class ClipSource {
 public:
  explicit ClipSource(ClipDims dims, bool cache = true) : dims_(dims), cache_enabled_(cache) {}

  const ClipDims& dims() const { return dims_; }

  /// Decoded tensor; the returned clip never carries a label.
  const Tensor& tensor(const ClipRecord& record);
  /// Label lookup; throws DataError when the record has none.
  int label(const ClipRecord& record);

  /// Decodes records in parallel into the cache. Results are identical to serial
  /// decoding; only the cache is filled, no counters change.
  void prefetch(const std::vector<ClipRecord>& records);

  std::size_t depth_train_tensor_reads() const { return depth_train_tensor_reads_; }
  std::size_t depth_train_label_reads() const { return depth_train_label_reads_; }
  void reset_counters() { depth_train_tensor_reads_ = depth_train_label_reads_ = 0; }

 private:
  ClipDims dims_;
  bool cache_enabled_;
  std::map<std::string, Tensor> cache_;
  Tensor scratch_;
  std::size_t depth_train_tensor_reads_ = 0;
  std::size_t depth_train_label_reads_ = 0;
};

}  // namespace umafd::data
