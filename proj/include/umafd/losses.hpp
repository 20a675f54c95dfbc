#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "umafd/autograd.hpp"
#include "umafd/xbm.hpp"

namespace umafd {

/// Loss terms in the order they are weighted: cls, pseudo, modality, bridge, triplet.
enum class LossTerm : std::size_t { Cls = 0, Pseudo, Modality, Bridge, Triplet };
inline constexpr std::size_t kLossTerms = 5;
inline constexpr std::array<const char*, kLossTerms> kLossNames{"cls", "pseudo", "modality", "bridge", "triplet"};

std::optional<LossTerm> loss_term_from_name(const std::string& name);

struct LossBundle {
  std::array<double, kLossTerms> values{};
  std::size_t pseudo_count = 0;

  double operator[](LossTerm t) const { return values[static_cast<std::size_t>(t)]; }
  double& operator[](LossTerm t) { return values[static_cast<std::size_t>(t)]; }
};

enum class WeightMode { Fixed, Adaptive };

struct LossWeights {
  WeightMode mode = WeightMode::Fixed;
  std::array<double, kLossTerms> values{1.0, 1.0, 1.0, 1.0, 1.0};

  void validate() const;
};

// Binary cross-entropy on clamped logits, mean over samples.
double cls_loss(std::span<const double> scores, std::span<const int> labels);
Var cls_loss(const Var& logits, std::span<const int> labels);

struct PseudoLabels {
  std::vector<bool> mask;
  std::vector<int> labels;  // meaningful only where mask is set
  std::size_t count = 0;
};

/// 1 where score >= tau, 0 where score <= 1 - tau, unassigned in between.
PseudoLabels pseudo_labels(std::span<const double> scores, double tau);

/// Cross-entropy over the samples passing the threshold; 0 when none do.
/// Labels are constants recomputed from the current scores.
double pseudo_loss(std::span<const double> scores, double tau);
Var pseudo_loss(const Var& logits, double tau);

/// Cross-entropy of the modality discriminator; label 1 = RGB, 0 = depth.
double modality_loss(std::span<const double> probs, std::span<const int> modality_labels);
Var modality_loss(const Var& logits, std::span<const int> modality_labels);

/// Batch-hard triplet hinge against cross-batch memory. For each labelled row
/// of `embeddings` (N, d) the hardest positive and hardest negative are taken
/// over the memory entries and the other labelled rows; rows without a label
/// are not anchors. Mean over anchors that have both; 0 if none.
Var xbm_triplet_loss(const Var& embeddings, std::span<const std::optional<int>> labels,
                     std::span<const XbmEntry> memory, double margin);

double total_loss(const LossBundle& bundle, const std::array<double, kLossTerms>& weights);
/// terms: five single-element vars; weights: (5) or (1, 5).
Var total_loss(const std::vector<Var>& terms, const Var& weights);

}  // namespace umafd
