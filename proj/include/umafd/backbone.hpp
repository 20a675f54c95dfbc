#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "umafd/ops.hpp"
#include "umafd/params.hpp"

namespace umafd {

class IdmBlock;

struct BackboneConfig {
  std::size_t stage1_channels = 16;
  std::size_t embedding_dim = 64;
  std::size_t n_stages = 3;
  bool idm_enabled = true;

  void validate() const;
  /// Output channels of stage k (0-based): stage1_channels * 2^k.
  std::size_t stage_channels(std::size_t k) const { return stage1_channels << k; }
};

/// Final maps and pooled embeddings for the RGB, depth and (with IDM) intermediate streams.
struct FeatureBundle {
  Var feat_rgb, feat_depth, feat_inter;
  Var emb_rgb, emb_depth, emb_inter;
  std::optional<Var> coeffs;  // (N, 2) IDM mixing weights (a_rgb, a_depth)

  bool has_inter() const { return coeffs.has_value(); }
};

/// Reference video backbone: every stage is a 3x3x3 convolution with spatial
/// stride 2 followed by a leaky ReLU, then global average pooling and a linear
/// projection to the embedding. All streams share every weight.
class Tiny3D {
 public:
  Tiny3D(const BackboneConfig& cfg, ParameterSet& params, std::mt19937_64& rng, const std::string& prefix = "backbone");

  const BackboneConfig& config() const { return cfg_; }

  Var stage(std::size_t k, const Var& x) const;
  /// Stages 1..n-1 (everything after the IDM insertion point).
  Var tail(const Var& x) const;
  /// Full single-stream feature map.
  Var features(const Var& clip) const;

  /// Global spatio-temporal average followed by the linear projection.
  Var pooled_embedding(const Var& feature_map) const;

  const Var& projection_weight() const { return proj_w_; }
  const Var& projection_bias() const { return proj_b_; }

 private:
  BackboneConfig cfg_;
  std::vector<Var> conv_w_, conv_b_;
  Var proj_w_, proj_b_;
};

inline constexpr double kInputCentre = 0.5;
// Backbone activation slope for negatives. Plain ReLU let whole stages die under the adversarial terms.
inline constexpr double kLeakySlope = 0.1;

/// Adds a leading batch axis to a (3, T, H, W) clip, or passes (N, 3, T, H, W) through,
/// then subtracts kInputCentre.
Var as_batch(const Tensor& clip);

/// Runs both modalities through the shared backbone, mixing them after stage 1
/// when `idm` is non-null.
FeatureBundle forward_features(const Tiny3D& backbone, const IdmBlock* idm, const Tensor& rgb, const Tensor& depth);

}  // namespace umafd
