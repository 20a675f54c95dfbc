#include "umafd/backbone.hpp"

#include <cmath>

#include "umafd/errors.hpp"
#include "umafd/idm.hpp"

namespace umafd {

void BackboneConfig::validate() const {
  if (embedding_dim < 2) throw ConfigError("embedding_dim must be >= 2");
  if (n_stages < 2) throw ConfigError("n_stages must be >= 2 (IDM sits between stage 1 and stage 2)");
  if (stage1_channels < 2) throw ConfigError("stage1_channels must be >= 2");
}

Tiny3D::Tiny3D(const BackboneConfig& cfg, ParameterSet& params, std::mt19937_64& rng, const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  std::size_t in_ch = 3;
  for (std::size_t k = 0; k < cfg_.n_stages; ++k) {
    const std::size_t out_ch = cfg_.stage_channels(k);
    const double fan_in = static_cast<double>(in_ch * 27);
    const std::string name = prefix + ".stage" + std::to_string(k + 1);
    conv_w_.push_back(params.add(name + ".weight", normal_tensor({out_ch, in_ch, 3, 3, 3}, std::sqrt(2.0 / fan_in), rng)));
    conv_b_.push_back(params.add(name + ".bias", Tensor({out_ch})));
    in_ch = out_ch;
  }
  proj_w_ = params.add(prefix + ".proj.weight",
                       normal_tensor({cfg_.embedding_dim, in_ch}, std::sqrt(1.0 / static_cast<double>(in_ch)), rng));
  proj_b_ = params.add(prefix + ".proj.bias", Tensor({cfg_.embedding_dim}));
}

Var Tiny3D::stage(std::size_t k, const Var& x) const {
  return ops::leaky_relu(ops::conv3d(x, conv_w_.at(k), conv_b_.at(k), {1, 2, 2}), kLeakySlope);
}

Var Tiny3D::tail(const Var& x) const {
  Var h = x;
  for (std::size_t k = 1; k < cfg_.n_stages; ++k) h = stage(k, h);
  return h;
}

Var Tiny3D::features(const Var& clip) const { return tail(stage(0, clip)); }

Var Tiny3D::pooled_embedding(const Var& feature_map) const {
  if (feature_map.shape().size() != 5) throw ShapeError("pooled_embedding expects a 5-axis feature map");
  return ops::linear(ops::global_avg_pool(feature_map), proj_w_, proj_b_);
}

Var as_batch(const Tensor& clip) {
  Tensor x;
  if (clip.ndim() == 5) {
    x = clip;
  } else if (clip.ndim() == 4) {
    Shape s{1};
    s.insert(s.end(), clip.shape().begin(), clip.shape().end());
    x = clip.reshaped(std::move(s));
  } else {
    throw ShapeError("clip must be (3, T, H, W), got " + shape_str(clip.shape()));
  }
  // [0,1] pixels shifted to be zero-centred; batch-1 SGD stalls on the raw DC offset
  for (double& v : x.values()) v -= kInputCentre;
  return ops::constant(std::move(x));
}

FeatureBundle forward_features(const Tiny3D& backbone, const IdmBlock* idm, const Tensor& rgb, const Tensor& depth) {
  if (rgb.shape() != depth.shape()) {
    throw ShapeError("rgb clip " + shape_str(rgb.shape()) + " and depth clip " + shape_str(depth.shape()) + " differ");
  }
  const Var x_rgb = as_batch(rgb);
  const Var x_depth = as_batch(depth);
  if (x_rgb.shape()[1] != 3) throw ShapeError("clips must have 3 channels");

  const Var h_rgb = backbone.stage(0, x_rgb);
  const Var h_depth = backbone.stage(0, x_depth);

  FeatureBundle out;
  out.feat_rgb = backbone.tail(h_rgb);
  out.feat_depth = backbone.tail(h_depth);
  if (idm) {
    auto [h_inter, coeffs] = idm->forward(h_rgb, h_depth);
    out.feat_inter = backbone.tail(h_inter);
    out.coeffs = coeffs;
    out.emb_inter = backbone.pooled_embedding(out.feat_inter);
  }
  out.emb_rgb = backbone.pooled_embedding(out.feat_rgb);
  out.emb_depth = backbone.pooled_embedding(out.feat_depth);
  return out;
}

}  // namespace umafd
