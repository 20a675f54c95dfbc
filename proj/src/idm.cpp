#include "umafd/idm.hpp"

#include <cmath>

#include "umafd/errors.hpp"

namespace umafd {

IdmBlock::IdmBlock(std::size_t channels, ParameterSet& params, std::mt19937_64& rng, const std::string& prefix)
    : channels_(channels) {
  if (channels < 2) throw ConfigError("IDM needs at least 2 hidden channels");
  const std::size_t half = channels / 2;
  // fan-in init on the inner layers, small init on the logits
  fc_w_ = params.add(prefix + ".fc.weight", normal_tensor({channels, 2 * channels}, std::sqrt(1.0 / (2.0 * channels)), rng));
  fc_b_ = params.add(prefix + ".fc.bias", Tensor({channels}));
  mlp1_w_ = params.add(prefix + ".mlp1.weight", normal_tensor({half, channels}, std::sqrt(2.0 / channels), rng));
  mlp1_b_ = params.add(prefix + ".mlp1.bias", Tensor({half}));
  mlp2_w_ = params.add(prefix + ".mlp2.weight", normal_tensor({2, half}, 0.01, rng));
  mlp2_b_ = params.add(prefix + ".mlp2.bias", Tensor({2}));
}

Var IdmBlock::coefficients(const Var& fh_rgb, const Var& fh_depth) const {
  if (fh_rgb.shape() != fh_depth.shape()) {
    throw ShapeError("IDM inputs differ: " + shape_str(fh_rgb.shape()) + " vs " + shape_str(fh_depth.shape()));
  }
  if (fh_rgb.shape().size() != 5 || fh_rgb.shape()[1] != channels_) {
    throw ShapeError("IDM expects (N, " + std::to_string(channels_) + ", T, H, W), got " + shape_str(fh_rgb.shape()));
  }
  auto descriptor = [](const Var& f) { return ops::concat_cols(ops::global_avg_pool(f), ops::global_max_pool(f)); };
  const Var fused = ops::add(ops::linear(descriptor(fh_rgb), fc_w_, fc_b_), ops::linear(descriptor(fh_depth), fc_w_, fc_b_));
  const Var hidden = ops::relu(ops::linear(fused, mlp1_w_, mlp1_b_));
  return ops::softmax_rows(ops::linear(hidden, mlp2_w_, mlp2_b_));
}

IdmBlock::Output IdmBlock::forward(const Var& fh_rgb, const Var& fh_depth) const {
  Var coeffs = coefficients(fh_rgb, fh_depth);
  return {ops::convex_mix(fh_rgb, fh_depth, coeffs), coeffs};
}

Var bridge_loss(const Var& feat_rgb, const Var& feat_depth, const Var& feat_inter, const Var& coeffs) {
  if (feat_rgb.shape() != feat_depth.shape() || feat_rgb.shape() != feat_inter.shape()) {
    throw ShapeError("bridge_loss: final feature maps must share one shape");
  }
  const std::size_t n = feat_rgb.shape().at(0);
  if (coeffs.shape() != Shape{n, 2}) throw ShapeError("bridge_loss: coefficients must be (N, 2)");
  const Var d_rgb = ops::row_norms(ops::sub(feat_rgb, feat_inter), kNormEps);
  const Var d_depth = ops::row_norms(ops::sub(feat_depth, feat_inter), kNormEps);
  const Var per_sample = ops::add(ops::mul(ops::column(coeffs, 0), d_rgb), ops::mul(ops::column(coeffs, 1), d_depth));
  return ops::mean(per_sample);
}

}  // namespace umafd
