#pragma once

#include <random>
#include <string>

#include "umafd/ops.hpp"
#include "umafd/params.hpp"

namespace umafd {

/// Smoothing under the square root of Euclidean norms. Zero: norms are exact and
/// their gradient at v = 0 is the zero subgradient.
inline constexpr double kNormEps = 0.0;

/// Intermediate domain module. Each modality's hidden map is summarised by
/// [global avg; global max], passed through one shared FC layer, the two
/// results are summed and a two-layer MLP produces two logits whose softmax
/// gives the mixing weights (a_rgb, a_depth).
class IdmBlock {
 public:
  IdmBlock(std::size_t channels, ParameterSet& params, std::mt19937_64& rng, const std::string& prefix = "idm");

  struct Output {
    Var mixed;   // a_rgb * fh_rgb + a_depth * fh_depth
    Var coeffs;  // (N, 2)
  };

  Output forward(const Var& fh_rgb, const Var& fh_depth) const;
  Var coefficients(const Var& fh_rgb, const Var& fh_depth) const;

  std::size_t channels() const { return channels_; }
  /// Final MLP layer; zeroing it gives A = (0.5, 0.5).
  const Var& out_weight() const { return mlp2_w_; }
  const Var& out_bias() const { return mlp2_b_; }

 private:
  std::size_t channels_;
  Var fc_w_, fc_b_, mlp1_w_, mlp1_b_, mlp2_w_, mlp2_b_;
};

/// (1/n) sum_i sum_{k in {rgb, depth}} a_i^k ||F^k_i - F^inter_i||_2 with
/// coefficients (N, 2).
Var bridge_loss(const Var& feat_rgb, const Var& feat_depth, const Var& feat_inter, const Var& coeffs);

}  // namespace umafd
