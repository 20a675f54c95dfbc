#pragma once

#include <random>
#include <string>
#include <vector>

#include "umafd/ops.hpp"
#include "umafd/params.hpp"

namespace umafd {

inline constexpr double kLogitClamp = 15.0;

/// Logistic function of the logit clamped to +/-kLogitClamp; never 0 or 1.
double clamped_sigmoid(double logit);

/// G: embedding -> one logit; score = sigmoid(logit).
class ClassifierHead {
 public:
  ClassifierHead(std::size_t embedding_dim, ParameterSet& params, std::mt19937_64& rng,
                 const std::string& prefix = "head.cls");

  /// (N, d) -> (N, 1)
  Var logits(const Var& embeddings) const;
  /// Scores in (0, 1) for each row.
  std::vector<double> classify(const Var& embeddings) const;

  const Var& weight() const { return w_; }
  const Var& bias() const { return b_; }

 private:
  std::size_t dim_;
  Var w_, b_;
};

/// C: gradient reversal, then embedding -> h -> 1 logit. Probability of RGB.
class ModalityHead {
 public:
  ModalityHead(std::size_t embedding_dim, double grl_lambda, ParameterSet& params, std::mt19937_64& rng,
               const std::string& prefix = "head.modality");

  /// (N, d) -> (N, 1) logits; `reverse` = false skips the GRL (used by tests).
  Var logits(const Var& embeddings, bool reverse = true) const;
  std::vector<double> discriminate(const Var& embeddings) const;

  double grl_lambda() const { return lambda_; }
  void set_grl_lambda(double lambda);
  const Var& out_weight() const { return w2_; }
  const Var& out_bias() const { return b2_; }

 private:
  std::size_t dim_;
  double lambda_;
  Var w1_, b1_, w2_, b2_;
};

/// W: three linear layers d -> h -> h -> 5, softmax over the five loss weights.
class WeightHead {
 public:
  static constexpr std::size_t kOutputs = 5;

  WeightHead(std::size_t embedding_dim, ParameterSet& params, std::mt19937_64& rng,
             const std::string& prefix = "head.weight");

  Var logits(const Var& embeddings) const;
  /// (N, d) -> (N, 5) rows on the simplex.
  Var weights(const Var& embeddings) const;

  const Var& out_weight() const { return w3_; }
  const Var& out_bias() const { return b3_; }

 private:
  std::size_t dim_;
  Var w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace umafd
