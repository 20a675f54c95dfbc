#include "umafd/heads.hpp"

#include <algorithm>
#include <cmath>

#include "umafd/errors.hpp"

namespace umafd {
namespace {

void check_embedding(const Var& e, std::size_t dim, const char* who) {
  if (e.shape().size() != 2 || e.shape()[1] != dim) {
    throw ShapeError(std::string(who) + ": expected (N, " + std::to_string(dim) + ") embeddings, got " +
                     shape_str(e.shape()));
  }
}

// Output layers use the small head init; hidden layers are fan-in scaled, otherwise
// stacked 0.01 layers shrink the signal by ~1e-2 per layer and never train.
constexpr double kHeadInitStd = 0.01;

double hidden_std(std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

}  // namespace

double clamped_sigmoid(double logit) {
  const double l = std::clamp(logit, -kLogitClamp, kLogitClamp);
  return 1.0 / (1.0 + std::exp(-l));
}

ClassifierHead::ClassifierHead(std::size_t embedding_dim, ParameterSet& params, std::mt19937_64& rng,
                               const std::string& prefix)
    : dim_(embedding_dim) {
  w_ = params.add(prefix + ".weight", normal_tensor({1, embedding_dim}, kHeadInitStd, rng));
  b_ = params.add(prefix + ".bias", Tensor({1}));
}

Var ClassifierHead::logits(const Var& embeddings) const {
  check_embedding(embeddings, dim_, "classifier head");
  return ops::linear(embeddings, w_, b_);
}

std::vector<double> ClassifierHead::classify(const Var& embeddings) const {
  const Var l = logits(embeddings);
  std::vector<double> scores(l.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = clamped_sigmoid(l.value()[i]);
  return scores;
}

ModalityHead::ModalityHead(std::size_t embedding_dim, double grl_lambda, ParameterSet& params, std::mt19937_64& rng,
                           const std::string& prefix)
    : dim_(embedding_dim), lambda_(grl_lambda) {
  set_grl_lambda(grl_lambda);
  const std::size_t h = std::max<std::size_t>(1, embedding_dim / 2);
  w1_ = params.add(prefix + ".fc1.weight", normal_tensor({h, embedding_dim}, hidden_std(embedding_dim), rng));
  b1_ = params.add(prefix + ".fc1.bias", Tensor({h}));
  w2_ = params.add(prefix + ".fc2.weight", normal_tensor({1, h}, kHeadInitStd, rng));
  b2_ = params.add(prefix + ".fc2.bias", Tensor({1}));
}

void ModalityHead::set_grl_lambda(double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("grl_lambda must be > 0");
  lambda_ = lambda;
}

Var ModalityHead::logits(const Var& embeddings, bool reverse) const {
  check_embedding(embeddings, dim_, "modality head");
  const Var x = reverse ? ops::grl(embeddings, lambda_) : embeddings;
  return ops::linear(ops::relu(ops::linear(x, w1_, b1_)), w2_, b2_);
}

std::vector<double> ModalityHead::discriminate(const Var& embeddings) const {
  const Var l = logits(embeddings);
  std::vector<double> probs(l.size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = clamped_sigmoid(l.value()[i]);
  return probs;
}

WeightHead::WeightHead(std::size_t embedding_dim, ParameterSet& params, std::mt19937_64& rng,
                       const std::string& prefix)
    : dim_(embedding_dim) {
  const std::size_t h = std::max<std::size_t>(1, embedding_dim / 2);
  w1_ = params.add(prefix + ".fc1.weight", normal_tensor({h, embedding_dim}, hidden_std(embedding_dim), rng));
  b1_ = params.add(prefix + ".fc1.bias", Tensor({h}));
  w2_ = params.add(prefix + ".fc2.weight", normal_tensor({h, h}, hidden_std(h), rng));
  b2_ = params.add(prefix + ".fc2.bias", Tensor({h}));
  w3_ = params.add(prefix + ".fc3.weight", normal_tensor({kOutputs, h}, kHeadInitStd, rng));
  b3_ = params.add(prefix + ".fc3.bias", Tensor({kOutputs}));
}

Var WeightHead::logits(const Var& embeddings) const {
  check_embedding(embeddings, dim_, "weight head");
  const Var h1 = ops::relu(ops::linear(embeddings, w1_, b1_));
  const Var h2 = ops::relu(ops::linear(h1, w2_, b2_));
  return ops::linear(h2, w3_, b3_);
}

Var WeightHead::weights(const Var& embeddings) const { return ops::softmax_rows(logits(embeddings)); }

}  // namespace umafd
