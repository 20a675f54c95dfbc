#include "umafd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "umafd/errors.hpp"
#include "umafd/heads.hpp"
#include "umafd/idm.hpp"
#include "umafd/ops.hpp"

namespace umafd {

std::optional<LossTerm> loss_term_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kLossTerms; ++i) {
    if (name == kLossNames[i]) return static_cast<LossTerm>(i);
  }
  return std::nullopt;
}

void LossWeights::validate() const {
  if (mode == WeightMode::Fixed) {
    for (double v : values) {
      if (!(v >= 0.0)) throw ConfigError("fixed loss weights must be >= 0");
    }
  }
}

namespace {

void check_tau(double tau) {
  if (!(tau > 0.5 && tau <= 1.0)) throw ConfigError("pseudo-label threshold tau must lie in (0.5, 1]");
}

double clamp_score(double s) {
  const double lo = clamped_sigmoid(-kLogitClamp);
  const double hi = clamped_sigmoid(kLogitClamp);
  return std::clamp(s, lo, hi);
}

double bce_score(double s, int y) {
  s = clamp_score(s);
  return y == 1 ? -std::log(s) : -std::log1p(-s);
}

// Stable -[y log sigmoid(l) + (1-y) log(1 - sigmoid(l))] = softplus(l) - y l.
double bce_logit(double l, int y) {
  return std::max(l, 0.0) - static_cast<double>(y) * l + std::log1p(std::exp(-std::abs(l)));
}

/// Mean BCE over the rows where `use` is set; logits clamped to +/-kLogitClamp in the value.
Var masked_bce(const Var& logits, std::vector<int> targets, std::vector<bool> use) {
  if (logits.size() != targets.size()) {
    throw ShapeError("cross-entropy: " + std::to_string(logits.size()) + " logits vs " +
                     std::to_string(targets.size()) + " labels");
  }
  const auto count = static_cast<std::size_t>(std::count(use.begin(), use.end(), true));
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (use[i]) total += bce_logit(std::clamp(logits.value()[i], -kLogitClamp, kLogitClamp), targets[i]);
  }
  const double value = count ? total / static_cast<double>(count) : 0.0;
  return make_result(Tensor::scalar(value), {logits},
                     [targets = std::move(targets), use = std::move(use), count](Node& self) {
                       if (count == 0) return;
                       Node& ln = *self.inputs[0];
                       std::vector<double> g(ln.value.size(), 0.0);
                       const double scale = self.grad[0] / static_cast<double>(count);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (!use[i]) continue;
                         // Past the clamp the derivative is taken at the clamp point instead of 0;
                         // a saturated wrong logit must still be pulled back.
                         g[i] = scale * (clamped_sigmoid(ln.value[i]) - static_cast<double>(targets[i]));
                       }
                       ln.accumulate(g);
                     });
}

void check_binary(std::span<const int> labels, const char* who) {
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError(std::string(who) + ": labels must be 0 or 1");
  }
}

}  // namespace

double cls_loss(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("cls_loss: scores and labels differ in length");
  if (scores.empty()) throw DataError("cls_loss: empty batch");
  check_binary(labels, "cls_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += bce_score(scores[i], labels[i]);
  return total / static_cast<double>(scores.size());
}

Var cls_loss(const Var& logits, std::span<const int> labels) {
  if (labels.empty()) throw DataError("cls_loss: empty batch");
  check_binary(labels, "cls_loss");
  return masked_bce(logits, {labels.begin(), labels.end()}, std::vector<bool>(labels.size(), true));
}

PseudoLabels pseudo_labels(std::span<const double> scores, double tau) {
  check_tau(tau);
  PseudoLabels out;
  out.mask.assign(scores.size(), false);
  out.labels.assign(scores.size(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= tau) {
      out.mask[i] = true;
      out.labels[i] = 1;
    } else if (scores[i] <= 1.0 - tau) {
      out.mask[i] = true;
      out.labels[i] = 0;
    }
    if (out.mask[i]) ++out.count;
  }
  return out;
}

double pseudo_loss(std::span<const double> scores, double tau) {
  const auto pl = pseudo_labels(scores, tau);
  if (pl.count == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (pl.mask[i]) total += bce_score(scores[i], pl.labels[i]);
  }
  return total / static_cast<double>(pl.count);
}

Var pseudo_loss(const Var& logits, double tau) {
  std::vector<double> scores(logits.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = clamped_sigmoid(logits.value()[i]);
  auto pl = pseudo_labels(scores, tau);
  return masked_bce(logits, std::move(pl.labels), std::move(pl.mask));
}

double modality_loss(std::span<const double> probs, std::span<const int> modality_labels) {
  if (probs.size() != modality_labels.size()) throw ShapeError("modality_loss: probabilities and labels differ");
  return cls_loss(probs, modality_labels);
}

Var modality_loss(const Var& logits, std::span<const int> modality_labels) {
  if (logits.size() != modality_labels.size()) throw ShapeError("modality_loss: logits and labels differ");
  return cls_loss(logits, modality_labels);
}

namespace {

double distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s + kNormEps);
}

struct Candidate {
  const double* vec;
  int label;
  long row;  // batch row, or -1 for a memory entry
};

// Candidate vectors are copied: memory snapshots may not outlive the forward pass.
struct ActiveEnd {
  std::vector<double> vec;
  long row;
  double dist;
};

struct ActiveTriplet {
  std::size_t anchor;
  ActiveEnd pos, neg;
};

}  // namespace

Var xbm_triplet_loss(const Var& embeddings, std::span<const std::optional<int>> labels,
                     std::span<const XbmEntry> memory, double margin) {
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be > 0");
  if (embeddings.shape().size() != 2) throw ShapeError("xbm_triplet_loss: embeddings must be (N, d)");
  const std::size_t n = embeddings.shape()[0], d = embeddings.shape()[1];
  if (labels.size() != n) throw ShapeError("xbm_triplet_loss: one label slot per embedding required");
  for (const auto& e : memory) {
    if (e.embedding.size() != d) throw ShapeError("xbm_triplet_loss: memory entry has wrong dimension");
  }

  const double* emb = embeddings.value().ptr();
  std::vector<Candidate> pool;
  pool.reserve(memory.size() + n);
  for (const auto& e : memory) pool.push_back({e.embedding.data(), e.label, -1});
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i]) pool.push_back({emb + i * d, *labels[i], static_cast<long>(i)});
  }

  std::size_t anchors = 0;
  double total = 0.0;
  std::vector<ActiveTriplet> active;
  for (std::size_t i = 0; i < n; ++i) {
    if (!labels[i]) continue;
    const double* a = emb + i * d;
    std::optional<Candidate> pos, neg;
    double d_pos = -1.0, d_neg = std::numeric_limits<double>::infinity();
    for (const auto& c : pool) {
      if (c.row == static_cast<long>(i)) continue;
      const double dist = distance(a, c.vec, d);
      if (c.label == *labels[i]) {
        if (dist > d_pos) d_pos = dist, pos = c;
      } else if (dist < d_neg) {
        d_neg = dist, neg = c;
      }
    }
    if (!pos || !neg) continue;
    ++anchors;
    const double hinge = d_pos - d_neg + margin;
    if (hinge > 0.0) {
      total += hinge;
      active.push_back({i, {std::vector<double>(pos->vec, pos->vec + d), pos->row, d_pos},
                        {std::vector<double>(neg->vec, neg->vec + d), neg->row, d_neg}});
    }
  }
  const double value = anchors ? total / static_cast<double>(anchors) : 0.0;

  return make_result(Tensor::scalar(value), {embeddings}, [active = std::move(active), anchors, n, d](Node& self) {
    if (anchors == 0 || active.empty()) return;
    Node& en = *self.inputs[0];
    std::vector<double> g(n * d, 0.0);
    const double scale = self.grad[0] / static_cast<double>(anchors);
    const double* emb = en.value.ptr();
    for (const auto& t : active) {
      const double* a = emb + t.anchor * d;
      // + d(a, p) - d(a, n); d/da ||a - c|| = (a - c) / ||a - c||, and the opposite for c.
      auto add_pair = [&](const ActiveEnd& c, double sign) {
        if (c.dist == 0.0) return;
        for (std::size_t k = 0; k < d; ++k) {
          const double u = sign * scale * (a[k] - c.vec[k]) / c.dist;
          g[t.anchor * d + k] += u;
          if (c.row >= 0) g[static_cast<std::size_t>(c.row) * d + k] -= u;
        }
      };
      add_pair(t.pos, +1.0);
      add_pair(t.neg, -1.0);
    }
    en.accumulate(g);
  });
}

double total_loss(const LossBundle& bundle, const std::array<double, kLossTerms>& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < kLossTerms; ++i) s += weights[i] * bundle.values[i];
  return s;
}

Var total_loss(const std::vector<Var>& terms, const Var& weights) {
  if (terms.size() != kLossTerms || weights.size() != kLossTerms) {
    throw ShapeError("total_loss expects five terms and five weights");
  }
  return ops::dot(ops::stack_scalars(terms), weights);
}

}  // namespace umafd
