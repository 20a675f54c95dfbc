#include "umafd/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <vector>

#include "umafd/errors.hpp"

namespace umafd {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ShapeError("metrics: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw ShapeError("metrics: empty input");
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("metrics: label " + std::to_string(l) + " is not 0 or 1");
  }
}

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Confusion confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > threshold;
    if (labels[i] == 1) {
      ++(pred ? c.tp : c.fn);
    } else {
      ++(pred ? c.fp : c.tn);
    }
  }
  return c;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc needs both classes; got " + std::to_string(n_pos) + " positives and " + std::to_string(n_neg) + " negatives");

  // midranks handle ties exactly
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;  // ranks doubled to stay integral
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_rank = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += twice_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum / 2.0 - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport metrics(std::span<const double> scores, std::span<const int> labels) {
  MetricsReport m;
  m.counts = confusion(scores, labels);
  const auto& c = m.counts;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(scores.size());
  m.precision = ratio(c.tp, c.tp + c.fp, m.precision_undefined);
  m.recall = ratio(c.tp, c.tp + c.fn, m.recall_undefined);
  m.f1_undefined = m.precision + m.recall == 0.0;
  m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.auc = auc(scores, labels);
  return m;
}

std::string format_percent_row(const MetricsReport& m) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,%.2f,%.2f", 100.0 * m.accuracy, 100.0 * m.precision,
                100.0 * m.recall, 100.0 * m.f1, 100.0 * m.auc);
  return buf;
}

}  // namespace umafd
