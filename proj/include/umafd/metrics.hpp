#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace umafd {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool operator==(const Confusion&) const = default;
};

struct MetricsReport {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, auc = 0.0;
  Confusion counts;
  // set when the ratio had a zero denominator and was reported as 0
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

/// Positive iff score > threshold.
Confusion confusion(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Rank statistic: share of (positive, negative) pairs ordered correctly, ties count half.
double auc(std::span<const double> scores, std::span<const int> labels);

MetricsReport metrics(std::span<const double> scores, std::span<const int> labels);

/// "acc,prec,rec,f1,auc" as percentages with two decimals.
std::string format_percent_row(const MetricsReport& m);

}  // namespace umafd
