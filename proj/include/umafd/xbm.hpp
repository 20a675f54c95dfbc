#pragma once

#include <deque>
#include <span>
#include <vector>

#include "umafd/data.hpp"

namespace umafd {

/// A detached embedding remembered across batches.
struct XbmEntry {
  std::vector<double> embedding;
  int label = 0;
  data::Modality modality = data::Modality::Rgb;
  std::size_t step = 0;

  bool operator==(const XbmEntry&) const = default;
};

/// Fixed-capacity FIFO of past embeddings; the oldest entry is evicted first.
class XbmMemory {
 public:
  explicit XbmMemory(std::size_t capacity = 128);

  void push(const XbmEntry& entry);
  void push(std::span<const XbmEntry> entries);
  /// Independent copy of the current contents, oldest first.
  std::vector<XbmEntry> snapshot() const { return {entries_.begin(), entries_.end()}; }
  void clear() { entries_.clear(); }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<XbmEntry> entries_;
};

}  // namespace umafd
