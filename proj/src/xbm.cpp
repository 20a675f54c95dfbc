#include "umafd/xbm.hpp"

#include "umafd/errors.hpp"

namespace umafd {

XbmMemory::XbmMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("XBM capacity must be > 0");
}

void XbmMemory::push(const XbmEntry& entry) {
  entries_.push_back(entry);
  while (entries_.size() > capacity_) entries_.pop_front();
}

void XbmMemory::push(std::span<const XbmEntry> entries) {
  for (const auto& e : entries) push(e);
}

}  // namespace umafd
