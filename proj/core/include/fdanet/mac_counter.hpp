#pragma once

#include <cstdint>

namespace fdanet {

/// Per-thread tally of multiply-accumulates performed by forward kernels.
/// One multiply-add counts once. Backward passes are not counted.
class MacCounter {
 public:
  static std::uint64_t value();
  static void add(std::uint64_t macs);
  static void reset();
};

/// Records the MACs performed during its lifetime.
class MacScope {
 public:
  MacScope() : start_(MacCounter::value()) {}
  std::uint64_t elapsed() const { return MacCounter::value() - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace fdanet
