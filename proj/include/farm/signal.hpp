#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "farm/error.hpp"

namespace farm {

/// One element of a query's discretized answer domain.
struct Signal {
  std::uint32_t index = 0;

  friend constexpr auto operator<=>(const Signal&, const Signal&) = default;
};

/// Fixed-width bucketing of a continuous range onto signal indices.
struct Bucketing {
  double lower = 0.0;
  double upper = 1.0;
  std::uint32_t buckets = 2;
};

class SignalSpace {
 public:
  explicit SignalSpace(std::uint32_t cardinality) : cardinality_(cardinality) {
    if (cardinality_ < 2) throw Error("signal space needs at least 2 signals");
  }

  explicit SignalSpace(Bucketing b) : cardinality_(b.buckets), bucketing_(b) {
    if (b.buckets < 2) throw Error("signal space needs at least 2 signals");
    if (!(std::isfinite(b.lower) && std::isfinite(b.upper)) || !(b.lower < b.upper)) {
      throw Error("bucketing range must satisfy lower < upper");
    }
  }

  std::uint32_t cardinality() const { return cardinality_; }
  const std::optional<Bucketing>& bucketing() const { return bucketing_; }

  bool contains(Signal s) const { return s.index < cardinality_; }

  Signal at(std::uint32_t index) const {
    if (index >= cardinality_) {
      throw Error("signal " + std::to_string(index) + " outside signal space");
    }
    return Signal{index};
  }

  // Half-open buckets [lo + i*w, lo + (i+1)*w), except the last which also
  // takes the upper bound.
  Signal bucket(double value) const {
    if (!bucketing_) throw Error("signal space has no bucketing");
    const auto& b = *bucketing_;
    if (!(value >= b.lower && value <= b.upper)) {
      throw Error("value outside bucketing range");
    }
    const double width = (b.upper - b.lower) / static_cast<double>(b.buckets);
    auto idx = static_cast<std::uint32_t>(std::floor((value - b.lower) / width));
    if (idx >= b.buckets) idx = b.buckets - 1;
    return Signal{idx};
  }

 private:
  std::uint32_t cardinality_;
  std::optional<Bucketing> bucketing_;
};

}  // namespace farm
