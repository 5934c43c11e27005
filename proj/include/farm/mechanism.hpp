#pragma once

// Scoring rules of the mechanism: report strength, the consistency update,
// reliability, location robustness and the product reward. Everything here
// is a pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "farm/error.hpp"
#include "farm/signal.hpp"

namespace farm {

/// Exact non-negative fraction; only used for phi2, which is either an
/// integer count or (phi1^2 - 1) / phi1.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num * b.den == b.num * a.den;
  }
  friend auto operator<=>(const Rational& a, const Rational& b) {
    return a.num * b.den <=> b.num * a.den;
  }
};

struct StrengthTable {
  std::vector<std::uint32_t> counts;  // indexed by Signal::index
  std::uint32_t phi1 = 0;
  Rational phi2;

  std::uint32_t count(Signal s) const { return s.index < counts.size() ? counts[s.index] : 0; }

  std::uint32_t total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint32_t{0});
  }

  // phi1 - phi2 as an exact fraction, converted once.
  double top_margin() const {
    return static_cast<double>(static_cast<std::int64_t>(phi1) * phi2.den - phi2.num) /
           static_cast<double>(phi2.den);
  }
};

struct MechanismParams {
  double k = 1.0;
  double budget = 1.0;
  std::uint32_t agent_count = 3;

  void validate() const {
    if (!(k >= 1.0) || !std::isfinite(k)) throw Error("k must be >= 1");
    if (!(budget > 0.0) || !std::isfinite(budget)) throw Error("budget must be positive");
    if (agent_count < 3) throw Error("at least 3 agents are required");
  }
};

struct ScoreBundle {
  std::uint32_t strength = 0;
  double consistency_after = 0.0;
  double reliability = 0.0;
  double robustness = 0.0;
  double reward = 0.0;
};

/// Number of reports equal to `target`, the reporter included.
inline std::uint32_t report_strength(std::span<const Signal> reports, Signal target) {
  if (reports.empty()) throw Error("no reports in round");
  return static_cast<std::uint32_t>(std::count(reports.begin(), reports.end(), target));
}

/// Tallies the round and precomputes phi1 / phi2.
///
/// phi2 is the second element of the descending-sorted multiset of positive
/// counts, so a tie at the top gives phi2 == phi1 and nobody is incremented.
/// When only one signal was reported, phi2 = (phi1^2 - 1) / phi1.
inline StrengthTable build_strength_table(std::span<const Signal> reports,
                                          const SignalSpace& space) {
  if (reports.empty()) throw Error("no reports in round");
  StrengthTable table;
  table.counts.assign(space.cardinality(), 0);
  for (const auto& r : reports) {
    if (!space.contains(r)) {
      throw Error("signal " + std::to_string(r.index) + " outside signal space");
    }
    ++table.counts[r.index];
  }

  std::vector<std::uint32_t> positive;
  for (auto c : table.counts) {
    if (c > 0) positive.push_back(c);
  }
  std::sort(positive.begin(), positive.end(), std::greater<>());

  table.phi1 = positive.front();
  if (positive.size() >= 2) {
    table.phi2 = Rational{positive[1], 1};
  } else {
    const auto p = static_cast<std::int64_t>(table.phi1);
    table.phi2 = Rational{p * p - 1, p};
  }
  return table;
}

/// One step of the consistency score. Only holders of the strictly strongest
/// report type move up; everyone else decays in proportion to how far their
/// report trails the leader.
inline double update_consistency(double alpha_prev, std::uint32_t strength,
                                 const StrengthTable& table, const MechanismParams& params) {
  params.validate();
  if (!(alpha_prev >= 0.0 && alpha_prev < 1.0)) throw Error("alpha must lie in [0,1)");
  if (strength > table.phi1 || strength == 0 || table.total() != params.agent_count) {
    throw Error("inconsistent strength table");
  }
  const double n = static_cast<double>(params.agent_count);

  if (strength < table.phi1) {
    const double gap = static_cast<double>(table.phi1 - strength);
    return alpha_prev - (alpha_prev / params.k) * gap / n;
  }

  double next = alpha_prev + ((1.0 - alpha_prev) / params.k) * table.top_margin() / n;
  // 1 - alpha below half an ulp rounds the sum up to exactly 1.
  if (next >= 1.0) next = std::nextafter(1.0, 0.0);
  return next;
}

/// Fraction of `peers` that reported `mine`; 0 for an empty list.
inline double agreement_fraction(Signal mine, std::span<const Signal> peers) {
  if (peers.empty()) return 0.0;
  const auto hits = std::count(peers.begin(), peers.end(), mine);
  return static_cast<double>(hits) / static_cast<double>(peers.size());
}

/// External agreement over (internal agreement + 1).
inline double reliability(Signal mine, std::span<const Signal> internal_reports,
                          std::span<const Signal> external_reports) {
  const double external = agreement_fraction(mine, external_reports);
  const double internal = agreement_fraction(mine, internal_reports);
  return external / (internal + 1.0);
}

/// Fraction of attested distances within the threshold. No attesters, no
/// proof of presence: 0.
inline double location_robustness(std::span<const double> attested_distances,
                                  double d_threshold) {
  if (!(d_threshold > 0.0)) throw Error("distance threshold must be positive");
  if (attested_distances.empty()) return 0.0;
  std::size_t within = 0;
  for (double d : attested_distances) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw Error("invalid attestation");
    if (d <= d_threshold) ++within;
  }
  return static_cast<double>(within) / static_cast<double>(attested_distances.size());
}

inline double reward(std::uint32_t strength, double alpha, double beta,
                     const MechanismParams& params) {
  params.validate();
  const double n = static_cast<double>(params.agent_count);
  return (static_cast<double>(strength) * alpha * beta / (n * n)) * params.budget;
}

}  // namespace farm
