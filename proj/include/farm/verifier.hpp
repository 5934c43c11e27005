#pragma once

// Executable checks of the mechanism's guarantees:
//  - unilateral deviation search: with everyone else truthful, the truthful
//    report must strictly maximize strength, the updated consistency,
//    reliability and the full reward;
//  - selective / cumulative fairness, bounds and budget audits over settled
//    rounds.
//
// The deviation search is templated on a mechanism policy so that broken
// variants (see namespace mutation) can be run through the same checker.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "farm/mechanism.hpp"
#include "farm/snapshot.hpp"
#include "farm/topology.hpp"

namespace farm {

inline constexpr double kStrictTolerance = 1e-12;

struct FarmMechanism {
  static std::uint32_t strength(std::span<const Signal> reports, Signal target) {
    return report_strength(reports, target);
  }
  static double consistency(double alpha_prev, std::uint32_t strength, const StrengthTable& table,
                            const MechanismParams& params) {
    return update_consistency(alpha_prev, strength, table, params);
  }
  static double reliability(Signal mine, std::span<const Signal> internal,
                            std::span<const Signal> external) {
    return farm::reliability(mine, internal, external);
  }
  static double reward(std::uint32_t strength, double alpha, double beta,
                       const MechanismParams& params) {
    return farm::reward(strength, alpha, beta, params);
  }
};

namespace mutation {

/// Reliability dropped from the product (it contributes the identity).
struct ReliabilityOmitted : FarmMechanism {
  static double reliability(Signal, std::span<const Signal>, std::span<const Signal>) { return 1.0; }
};

/// Consistency never moves.
struct FrozenConsistency : FarmMechanism {
  static double consistency(double alpha_prev, std::uint32_t, const StrengthTable&,
                            const MechanismParams&) {
    return alpha_prev;
  }
};

/// Every report gets strength 1.
struct FlatStrength : FarmMechanism {
  static std::uint32_t strength(std::span<const Signal>, Signal) { return 1; }
};

}  // namespace mutation

enum class PeerLayout {
  OneInternalPeer,  // the deviator hears exactly one peer
  FullyConnected,   // everyone hears everyone; no external peers
};

inline const char* layout_name(PeerLayout l) {
  return l == PeerLayout::OneInternalPeer ? "one-internal-peer" : "fully-connected";
}

/// Agent 0 deviates, agents 1..n-1 report the true signal 0.
struct NashInstance {
  std::uint32_t agents = 3;
  std::uint32_t signals = 2;
  double alpha_prev = 0.5;
  double k = 1.0;
  PeerLayout layout = PeerLayout::OneInternalPeer;
  double budget = 1.0;

  friend auto operator<=>(const NashInstance&, const NashInstance&) = default;
};

inline std::string agent_name(std::uint32_t i) { return "a" + std::to_string(i); }

/// OneInternalPeer pairs agents (0,1), (2,3), ...; with an odd count the last
/// agent hangs off agent n-2, so agent 0 always has one internal peer and at
/// least one external peer.
inline PeerGraph nash_peer_graph(std::uint32_t agents, PeerLayout layout) {
  std::map<AgentId, std::set<AgentId>> internal;
  for (std::uint32_t i = 0; i < agents; ++i) internal[agent_name(i)];
  auto link = [&](std::uint32_t a, std::uint32_t b) {
    internal[agent_name(a)].insert(agent_name(b));
    internal[agent_name(b)].insert(agent_name(a));
  };
  if (layout == PeerLayout::FullyConnected) {
    for (std::uint32_t i = 0; i < agents; ++i)
      for (std::uint32_t j = i + 1; j < agents; ++j) link(i, j);
  } else {
    for (std::uint32_t i = 0; i + 1 < agents; i += 2) link(i, i + 1);
    if (agents % 2 == 1) link(agents - 2, agents - 1);
  }
  return PeerGraph::from_internal_sets(internal);
}

struct SubUtilities {
  std::uint32_t strength = 0;
  double consistency = 0.0;
  double reliability = 0.0;
  double reward = 0.0;
};

/// Deviator's sub-utilities when it reports `report` and the rest are truthful.
template <typename Mechanism = FarmMechanism>
SubUtilities evaluate_deviator(const NashInstance& inst, const PeerGraph& graph, Signal report) {
  const SignalSpace space(inst.signals);
  const Signal truth{0};
  std::vector<Signal> reports(inst.agents, truth);
  reports[0] = report;
  std::map<AgentId, Signal> by_id;
  for (std::uint32_t i = 0; i < inst.agents; ++i) by_id[agent_name(i)] = reports[i];

  const auto table = build_strength_table(reports, space);
  const MechanismParams params{inst.k, inst.budget, inst.agents};

  std::vector<Signal> internal, external;
  for (const auto& p : graph.internal(agent_name(0))) internal.push_back(by_id.at(p));
  for (const auto& p : graph.external(agent_name(0))) external.push_back(by_id.at(p));

  SubUtilities u;
  u.strength = Mechanism::strength(reports, report);
  u.consistency = Mechanism::consistency(inst.alpha_prev, u.strength, table, params);
  u.reliability = Mechanism::reliability(report, internal, external);
  u.reward = Mechanism::reward(u.strength, u.consistency, u.reliability, params);
  return u;
}

struct DeviationFinding {
  NashInstance instance;
  Signal deviation;
  std::string sub_utility;  // "phi", "alpha", "beta" or "u"
  double truthful = 0.0;
  double deviating = 0.0;
};

struct DeviationCheck {
  std::vector<DeviationFinding> findings;
  // Sub-utilities that are identically zero because the deviator has no
  // external peers; they cannot be strictly maximized by any report.
  std::vector<std::string> degenerate;
  std::size_t comparisons = 0;
};

/// Enumerates every alternative report of agent 0 and records each
/// sub-utility where the deviation does at least as well as the truth.
template <typename Mechanism = FarmMechanism>
DeviationCheck check_unilateral_deviation(const NashInstance& inst) {
  if (inst.agents < 3) throw Error("deviation check needs at least 3 agents");
  if (!(inst.alpha_prev >= 0.0 && inst.alpha_prev < 1.0)) throw Error("alpha_prev must lie in [0,1)");
  const PeerGraph graph = nash_peer_graph(inst.agents, inst.layout);
  const bool no_external = graph.external(agent_name(0)).empty();

  DeviationCheck out;
  if (no_external) out.degenerate = {"beta", "u"};
  const auto truthful = evaluate_deviator<Mechanism>(inst, graph, Signal{0});

  for (std::uint32_t s = 1; s < inst.signals; ++s) {
    const auto dev = evaluate_deviator<Mechanism>(inst, graph, Signal{s});
    auto record = [&](const char* name, double t, double d, bool violated) {
      ++out.comparisons;
      if (violated) out.findings.push_back({inst, Signal{s}, name, t, d});
    };
    record("phi", truthful.strength, dev.strength, dev.strength >= truthful.strength);
    record("alpha", truthful.consistency, dev.consistency,
           dev.consistency >= truthful.consistency - kStrictTolerance);
    if (!no_external) {
      record("beta", truthful.reliability, dev.reliability,
             dev.reliability >= truthful.reliability - kStrictTolerance);
      record("u", truthful.reward, dev.reward, dev.reward >= truthful.reward - kStrictTolerance);
    } else {
      // still must not be beaten
      record("beta", truthful.reliability, dev.reliability,
             dev.reliability > truthful.reliability + kStrictTolerance);
      record("u", truthful.reward, dev.reward, dev.reward > truthful.reward + kStrictTolerance);
    }
  }
  return out;
}

struct GridSpec {
  std::uint32_t min_agents = 3, max_agents = 8;
  std::uint32_t min_signals = 2, max_signals = 5;
  std::vector<double> alphas{0.1, 0.5, 0.9};
  std::vector<double> ks{1.0, 2.0};
  std::vector<PeerLayout> layouts{PeerLayout::OneInternalPeer, PeerLayout::FullyConnected};
  double budget = 1.0;

  std::vector<NashInstance> instances() const {
    std::vector<NashInstance> out;
    for (auto layout : layouts)
      for (auto n = min_agents; n <= max_agents; ++n)
        for (auto s = min_signals; s <= max_signals; ++s)
          for (double a : alphas)
            for (double k : ks) out.push_back({n, s, a, k, layout, budget});
    return out;
  }
};

struct GridReport {
  std::size_t instances = 0;
  std::size_t comparisons = 0;
  std::size_t degenerate_instances = 0;
  std::vector<DeviationFinding> findings;
  double seconds = 0.0;
};

template <typename Mechanism = FarmMechanism>
GridReport run_deviation_grid(const GridSpec& grid) {
  const auto start = std::chrono::steady_clock::now();
  GridReport report;
  for (const auto& inst : grid.instances()) {
    auto check = check_unilateral_deviation<Mechanism>(inst);
    ++report.instances;
    report.comparisons += check.comparisons;
    if (!check.degenerate.empty()) ++report.degenerate_instances;
    for (auto& f : check.findings) report.findings.push_back(std::move(f));
  }
  std::stable_sort(report.findings.begin(), report.findings.end(),
                   [](const DeviationFinding& a, const DeviationFinding& b) {
                     return std::tie(a.instance, a.deviation, a.sub_utility) <
                            std::tie(b.instance, b.deviation, b.sub_utility);
                   });
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline nlohmann::json to_json(const DeviationFinding& f) {
  return {{"agents", f.instance.agents},
          {"signals", f.instance.signals},
          {"alpha_prev", f.instance.alpha_prev},
          {"k", f.instance.k},
          {"layout", layout_name(f.instance.layout)},
          {"deviation", f.deviation.index},
          {"sub_utility", f.sub_utility},
          {"truthful", f.truthful},
          {"deviating", f.deviating}};
}

inline nlohmann::json to_json(const GridReport& r) {
  nlohmann::json findings = nlohmann::json::array();
  for (const auto& f : r.findings) findings.push_back(to_json(f));
  return {{"instances", r.instances},
          {"comparisons", r.comparisons},
          {"degenerate_instances", r.degenerate_instances},
          {"violations", r.findings.size()},
          {"findings", std::move(findings)}};
}

// ---------------------------------------------------------------------------
// Audits over settled rounds

struct AuditResult {
  bool passed = true;
  std::vector<std::string> witnesses;

  void fail(std::string w) {
    passed = false;
    witnesses.push_back(std::move(w));
  }
};

/// Equal reports must carry equal strength.
inline AuditResult audit_selective_fairness(const RoundSnapshot& snap) {
  AuditResult r;
  const auto& a = snap.agents;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (a[i].signal == a[j].signal && a[i].scores.strength != a[j].scores.strength) {
        r.fail(snap.query_id + ": " + a[i].agent_id + " and " + a[j].agent_id + " reported " +
               std::to_string(a[i].signal.index) + " but got phi " +
               std::to_string(a[i].scores.strength) + " vs " +
               std::to_string(a[j].scores.strength));
      }
  return r;
}

/// Among equal reporters, a strictly higher prior consistency must stay
/// strictly higher. `alpha_before` maps agent id to its pre-round score;
/// agents missing from it count as 0.
inline AuditResult audit_cumulative_fairness(const std::map<AgentId, double>& alpha_before,
                                             const RoundSnapshot& snap) {
  auto prior = [&](const AgentId& id) {
    auto it = alpha_before.find(id);
    return it == alpha_before.end() ? 0.0 : it->second;
  };
  AuditResult r;
  const auto& a = snap.agents;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (i == j || a[i].signal != a[j].signal) continue;
      const double pi = prior(a[i].agent_id), pj = prior(a[j].agent_id);
      if (pi > pj && !(a[i].scores.consistency_after > a[j].scores.consistency_after)) {
        r.fail(snap.query_id + ": " + a[i].agent_id + " (alpha " + std::to_string(pi) + " -> " +
               std::to_string(a[i].scores.consistency_after) + ") not above " + a[j].agent_id +
               " (alpha " + std::to_string(pj) + " -> " +
               std::to_string(a[j].scores.consistency_after) + ")");
      }
    }
  }
  return r;
}

/// Prior scores recorded inside the snapshot itself.
inline std::map<AgentId, double> recorded_alpha_before(const RoundSnapshot& snap) {
  std::map<AgentId, double> out;
  for (const auto& a : snap.agents) out[a.agent_id] = a.alpha_before;
  return out;
}

/// Every reward non-negative and below B/|A|, rewards summing to total_paid,
/// and the total strictly below B.
inline AuditResult audit_budget(std::span<const RoundSnapshot> snaps) {
  AuditResult r;
  for (const auto& s : snaps) {
    double sum = 0.0;
    const double cap = s.agent_count > 0 ? s.budget / s.agent_count : 0.0;
    for (const auto& a : s.agents) {
      const double u = a.scores.reward;
      if (!(u >= 0.0)) r.fail(s.query_id + ": negative reward for " + a.agent_id);
      if (!(u < cap)) r.fail(s.query_id + ": reward of " + a.agent_id + " not below B/|A|");
      sum += u;
    }
    if (sum != s.total_paid) r.fail(s.query_id + ": total_paid does not equal the sum of rewards");
    if (!(sum < s.budget)) {
      r.fail(s.query_id + ": rewards " + std::to_string(sum) + " not below budget " +
             std::to_string(s.budget));
    }
  }
  return r;
}

/// alpha in [0,1), beta and gamma in [0,1], phi in [1,|A|] and agent_count
/// equal to the number of scored agents.
inline AuditResult audit_bounds(const RoundSnapshot& s) {
  AuditResult r;
  if (s.agent_count != s.agents.size()) r.fail(s.query_id + ": agent_count mismatch");
  for (const auto& a : s.agents) {
    const auto& sc = a.scores;
    if (!(sc.consistency_after >= 0.0 && sc.consistency_after < 1.0))
      r.fail(s.query_id + ": alpha out of [0,1) for " + a.agent_id);
    if (!(sc.reliability >= 0.0 && sc.reliability <= 1.0))
      r.fail(s.query_id + ": beta out of [0,1] for " + a.agent_id);
    if (!(sc.robustness >= 0.0 && sc.robustness <= 1.0))
      r.fail(s.query_id + ": gamma out of [0,1] for " + a.agent_id);
    if (sc.strength < 1 || sc.strength > s.agent_count)
      r.fail(s.query_id + ": phi out of [1,|A|] for " + a.agent_id);
  }
  return r;
}

}  // namespace farm
