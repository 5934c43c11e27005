#pragma once

// Settlement of one query: drop reports whose location is not vouched for,
// then score the survivors, pay them and commit the round to the ledger.

#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "farm/error.hpp"
#include "farm/ledger.hpp"
#include "farm/mechanism.hpp"
#include "farm/signal.hpp"
#include "farm/snapshot.hpp"
#include "farm/topology.hpp"

namespace farm {

inline constexpr const char* kLowRobustness = "low robustness";
inline constexpr const char* kForgedAttestation = "forged attestation";
inline constexpr const char* kInsufficientParticipation = "insufficient participation";

struct QuerySpec {
  std::string query_id;
  AgentPosition subject;
  SignalSpace signal_space{2};
  double budget = 1.0;
  double k = 1.0;
  double d_threshold = 50.0;
  double gamma_min = 0.5;
  double comm_range = 50.0;
  bool exempt_isolated = false;

  void validate() const {
    if (!(budget > 0.0) || !std::isfinite(budget)) throw Error("budget must be positive");
    if (!(k >= 1.0) || !std::isfinite(k)) throw Error("k must be >= 1");
    if (!(gamma_min >= 0.0 && gamma_min <= 1.0)) throw Error("gamma_min must lie in [0,1]");
    if (!(d_threshold > 0.0) || !std::isfinite(d_threshold)) throw Error("d_threshold must be positive");
    if (!(comm_range > 0.0) || !std::isfinite(comm_range)) throw Error("comm_range must be positive");
  }
};

struct SubmittedReport {
  AgentId agent_id;
  Signal signal;
  AgentPosition claimed_position;
  std::vector<DistanceAttestation> attestations;
};

struct FilterResult {
  struct Survivor {
    const SubmittedReport* report;
    double gamma;
  };
  std::vector<Survivor> survivors;
  std::vector<Exclusion> excluded;
};

/// Splits reports by gamma >= gamma_min. The returned survivors point into
/// `reports`.
inline FilterResult filter_reports(const QuerySpec& spec, std::span<const SubmittedReport> reports,
                                   const PeerGraph& graph, const Keyring& keys) {
  spec.validate();
  FilterResult out;
  std::set<AgentId> seen;
  for (const auto& r : reports) {
    if (!seen.insert(r.agent_id).second) throw Error("duplicate report from " + r.agent_id);
    if (!spec.signal_space.contains(r.signal)) {
      throw Error("signal " + std::to_string(r.signal.index) + " outside signal space");
    }
    if (!graph.contains(r.agent_id)) throw Error("agent " + r.agent_id + " not in peer graph");

    double gamma = 0.0;
    try {
      gamma = attested_robustness(r.agent_id, r.attestations, graph, spec.d_threshold, keys);
    } catch (const Error& e) {
      out.excluded.push_back({r.agent_id, r.signal, 0.0, e.what()});
      continue;
    }
    const bool isolated = graph.internal(r.agent_id).empty();
    if (gamma >= spec.gamma_min || (isolated && spec.exempt_isolated)) {
      out.survivors.push_back({&r, gamma});
    } else {
      out.excluded.push_back({r.agent_id, r.signal, gamma, kLowRobustness});
    }
  }
  return out;
}

/// Scores one query without touching the ledger. Throws
/// "insufficient participation" when fewer than 3 reports survive filtering.
inline RoundSnapshot score_round(const QuerySpec& spec, std::span<const SubmittedReport> reports,
                                 const PeerGraph& graph, const Keyring& keys,
                                 const Ledger& ledger) {
  auto filtered = filter_reports(spec, reports, graph, keys);
  const auto n = static_cast<std::uint32_t>(filtered.survivors.size());
  if (n < 3) throw Error(kInsufficientParticipation);

  RoundSnapshot snap;
  snap.query_id = spec.query_id;
  snap.budget = spec.budget;
  snap.agent_count = n;
  snap.filtered_out = std::move(filtered.excluded);

  std::vector<Signal> signals;
  std::set<AgentId> alive;
  std::map<AgentId, Signal> signal_of;
  for (const auto& s : filtered.survivors) {
    signals.push_back(s.report->signal);
    alive.insert(s.report->agent_id);
    signal_of.emplace(s.report->agent_id, s.report->signal);
  }
  snap.strength_table = build_strength_table(signals, spec.signal_space);
  const MechanismParams params{spec.k, spec.budget, n};
  const PeerGraph peers = graph.restricted_to(alive);

  for (const auto& s : filtered.survivors) {
    const auto& id = s.report->agent_id;
    std::vector<Signal> internal, external;
    for (const auto& p : peers.internal(id)) internal.push_back(signal_of.at(p));
    for (const auto& p : peers.external(id)) external.push_back(signal_of.at(p));
    if (external.empty()) snap.warnings.push_back("degenerate topology: " + id + " has no external peers");

    AgentOutcome o;
    o.agent_id = id;
    o.signal = s.report->signal;
    o.alpha_before = ledger.alpha_of(id);
    o.scores.strength = snap.strength_table.count(o.signal);
    o.scores.consistency_after =
        update_consistency(o.alpha_before, o.scores.strength, snap.strength_table, params);
    o.scores.reliability = reliability(o.signal, internal, external);
    o.scores.robustness = s.gamma;
    o.scores.reward =
        reward(o.scores.strength, o.scores.consistency_after, o.scores.reliability, params);
    snap.total_paid += o.scores.reward;
    snap.agents.push_back(std::move(o));
  }
  return snap;
}

/// Scores the round and commits it. An aborted round leaves the ledger as it
/// was; a failed commit can at most leave fresh (alpha 0, t 0) registrations.
inline RoundSnapshot settle_round(const QuerySpec& spec, std::span<const SubmittedReport> reports,
                                  const PeerGraph& graph, const Keyring& keys, Ledger& ledger) {
  auto snap = score_round(spec, reports, graph, keys, ledger);
  for (const auto& a : snap.agents) ledger.get_or_create(a.agent_id);
  ledger.commit_round(snap);
  return snap;
}

}  // namespace farm
