#pragma once

// Multi-round simulation over a fixed population of honest agents,
// free-riders, colluding groups and location fraudsters.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "farm/error.hpp"
#include "farm/ledger.hpp"
#include "farm/pipeline.hpp"
#include "farm/rng.hpp"
#include "farm/topology.hpp"

namespace farm {

enum class StrategyKind { Honest, FreeRider, Colluder, Fraudster };

inline const char* strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::Honest: return "honest";
    case StrategyKind::FreeRider: return "free_rider";
    case StrategyKind::Colluder: return "colluder";
    case StrategyKind::Fraudster: return "fraudster";
  }
  return "unknown";
}

struct Strategy {
  StrategyKind kind = StrategyKind::Honest;
  std::string group_id;           // Colluder
  Signal agreed_signal;           // Colluder
  AgentPosition claimed_position; // Fraudster; agent_id ignored
};

/// The report an agent files this round, without attestations (those come
/// from the agent's internal peers). `rng` is the agent's own stream.
inline SubmittedReport generate_report(const Strategy& strategy, Signal true_signal,
                                       const SignalSpace& space, const AgentPosition& position,
                                       Rng& rng) {
  SubmittedReport r;
  r.agent_id = position.agent_id;
  r.claimed_position = position;
  switch (strategy.kind) {
    case StrategyKind::Honest:
      r.signal = true_signal;
      break;
    case StrategyKind::FreeRider:
      r.signal = Signal{static_cast<std::uint32_t>(rng.below(space.cardinality()))};
      break;
    case StrategyKind::Colluder:
      r.signal = strategy.agreed_signal;
      break;
    case StrategyKind::Fraudster:
      r.signal = Signal{static_cast<std::uint32_t>(rng.below(space.cardinality()))};
      r.claimed_position = strategy.claimed_position;
      r.claimed_position.agent_id = position.agent_id;
      break;
  }
  if (!space.contains(r.signal)) throw Error("strategy produced a signal outside the space");
  return r;
}

struct ScenarioAgent {
  AgentPosition position;
  Strategy strategy;
};

struct Scenario {
  std::vector<QuerySpec> queries;  // one per round
  std::vector<ScenarioAgent> agents;
  std::vector<Signal> true_signals;
  std::uint64_t seed = 0;
  std::uint64_t attestation_secret = 0x9e3779b97f4a7c15ULL;

  std::size_t rounds() const { return queries.size(); }

  void validate() const {
    if (agents.size() < 3) throw Error("scenario needs at least 3 agents");
    if (true_signals.size() != queries.size()) throw Error("one true signal per round required");
    for (std::size_t r = 0; r < queries.size(); ++r) {
      queries[r].validate();
      if (!queries[r].signal_space.contains(true_signals[r])) {
        throw Error("true signal of round " + std::to_string(r) + " outside signal space");
      }
    }
    std::map<std::string, std::vector<const AgentPosition*>> groups;
    for (const auto& a : agents) {
      if (a.strategy.kind == StrategyKind::Colluder) groups[a.strategy.group_id].push_back(&a.position);
    }
    for (const auto& [g, members] : groups) {
      for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j)
          for (const auto& q : queries)
            if (distance(*members[i], *members[j]) > q.comm_range)
              throw Error("colluder group " + g + " is not within communication range");
    }
  }
};

/// Uniform point in a disc (radius * sqrt(u) keeps the density flat).
inline AgentPosition point_in_disc(Rng& rng, double cx, double cy, double radius) {
  const double r = radius * std::sqrt(rng.uniform01());
  const double theta = 2.0 * std::numbers::pi * rng.uniform01();
  return {{}, cx + r * std::cos(theta), cy + r * std::sin(theta)};
}

/// One CSV row: round, agent_id, strategy, phi, alpha, beta, gamma, reward,
/// filtered.
struct MetricRow {
  std::size_t round = 0;
  AgentId agent_id;
  StrategyKind strategy = StrategyKind::Honest;
  std::uint32_t phi = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double reward = 0.0;
  bool filtered = false;
};

struct StrategyMetrics {
  std::size_t agents = 0;
  std::size_t agent_rounds = 0;
  double total_reward = 0.0;
  double mean_reward = 0.0;       // per agent-round, filtered rounds count as 0
  double final_mean_alpha = 0.0;
  std::vector<double> mean_alpha;  // after each round
};

struct AbortedRound {
  std::size_t round = 0;
  std::string query_id;
  std::string reason;
};

struct SimulationResult {
  std::vector<RoundSnapshot> snapshots;
  std::vector<AbortedRound> aborted;
  std::vector<MetricRow> rows;
  std::map<StrategyKind, StrategyMetrics> by_strategy;
  std::map<AgentId, double> cumulative_reward;

  /// Colluder mean reward minus honest mean reward (0 if either is absent).
  double collusion_payoff_delta() const {
    auto c = by_strategy.find(StrategyKind::Colluder);
    auto h = by_strategy.find(StrategyKind::Honest);
    if (c == by_strategy.end() || h == by_strategy.end()) return 0.0;
    return c->second.mean_reward - h->second.mean_reward;
  }
};

inline SimulationResult run_simulation(const Scenario& scenario, Ledger& ledger) {
  scenario.validate();
  const Keyring keys(scenario.attestation_secret);

  std::vector<AgentPosition> positions;
  std::vector<Rng> streams;
  for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
    positions.push_back(scenario.agents[i].position);
    streams.emplace_back(derive_seed(scenario.seed, i));
  }

  SimulationResult result;
  for (const auto& a : scenario.agents) {
    auto& m = result.by_strategy[a.strategy.kind];
    ++m.agents;
    result.cumulative_reward[a.position.agent_id] = 0.0;
  }

  std::map<double, PeerGraph> graphs;  // keyed by comm_range
  for (std::size_t round = 0; round < scenario.rounds(); ++round) {
    const auto& query = scenario.queries[round];
    auto git = graphs.find(query.comm_range);
    if (git == graphs.end()) {
      git = graphs.emplace(query.comm_range, build_peer_graph(positions, query.comm_range)).first;
    }
    const PeerGraph& graph = git->second;

    std::vector<SubmittedReport> reports;
    for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
      auto rep = generate_report(scenario.agents[i].strategy, scenario.true_signals[round],
                                 query.signal_space, positions[i], streams[i]);
      rep.attestations = collect_attestations(graph, positions, rep.claimed_position, keys);
      reports.push_back(std::move(rep));
    }

    std::map<AgentId, MetricRow> rows;
    for (const auto& a : scenario.agents) {
      MetricRow row;
      row.round = round;
      row.agent_id = a.position.agent_id;
      row.strategy = a.strategy.kind;
      row.filtered = true;
      rows.emplace(row.agent_id, row);
    }

    try {
      auto snap = settle_round(query, reports, graph, keys, ledger);
      for (const auto& o : snap.agents) {
        auto& row = rows.at(o.agent_id);
        row.phi = o.scores.strength;
        row.beta = o.scores.reliability;
        row.gamma = o.scores.robustness;
        row.reward = o.scores.reward;
        row.filtered = false;
        result.cumulative_reward[o.agent_id] += o.scores.reward;
      }
      for (const auto& f : snap.filtered_out) rows.at(f.agent_id).gamma = f.gamma;
      result.snapshots.push_back(std::move(snap));
    } catch (const Error& e) {
      result.aborted.push_back({round, query.query_id, e.what()});
      try {
        auto filtered = filter_reports(query, reports, graph, keys);
        for (const auto& s : filtered.survivors) rows.at(s.report->agent_id).gamma = s.gamma;
        for (const auto& f : filtered.excluded) rows.at(f.agent_id).gamma = f.gamma;
      } catch (const Error&) {
      }
    }

    std::map<StrategyKind, std::pair<double, std::size_t>> alpha_sums;
    for (const auto& a : scenario.agents) {
      auto& row = rows.at(a.position.agent_id);
      row.alpha = ledger.alpha_of(row.agent_id);
      auto& m = result.by_strategy[row.strategy];
      ++m.agent_rounds;
      m.total_reward += row.reward;
      auto& s = alpha_sums[row.strategy];
      s.first += row.alpha;
      ++s.second;
      result.rows.push_back(row);
    }
    for (auto& [kind, s] : alpha_sums) {
      result.by_strategy[kind].mean_alpha.push_back(s.first / static_cast<double>(s.second));
    }
  }

  for (auto& [kind, m] : result.by_strategy) {
    if (m.agent_rounds > 0) m.mean_reward = m.total_reward / static_cast<double>(m.agent_rounds);
    if (!m.mean_alpha.empty()) m.final_mean_alpha = m.mean_alpha.back();
  }
  return result;
}

/// 17 significant digits, enough to read back the identical double.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "round,agent_id,strategy,phi,alpha,beta,gamma,reward,filtered\n";
  for (const auto& r : rows) {
    out << r.round << ',' << r.agent_id << ',' << strategy_name(r.strategy) << ',' << r.phi << ','
        << format_real(r.alpha) << ',' << format_real(r.beta) << ',' << format_real(r.gamma) << ','
        << format_real(r.reward) << ',' << (r.filtered ? 1 : 0) << '\n';
  }
}

inline void write_snapshots_jsonl(std::ostream& out, const std::vector<RoundSnapshot>& snaps) {
  for (const auto& s : snaps) out << to_json(s).dump() << '\n';
}

}  // namespace farm
