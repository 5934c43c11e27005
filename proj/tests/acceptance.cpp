// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "farm/farm.hpp"
#include "farm_cli.hpp"

using namespace farm;
namespace fs = std::filesystem;

namespace {

constexpr double kTol = 1e-12;

std::string scenario(const char* name) { return std::string(FARM_SCENARIO_DIR) + "/" + name; }

struct Criterion {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
};

// 1. Unilateral deviation grid.
Criterion nash_grid() {
  Criterion c;
  GridSpec grid;
  grid.layouts = {PeerLayout::OneInternalPeer};
  const auto report = run_deviation_grid(grid);
  c.require(report.instances == 6 * 4 * 3 * 2, "grid size");
  c.require(report.findings.empty(), std::to_string(report.findings.size()) + " violation witnesses");
  c.require(report.seconds < 60.0, "grid took " + std::to_string(report.seconds) + " s");
  // every comparison covers phi, alpha, beta and u
  std::size_t expected = 0;
  for (const auto& inst : grid.instances()) expected += 4 * (inst.signals - 1);
  c.require(report.comparisons == expected, "comparison count");
  c.detail = c.ok ? std::to_string(report.instances) + " instances, " +
                        std::to_string(report.comparisons) + " comparisons, " +
                        std::to_string(report.seconds) + " s"
                  : c.detail;
  return c;
}

// 2. Closed forms at the truthful profile.
Criterion closed_forms() {
  Criterion c;
  for (std::uint32_t n = 3; n <= 8; ++n) {
    for (std::uint32_t s = 2; s <= 5; ++s) {
      for (double alpha : {0.1, 0.5, 0.9}) {
        for (double k : {1.0, 2.0}) {
          const NashInstance inst{n, s, alpha, k, PeerLayout::OneInternalPeer};
          const auto graph = nash_peer_graph(n, inst.layout);
          const auto truthful = evaluate_deviator(inst, graph, Signal{0});
          c.require(truthful.strength == n, "truthful phi != |A|");
          const double inc = ((1.0 - alpha) / k) * (1.0 / n) / n;
          c.require(std::abs(truthful.consistency - (alpha + inc)) <= kTol, "alpha increment");
          c.require(std::abs(truthful.reliability - 0.5) <= kTol, "beta != 0.5");
          for (std::uint32_t d = 1; d < s; ++d) {
            const auto dev = evaluate_deviator(inst, graph, Signal{d});
            c.require(dev.strength == 1, "deviating phi != 1");
          }
        }
      }
    }
  }
  return c;
}

// 3. Boundedness under random inputs.
Criterion boundedness() {
  Criterion c;
  Rng rng(0xB0B);
  std::size_t alpha_bad = 0, beta_bad = 0;
  for (int i = 0; i < 100000; ++i) {
    const auto n = static_cast<std::uint32_t>(3 + rng.below(30));
    const auto card = static_cast<std::uint32_t>(2 + rng.below(6));
    std::vector<Signal> reports(n);
    for (auto& r : reports) r = Signal{static_cast<std::uint32_t>(rng.below(card))};
    const auto table = build_strength_table(reports, SignalSpace(card));
    const MechanismParams params{1.0 + 9.0 * rng.uniform01(), 1.0, n};
    // mix of uniform priors and priors packed against 1
    double alpha = rng.uniform01();
    if (rng.below(4) == 0) alpha = 1.0 - std::ldexp(rng.uniform01(), -static_cast<int>(rng.below(53)));
    if (alpha >= 1.0) alpha = std::nextafter(1.0, 0.0);
    const auto mine = reports[rng.below(n)];
    const double next = update_consistency(alpha, table.count(mine), table, params);
    if (!(next >= 0.0 && next < 1.0)) ++alpha_bad;
  }
  for (int i = 0; i < 100000; ++i) {
    std::vector<Signal> in(rng.below(10)), ex(rng.below(10));
    for (auto& s : in) s = Signal{static_cast<std::uint32_t>(rng.below(3))};
    for (auto& s : ex) s = Signal{static_cast<std::uint32_t>(rng.below(3))};
    const double beta = reliability(Signal{static_cast<std::uint32_t>(rng.below(3))}, in, ex);
    if (!(beta >= 0.0 && beta <= 1.0)) ++beta_bad;
  }
  c.require(alpha_bad == 0, std::to_string(alpha_bad) + " alpha violations");
  c.require(beta_bad == 0, std::to_string(beta_bad) + " beta violations");
  return c;
}

// 4. Fairness audits over randomized rounds, plus mutation kills.
Criterion fairness() {
  Criterion c;
  Rng rng(0xFA1);
  const Keyring keys(5);
  std::size_t settled = 0, selective_w = 0, cumulative_w = 0;
  std::size_t killed = 0, mutants = 0;
  while (settled < 1000) {
    std::vector<AgentPosition> pos;
    const auto n = 4 + rng.below(10);
    for (std::uint64_t i = 0; i < n; ++i) {
      pos.push_back({"p" + std::to_string(i), 100 * rng.uniform01(), 100 * rng.uniform01()});
    }
    QuerySpec spec;
    spec.signal_space = SignalSpace(static_cast<std::uint32_t>(2 + rng.below(4)));
    spec.budget = 1 + 99 * rng.uniform01();
    spec.k = 1 + 3 * rng.uniform01();
    const auto graph = build_peer_graph(pos, spec.comm_range);
    Ledger ledger;
    for (int round = 0; round < 10 && settled < 1000; ++round) {
      spec.query_id = "r" + std::to_string(settled);
      const auto truth = Signal{static_cast<std::uint32_t>(rng.below(spec.signal_space.cardinality()))};
      std::vector<SubmittedReport> reports;
      for (const auto& p : pos) {
        SubmittedReport r{p.agent_id, truth, p, {}};
        if (rng.below(3) == 0) r.signal = Signal{static_cast<std::uint32_t>(rng.below(spec.signal_space.cardinality()))};
        r.attestations = collect_attestations(graph, pos, r.claimed_position, keys);
        reports.push_back(std::move(r));
      }
      std::map<AgentId, double> before;
      for (const auto& [id, rec] : ledger.records()) before[id] = rec.alpha;
      RoundSnapshot snap;
      try {
        snap = settle_round(spec, reports, graph, keys, ledger);
      } catch (const Error&) {
        continue;
      }
      ++settled;
      selective_w += audit_selective_fairness(snap).witnesses.size();
      cumulative_w += audit_cumulative_fairness(before, snap).witnesses.size();

      // selective mutation: bump one agent's strength when a peer shares its report
      for (std::size_t i = 1; i < snap.agents.size(); ++i) {
        if (snap.agents[i].signal == snap.agents[0].signal) {
          auto bad = snap;
          bad.agents[0].scores.strength += 1;
          ++mutants;
          if (!audit_selective_fairness(bad).passed) ++killed;
          break;
        }
      }
      // cumulative mutation: swap updated scores of an ordered equal-report pair
      bool done = false;
      for (std::size_t i = 0; i < snap.agents.size() && !done; ++i) {
        for (std::size_t j = 0; j < snap.agents.size() && !done; ++j) {
          const auto& a = snap.agents[i];
          const auto& b = snap.agents[j];
          if (i != j && a.signal == b.signal && before[a.agent_id] > before[b.agent_id]) {
            auto bad = snap;
            std::swap(bad.agents[i].scores.consistency_after, bad.agents[j].scores.consistency_after);
            ++mutants;
            if (!audit_cumulative_fairness(before, bad).passed) ++killed;
            done = true;
          }
        }
      }
    }
  }
  c.require(selective_w == 0, std::to_string(selective_w) + " selective witnesses");
  c.require(cumulative_w == 0, std::to_string(cumulative_w) + " cumulative witnesses");
  c.require(mutants > 0 && killed == mutants,
            "mutation kill " + std::to_string(killed) + "/" + std::to_string(mutants));
  if (c.ok) {
    c.detail = std::to_string(settled) + " rounds, mutants killed " + std::to_string(killed) + "/" +
               std::to_string(mutants);
  }
  return c;
}

// 5. Budget and non-negativity across simulated rounds.
Criterion budget() {
  Criterion c;
  std::size_t rounds = 0;
  auto check = [&](const Scenario& sc) {
    Ledger ledger;
    const auto res = run_simulation(sc, ledger);
    for (const auto& s : res.snapshots) {
      ++rounds;
      double sum = 0.0;
      for (const auto& a : s.agents) {
        c.require(a.scores.reward >= 0.0, s.query_id + ": negative reward");
        c.require(a.scores.reward < s.budget / s.agent_count, s.query_id + ": reward >= B/|A|");
        sum += a.scores.reward;
      }
      c.require(sum < s.budget, s.query_id + ": total not below budget");
    }
    c.require(audit_budget(res.snapshots).passed, "budget audit");
  };
  for (auto name : {"collusion.json", "fraudster.json", "honest.json"}) check(load_scenario(scenario(name)));
  for (std::uint64_t seed = 1; seed <= 20; ++seed) check(load_scenario(scenario("mixed.json"), seed));
  if (c.ok) c.detail = std::to_string(rounds) + " rounds";
  return c;
}

// 6. Collusion and fraud economics on the canonical scenarios.
Criterion economics() {
  Criterion c;
  {
    Ledger ledger;
    const auto res = run_simulation(load_scenario(scenario("collusion.json")), ledger);
    const double honest = res.by_strategy.at(StrategyKind::Honest).mean_reward;
    const double colluder = res.by_strategy.at(StrategyKind::Colluder).mean_reward;
    c.require(colluder < honest, "colluder mean " + std::to_string(colluder) + " >= honest " +
                                     std::to_string(honest));
    c.detail = "colluder " + std::to_string(colluder) + " < honest " + std::to_string(honest);
  }
  {
    Ledger ledger;
    const auto res = run_simulation(load_scenario(scenario("fraudster.json")), ledger);
    const double paid = res.cumulative_reward.at("f1");
    c.require(paid == 0.0, "fraudster earned " + std::to_string(paid));
    if (c.ok) c.detail += "; fraudster cumulative 0";
  }
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 7. Determinism of `simulate` and journal replay.
Criterion determinism() {
  Criterion c;
  const auto root = fs::temp_directory_path() / "farm_acceptance_determinism";
  fs::remove_all(root);
  std::ostringstream sink;
  for (auto name : {"a", "b"}) {
    const std::string out = (root / name).string();
    const std::string path = scenario("mixed.json");
    const char* argv[] = {"farm", "simulate", "--scenario", path.c_str(), "--out", out.c_str(), "--seed", "7"};
    c.require(cli::run(8, argv, sink, sink) == 0, "simulate failed");
  }
  c.require(slurp(root / "a" / "metrics.csv") == slurp(root / "b" / "metrics.csv"), "metrics.csv differs");
  c.require(slurp(root / "a" / "snapshots.jsonl") == slurp(root / "b" / "snapshots.jsonl"),
            "snapshots.jsonl differs");
  c.require(!slurp(root / "a" / "metrics.csv").empty(), "empty metrics");
  try {
    const auto ledger = Ledger::open(root / "a" / "ledger");
    c.require(ledger.replay_matches(), "journal replay differs from state");
    c.require(same_committed_state(replay(ledger.journal()), ledger.records()), "replay mismatch");
  } catch (const Error& e) {
    c.require(false, e.what());
  }
  fs::remove_all(root);
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Criterion()>>> criteria{
      {"1 nash-ic-grid", nash_grid},
      {"2 closed-forms", closed_forms},
      {"3 boundedness", boundedness},
      {"4 fairness-audits", fairness},
      {"5 budget-non-negativity", budget},
      {"6 collusion-fraud-economics", economics},
      {"7 determinism-replay", determinism},
  };
  bool all = true;
  for (const auto& [name, fn] : criteria) {
    Criterion c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    std::cout << (c.ok ? "PASS " : "FAIL ") << name;
    if (!c.detail.empty()) std::cout << "  (" << c.detail << ")";
    std::cout << "\n";
    all = all && c.ok;
  }
  return all ? 0 : 1;
}
