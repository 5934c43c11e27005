#pragma once

// `farm` command line: simulate, verify, audit.
// Exit codes: 0 success / all checks pass, 1 verification or audit failure,
// 2 usage or configuration error.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "farm/farm.hpp"

namespace farm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  std::string scenario_path;
  std::string out_dir;
  std::string ledger_dir;  // empty: <out_dir>/ledger
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma_min, k, comm_range, d_threshold;
};

struct VerifyConfig {
  std::string agents = "3..8";
  std::string signals = "2..5";
  std::vector<double> alphas{0.1, 0.5, 0.9};
  std::vector<double> ks{1.0, 2.0};
  std::string layout = "all";
  std::string mutate = "none";
  std::string out_dir = ".";
};

inline std::pair<std::uint32_t, std::uint32_t> parse_range(const std::string& text) {
  auto to_u32 = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used);
    } catch (const std::exception&) {
      throw Error("bad range \"" + text + "\"");
    }
    if (used != s.size()) throw Error("bad range \"" + text + "\"");
    return static_cast<std::uint32_t>(v);
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const auto v = to_u32(text);
    return {v, v};
  }
  const auto lo = to_u32(text.substr(0, dots));
  const auto hi = to_u32(text.substr(dots + 2));
  if (lo > hi) throw Error("bad range \"" + text + "\"");
  return {lo, hi};
}

inline std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("FARM_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  std::string s(raw);
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    throw Error("FARM_SEED is not an unsigned integer: " + s);
  }
  if (used != s.size()) throw Error("FARM_SEED is not an unsigned integer: " + s);
  return v;
}

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Scenario scenario;
  try {
    if (!std::filesystem::exists(cfg.scenario_path)) {
      err << "error: scenario file not found: " << cfg.scenario_path << "\n";
      return kExitUsage;
    }
    scenario = load_scenario(cfg.scenario_path, cfg.seed, env_seed());
    for (auto& q : scenario.queries) {
      if (cfg.gamma_min) q.gamma_min = *cfg.gamma_min;
      if (cfg.k) q.k = *cfg.k;
      if (cfg.comm_range) q.comm_range = *cfg.comm_range;
      if (cfg.d_threshold) q.d_threshold = *cfg.d_threshold;
    }
    scenario.validate();
  } catch (const Error& e) {
    err << "error: " << cfg.scenario_path << ": " << e.what() << "\n";
    return kExitUsage;
  }

  const std::filesystem::path out_dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    err << "error: cannot create output directory " << out_dir.string() << ": " << ec.message() << "\n";
    return kExitUsage;
  }
  const auto ledger_dir = cfg.ledger_dir.empty() ? out_dir / "ledger" : std::filesystem::path(cfg.ledger_dir);

  SimulationResult result;
  try {
    Ledger ledger = Ledger::open(ledger_dir);
    result = run_simulation(scenario, ledger);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  {
    std::ofstream csv(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    write_metrics_csv(csv, result.rows);
    std::ofstream jsonl(out_dir / "snapshots.jsonl", std::ios::binary | std::ios::trunc);
    write_snapshots_jsonl(jsonl, result.snapshots);
    if (!csv || !jsonl) {
      err << "error: failed writing outputs to " << out_dir.string() << "\n";
      return kExitUsage;
    }
  }

  out << "rounds settled: " << result.snapshots.size() << " of " << scenario.rounds()
      << " (aborted: " << result.aborted.size() << ")\n";
  for (const auto& a : result.aborted) {
    out << "  aborted " << a.query_id << ": " << a.reason << "\n";
  }
  out << "strategy     agents  mean_reward   total_reward  final_alpha\n";
  for (const auto& [kind, m] : result.by_strategy) {
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %6zu  %-12s  %-12s  %s\n", strategy_name(kind), m.agents,
                  fixed(m.mean_reward).c_str(), fixed(m.total_reward).c_str(),
                  fixed(m.final_mean_alpha).c_str());
    out << line;
  }
  if (result.by_strategy.contains(StrategyKind::Colluder) &&
      result.by_strategy.contains(StrategyKind::Honest)) {
    out << "collusion payoff delta: " << fixed(result.collusion_payoff_delta()) << "\n";
  }
  return kExitOk;
}

template <typename Mechanism>
GridReport run_grid_with(const GridSpec& grid) {
  return run_deviation_grid<Mechanism>(grid);
}

inline int cmd_verify(const VerifyConfig& cfg, std::ostream& out, std::ostream& err) {
  GridSpec grid;
  try {
    std::tie(grid.min_agents, grid.max_agents) = parse_range(cfg.agents);
    std::tie(grid.min_signals, grid.max_signals) = parse_range(cfg.signals);
    if (grid.min_agents < 3) throw Error("--agents must start at 3 or more");
    if (grid.max_agents > 64) throw Error("--agents supports at most 64");
    if (grid.min_signals < 2) throw Error("--signals must start at 2 or more");
    if (grid.max_signals > 64) throw Error("--signals supports at most 64");
    for (double a : cfg.alphas)
      if (!(a >= 0.0 && a < 1.0)) throw Error("--alphas values must lie in [0,1)");
    for (double k : cfg.ks)
      if (!(k >= 1.0)) throw Error("--k values must be >= 1");
    grid.alphas = cfg.alphas;
    grid.ks = cfg.ks;
    if (cfg.layout == "one-internal-peer") {
      grid.layouts = {PeerLayout::OneInternalPeer};
    } else if (cfg.layout == "fully-connected") {
      grid.layouts = {PeerLayout::FullyConnected};
    } else if (cfg.layout != "all") {
      throw Error("--layout must be one-internal-peer, fully-connected or all");
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  GridReport report;
  if (cfg.mutate == "none") {
    report = run_grid_with<FarmMechanism>(grid);
  } else if (cfg.mutate == "reward-no-beta") {
    report = run_grid_with<mutation::ReliabilityOmitted>(grid);
  } else if (cfg.mutate == "frozen-alpha") {
    report = run_grid_with<mutation::FrozenConsistency>(grid);
  } else if (cfg.mutate == "flat-strength") {
    report = run_grid_with<mutation::FlatStrength>(grid);
  } else {
    err << "error: unknown mutation \"" << cfg.mutate << "\"\n";
    return kExitUsage;
  }

  const std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream json(dir / "findings.json", std::ios::binary | std::ios::trunc);
  auto doc = to_json(report);
  doc["mutation"] = cfg.mutate;
  json << doc.dump(2) << "\n";
  if (!json) {
    err << "error: cannot write " << (dir / "findings.json").string() << "\n";
    return kExitUsage;
  }

  out << "instances: " << report.instances << "\n"
      << "comparisons: " << report.comparisons << "\n"
      << "degenerate instances (no external peers): " << report.degenerate_instances << "\n"
      << "violations: " << report.findings.size() << "\n";
  for (std::size_t i = 0; i < report.findings.size() && i < 10; ++i) {
    const auto& f = report.findings[i];
    out << "  |A|=" << f.instance.agents << " |S|=" << f.instance.signals
        << " alpha=" << f.instance.alpha_prev << " k=" << f.instance.k << " "
        << layout_name(f.instance.layout) << " deviation=" << f.deviation.index << " "
        << f.sub_utility << ": truthful " << f.truthful << " <= deviating " << f.deviating << "\n";
  }
  out << (report.findings.empty() ? "PASS" : "FAIL") << "\n";
  return report.findings.empty() ? kExitOk : kExitFailed;
}

inline int cmd_audit(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path);
  if (!in || std::filesystem::is_directory(path)) {
    err << "error: cannot read snapshots file " << path << "\n";
    return kExitUsage;
  }

  std::vector<RoundSnapshot> snaps;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      snaps.push_back(snapshot_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      err << "error: " << path << ":" << lineno << ": corrupted snapshot: " << e.what() << "\n";
      out << "FAIL: corrupted snapshot at line " << lineno << "\n";
      return kExitFailed;
    }
  }

  if (snaps.empty()) {
    out << "0 rounds audited\n";
    return kExitOk;
  }

  AuditResult selective, cumulative, bounds, continuity;
  std::map<AgentId, double> folded;  // alpha after the agent's last round so far
  for (const auto& s : snaps) {
    std::map<AgentId, double> prior;
    for (const auto& a : s.agents) {
      auto it = folded.find(a.agent_id);
      if (it == folded.end()) {
        prior[a.agent_id] = a.alpha_before;
      } else {
        prior[a.agent_id] = it->second;
        if (it->second != a.alpha_before) {
          continuity.fail(s.query_id + ": " + a.agent_id + " starts from a different alpha than its previous round ended with");
        }
      }
    }
    for (auto& w : audit_selective_fairness(s).witnesses) selective.fail(std::move(w));
    for (auto& w : audit_cumulative_fairness(prior, s).witnesses) cumulative.fail(std::move(w));
    for (auto& w : audit_bounds(s).witnesses) bounds.fail(std::move(w));
    for (const auto& a : s.agents) folded[a.agent_id] = a.scores.consistency_after;
  }
  const auto budget = audit_budget(snaps);

  const std::vector<std::pair<const char*, const AuditResult*>> results{
      {"selective-fairness", &selective}, {"cumulative-fairness", &cumulative},
      {"budget", &budget},                {"bounds", &bounds},
      {"replay-continuity", &continuity}};
  bool all = true;
  out << snaps.size() << " rounds audited\n";
  for (const auto& [name, r] : results) {
    out << (r->passed ? "PASS " : "FAIL ") << name << "\n";
    for (std::size_t i = 0; i < r->witnesses.size() && i < 5; ++i) {
      out << "  " << r->witnesses[i] << "\n";
    }
    all = all && r->passed;
  }
  return all ? kExitOk : kExitFailed;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Fair reward mechanism for localized crowdsensing: simulate, verify, audit", "farm"};
  app.require_subcommand(1);

  RunConfig run_cfg;
  std::uint64_t seed = 0;
  double gamma_min = 0, k = 0, comm_range = 0, d_threshold = 0;
  auto* sim = app.add_subcommand("simulate", "run a scenario and write metrics, snapshots and ledger");
  sim->add_option("--scenario", run_cfg.scenario_path, "scenario JSON file")->required();
  sim->add_option("--out", run_cfg.out_dir, "output directory")->required();
  sim->add_option("--ledger", run_cfg.ledger_dir, "ledger directory (default <out>/ledger)");
  auto* seed_opt = sim->add_option("--seed", seed, "seed override (else scenario seed, else FARM_SEED)");
  auto* gmin_opt = sim->add_option("--gamma-min", gamma_min, "robustness filter threshold");
  auto* k_opt = sim->add_option("--k", k, "consistency learning-rate divisor");
  auto* range_opt = sim->add_option("--comm-range", comm_range, "device-to-device range in meters");
  auto* dthr_opt = sim->add_option("--d-threshold", d_threshold, "attested distance threshold in meters");

  VerifyConfig ver_cfg;
  auto* ver = app.add_subcommand("verify", "brute-force unilateral deviation search");
  ver->add_option("--agents", ver_cfg.agents, "agent count range, e.g. 3..8");
  ver->add_option("--signals", ver_cfg.signals, "signal count range, e.g. 2..5");
  ver->add_option("--alphas", ver_cfg.alphas, "deviator prior consistency values")->delimiter(',');
  ver->add_option("--k", ver_cfg.ks, "k values")->delimiter(',');
  ver->add_option("--layout", ver_cfg.layout, "one-internal-peer | fully-connected | all");
  ver->add_option("--mutate", ver_cfg.mutate, "test hook: none | reward-no-beta | frozen-alpha | flat-strength");
  ver->add_option("--out", ver_cfg.out_dir, "directory for findings.json");

  std::string snapshots_path;
  auto* aud = app.add_subcommand("audit", "fairness, bounds and budget audits over snapshots");
  aud->add_option("--snapshots", snapshots_path, "snapshots.jsonl file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*sim) {
      if (*seed_opt) run_cfg.seed = seed;
      if (*gmin_opt) run_cfg.gamma_min = gamma_min;
      if (*k_opt) run_cfg.k = k;
      if (*range_opt) run_cfg.comm_range = comm_range;
      if (*dthr_opt) run_cfg.d_threshold = d_threshold;
      return cmd_simulate(run_cfg, out, err);
    }
    if (*ver) return cmd_verify(ver_cfg, out, err);
    return cmd_audit(snapshots_path, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace farm::cli
