#pragma once

// Scenario documents:
//
//   {
//     "query": {"budget": 100, "k": 1, "d_threshold": 50, "gamma_min": 0.5,
//               "comm_range": 50, "signal_space": {"cardinality": 4},
//               "subject": {"x": 0, "y": 0}, "placement_radius": 40,
//               "exempt_isolated": false},
//     "agents": [{"id": "h1", "x": 3, "y": -7, "strategy": "honest",
//                 "strategy_args": {}}, ...],
//     "rounds": 20,
//     "true_signals": [0, 0, ...],
//     "seed": 42
//   }
//
// Agents without x/y are placed uniformly in the placement disc around the
// subject; colluders without x/y are placed within 5 m of their group's
// anchor. signal_space may instead be {"lower", "upper", "buckets"}.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "farm/error.hpp"
#include "farm/rng.hpp"
#include "farm/sim.hpp"

namespace farm {

inline constexpr double kDefaultPlacementRadius = 40.0;
inline constexpr double kColluderClusterRadius = 5.0;
inline constexpr double kFraudsterOffset = 1000.0;

namespace detail {

class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error("scenario field `" + path_ + "`: expected an object");
  }

  bool has(const char* name) const { return j_.contains(name) && !j_.at(name).is_null(); }

  std::string path(const char* name) const { return path_.empty() ? name : path_ + "." + name; }

  const nlohmann::json& raw(const char* name) const {
    if (!has(name)) throw Error("scenario field `" + path(name) + "`: missing");
    return j_.at(name);
  }

  double number(const char* name) const {
    const auto& v = raw(name);
    if (!v.is_number()) throw Error("scenario field `" + path(name) + "`: expected a number");
    return v.get<double>();
  }
  double number_or(const char* name, double fallback) const {
    return has(name) ? number(name) : fallback;
  }

  std::uint64_t integer(const char* name) const {
    const auto& v = raw(name);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw Error("scenario field `" + path(name) + "`: expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string string(const char* name) const {
    const auto& v = raw(name);
    if (!v.is_string()) throw Error("scenario field `" + path(name) + "`: expected a string");
    return v.get<std::string>();
  }

  bool boolean_or(const char* name, bool fallback) const {
    if (!has(name)) return fallback;
    const auto& v = raw(name);
    if (!v.is_boolean()) throw Error("scenario field `" + path(name) + "`: expected a boolean");
    return v.get<bool>();
  }

  FieldReader object(const char* name) const { return FieldReader(raw(name), path(name)); }

  [[noreturn]] void fail(const char* name, const std::string& why) const {
    throw Error("scenario field `" + path(name) + "`: " + why);
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
};

inline void check_id(const std::string& id, const std::string& path) {
  if (id.empty()) throw Error("scenario field `" + path + "`: empty agent id");
  for (char c : id) {
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      throw Error("scenario field `" + path + "`: agent id may not contain , \" or newlines");
    }
  }
}

}  // namespace detail

/// Seed resolution order: explicit override, the document's "seed", then
/// `fallback_seed` (the caller passes FARM_SEED), then 0.
inline Scenario scenario_from_json(const nlohmann::json& doc,
                                   std::optional<std::uint64_t> seed_override = std::nullopt,
                                   std::optional<std::uint64_t> fallback_seed = std::nullopt) {
  using detail::FieldReader;
  const FieldReader top(doc, "");
  Scenario sc;
  if (seed_override) {
    sc.seed = *seed_override;
  } else if (top.has("seed")) {
    sc.seed = top.integer("seed");
  } else {
    sc.seed = fallback_seed.value_or(0);
  }

  const auto q = top.object("query");
  QuerySpec base;
  base.budget = q.number("budget");
  if (!(base.budget > 0.0)) q.fail("budget", "must be positive");
  base.k = q.number_or("k", 1.0);
  if (!(base.k >= 1.0)) q.fail("k", "must be >= 1");
  base.comm_range = q.number_or("comm_range", 50.0);
  if (!(base.comm_range > 0.0)) q.fail("comm_range", "must be positive");
  base.d_threshold = q.number_or("d_threshold", base.comm_range);
  if (!(base.d_threshold > 0.0)) q.fail("d_threshold", "must be positive");
  base.gamma_min = q.number_or("gamma_min", 0.5);
  if (!(base.gamma_min >= 0.0 && base.gamma_min <= 1.0)) q.fail("gamma_min", "must lie in [0,1]");
  base.exempt_isolated = q.boolean_or("exempt_isolated", false);

  const auto space = q.object("signal_space");
  if (space.has("cardinality")) {
    const auto card = space.integer("cardinality");
    if (card < 2 || card > UINT32_MAX) space.fail("cardinality", "must be at least 2");
    base.signal_space = SignalSpace(static_cast<std::uint32_t>(card));
  } else {
    Bucketing b{space.number("lower"), space.number("upper"), 0};
    const auto buckets = space.integer("buckets");
    if (buckets < 2 || buckets > UINT32_MAX) space.fail("buckets", "must be at least 2");
    b.buckets = static_cast<std::uint32_t>(buckets);
    if (!(b.lower < b.upper)) space.fail("upper", "must exceed lower");
    base.signal_space = SignalSpace(b);
  }

  base.subject.agent_id = "subject";
  if (q.has("subject")) {
    const auto subj = q.object("subject");
    base.subject.x = subj.number("x");
    base.subject.y = subj.number("y");
  }
  const double radius = q.number_or("placement_radius", kDefaultPlacementRadius);
  if (!(radius >= 0.0)) q.fail("placement_radius", "must be non-negative");

  const auto rounds = top.integer("rounds");
  if (rounds == 0) top.fail("rounds", "must be at least 1");
  for (std::uint64_t r = 0; r < rounds; ++r) {
    QuerySpec qs = base;
    qs.query_id = "round-" + std::to_string(r);
    sc.queries.push_back(std::move(qs));
  }

  // Placement draws come from their own stream so agent report streams are
  // unaffected by how many agents needed placing.
  Rng placement(derive_seed(sc.seed, 0xfeedULL));
  std::map<std::string, AgentPosition> anchors;

  const auto& agents = top.raw("agents");
  if (!agents.is_array()) top.fail("agents", "expected an array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const FieldReader a(agents[i], "agents[" + std::to_string(i) + "]");
    ScenarioAgent agent;
    agent.position.agent_id = a.string("id");
    detail::check_id(agent.position.agent_id, a.path("id"));
    if (!ids.insert(agent.position.agent_id).second) a.fail("id", "duplicate agent id");

    const auto kind = a.string("strategy");
    const bool placed = a.has("x") || a.has("y");
    if (placed) {
      agent.position.x = a.number("x");
      agent.position.y = a.number("y");
    }

    std::optional<FieldReader> args;
    if (a.has("strategy_args")) args.emplace(a.object("strategy_args"));

    if (kind == "honest") {
      agent.strategy.kind = StrategyKind::Honest;
    } else if (kind == "free_rider") {
      agent.strategy.kind = StrategyKind::FreeRider;
    } else if (kind == "colluder") {
      agent.strategy.kind = StrategyKind::Colluder;
      if (!args) a.fail("strategy_args", "colluder needs group and signal");
      agent.strategy.group_id = args->string("group");
      const auto sig = args->integer("signal");
      if (sig >= base.signal_space.cardinality()) args->fail("signal", "outside signal space");
      agent.strategy.agreed_signal = Signal{static_cast<std::uint32_t>(sig)};
    } else if (kind == "fraudster") {
      agent.strategy.kind = StrategyKind::Fraudster;
      agent.strategy.claimed_position = {{}, base.subject.x + kFraudsterOffset, base.subject.y};
      if (args && (args->has("claimed_x") || args->has("claimed_y"))) {
        agent.strategy.claimed_position.x = args->number("claimed_x");
        agent.strategy.claimed_position.y = args->number("claimed_y");
      }
    } else {
      a.fail("strategy", "unknown strategy \"" + kind + "\"");
    }

    if (!placed) {
      if (agent.strategy.kind == StrategyKind::Colluder) {
        auto it = anchors.find(agent.strategy.group_id);
        if (it == anchors.end()) {
          it = anchors
                   .emplace(agent.strategy.group_id,
                            point_in_disc(placement, base.subject.x, base.subject.y, radius))
                   .first;
        }
        const auto p = point_in_disc(placement, it->second.x, it->second.y, kColluderClusterRadius);
        agent.position.x = p.x;
        agent.position.y = p.y;
      } else {
        const auto p = point_in_disc(placement, base.subject.x, base.subject.y, radius);
        agent.position.x = p.x;
        agent.position.y = p.y;
      }
    }
    sc.agents.push_back(std::move(agent));
  }
  if (sc.agents.size() < 3) top.fail("agents", "at least 3 agents required");

  if (top.has("true_signals")) {
    const auto& ts = top.raw("true_signals");
    if (!ts.is_array() || ts.size() != rounds) top.fail("true_signals", "need one index per round");
    for (std::size_t r = 0; r < ts.size(); ++r) {
      if (!ts[r].is_number_integer() || ts[r].get<std::int64_t>() < 0 ||
          ts[r].get<std::uint64_t>() >= base.signal_space.cardinality()) {
        throw Error("scenario field `true_signals[" + std::to_string(r) + "]`: outside signal space");
      }
      sc.true_signals.push_back(Signal{ts[r].get<std::uint32_t>()});
    }
  } else {
    Rng truth(derive_seed(sc.seed, 0x7ca7ULL));
    for (std::uint64_t r = 0; r < rounds; ++r) {
      sc.true_signals.push_back(Signal{static_cast<std::uint32_t>(truth.below(base.signal_space.cardinality()))});
    }
  }

  sc.validate();
  return sc;
}

inline Scenario load_scenario(const std::string& path,
                              std::optional<std::uint64_t> seed_override = std::nullopt,
                              std::optional<std::uint64_t> fallback_seed = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("scenario file " + path + " is not valid JSON: " + e.what());
  }
  return scenario_from_json(doc, seed_override, fallback_seed);
}

}  // namespace farm
