#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "farm/error.hpp"
#include "farm/mechanism.hpp"
#include "farm/topology.hpp"

namespace farm {

struct AgentOutcome {
  AgentId agent_id;
  Signal signal;
  double alpha_before = 0.0;
  ScoreBundle scores;
};

struct Exclusion {
  AgentId agent_id;
  Signal signal;
  double gamma = 0.0;
  std::string reason;
};

/// Everything settled for one query.
struct RoundSnapshot {
  std::string query_id;
  double budget = 0.0;
  std::uint32_t agent_count = 0;
  StrengthTable strength_table;
  std::vector<AgentOutcome> agents;
  std::vector<Exclusion> filtered_out;
  double total_paid = 0.0;
  std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const RoundSnapshot& s) {
  using nlohmann::json;
  json agents = json::array();
  for (const auto& a : s.agents) {
    agents.push_back({{"agent_id", a.agent_id},
                      {"signal", a.signal.index},
                      {"alpha_before", a.alpha_before},
                      {"phi", a.scores.strength},
                      {"alpha", a.scores.consistency_after},
                      {"beta", a.scores.reliability},
                      {"gamma", a.scores.robustness},
                      {"reward", a.scores.reward}});
  }
  json filtered = json::array();
  for (const auto& f : s.filtered_out) {
    filtered.push_back({{"agent_id", f.agent_id},
                        {"signal", f.signal.index},
                        {"gamma", f.gamma},
                        {"reason", f.reason}});
  }
  return {{"query_id", s.query_id},
          {"budget", s.budget},
          {"agent_count", s.agent_count},
          {"strength_table",
           {{"counts", s.strength_table.counts},
            {"phi1", s.strength_table.phi1},
            {"phi2", {s.strength_table.phi2.num, s.strength_table.phi2.den}}}},
          {"agents", std::move(agents)},
          {"filtered", std::move(filtered)},
          {"total_paid", s.total_paid},
          {"warnings", s.warnings}};
}

/// Throws farm::Error naming the first missing or mistyped field.
inline RoundSnapshot snapshot_from_json(const nlohmann::json& j) {
  auto field = [](const nlohmann::json& obj, const char* name) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(name)) {
      throw Error(std::string("snapshot field missing: ") + name);
    }
    return obj.at(name);
  };
  try {
    RoundSnapshot s;
    s.query_id = field(j, "query_id").get<std::string>();
    s.budget = field(j, "budget").get<double>();
    s.agent_count = field(j, "agent_count").get<std::uint32_t>();
    const auto& table = field(j, "strength_table");
    s.strength_table.counts = field(table, "counts").get<std::vector<std::uint32_t>>();
    s.strength_table.phi1 = field(table, "phi1").get<std::uint32_t>();
    const auto& phi2 = field(table, "phi2");
    if (!phi2.is_array() || phi2.size() != 2) throw Error("snapshot field malformed: phi2");
    s.strength_table.phi2 = Rational{phi2[0].get<std::int64_t>(), phi2[1].get<std::int64_t>()};
    if (s.strength_table.phi2.den <= 0) throw Error("snapshot field malformed: phi2");
    for (const auto& a : field(j, "agents")) {
      AgentOutcome o;
      o.agent_id = field(a, "agent_id").get<std::string>();
      o.signal = Signal{field(a, "signal").get<std::uint32_t>()};
      o.alpha_before = field(a, "alpha_before").get<double>();
      o.scores.strength = field(a, "phi").get<std::uint32_t>();
      o.scores.consistency_after = field(a, "alpha").get<double>();
      o.scores.reliability = field(a, "beta").get<double>();
      o.scores.robustness = field(a, "gamma").get<double>();
      o.scores.reward = field(a, "reward").get<double>();
      s.agents.push_back(std::move(o));
    }
    for (const auto& f : field(j, "filtered")) {
      Exclusion e;
      e.agent_id = field(f, "agent_id").get<std::string>();
      e.signal = Signal{field(f, "signal").get<std::uint32_t>()};
      e.gamma = field(f, "gamma").get<double>();
      e.reason = field(f, "reason").get<std::string>();
      s.filtered_out.push_back(std::move(e));
    }
    s.total_paid = field(j, "total_paid").get<double>();
    if (j.contains("warnings")) s.warnings = j.at("warnings").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("snapshot malformed: ") + e.what());
  }
}

}  // namespace farm
