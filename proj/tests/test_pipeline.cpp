#include <gtest/gtest.h>

#include <vector>

#include "farm/pipeline.hpp"
#include "farm/rng.hpp"
#include "farm/verifier.hpp"

using namespace farm;

namespace {

constexpr double kTol = 1e-12;

struct World {
  std::vector<AgentPosition> pos;
  PeerGraph graph;
  Keyring keys{42};
  QuerySpec spec;

  explicit World(std::vector<AgentPosition> p, double range = 50.0) : pos(std::move(p)) {
    graph = build_peer_graph(pos, range);
    spec.query_id = "q";
    spec.signal_space = SignalSpace(4);
    spec.budget = 100.0;
    spec.comm_range = range;
    spec.d_threshold = range;
  }

  SubmittedReport report(std::size_t i, Signal s, std::optional<AgentPosition> claim = {}) const {
    SubmittedReport r;
    r.agent_id = pos[i].agent_id;
    r.signal = s;
    r.claimed_position = claim.value_or(pos[i]);
    r.claimed_position.agent_id = r.agent_id;
    r.attestations = collect_attestations(graph, pos, r.claimed_position, keys);
    return r;
  }
};

std::vector<AgentPosition> line(std::size_t n, double spacing, const std::string& prefix = "p") {
  std::vector<AgentPosition> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({prefix + std::to_string(i), spacing * i, 0});
  return out;
}

}  // namespace

TEST(Settle, CoLocatedHonestFreshLedger) {
  World w(line(5, 1.0));
  std::vector<SubmittedReport> reports;
  for (std::size_t i = 0; i < 5; ++i) reports.push_back(w.report(i, Signal{2}));
  Ledger ledger;
  const auto snap = settle_round(w.spec, reports, w.graph, w.keys, ledger);
  ASSERT_EQ(snap.agents.size(), 5u);
  EXPECT_EQ(snap.agent_count, 5u);
  for (const auto& a : snap.agents) {
    EXPECT_EQ(a.scores.reward, 0.0);
    EXPECT_EQ(a.alpha_before, 0.0);
    EXPECT_NEAR(a.scores.consistency_after, 1.0 / 25.0, kTol);  // (1/5)/5
    EXPECT_EQ(a.scores.strength, 5u);
    EXPECT_EQ(a.scores.reliability, 0.0);  // everyone internal: no external peers
  }
  EXPECT_EQ(snap.total_paid, 0.0);
  EXPECT_EQ(snap.warnings.size(), 5u);
  EXPECT_EQ(ledger.find("p0")->t, 1u);
  EXPECT_TRUE(ledger.replay_matches());
}

TEST(Settle, FraudsterFiltered) {
  World w(line(5, 10.0));
  std::vector<SubmittedReport> reports;
  for (std::size_t i = 0; i < 4; ++i) reports.push_back(w.report(i, Signal{1}));
  reports.push_back(w.report(4, Signal{3}, AgentPosition{"", 1000.0, 0.0}));
  Ledger ledger;
  const auto snap = settle_round(w.spec, reports, w.graph, w.keys, ledger);
  ASSERT_EQ(snap.filtered_out.size(), 1u);
  EXPECT_EQ(snap.filtered_out[0].agent_id, "p4");
  EXPECT_EQ(snap.filtered_out[0].reason, kLowRobustness);
  EXPECT_EQ(snap.filtered_out[0].gamma, 0.0);
  EXPECT_EQ(snap.agent_count, 4u);
  EXPECT_EQ(snap.strength_table.total(), 4u);
  EXPECT_FALSE(ledger.find("p4").has_value());
  for (const auto& a : snap.agents) EXPECT_EQ(a.scores.strength, 4u);
}

TEST(Settle, ThreeSurvivorsStayUnderBudget) {
  // a-b internal, c far away from both
  World w({{"a", 0, 0}, {"b", 5, 0}, {"c", 0, 5}}, 50.0);
  Ledger ledger;
  for (int round = 0; round < 30; ++round) {
    std::vector<SubmittedReport> reports;
    for (std::size_t i = 0; i < 3; ++i) reports.push_back(w.report(i, Signal{0}));
    const auto snap = settle_round(w.spec, reports, w.graph, w.keys, ledger);
    EXPECT_LT(snap.total_paid, w.spec.budget);
  }
}

TEST(Settle, InsufficientParticipationLeavesLedgerUntouched) {
  World w(line(4, 10.0));
  Ledger ledger;
  std::vector<SubmittedReport> reports;
  for (std::size_t i = 0; i < 4; ++i) reports.push_back(w.report(i, Signal{0}));
  settle_round(w.spec, reports, w.graph, w.keys, ledger);
  const auto before = ledger.records();

  reports.clear();
  reports.push_back(w.report(0, Signal{0}));
  reports.push_back(w.report(1, Signal{0}));
  reports.push_back(w.report(2, Signal{0}, AgentPosition{"", 5000, 0}));
  reports.push_back(w.report(3, Signal{0}, AgentPosition{"", 5000, 0}));
  try {
    settle_round(w.spec, reports, w.graph, w.keys, ledger);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), kInsufficientParticipation);
  }
  EXPECT_EQ(ledger.records(), before);
  EXPECT_EQ(ledger.journal().size(), 1u);
}

TEST(Filter, VacuousThreshold) {
  World w(line(4, 10.0));
  w.spec.gamma_min = 0.0;
  std::vector<SubmittedReport> reports;
  for (std::size_t i = 0; i < 4; ++i) reports.push_back(w.report(i, Signal{0}, AgentPosition{"", 900, 900}));
  const auto f = filter_reports(w.spec, reports, w.graph, w.keys);
  EXPECT_EQ(f.survivors.size(), 4u);
  EXPECT_TRUE(f.excluded.empty());
}

TEST(Filter, ThresholdComparison) {
  // subject s hears a, b, c at 10, 30 and 45 m; d_threshold 40 -> gamma 2/3
  World w({{"s", 0, 0}, {"a", 10, 0}, {"b", 30, 0}, {"c", 45, 0}}, 50.0);
  w.spec.d_threshold = 40.0;
  w.spec.gamma_min = 0.5;
  std::vector<SubmittedReport> reports{w.report(0, Signal{0})};
  const auto f = filter_reports(w.spec, reports, w.graph, w.keys);
  ASSERT_EQ(f.survivors.size(), 1u);
  EXPECT_NEAR(f.survivors[0].gamma, 2.0 / 3.0, kTol);
  w.spec.gamma_min = 0.7;
  EXPECT_EQ(filter_reports(w.spec, reports, w.graph, w.keys).excluded.size(), 1u);
}

TEST(Filter, IsolatedAgent) {
  World w({{"a", 0, 0}, {"b", 5, 0}, {"z", 900, 0}}, 50.0);
  std::vector<SubmittedReport> reports{w.report(2, Signal{0})};
  EXPECT_TRUE(reports[0].attestations.empty());
  auto f = filter_reports(w.spec, reports, w.graph, w.keys);
  ASSERT_EQ(f.excluded.size(), 1u);
  EXPECT_EQ(f.excluded[0].reason, kLowRobustness);
  w.spec.exempt_isolated = true;
  f = filter_reports(w.spec, reports, w.graph, w.keys);
  EXPECT_EQ(f.survivors.size(), 1u);
}

TEST(Filter, ForgedAttestationExcluded) {
  World w(line(4, 10.0));
  auto r = w.report(0, Signal{0}, AgentPosition{"", 800, 0});
  for (auto& a : r.attestations) a.distance = 1.0;
  std::vector<SubmittedReport> reports{r, w.report(1, Signal{0})};
  const auto f = filter_reports(w.spec, reports, w.graph, w.keys);
  ASSERT_EQ(f.excluded.size(), 1u);
  EXPECT_EQ(f.excluded[0].reason, kForgedAttestation);
  EXPECT_EQ(f.survivors.size(), 1u);
}

TEST(Filter, BadInputs) {
  World w(line(4, 10.0));
  std::vector<SubmittedReport> dup{w.report(0, Signal{0}), w.report(0, Signal{0})};
  EXPECT_THROW(filter_reports(w.spec, dup, w.graph, w.keys), Error);
  std::vector<SubmittedReport> outside{w.report(0, Signal{9})};
  EXPECT_THROW(filter_reports(w.spec, outside, w.graph, w.keys), Error);
  w.spec.gamma_min = 1.5;
  std::vector<SubmittedReport> one{w.report(0, Signal{0})};
  EXPECT_THROW(filter_reports(w.spec, one, w.graph, w.keys), Error);
}

TEST(Settle, ReliabilityUsesSurvivorsOnly) {
  // a, b close; c, d, e far cluster. e is a fraudster whose report would
  // otherwise count as an external disagreement for a and b.
  World w({{"a", 0, 0}, {"b", 5, 0}, {"c", 100, 0}, {"d", 105, 0}, {"e", 110, 0}}, 20.0);
  std::vector<SubmittedReport> reports{w.report(0, Signal{0}), w.report(1, Signal{0}),
                                       w.report(2, Signal{0}), w.report(3, Signal{0}),
                                       w.report(4, Signal{1}, AgentPosition{"", -900, 0})};
  Ledger ledger;
  const auto snap = settle_round(w.spec, reports, w.graph, w.keys, ledger);
  ASSERT_EQ(snap.agent_count, 4u);
  const auto& a = snap.agents[0];
  EXPECT_EQ(a.agent_id, "a");
  EXPECT_NEAR(a.scores.reliability, 0.5, kTol);  // 2/2 external over 1/1 internal + 1
}

TEST(Settle, PropertyRandomRounds) {
  Rng rng(99);
  const Keyring keys(1);
  for (int scenario = 0; scenario < 40; ++scenario) {
    std::vector<AgentPosition> pos;
    const auto n = 4 + rng.below(9);
    for (std::uint64_t i = 0; i < n; ++i) {
      pos.push_back({"p" + std::to_string(i), 120 * rng.uniform01(), 120 * rng.uniform01()});
    }
    QuerySpec spec;
    spec.signal_space = SignalSpace(static_cast<std::uint32_t>(2 + rng.below(4)));
    spec.budget = 1 + 50 * rng.uniform01();
    spec.k = 1 + 2 * rng.uniform01();
    spec.comm_range = 40;
    spec.d_threshold = 40;
    const auto graph = build_peer_graph(pos, spec.comm_range);
    Ledger ledger;
    for (int round = 0; round < 15; ++round) {
      spec.query_id = "r" + std::to_string(round);
      std::vector<SubmittedReport> reports;
      for (const auto& p : pos) {
        SubmittedReport r;
        r.agent_id = p.agent_id;
        r.signal = Signal{static_cast<std::uint32_t>(rng.below(spec.signal_space.cardinality()))};
        r.claimed_position = rng.below(10) == 0 ? AgentPosition{p.agent_id, 2000, 0} : p;
        r.attestations = collect_attestations(graph, pos, r.claimed_position, keys);
        reports.push_back(std::move(r));
      }
      const auto pre = ledger.records();
      RoundSnapshot snap;
      try {
        snap = settle_round(spec, reports, graph, keys, ledger);
      } catch (const Error& e) {
        ASSERT_STREQ(e.what(), kInsufficientParticipation);
        ASSERT_EQ(ledger.records(), pre);
        continue;
      }
      std::map<AgentId, double> before;
      for (const auto& [id, r] : pre) before[id] = r.alpha;
      ASSERT_TRUE(audit_selective_fairness(snap).passed);
      ASSERT_TRUE(audit_cumulative_fairness(before, snap).passed);
      ASSERT_TRUE(audit_bounds(snap).passed);
      const std::vector<RoundSnapshot> one{snap};
      ASSERT_TRUE(audit_budget(one).passed);
    }
    ASSERT_TRUE(ledger.replay_matches());
  }
}

TEST(Settle, ReplayDeterminism) {
  World w(line(6, 15.0));
  std::vector<SubmittedReport> reports;
  for (std::size_t i = 0; i < 6; ++i) reports.push_back(w.report(i, Signal{static_cast<std::uint32_t>(i % 2 == 0 ? 1 : (i == 5 ? 3 : 1))}));
  Ledger l1, l2;
  for (int round = 0; round < 5; ++round) {
    const auto s1 = settle_round(w.spec, reports, w.graph, w.keys, l1);
    const auto s2 = settle_round(w.spec, reports, w.graph, w.keys, l2);
    EXPECT_EQ(to_json(s1).dump(), to_json(s2).dump());
  }
  EXPECT_EQ(l1.records(), l2.records());
}
