#pragma once

// Consistency state per agent plus an append-only journal of settled rounds.
// The current records are always the fold of the journal; on disk the journal
// is `ledger.journal.jsonl` (one snapshot per line) and the folded state is
// `ledger.state.json`.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "farm/error.hpp"
#include "farm/snapshot.hpp"

namespace farm {

struct AgentRecord {
  AgentId agent_id;
  double alpha = 0.0;
  std::uint64_t t = 0;
  std::string last_query_id;

  friend bool operator==(const AgentRecord&, const AgentRecord&) = default;
};

using RecordMap = std::map<AgentId, AgentRecord>;

/// Folds a journal from the empty ledger.
inline RecordMap replay(std::span<const RoundSnapshot> journal) {
  RecordMap records;
  for (const auto& snap : journal) {
    for (const auto& a : snap.agents) {
      auto& rec = records[a.agent_id];
      rec.agent_id = a.agent_id;
      rec.alpha = a.scores.consistency_after;
      rec.t += 1;
      rec.last_query_id = snap.query_id;
    }
  }
  return records;
}

/// Equality where a never-committed record (alpha 0, t 0) counts as absent.
inline bool same_committed_state(const RecordMap& a, const RecordMap& b) {
  auto committed = [](const RecordMap& m) {
    RecordMap out;
    for (const auto& [id, r] : m)
      if (r.t > 0 || r.alpha != 0.0 || !r.last_query_id.empty()) out.emplace(id, r);
    return out;
  };
  return committed(a) == committed(b);
}

inline nlohmann::json state_to_json(const RecordMap& records) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& [id, r] : records) {
    agents.push_back({{"agent_id", r.agent_id},
                      {"alpha", r.alpha},
                      {"t", r.t},
                      {"last_query_id", r.last_query_id}});
  }
  return {{"agents", std::move(agents)}};
}

inline RecordMap state_from_json(const nlohmann::json& j) {
  RecordMap out;
  try {
    for (const auto& a : j.at("agents")) {
      AgentRecord r;
      r.agent_id = a.at("agent_id").get<std::string>();
      r.alpha = a.at("alpha").get<double>();
      r.t = a.at("t").get<std::uint64_t>();
      r.last_query_id = a.at("last_query_id").get<std::string>();
      if (!(r.alpha >= 0.0 && r.alpha < 1.0)) throw Error("ledger alpha out of range for " + r.agent_id);
      out.emplace(r.agent_id, std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("ledger state malformed: ") + e.what());
  }
  return out;
}

class Ledger {
 public:
  static constexpr const char* kStateFile = "ledger.state.json";
  static constexpr const char* kJournalFile = "ledger.journal.jsonl";

  /// In-memory ledger.
  Ledger() = default;

  /// Ledger persisted under `dir` (created if needed). An existing journal is
  /// replayed; an existing state file must agree with that replay.
  static Ledger open(const std::filesystem::path& dir) {
    Ledger l;
    l.dir_ = dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create ledger directory " + dir.string() + ": " + ec.message());

    const auto journal_path = dir / kJournalFile;
    if (std::filesystem::exists(journal_path)) {
      std::ifstream in(journal_path);
      if (!in) throw Error("cannot read " + journal_path.string());
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
          l.journal_.push_back(snapshot_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
          throw Error(journal_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
      }
    }
    l.records_ = replay(l.journal_);

    const auto state_path = dir / kStateFile;
    if (std::filesystem::exists(state_path)) {
      std::ifstream in(state_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error("ledger state malformed: " + std::string(e.what()));
      }
      auto stored = state_from_json(j);
      if (!same_committed_state(stored, l.records_)) {
        throw Error("ledger state does not match journal replay in " + dir.string());
      }
      // keep registered-but-uncommitted agents
      for (auto& [id, r] : stored) l.records_.try_emplace(id, std::move(r));
    }
    return l;
  }

  const AgentRecord& get_or_create(const AgentId& id) {
    auto [it, _] = records_.try_emplace(id, AgentRecord{id, 0.0, 0, {}});
    return it->second;
  }

  std::optional<AgentRecord> find(const AgentId& id) const {
    auto it = records_.find(id);
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  /// alpha for an agent, 0 when unknown; never creates a record.
  double alpha_of(const AgentId& id) const {
    auto it = records_.find(id);
    return it == records_.end() ? 0.0 : it->second.alpha;
  }

  /// Appends the snapshot and moves every survivor's record forward. Either
  /// everything (memory and disk) changes or nothing does.
  void commit_round(const RoundSnapshot& snap) {
    check_consistent(snap);
    RecordMap next = records_;
    for (const auto& a : snap.agents) {
      auto it = next.find(a.agent_id);
      if (it == next.end()) throw Error("unregistered agent " + a.agent_id);
      it->second.alpha = a.scores.consistency_after;
      it->second.t += 1;
      it->second.last_query_id = snap.query_id;
    }
    if (dir_) persist(snap, next);
    journal_.push_back(snap);
    records_ = std::move(next);
  }

  const RecordMap& records() const { return records_; }
  const std::vector<RoundSnapshot>& journal() const { return journal_; }
  const std::optional<std::filesystem::path>& directory() const { return dir_; }

  bool replay_matches() const { return same_committed_state(replay(journal_), records_); }

 private:
  static void check_consistent(const RoundSnapshot& snap) {
    double sum = 0.0;
    for (const auto& a : snap.agents) {
      const double alpha = a.scores.consistency_after;
      if (!(alpha >= 0.0 && alpha < 1.0)) throw Error("snapshot alpha out of range for " + a.agent_id);
      if (!(a.scores.reward >= 0.0)) throw Error("snapshot reward negative for " + a.agent_id);
      sum += a.scores.reward;
    }
    if (sum != snap.total_paid) throw Error("snapshot total_paid does not match rewards");
    if (!(snap.total_paid < snap.budget)) throw Error("snapshot exceeds budget");
  }

  void persist(const RoundSnapshot& snap, const RecordMap& next) const {
    const auto journal_path = *dir_ / kJournalFile;
    const auto state_path = *dir_ / kStateFile;
    const auto tmp_path = *dir_ / (std::string(kStateFile) + ".tmp");

    std::error_code ec;
    const auto old_size =
        std::filesystem::exists(journal_path) ? std::filesystem::file_size(journal_path) : 0;
    auto rollback = [&] {
      std::error_code ignore;
      if (std::filesystem::exists(journal_path, ignore))
        std::filesystem::resize_file(journal_path, old_size, ignore);
      std::filesystem::remove(tmp_path, ignore);
    };

    {
      std::ofstream out(journal_path, std::ios::app | std::ios::binary);
      out << to_json(snap).dump() << '\n';
      out.flush();
      if (!out) {
        rollback();
        throw Error("ledger write failed: " + journal_path.string());
      }
    }
    {
      std::ofstream out(tmp_path, std::ios::trunc | std::ios::binary);
      out << state_to_json(next).dump(2) << '\n';
      out.flush();
      if (!out) {
        rollback();
        throw Error("ledger write failed: " + tmp_path.string());
      }
    }
    std::filesystem::rename(tmp_path, state_path, ec);
    if (ec) {
      rollback();
      throw Error("ledger write failed: " + ec.message());
    }
  }

  std::optional<std::filesystem::path> dir_;
  RecordMap records_;
  std::vector<RoundSnapshot> journal_;
};

}  // namespace farm
