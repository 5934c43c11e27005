#pragma once

// Who can hear whom. Internal peers are the agents within device-to-device
// range of an agent (true positions); everyone else is external. Internal
// peers attest the distance to an agent's claimed position, and the fraction
// of attestations within the threshold is the agent's location robustness.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "farm/error.hpp"
#include "farm/mechanism.hpp"

namespace farm {

using AgentId = std::string;

struct AgentPosition {
  AgentId agent_id;
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const AgentPosition& a, const AgentPosition& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

class PeerGraph {
 public:
  struct Peers {
    std::set<AgentId> internal;
    std::set<AgentId> external;
  };

  PeerGraph() = default;

  /// Builds the partition from explicit internal-peer sets. Every agent must
  /// appear as a key; the relation must be symmetric and irreflexive.
  static PeerGraph from_internal_sets(const std::map<AgentId, std::set<AgentId>>& internal,
                                      double comm_range = 0.0) {
    PeerGraph g;
    g.comm_range_ = comm_range;
    for (const auto& [id, peers] : internal) {
      auto& entry = g.peers_[id];
      for (const auto& p : peers) {
        if (p == id) throw Error("agent " + id + " cannot be its own peer");
        auto it = internal.find(p);
        if (it == internal.end()) throw Error("unknown peer " + p);
        if (!it->second.contains(id)) throw Error("peer relation not symmetric: " + id + "/" + p);
        entry.internal.insert(p);
      }
    }
    for (auto& [id, entry] : g.peers_) {
      for (const auto& [other, _] : internal) {
        if (other != id && !entry.internal.contains(other)) entry.external.insert(other);
      }
    }
    return g;
  }

  bool contains(const AgentId& id) const { return peers_.contains(id); }

  const Peers& peers(const AgentId& id) const {
    auto it = peers_.find(id);
    if (it == peers_.end()) throw Error("agent " + id + " not in peer graph");
    return it->second;
  }
  const std::set<AgentId>& internal(const AgentId& id) const { return peers(id).internal; }
  const std::set<AgentId>& external(const AgentId& id) const { return peers(id).external; }

  std::vector<AgentId> agents() const {
    std::vector<AgentId> out;
    out.reserve(peers_.size());
    for (const auto& [id, _] : peers_) out.push_back(id);
    return out;
  }
  std::size_t size() const { return peers_.size(); }
  double comm_range() const { return comm_range_; }

  /// The same partition over a subset of agents (ids not in the graph are
  /// ignored).
  PeerGraph restricted_to(const std::set<AgentId>& keep) const {
    PeerGraph g;
    g.comm_range_ = comm_range_;
    for (const auto& [id, entry] : peers_) {
      if (!keep.contains(id)) continue;
      auto& out = g.peers_[id];
      for (const auto& p : entry.internal)
        if (keep.contains(p)) out.internal.insert(p);
      for (const auto& p : entry.external)
        if (keep.contains(p)) out.external.insert(p);
    }
    return g;
  }

 private:
  friend PeerGraph build_peer_graph(std::span<const AgentPosition>, double);

  std::map<AgentId, Peers> peers_;
  double comm_range_ = 0.0;
};

/// j is internal to i iff their distance is within comm_range.
inline PeerGraph build_peer_graph(std::span<const AgentPosition> positions, double comm_range) {
  if (!(comm_range > 0.0)) throw Error("comm_range must be positive");
  PeerGraph g;
  g.comm_range_ = comm_range;
  for (const auto& p : positions) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error("non-finite position for agent " + p.agent_id);
    }
    if (!g.peers_.emplace(p.agent_id, PeerGraph::Peers{}).second) {
      throw Error("duplicate agent id " + p.agent_id);
    }
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      const auto& a = positions[i];
      const auto& b = positions[j];
      const bool near = distance(a, b) <= comm_range;
      auto& pa = g.peers_[a.agent_id];
      auto& pb = g.peers_[b.agent_id];
      (near ? pa.internal : pa.external).insert(b.agent_id);
      (near ? pb.internal : pb.external).insert(a.agent_id);
    }
  }
  return g;
}

struct DistanceAttestation {
  AgentId attester_id;
  AgentId subject_id;
  double distance = 0.0;
  std::uint64_t auth_tag = 0;
};

/// Stand-in for per-attester signing keys: a keyed 64-bit digest over
/// (attester, subject, distance). Not cryptography; it only has to make
/// altered fields detectable inside the simulator.
class Keyring {
 public:
  explicit Keyring(std::uint64_t secret = 0x9e3779b97f4a7c15ULL) : secret_(secret) {}

  std::uint64_t sign(const AgentId& attester, const AgentId& subject, double dist) const {
    std::uint64_t h = mix(secret_ ^ digest(attester, 0xcbf29ce484222325ULL));
    h = digest(subject, h ^ 0x5bd1e995ULL);
    h ^= std::bit_cast<std::uint64_t>(dist);
    return mix(h);
  }

  bool verify(const DistanceAttestation& a) const {
    return a.auth_tag == sign(a.attester_id, a.subject_id, a.distance);
  }

 private:
  static std::uint64_t digest(const std::string& s, std::uint64_t h) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    // length terminator keeps ("ab","c") and ("a","bc") apart
    h ^= s.size();
    h *= 0x100000001b3ULL;
    return h;
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t secret_;
};

/// Each internal peer of the claimant measures from its own true position to
/// the claimed position and signs the result.
inline std::vector<DistanceAttestation> collect_attestations(
    const PeerGraph& graph, std::span<const AgentPosition> positions,
    const AgentPosition& claimed, const Keyring& keys) {
  std::vector<DistanceAttestation> out;
  for (const auto& peer : graph.internal(claimed.agent_id)) {
    auto it = std::find_if(positions.begin(), positions.end(),
                           [&](const AgentPosition& p) { return p.agent_id == peer; });
    if (it == positions.end()) throw Error("no position for peer " + peer);
    const double d = distance(*it, claimed);
    out.push_back({peer, claimed.agent_id, d, keys.sign(peer, claimed.agent_id, d)});
  }
  return out;
}

/// Location robustness straight from a list of attestations; any bad tag
/// invalidates the whole list.
inline double robustness_from_attestations(std::span<const DistanceAttestation> atts,
                                           double d_threshold, const Keyring& keys) {
  std::vector<double> distances;
  distances.reserve(atts.size());
  for (const auto& a : atts) {
    if (!keys.verify(a)) throw Error("forged attestation");
    distances.push_back(a.distance);
  }
  return location_robustness(distances, d_threshold);
}

/// Robustness of `subject` against the peer graph: the denominator is the
/// subject's true internal peer count, so withheld attestations count as
/// failures. Attestations must be authentic, about the subject, from distinct
/// internal peers.
inline double attested_robustness(const AgentId& subject,
                                  std::span<const DistanceAttestation> atts,
                                  const PeerGraph& graph, double d_threshold,
                                  const Keyring& keys) {
  if (!(d_threshold > 0.0)) throw Error("distance threshold must be positive");
  const auto& internal = graph.internal(subject);
  std::set<AgentId> seen;
  std::vector<double> distances;
  for (const auto& a : atts) {
    if (!keys.verify(a) || a.subject_id != subject || !internal.contains(a.attester_id) ||
        !seen.insert(a.attester_id).second) {
      throw Error("forged attestation");
    }
    distances.push_back(a.distance);
  }
  if (internal.empty()) return 0.0;
  // pad with unreachable distances for peers that did not attest
  distances.resize(internal.size(), std::numeric_limits<double>::infinity());
  std::size_t within = 0;
  for (double d : distances) {
    if (!(d >= 0.0)) throw Error("invalid attestation");
    if (d <= d_threshold) ++within;
  }
  return static_cast<double>(within) / static_cast<double>(internal.size());
}

}  // namespace farm
