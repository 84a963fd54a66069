#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "minidroid/filters.hpp"
#include "minidroid/geometry.hpp"
#include "minidroid/world.hpp"

namespace minidroid::memory {

/// 128-bit memory-node identifier, rendered as 32 lowercase hex chars.
struct Memid {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  friend auto operator<=>(const Memid&, const Memid&) = default;
  bool is_null() const { return hi == 0 && lo == 0; }
  std::string hex() const;
  static std::optional<Memid> parse(std::string_view hex);
};

struct MemidHash {
  std::size_t operator()(const Memid& m) const noexcept { return std::hash<std::uint64_t>{}(m.hi ^ (m.lo * 0x9e3779b97f4a7c15ULL)); }
};

struct ReferenceObjectPayload {
  Vec2 position;
  double radius = 0.0;
  std::string class_label;
  world::FeatureVec feature_vec{};
  Tick last_seen_tick = 0;
  // Detector-side track id, used to address the object in grasp commands.
  std::optional<int> track_id;
  friend bool operator==(const ReferenceObjectPayload&, const ReferenceObjectPayload&) = default;
};

struct SelfPayload {
  Pose pose;
  std::optional<int> held_track_id;
  friend bool operator==(const SelfPayload&, const SelfPayload&) = default;
};

struct PlayerPayload {
  std::string name;
  Pose pose;
  Tick last_seen_tick = 0;
  // Most recent location the player pointed at, and when.
  std::optional<Vec2> attention;
  Tick attention_tick = 0;
  friend bool operator==(const PlayerPayload&, const PlayerPayload&) = default;
};

struct TriplePayload {
  Memid subject;
  std::string predicate;
  std::variant<Memid, std::string> object;
  double confidence = 1.0;
  friend bool operator==(const TriplePayload&, const TriplePayload&) = default;

  /// Object as matched by tag constraints: the literal, or the memid hex.
  std::string object_text() const;
};

struct ChatPayload {
  std::string speaker;
  std::string text;
  friend bool operator==(const ChatPayload&, const ChatPayload&) = default;
};

struct TaskChildRecord {
  std::string kind;
  std::string status;
  friend bool operator==(const TaskChildRecord&, const TaskChildRecord&) = default;
};

struct TaskPayload {
  int task_id = 0;
  std::string kind;
  std::string status;
  int priority = 0;
  std::string description;
  std::vector<TaskChildRecord> children;
  friend bool operator==(const TaskPayload&, const TaskPayload&) = default;
};

struct ProgramPayload {
  std::string lf_text;
  std::string outcome;
  friend bool operator==(const ProgramPayload&, const ProgramPayload&) = default;
};

struct SetPayload {
  std::string name;
  std::vector<Memid> members;
  friend bool operator==(const SetPayload&, const SetPayload&) = default;
};

struct ArchivePayload {
  Memid source_memid;
  NodeType source_type = NodeType::ReferenceObject;
  // Serialized payload of the source at archive time; never rewritten.
  std::string snapshot;
  Tick archived_at_tick = 0;
  friend bool operator==(const ArchivePayload&, const ArchivePayload&) = default;
};

// Alternative order mirrors NodeType.
using Payload = std::variant<ReferenceObjectPayload, SelfPayload, PlayerPayload, TriplePayload, ChatPayload,
                             TaskPayload, ProgramPayload, SetPayload, ArchivePayload>;

inline NodeType node_type_of(const Payload& p) { return static_cast<NodeType>(p.index()); }

nlohmann::json payload_to_json(const Payload& p);
Payload payload_from_json(NodeType type, const nlohmann::json& j);

/// Decodes an archive's frozen snapshot.
Payload archived_payload(const ArchivePayload& a);

struct MemoryNode {
  Memid memid;
  NodeType node_type = NodeType::ReferenceObject;
  Tick created_tick = 0;
  Tick last_accessed_tick = 0;
  Payload payload;
  friend bool operator==(const MemoryNode&, const MemoryNode&) = default;

  /// Spatial location for reference objects, self and players.
  std::optional<Vec2> position() const;
};

/// The agent's relational store: a node table keyed by Memid with secondary
/// indexes on node type and on (predicate, object) for triples.
class MemoryStore {
 public:
  explicit MemoryStore(std::uint64_t seed = 0);

  Memid create_node(NodeType type, Payload payload, Tick tick);
  Memid create_node(Payload payload, Tick tick) {
    const auto t = node_type_of(payload);
    return create_node(t, std::move(payload), tick);
  }

  /// Returns a copy and bumps last_accessed_tick. Throws Error(not_found).
  MemoryNode get_node(const Memid& id, Tick tick);

  /// Read without touching access time; nullptr when absent.
  const MemoryNode* peek(const Memid& id) const;
  bool contains(const Memid& id) const { return peek(id) != nullptr; }

  Memid add_triple(const Memid& subject, const std::string& predicate, std::variant<Memid, std::string> object,
                   Tick tick, double confidence = 1.0);
  bool has_triple(const Memid& subject, std::string_view predicate, std::string_view object_text) const;
  /// (predicate, object_text) pairs with `subject` as subject, sorted.
  std::vector<std::pair<std::string, std::string>> triples_about(const Memid& subject) const;

  Memid archive(const Memid& id, Tick tick);

  std::vector<Memid> query(const FiltersClause& filters, Tick tick);

  Memid upsert_reference_object(const std::optional<Memid>& id, const ReferenceObjectPayload& payload, Tick tick);

  /// Replaces a node's payload in place; node type must not change.
  void replace_payload(const Memid& id, Payload payload, Tick tick);

  /// Removes a node together with every triple that mentions it.
  void delete_node(const Memid& id);

  /// All memids of a type, in insertion order.
  std::vector<Memid> of_type(NodeType type) const;
  /// All nodes in insertion order (no access-time update).
  std::vector<const MemoryNode*> nodes() const;

  std::size_t size() const { return rows_.size(); }
  std::size_t count(NodeType type) const { return by_type_[static_cast<std::size_t>(type)].size(); }

  std::string dump() const;
  static MemoryStore load(std::string_view text);

 private:
  using Seq = std::uint64_t;

  Memid next_memid();
  Seq insert(MemoryNode node);
  void index_triple(const MemoryNode& node, Seq seq);
  void unindex_triple(const MemoryNode& node, Seq seq);
  void touch(MemoryNode& node, Tick tick);
  void validate_payload(NodeType type, const Payload& payload) const;

  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  Seq next_seq_ = 0;
  std::map<Seq, MemoryNode> rows_;
  std::unordered_map<Memid, Seq, MemidHash> by_memid_;
  std::array<std::set<Seq>, kNodeTypeCount> by_type_;
  // (predicate, object_text) -> subject -> triple rows
  std::map<std::pair<std::string, std::string>, std::map<Memid, std::set<Seq>>> by_pred_value_;
  std::unordered_map<Memid, std::set<Seq>, MemidHash> triples_by_subject_;
  std::unordered_map<Memid, std::set<Seq>, MemidHash> triples_by_object_;
};

}  // namespace minidroid::memory
