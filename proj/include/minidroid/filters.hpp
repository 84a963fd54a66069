#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "minidroid/geometry.hpp"

namespace minidroid::memory {

enum class NodeType { ReferenceObject, Self, Player, Triple, Chat, Task, Program, Set, Archive };

inline constexpr std::size_t kNodeTypeCount = 9;

/// Upper-case wire names: REFERENCE_OBJECT, SELF, ...
std::string_view to_string(NodeType t);
std::optional<NodeType> node_type_from_string(std::string_view s);

struct WithinClause {
  Vec2 center;
  double distance = 0.0;
  friend bool operator==(const WithinClause&, const WithinClause&) = default;
};

enum class SelectorKind { argmin, argmax };

/// Orders matches by distance to `point`: ascending for argmin,
/// descending for argmax.
struct DistanceSelector {
  SelectorKind kind = SelectorKind::argmin;
  Vec2 point;
  friend bool operator==(const DistanceSelector&, const DistanceSelector&) = default;
};

/// Conjunctive memory query. A tag (p, v) holds for a node when some triple
/// has that node as subject, predicate p and object v (a literal, or a memid
/// rendered as hex).
struct FiltersClause {
  std::set<std::pair<std::string, std::string>> tags;
  std::optional<NodeType> node_type;
  std::optional<WithinClause> within;
  std::optional<DistanceSelector> selector;
  std::optional<std::int64_t> limit;

  friend bool operator==(const FiltersClause&, const FiltersClause&) = default;

  bool has_constraint() const { return !tags.empty() || node_type || within || selector; }
  FiltersClause& tag(std::string predicate, std::string value) {
    tags.emplace(std::move(predicate), std::move(value));
    return *this;
  }
};

/// Keys with special meaning inside a filters document; every other key is
/// a triple predicate.
bool is_reserved_filter_key(std::string_view key);

/// Rule violations as "path: message" strings; empty when valid.
std::vector<std::string> check(const FiltersClause& f, const std::string& path = "filters");

nlohmann::json to_json(const FiltersClause& f);

/// Throws ParseError naming the offending path.
FiltersClause filters_from_json(const nlohmann::json& j, const std::string& path = "filters");

/// Parses filters document text, e.g. {"has_tag":"chair"}.
FiltersClause parse_filters(std::string_view text);

/// Human-readable noun phrase for a clause ("red chair").
std::string describe_phrase(const FiltersClause& f);

}  // namespace minidroid::memory
