#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "minidroid/filters.hpp"
#include "minidroid/geometry.hpp"

// Logical forms: the tree-structured programs the parser emits and the
// interpreter executes. Fields are optional so that partially specified or
// malformed trees are representable; validate() decides what is legal.
namespace minidroid::dsl {

using memory::FiltersClause;

enum class DialogueType { HumanGiveCommand, GetMemory, PutMemory, Noop };
enum class ActionType { Move, Turn, Point, Grasp, Stop, Resume };
enum class Direction { Left, Right, Forward, Back };
enum class ConditionKind { RepeatN, UntilBlocked };

std::string_view to_string(DialogueType v);
std::string_view to_string(ActionType v);
std::string_view to_string(Direction v);
std::string_view to_string(ConditionKind v);
std::optional<DialogueType> dialogue_type_from_string(std::string_view s);
std::optional<ActionType> action_type_from_string(std::string_view s);
std::optional<Direction> direction_from_string(std::string_view s);
std::optional<ConditionKind> condition_kind_from_string(std::string_view s);

/// Token range [start, end) into the tokenized utterance.
struct Span {
  int start = 0;
  int end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

struct ReferenceObjectSpec {
  FiltersClause filters;
  std::optional<Span> text_span;
  friend bool operator==(const ReferenceObjectSpec&, const ReferenceObjectSpec&) = default;
};

struct RelativeLocation {
  Direction direction = Direction::Forward;
  double distance = 0.0;
  friend bool operator==(const RelativeLocation&, const RelativeLocation&) = default;
};

/// Exactly one member must be set.
struct LocationSpec {
  std::optional<ReferenceObjectSpec> reference_object;
  std::optional<Vec2> absolute;
  std::optional<RelativeLocation> relative;
  friend bool operator==(const LocationSpec&, const LocationSpec&) = default;
};

/// Exactly one member must be set. Positive relative_yaw turns left.
struct FacingSpec {
  std::optional<double> relative_yaw;
  std::optional<LocationSpec> location;
  friend bool operator==(const FacingSpec&, const FacingSpec&) = default;
};

struct ConditionSpec {
  ConditionKind kind = ConditionKind::RepeatN;
  std::optional<std::int64_t> n;
  friend bool operator==(const ConditionSpec&, const ConditionSpec&) = default;
};

struct ActionSpec {
  ActionType action_type = ActionType::Move;
  std::optional<LocationSpec> location;
  std::optional<FacingSpec> facing;
  std::optional<ReferenceObjectSpec> reference_object;
  std::optional<ConditionSpec> repeat;
  friend bool operator==(const ActionSpec&, const ActionSpec&) = default;
};

/// Tag assertions applied to the object the speaker points at.
struct UpsertSpec {
  std::set<std::pair<std::string, std::string>> tags;
  friend bool operator==(const UpsertSpec&, const UpsertSpec&) = default;
};

struct LogicalForm {
  DialogueType dialogue_type = DialogueType::Noop;
  std::optional<std::vector<ActionSpec>> action_sequence;
  std::optional<FiltersClause> filters;
  std::optional<UpsertSpec> upsert;
  friend bool operator==(const LogicalForm&, const LogicalForm&) = default;

  static LogicalForm noop() { return {}; }
};

struct Violation {
  std::string path;
  std::string rule;
  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Empty result means the tree is well-formed. When `token_count` is given,
/// spans are also bounds-checked against it.
std::vector<Violation> validate(const LogicalForm& lf, std::optional<int> token_count = std::nullopt);

nlohmann::json to_json(const LogicalForm& lf);
/// Throws ParseError naming the path of the first structural problem.
LogicalForm from_json(const nlohmann::json& j);

nlohmann::json to_json(const ReferenceObjectSpec& r);
ReferenceObjectSpec reference_object_from_json(const nlohmann::json& j, const std::string& path);

/// Sorted keys, no insignificant whitespace: equal texts iff equal trees.
std::string to_canonical(const LogicalForm& lf);
/// Throws ParseError with a byte offset for malformed text.
LogicalForm from_canonical(std::string_view text);

}  // namespace minidroid::dsl
