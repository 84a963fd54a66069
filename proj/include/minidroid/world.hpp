#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "minidroid/geometry.hpp"

// Deterministic 2D world the agent's action and observation interfaces run
// against. Positions are continuous; every body is a disc, walls are
// axis-aligned rectangles, and the agent itself is treated as a point.
namespace minidroid::world {

inline constexpr std::size_t kFeatureDim = 16;
using FeatureVec = std::array<double, kFeatureDim>;

/// Unit-norm pseudo-feature vector, a pure function of `seed`.
FeatureVec feature_vector(std::uint64_t seed);

struct WorldObject {
  int oid = 0;
  std::string class_label;
  std::vector<std::string> properties;
  Vec2 position;
  double radius = 0.0;
  std::uint64_t feature_seed = 0;

  friend bool operator==(const WorldObject&, const WorldObject&) = default;
  FeatureVec features() const { return feature_vector(feature_seed); }
};

struct ScriptedChat {
  Tick tick = 0;
  std::string text;
  friend bool operator==(const ScriptedChat&, const ScriptedChat&) = default;
};

/// `target == nullopt` lowers the arm.
struct ScriptedPoint {
  Tick tick = 0;
  std::optional<Vec2> target;
  friend bool operator==(const ScriptedPoint&, const ScriptedPoint&) = default;
};

struct HumanAvatar {
  Pose pose;
  std::optional<Vec2> pointing_target;
  // Utterances spoken at the current tick.
  std::vector<std::string> pending_chats;
  std::vector<ScriptedChat> chat_script;
  std::vector<ScriptedPoint> point_script;

  friend bool operator==(const HumanAvatar&, const HumanAvatar&) = default;
};

struct WorldConfig {
  double max_step = 0.25;
  double grasp_range = 0.6;
  double fov_half_angle = kPi / 3.0;
  double view_range = 6.0;
  double jitter_sigma = 0.0;
};

struct Forward {
  double distance = 0.0;
};
struct Turn {
  double delta = 0.0;
};
struct Grasp {
  int oid = 0;
};
struct PointAt {
  std::optional<Vec2> target;
};
struct Noop {};

using ActionCommand = std::variant<Forward, Turn, Grasp, PointAt, Noop>;

std::string describe(const ActionCommand& cmd);

enum class CommandStatus { ok, blocked, failed, rejected };
std::string_view to_string(CommandStatus s);

struct CommandOutcome {
  CommandStatus status = CommandStatus::ok;
  std::string reason;
  friend bool operator==(const CommandOutcome&, const CommandOutcome&) = default;
};

struct WorldState {
  Vec2 origin;
  double width = 0.0;
  double height = 0.0;
  std::uint64_t seed = 0;
  std::vector<WorldObject> objects;  // on the floor, ascending oid
  std::vector<Rect> walls;
  Pose agent_pose;
  std::optional<WorldObject> held;
  std::optional<Vec2> agent_pointing;
  std::optional<HumanAvatar> human;
  Tick tick = 0;
  CommandOutcome last_outcome;

  friend bool operator==(const WorldState&, const WorldState&) = default;

  Rect bounds() const { return {origin, {origin.x + width, origin.y + height}}; }
  bool blocked() const { return last_outcome.status == CommandStatus::blocked; }
  const WorldObject* find(int oid) const;
};

struct HumanView {
  Pose pose;
  std::optional<Vec2> pointing_target;
};

struct WorldView {
  Tick tick = 0;
  Rect bounds;
  Pose agent_pose;
  std::optional<WorldObject> held;
  std::vector<WorldObject> objects;  // visible floor objects, ascending oid
  std::optional<HumanView> human;
};

/// Advances the world by exactly one tick under `cmd`.
WorldState step_physics(const WorldState& state, const ActionCommand& cmd, const WorldConfig& config);

/// Field-of-view test shared by observe() and tests.
bool in_view(const Pose& viewer, Vec2 p, const WorldConfig& config);

WorldView observe(const WorldState& state, const WorldConfig& config);

/// Parses the line-oriented scenario format (docs/scenario-format.md).
/// Throws ParseError carrying the 1-based line, or Error(validation).
WorldState load_scenario(std::string_view text);
WorldState load_scenario_file(const std::string& path);

/// Checks the world invariants; throws Error(validation) on the first breach.
void validate(const WorldState& state);

/// Stable, exact textual dump (hex floats) used for determinism checks.
std::string dump(const WorldState& state);

}  // namespace minidroid::world
