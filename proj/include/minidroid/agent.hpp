#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "minidroid/interpreter.hpp"
#include "minidroid/memory.hpp"
#include "minidroid/nlparser.hpp"
#include "minidroid/perception.hpp"
#include "minidroid/tasks.hpp"
#include "minidroid/world.hpp"

namespace minidroid::core {

struct AgentConfig {
  int slow_perception_period = 10;
  Tick clarification_window = 200;
  double dedup_distance = 0.75;
  double dedup_similarity = 0.9;
  double max_step = 0.25;
  double max_turn = 0.3;
  double grasp_range = 0.6;
  double move_tolerance = 0.5;
  int blocked_limit = 10;
  double fov_half_angle_deg = 60.0;
  double view_range = 6.0;
  double jitter_sigma = 0.0;
  Tick attention_horizon = 300;
  bool idle_question = false;
  Tick idle_question_period = 100;
  int gateway_port = 0;
  std::string scenario;
  std::size_t chat_history = 20;
  int state_every = 1;

  /// key=value lines, '#' comments. Throws ParseError (1-based line) or
  /// Error(validation).
  static AgentConfig parse(std::string_view text);
  static AgentConfig load(const std::string& path);
  void validate() const;

  world::WorldConfig world() const;
  tasks::TaskConfig tasks() const;
  perception::PerceptionConfig perception() const;
  interp::InterpConfig interp() const;
};

struct ChatMessage {
  std::string speaker;
  std::string text;
};
struct TeleopMessage {
  std::string command;  // forward, back, left, right, stop, resume
};
struct TagMessage {
  memory::Memid memid;
  std::string tag;
};
struct PauseMessage {};
struct ResumeMessage {};

using InboxMessage = std::variant<ChatMessage, TeleopMessage, TagMessage, PauseMessage, ResumeMessage>;

bool is_teleop_command(std::string_view command);

/// Inbound channel into the agent loop; safe to push from any thread.
class Inbox {
 public:
  void push(InboxMessage msg);
  std::vector<InboxMessage> drain();

 private:
  std::mutex mu_;
  std::vector<InboxMessage> items_;
};

struct PhaseEntry {
  std::string phase;
  std::vector<std::pair<std::string, std::string>> fields;

  PhaseEntry& add(std::string key, std::string value) {
    fields.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  std::optional<std::string> get(std::string_view key) const;
};

inline constexpr const char* kPhaseOrder[] = {"fast_perception", "memory_update", "controller_step", "task_step"};

struct TickTrace {
  Tick tick = 0;
  std::vector<PhaseEntry> phases;
};

/// One line per phase entry: `tick=<n> phase=<name> key=value ...`.
std::string dump(const TickTrace& trace);

/// Immutable copy of agent state for other threads and for the CLI.
struct AgentSnapshot {
  Tick tick = 0;
  nlohmann::json doc;
};

struct ChatScriptLine {
  Tick tick = 0;
  std::string text;
};

/// Lines of `<tick> <text>`; '#' at line start is a comment. Throws
/// ParseError with the 1-based line.
std::vector<ChatScriptLine> parse_chat_script(std::string_view text);

struct LastParse {
  std::string utterance;
  std::string lf_text;
  std::optional<int> matched_template;
};

class Agent {
 public:
  explicit Agent(world::WorldState world, AgentConfig config = {});

  /// One pass of the event loop; the world advances exactly one tick.
  TickTrace tick();

  void inject_chat(std::string speaker, std::string text) { inbox_.push(ChatMessage{std::move(speaker), std::move(text)}); }
  Inbox& inbox() { return inbox_; }

  AgentSnapshot snapshot(bool include_memory = false) const;

  void set_perception(std::unique_ptr<perception::PerceptionModule> p) { perception_ = std::move(p); }
  void set_parser(std::shared_ptr<const nlp::SemanticParser> p) { parser_ = std::move(p); }
  void set_controller(std::unique_ptr<interp::Controller> c) { controller_ = std::move(c); }

  const world::WorldState& world() const { return world_; }
  memory::MemoryStore& memory() { return memory_; }
  const memory::MemoryStore& memory() const { return memory_; }
  tasks::TaskQueue& tasks() { return tasks_; }
  const tasks::TaskQueue& tasks() const { return tasks_; }
  interp::Controller& controller() { return *controller_; }
  const AgentConfig& config() const { return config_; }
  const std::optional<LastParse>& last_parse() const { return last_parse_; }

 private:
  void phase_fast(PhaseEntry& e, std::vector<InboxMessage>& inbound);
  void phase_memory(PhaseEntry& e, const std::vector<InboxMessage>& inbound);
  void phase_controller(PhaseEntry& e, const std::vector<InboxMessage>& inbound);
  void phase_tasks(PhaseEntry& e, bool& world_stepped);
  void step_world(const world::ActionCommand& cmd);
  void teleop(const std::string& command, PhaseEntry& e);

  AgentConfig config_;
  world::WorldConfig world_config_;
  tasks::TaskConfig task_config_;
  interp::InterpConfig interp_config_;
  perception::PerceptionConfig perception_config_;
  world::WorldState world_;
  memory::MemoryStore memory_;
  tasks::TaskQueue tasks_;
  std::unique_ptr<perception::PerceptionModule> perception_;
  std::shared_ptr<const nlp::SemanticParser> parser_;
  std::unique_ptr<interp::Controller> controller_;
  Inbox inbox_;
  std::vector<perception::Detection> pending_detections_;
  std::optional<LastParse> last_parse_;
};

}  // namespace minidroid::core
