#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "minidroid/dsl.hpp"
#include "minidroid/memory.hpp"
#include "minidroid/tasks.hpp"

namespace minidroid::interp {

struct InterpConfig {
  Tick clarification_window = 200;
  Tick attention_horizon = 300;
  int point_hold_ticks = 10;
  double move_tolerance = 0.5;
  // Off by default: when idle, ask "what is this?" about an object not yet
  // asked about.
  bool idle_question = false;
  Tick idle_question_period = 100;
};

inline constexpr int kClarifyPriority = 3;
inline constexpr int kInterpretPriority = 2;
inline constexpr int kDescribePriority = 1;
inline constexpr int kWaitingClarifyPriority = 0;

struct NeedsClarification {
  memory::FiltersClause filters;
  std::string phrase;
};

template <class T>
using Resolved = std::variant<T, NeedsClarification>;

struct LocationTarget {
  Vec2 point;
  std::optional<memory::Memid> object;
};

/// The attention point of `speaker` (falling back to any player), if it is
/// recorded and no older than `horizon` ticks.
std::optional<Vec2> attention_point(const memory::MemoryStore& memory, const std::string& speaker, Tick tick,
                                    Tick horizon);

/// The agent position recorded in the Self node.
std::optional<Pose> agent_pose(const memory::MemoryStore& memory);

/// Matches among ReferenceObjects; with several, the one nearest the
/// speaker's attention point, else nearest the agent.
Resolved<memory::Memid> resolve_reference_object(const dsl::ReferenceObjectSpec& spec, memory::MemoryStore& memory,
                                                 const std::string& speaker, Tick tick, Tick horizon = 300);

Resolved<LocationTarget> resolve_location(const dsl::LocationSpec& loc, memory::MemoryStore& memory,
                                          const Pose& agent_pose, const std::string& speaker, Tick tick,
                                          Tick horizon = 300);

struct DialogueContext {
  memory::MemoryStore& memory;
  tasks::TaskQueue& tasks;
  Tick tick;
  const InterpConfig& config;
};

enum class DialogueKind { Interpret, Clarify, DescribeQueue, PutMemory, InfoSeek };
std::string_view to_string(DialogueKind k);

class DialogueObject;

struct StepResult {
  bool done = false;
  std::vector<std::unique_ptr<DialogueObject>> spawned;
  std::vector<int> tasks_pushed;
  std::vector<memory::Memid> targets;
  std::vector<std::string> chats;
};

class DialogueObject {
 public:
  explicit DialogueObject(std::string speaker) : speaker_(std::move(speaker)) {}
  virtual ~DialogueObject() = default;
  virtual DialogueKind kind() const = 0;
  virtual int priority() const = 0;
  virtual std::string describe() const { return std::string(to_string(kind())); }
  virtual StepResult step(DialogueContext& ctx) = 0;
  const std::string& speaker() const { return speaker_; }

 protected:
  /// Writes an agent ChatNode and records it in `out`.
  static void say(DialogueContext& ctx, StepResult& out, std::string text);

 private:
  std::string speaker_;
};

class InterpretObject : public DialogueObject {
 public:
  InterpretObject(dsl::LogicalForm lf, std::string speaker) : DialogueObject(std::move(speaker)), lf_(std::move(lf)) {}
  DialogueKind kind() const override { return DialogueKind::Interpret; }
  int priority() const override { return kInterpretPriority; }
  StepResult step(DialogueContext& ctx) override;
  const dsl::LogicalForm& lf() const { return lf_; }

 private:
  dsl::LogicalForm lf_;
};

/// Asks once, then waits at low priority for the pending filters to match
/// something in memory (by pointing plus "that is a ...", or a dashboard tag);
/// the original form is then re-dispatched.
class ClarifyObject : public DialogueObject {
 public:
  ClarifyObject(dsl::LogicalForm lf, NeedsClarification pending, std::string speaker)
      : DialogueObject(std::move(speaker)), lf_(std::move(lf)), pending_(std::move(pending)) {}
  DialogueKind kind() const override { return DialogueKind::Clarify; }
  int priority() const override { return asked_at_ ? kWaitingClarifyPriority : kClarifyPriority; }
  std::string describe() const override;
  StepResult step(DialogueContext& ctx) override;
  const NeedsClarification& pending() const { return pending_; }
  static std::string question(const std::string& phrase);

 private:
  dsl::LogicalForm lf_;
  NeedsClarification pending_;
  std::optional<Tick> asked_at_;
};

class DescribeQueueObject : public DialogueObject {
 public:
  using DialogueObject::DialogueObject;
  DialogueKind kind() const override { return DialogueKind::DescribeQueue; }
  int priority() const override { return kDescribePriority; }
  StepResult step(DialogueContext& ctx) override;
};

class PutMemoryObject : public DialogueObject {
 public:
  PutMemoryObject(dsl::LogicalForm lf, std::string speaker) : DialogueObject(std::move(speaker)), lf_(std::move(lf)) {}
  DialogueKind kind() const override { return DialogueKind::PutMemory; }
  int priority() const override { return kDescribePriority; }
  StepResult step(DialogueContext& ctx) override;

 private:
  dsl::LogicalForm lf_;
};

/// Idle behaviour: point at the nearest object not yet asked about and ask
/// what it is.
class InfoSeekObject : public DialogueObject {
 public:
  InfoSeekObject() : DialogueObject("agent") {}
  DialogueKind kind() const override { return DialogueKind::InfoSeek; }
  int priority() const override { return 0; }
  StepResult step(DialogueContext& ctx) override;
};

/// Builds the dialogue object for a validated form; nullptr for NOOP.
/// Throws Error(validation) listing the violations of an invalid form.
std::unique_ptr<DialogueObject> make_dialogue_object(const dsl::LogicalForm& lf, const std::string& speaker);

struct DialogueInfo {
  int id = 0;
  std::string kind;
  int priority = 0;
  std::string description;
};

struct DialogueStepReport {
  int id = 0;
  std::string kind;
  int priority = 0;
  bool done = false;
  std::vector<int> tasks_pushed;
  std::vector<memory::Memid> targets;
  std::vector<std::string> spawned;
  std::vector<std::string> chats;
  std::string error;
};

/// Ordered by descending priority, ties by arrival.
class DialogueQueue {
 public:
  int push(std::unique_ptr<DialogueObject> obj);
  /// Steps the front object once; terminal objects are removed and spawned
  /// objects enqueued. A throwing object is dropped and an error chat logged.
  std::optional<DialogueStepReport> step_highest(DialogueContext& ctx);
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  std::vector<DialogueInfo> listing() const;
  const DialogueObject* front() const;

 private:
  struct Item {
    int id;
    std::unique_ptr<DialogueObject> obj;
  };
  std::size_t pick() const;  // items_.size() when empty
  std::vector<Item> items_;
  int next_id_ = 1;
};

/// The controller step of the agent loop: dispatches parsed chats and steps
/// one dialogue object per tick. Replaceable (e.g. by a fault stub in tests).
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void dispatch(const dsl::LogicalForm& lf, const std::string& speaker, DialogueContext& ctx) = 0;
  virtual std::optional<DialogueStepReport> step(DialogueContext& ctx) = 0;
  virtual std::vector<DialogueInfo> listing() const = 0;
};

class DialogueController : public Controller {
 public:
  void dispatch(const dsl::LogicalForm& lf, const std::string& speaker, DialogueContext& ctx) override;
  std::optional<DialogueStepReport> step(DialogueContext& ctx) override;
  std::vector<DialogueInfo> listing() const override { return queue_.listing(); }
  DialogueQueue& queue() { return queue_; }

 private:
  DialogueQueue queue_;
  Tick last_info_seek_ = 0;
};

/// Writes an agent error ChatNode.
void log_error(memory::MemoryStore& memory, Tick tick, const std::string& message);

inline constexpr const char* kErrorSpeaker = "error";

}  // namespace minidroid::interp
