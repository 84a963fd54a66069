#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "minidroid/dsl.hpp"
#include "minidroid/geometry.hpp"
#include "minidroid/memory.hpp"
#include "minidroid/world.hpp"

namespace minidroid::tasks {

enum class TaskStatus { queued, running, paused, finished, failed };
std::string_view to_string(TaskStatus s);

struct TaskConfig {
  double max_step = 0.25;
  double max_turn = 0.3;
  double heading_tolerance = 0.05;
  double turn_tolerance = 0.02;
  double move_tolerance = 0.5;
  double grasp_range = 0.6;
  int blocked_limit = 10;
  int point_hold_ticks = 10;
  int loop_limit = 1000;
};

/// Result of the single world command a task may issue per tick.
struct CommandResult {
  world::CommandOutcome outcome;
  Pose pose;  // agent pose after the command
};

using CommandSink = std::function<CommandResult(const world::ActionCommand&)>;

class TaskContext {
 public:
  TaskContext(Pose pose, CommandSink sink, memory::MemoryStore& memory, Tick tick, const TaskConfig& config)
      : pose_(pose), sink_(std::move(sink)), memory_(memory), tick_(tick), config_(config) {}

  const Pose& pose() const { return pose_; }
  memory::MemoryStore& memory() { return memory_; }
  Tick tick() const { return tick_; }
  const TaskConfig& config() const { return config_; }

  /// Sends one command to the world. Throws std::logic_error on a second
  /// command in the same tick.
  CommandResult issue(const world::ActionCommand& cmd);

  const std::optional<std::string>& command_text() const { return command_text_; }
  const std::optional<CommandResult>& last_result() const { return last_result_; }

 private:
  Pose pose_;
  CommandSink sink_;
  memory::MemoryStore& memory_;
  Tick tick_;
  const TaskConfig& config_;
  std::optional<std::string> command_text_;
  std::optional<CommandResult> last_result_;
};

/// A self-contained world interaction, stepped at most once per tick.
class Task {
 public:
  virtual ~Task() = default;

  virtual std::string_view kind() const = 0;
  virtual std::string describe() const = 0;
  /// Fresh, never-stepped copy (used by loops).
  virtual std::unique_ptr<Task> clone() const = 0;
  virtual std::vector<memory::TaskChildRecord> child_records() const { return {}; }

  /// Marks the task running, records the start pose on first call, and
  /// advances it one tick.
  void step(TaskContext& ctx);

  int id() const { return id_; }
  int priority() const { return priority_; }
  void set_priority(int p) { priority_ = p; }
  TaskStatus status() const { return status_; }
  const std::optional<Pose>& start_pose() const { return start_pose_; }
  Tick created_tick() const { return created_tick_; }
  const std::string& failure_reason() const { return failure_reason_; }
  bool user_paused() const { return user_paused_; }
  bool terminal() const { return status_ == TaskStatus::finished || status_ == TaskStatus::failed; }

 protected:
  virtual void do_step(TaskContext& ctx) = 0;
  void finish() { transition(TaskStatus::finished); }
  void fail(std::string reason) {
    failure_reason_ = std::move(reason);
    transition(TaskStatus::failed);
  }

 private:
  friend class TaskQueue;
  void transition(TaskStatus next);

  int id_ = 0;
  int priority_ = 0;
  TaskStatus status_ = TaskStatus::queued;
  std::optional<Pose> start_pose_;
  Tick created_tick_ = 0;
  std::string failure_reason_;
  bool user_paused_ = false;
  memory::Memid memory_node_;
};

struct RelativeOffset {
  dsl::Direction direction = dsl::Direction::Forward;
  double distance = 0.0;
};

/// Applies a relative offset to a pose (forward = heading, left = +90 deg).
Vec2 offset_point(const Pose& pose, const RelativeOffset& offset);

/// Turns toward the target until the heading error is small, then drives.
/// Finishes once within `tolerance`; fails after blocked_limit consecutive
/// blocked ticks. Relative targets resolve against the start pose.
class MoveTask : public Task {
 public:
  explicit MoveTask(std::variant<Vec2, RelativeOffset> target, std::optional<double> tolerance = std::nullopt,
                    double standoff = 0.0)
      : target_(target), tolerance_(tolerance), standoff_(standoff) {}
  std::string_view kind() const override { return "MOVE"; }
  std::string describe() const override;
  std::unique_ptr<Task> clone() const override;
  const std::optional<Vec2>& resolved_target() const { return resolved_; }
  bool last_blocked() const { return last_blocked_; }

 protected:
  void do_step(TaskContext& ctx) override;

 private:
  std::variant<Vec2, RelativeOffset> target_;
  std::optional<double> tolerance_;
  double standoff_;
  std::optional<Vec2> resolved_;
  int blocked_ticks_ = 0;
  bool last_blocked_ = false;
};

struct RelativeYaw {
  double delta = 0.0;
};
struct AbsoluteYaw {
  double yaw = 0.0;
};
struct FacePoint {
  Vec2 point;
};

class TurnTask : public Task {
 public:
  explicit TurnTask(std::variant<RelativeYaw, AbsoluteYaw, FacePoint> goal) : goal_(goal) {}
  std::string_view kind() const override { return "TURN"; }
  std::string describe() const override;
  std::unique_ptr<Task> clone() const override;

 protected:
  void do_step(TaskContext& ctx) override;

 private:
  std::variant<RelativeYaw, AbsoluteYaw, FacePoint> goal_;
  std::optional<double> remaining_;  // relative goals only
};

/// Holds a pointing ray on `target` for hold_ticks ticks, then lowers it.
class PointTask : public Task {
 public:
  PointTask(Vec2 target, int hold_ticks) : target_(target), hold_ticks_(hold_ticks) {}
  std::string_view kind() const override { return "POINT"; }
  std::string describe() const override;
  std::unique_ptr<Task> clone() const override;

 protected:
  void do_step(TaskContext& ctx) override;

 private:
  Vec2 target_;
  int hold_ticks_;
  int held_ = 0;
};

/// Approaches a remembered object to within grasp range, then picks it up.
/// This is the swap-in point for a learned grasp planner.
class GraspTask : public Task {
 public:
  explicit GraspTask(memory::Memid target) : target_(target) {}
  std::string_view kind() const override { return "GRASP"; }
  std::string describe() const override;
  std::unique_ptr<Task> clone() const override;

 protected:
  void do_step(TaskContext& ctx) override;

 private:
  memory::Memid target_;
  std::unique_ptr<MoveTask> approach_;
};

class SayTask : public Task {
 public:
  explicit SayTask(std::string text) : text_(std::move(text)) {}
  std::string_view kind() const override { return "SAY"; }
  std::string describe() const override { return "say \"" + text_ + "\""; }
  std::unique_ptr<Task> clone() const override { return std::make_unique<SayTask>(text_); }

 protected:
  void do_step(TaskContext& ctx) override;

 private:
  std::string text_;
};

/// Runs children in order, one child step per tick; fails on the first
/// failing child.
class SequenceTask : public Task {
 public:
  explicit SequenceTask(std::vector<std::unique_ptr<Task>> children) : children_(std::move(children)) {}
  std::string_view kind() const override { return "SEQUENCE"; }
  std::string describe() const override;
  std::unique_ptr<Task> clone() const override;
  std::vector<memory::TaskChildRecord> child_records() const override;

 protected:
  void do_step(TaskContext& ctx) override;

 private:
  std::vector<std::unique_ptr<Task>> children_;
  std::size_t current_ = 0;
};

/// Re-runs a fresh copy of `child` n times (REPEAT_N) or until a tick
/// reports the agent blocked (UNTIL_BLOCKED).
class LoopTask : public Task {
 public:
  LoopTask(std::unique_ptr<Task> child, dsl::ConditionSpec condition)
      : prototype_(std::move(child)), condition_(condition) {}
  std::string_view kind() const override { return "LOOP"; }
  std::string describe() const override;
  std::unique_ptr<Task> clone() const override;
  int iterations() const { return completed_; }

 protected:
  void do_step(TaskContext& ctx) override;

 private:
  std::unique_ptr<Task> prototype_;
  dsl::ConditionSpec condition_;
  std::unique_ptr<Task> active_;
  int completed_ = 0;
};

struct TaskInfo {
  int id = 0;
  std::string kind;
  std::string description;
  TaskStatus status = TaskStatus::queued;
  int priority = 0;
  Tick created_tick = 0;
  std::string reason;
  std::vector<memory::TaskChildRecord> children;
  memory::Memid memid;
};

struct StepReport {
  std::optional<int> task_id;
  std::string kind;
  TaskStatus status = TaskStatus::queued;
  std::optional<std::string> command;
  std::string reason;
  std::optional<int> preempted;

  bool stepped() const { return task_id.has_value(); }
};

class TaskQueue {
 public:
  /// Queues `task` and mirrors it as a Task node. Returns the task id.
  int push(std::unique_ptr<Task> task, memory::MemoryStore& memory, Tick tick);

  /// Steps the highest-priority task that is not user-paused (ties: oldest
  /// first). A preempted running task is parked as paused.
  StepReport step_highest(TaskContext& ctx);

  void pause_running(memory::MemoryStore& memory, Tick tick);
  void resume(memory::MemoryStore& memory, Tick tick);

  bool empty() const { return active_.empty(); }
  std::size_t size() const { return active_.size(); }
  std::vector<TaskInfo> listing() const;
  /// Most recent terminal tasks, oldest first.
  const std::deque<TaskInfo>& history() const { return history_; }
  const Task* find(int id) const;
  std::optional<memory::Memid> memory_node(int id) const;

  static constexpr std::size_t kHistoryLimit = 32;

 private:
  void mirror(Task& task, memory::MemoryStore& memory, Tick tick);
  static TaskInfo info(const Task& t);

  std::vector<std::unique_ptr<Task>> active_;
  std::deque<TaskInfo> history_;
  int next_id_ = 1;
};

}  // namespace minidroid::tasks
