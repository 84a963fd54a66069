#include "minidroid/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace minidroid::tasks {

namespace {

std::string fmt_point(Vec2 p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%.3g, %.3g)", p.x, p.y);
  return buf;
}

double clamp_abs(double v, double limit) { return std::clamp(v, -limit, limit); }

}  // namespace

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::queued: return "queued";
    case TaskStatus::running: return "running";
    case TaskStatus::paused: return "paused";
    case TaskStatus::finished: return "finished";
    case TaskStatus::failed: return "failed";
  }
  return "?";
}

CommandResult TaskContext::issue(const world::ActionCommand& cmd) {
  if (command_text_) throw std::logic_error("a task issued two world commands in one tick");
  command_text_ = world::describe(cmd);
  last_result_ = sink_(cmd);
  pose_ = last_result_->pose;
  return *last_result_;
}

void Task::transition(TaskStatus next) {
  const TaskStatus cur = status_;
  const bool ok = (cur == TaskStatus::queued && next == TaskStatus::running) ||
                  (cur == TaskStatus::running && next == TaskStatus::paused) ||
                  (cur == TaskStatus::paused && next == TaskStatus::running) ||
                  (cur == TaskStatus::running && (next == TaskStatus::finished || next == TaskStatus::failed));
  if (!ok) {
    throw std::logic_error("illegal task transition " + std::string(to_string(cur)) + " -> " +
                           std::string(to_string(next)));
  }
  status_ = next;
}

void Task::step(TaskContext& ctx) {
  if (terminal()) return;
  if (status_ != TaskStatus::running) transition(TaskStatus::running);
  if (!start_pose_) start_pose_ = ctx.pose();
  do_step(ctx);
}

Vec2 offset_point(const Pose& pose, const RelativeOffset& offset) {
  const Vec2 h = pose.heading();
  Vec2 dir;
  switch (offset.direction) {
    case dsl::Direction::Forward: dir = h; break;
    case dsl::Direction::Back: dir = h * -1.0; break;
    case dsl::Direction::Left: dir = {-h.y, h.x}; break;
    case dsl::Direction::Right: dir = {h.y, -h.x}; break;
  }
  return pose.position() + dir * offset.distance;
}

// ---- Move -----------------------------------------------------------------

std::string MoveTask::describe() const {
  if (resolved_) return "move to " + fmt_point(*resolved_);
  if (const auto* p = std::get_if<Vec2>(&target_)) return "move to " + fmt_point(*p);
  const auto& r = std::get<RelativeOffset>(target_);
  char buf[64];
  std::snprintf(buf, sizeof buf, "move %s %.3g", std::string(dsl::to_string(r.direction)).c_str(), r.distance);
  return buf;
}

std::unique_ptr<Task> MoveTask::clone() const { return std::make_unique<MoveTask>(target_, tolerance_, standoff_); }

void MoveTask::do_step(TaskContext& ctx) {
  const auto& cfg = ctx.config();
  if (!resolved_) {
    if (const auto* p = std::get_if<Vec2>(&target_)) {
      resolved_ = *p;
    } else {
      resolved_ = offset_point(*start_pose(), std::get<RelativeOffset>(target_));
    }
  }
  const double tolerance = tolerance_.value_or(cfg.move_tolerance);
  last_blocked_ = false;

  const Vec2 to_target = *resolved_ - ctx.pose().position();
  const double dist = to_target.norm();
  if (dist < tolerance) {
    finish();
    return;
  }
  const double heading_error = angle_diff(std::atan2(to_target.y, to_target.x), ctx.pose().yaw);
  if (std::abs(heading_error) >= cfg.heading_tolerance) {
    const auto r = ctx.issue(world::Turn{clamp_abs(heading_error, cfg.max_turn)});
    if (r.outcome.status == world::CommandStatus::rejected) fail(r.outcome.reason);
    return;
  }
  const double step = std::min(cfg.max_step, dist - standoff_);
  if (step <= 0.0) {
    fail("unreachable");
    return;
  }
  const auto r = ctx.issue(world::Forward{step});
  switch (r.outcome.status) {
    case world::CommandStatus::blocked:
      last_blocked_ = true;
      if (++blocked_ticks_ >= cfg.blocked_limit) fail("blocked");
      return;
    case world::CommandStatus::ok:
      blocked_ticks_ = 0;
      if (distance(r.pose.position(), *resolved_) < tolerance) finish();
      return;
    default:
      fail(r.outcome.reason);
      return;
  }
}

// ---- Turn -----------------------------------------------------------------

std::string TurnTask::describe() const {
  char buf[64];
  if (const auto* r = std::get_if<RelativeYaw>(&goal_)) {
    std::snprintf(buf, sizeof buf, "turn by %.3g rad", r->delta);
  } else if (const auto* a = std::get_if<AbsoluteYaw>(&goal_)) {
    std::snprintf(buf, sizeof buf, "turn to yaw %.3g", a->yaw);
  } else {
    return "turn to face " + fmt_point(std::get<FacePoint>(goal_).point);
  }
  return buf;
}

std::unique_ptr<Task> TurnTask::clone() const { return std::make_unique<TurnTask>(goal_); }

void TurnTask::do_step(TaskContext& ctx) {
  const auto& cfg = ctx.config();
  double error = 0.0;
  if (const auto* r = std::get_if<RelativeYaw>(&goal_)) {
    if (!remaining_) remaining_ = r->delta;
    error = *remaining_;
  } else if (const auto* a = std::get_if<AbsoluteYaw>(&goal_)) {
    error = angle_diff(a->yaw, ctx.pose().yaw);
  } else {
    const Vec2 d = std::get<FacePoint>(goal_).point - ctx.pose().position();
    error = d.norm() == 0.0 ? 0.0 : angle_diff(std::atan2(d.y, d.x), ctx.pose().yaw);
  }
  if (std::abs(error) < cfg.turn_tolerance) {
    finish();
    return;
  }
  const double cmd = clamp_abs(error, cfg.max_turn);
  const auto r = ctx.issue(world::Turn{cmd});
  if (r.outcome.status != world::CommandStatus::ok) {
    fail(r.outcome.reason);
    return;
  }
  if (remaining_) *remaining_ -= cmd;
  if (std::abs(error - cmd) < cfg.turn_tolerance) finish();
}

// ---- Point ----------------------------------------------------------------

std::string PointTask::describe() const { return "point at " + fmt_point(target_); }

std::unique_ptr<Task> PointTask::clone() const { return std::make_unique<PointTask>(target_, hold_ticks_); }

void PointTask::do_step(TaskContext& ctx) {
  if (held_ == 0) {
    ctx.issue(world::PointAt{target_});
  } else if (held_ >= hold_ticks_) {
    ctx.issue(world::PointAt{std::nullopt});
    finish();
    return;
  }
  ++held_;
}

// ---- Grasp ----------------------------------------------------------------

std::string GraspTask::describe() const { return "grasp " + target_.hex().substr(0, 8); }

std::unique_ptr<Task> GraspTask::clone() const { return std::make_unique<GraspTask>(target_); }

void GraspTask::do_step(TaskContext& ctx) {
  const auto* node = ctx.memory().peek(target_);
  const auto* ro = node ? std::get_if<memory::ReferenceObjectPayload>(&node->payload) : nullptr;
  if (!ro) {
    fail("no_such_object");
    return;
  }
  if (!ro->track_id) {
    fail("untracked_object");
    return;
  }
  const double range = ctx.config().grasp_range;
  if (distance(ctx.pose().position(), ro->position) > range) {
    const double standoff = ro->radius + 0.05;
    if (standoff >= range) {
      fail("too_large");
      return;
    }
    if (!approach_) approach_ = std::make_unique<MoveTask>(ro->position, range, standoff);
    approach_->step(ctx);
    if (approach_->status() == TaskStatus::failed) fail(approach_->failure_reason());
    return;
  }
  const auto r = ctx.issue(world::Grasp{*ro->track_id});
  if (r.outcome.status == world::CommandStatus::ok) {
    finish();
  } else {
    fail(r.outcome.reason);
  }
}

// ---- Say ------------------------------------------------------------------

void SayTask::do_step(TaskContext& ctx) {
  ctx.memory().create_node(memory::ChatPayload{"agent", text_}, ctx.tick());
  finish();
}

// ---- Sequence -------------------------------------------------------------

std::string SequenceTask::describe() const {
  std::string out = "sequence of " + std::to_string(children_.size());
  return out;
}

std::unique_ptr<Task> SequenceTask::clone() const {
  std::vector<std::unique_ptr<Task>> copies;
  for (const auto& c : children_) copies.push_back(c->clone());
  return std::make_unique<SequenceTask>(std::move(copies));
}

std::vector<memory::TaskChildRecord> SequenceTask::child_records() const {
  std::vector<memory::TaskChildRecord> out;
  for (const auto& c : children_) out.push_back({std::string(c->kind()), std::string(to_string(c->status()))});
  return out;
}

void SequenceTask::do_step(TaskContext& ctx) {
  while (current_ < children_.size() && children_[current_]->status() == TaskStatus::finished) ++current_;
  if (current_ == children_.size()) {
    finish();
    return;
  }
  Task& child = *children_[current_];
  child.step(ctx);
  if (child.status() == TaskStatus::failed) {
    fail(child.failure_reason());
  } else if (child.status() == TaskStatus::finished && ++current_ == children_.size()) {
    finish();
  }
}

// ---- Loop -----------------------------------------------------------------

std::string LoopTask::describe() const {
  if (condition_.kind == dsl::ConditionKind::RepeatN) {
    return prototype_->describe() + " x" + std::to_string(condition_.n.value_or(1));
  }
  return prototype_->describe() + " until blocked";
}

std::unique_ptr<Task> LoopTask::clone() const { return std::make_unique<LoopTask>(prototype_->clone(), condition_); }

void LoopTask::do_step(TaskContext& ctx) {
  const bool until_blocked = condition_.kind == dsl::ConditionKind::UntilBlocked;
  const int target = until_blocked ? ctx.config().loop_limit : static_cast<int>(condition_.n.value_or(1));
  if (!active_) active_ = prototype_->clone();
  active_->step(ctx);
  if (until_blocked && ctx.last_result() && ctx.last_result()->outcome.status == world::CommandStatus::blocked) {
    finish();
    return;
  }
  if (active_->status() == TaskStatus::failed) {
    fail(active_->failure_reason());
  } else if (active_->status() == TaskStatus::finished) {
    active_.reset();
    if (++completed_ >= target) {
      if (until_blocked) {
        fail("loop_limit");
      } else {
        finish();
      }
    }
  }
}

// ---- Queue ----------------------------------------------------------------

TaskInfo TaskQueue::info(const Task& t) {
  return {t.id(), std::string(t.kind()), t.describe(), t.status(), t.priority(),
          t.created_tick(), t.failure_reason(), t.child_records(), t.memory_node_};
}

void TaskQueue::mirror(Task& t, memory::MemoryStore& memory, Tick tick) {
  memory::TaskPayload p{t.id(), std::string(t.kind()), std::string(to_string(t.status())), t.priority(),
                        t.describe(), t.child_records()};
  if (t.memory_node_.is_null() || !memory.contains(t.memory_node_)) {
    t.memory_node_ = memory.create_node(memory::NodeType::Task, std::move(p), tick);
  } else {
    memory.replace_payload(t.memory_node_, std::move(p), tick);
  }
}

int TaskQueue::push(std::unique_ptr<Task> task, memory::MemoryStore& memory, Tick tick) {
  task->id_ = next_id_++;
  task->created_tick_ = tick;
  mirror(*task, memory, tick);
  active_.push_back(std::move(task));
  return active_.back()->id();
}

StepReport TaskQueue::step_highest(TaskContext& ctx) {
  StepReport report;
  Task* best = nullptr;
  for (const auto& t : active_) {
    if (t->user_paused()) continue;
    if (!best || t->priority() > best->priority() ||
        (t->priority() == best->priority() &&
         (t->created_tick() < best->created_tick() ||
          (t->created_tick() == best->created_tick() && t->id() < best->id())))) {
      best = t.get();
    }
  }
  if (!best) return report;

  for (const auto& t : active_) {
    if (t.get() != best && t->status() == TaskStatus::running) {
      t->transition(TaskStatus::paused);
      mirror(*t, ctx.memory(), ctx.tick());
      report.preempted = t->id();
    }
  }

  best->step(ctx);
  mirror(*best, ctx.memory(), ctx.tick());
  report.task_id = best->id();
  report.kind = std::string(best->kind());
  report.status = best->status();
  report.command = ctx.command_text();
  report.reason = best->failure_reason();

  if (best->terminal()) {
    history_.push_back(info(*best));
    if (history_.size() > kHistoryLimit) history_.pop_front();
    active_.erase(std::find_if(active_.begin(), active_.end(), [&](const auto& t) { return t.get() == best; }));
  }
  return report;
}

void TaskQueue::pause_running(memory::MemoryStore& memory, Tick tick) {
  for (const auto& t : active_) {
    if (t->status() == TaskStatus::running) {
      t->transition(TaskStatus::paused);
      t->user_paused_ = true;
      mirror(*t, memory, tick);
    }
  }
}

void TaskQueue::resume(memory::MemoryStore& memory, Tick tick) {
  for (const auto& t : active_) {
    if (t->user_paused_) {
      t->user_paused_ = false;
      mirror(*t, memory, tick);
    }
  }
}

std::vector<TaskInfo> TaskQueue::listing() const {
  std::vector<TaskInfo> out;
  for (const auto& t : active_) out.push_back(info(*t));
  return out;
}

const Task* TaskQueue::find(int id) const {
  for (const auto& t : active_) {
    if (t->id() == id) return t.get();
  }
  return nullptr;
}

std::optional<memory::Memid> TaskQueue::memory_node(int id) const {
  for (const auto& t : active_) {
    if (t->id() == id) return t->memory_node_;
  }
  for (const auto& h : history_) {
    if (h.id == id) return h.memid;
  }
  return std::nullopt;
}

}  // namespace minidroid::tasks
