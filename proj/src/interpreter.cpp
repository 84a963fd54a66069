#include "minidroid/interpreter.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "minidroid/error.hpp"

namespace minidroid::interp {

using memory::MemoryStore;
using memory::Memid;
using memory::NodeType;

std::string_view to_string(DialogueKind k) {
  switch (k) {
    case DialogueKind::Interpret: return "Interpret";
    case DialogueKind::Clarify: return "Clarify";
    case DialogueKind::DescribeQueue: return "DescribeQueue";
    case DialogueKind::PutMemory: return "PutMemory";
    case DialogueKind::InfoSeek: return "InfoSeek";
  }
  return "?";
}

void log_error(MemoryStore& memory, Tick tick, const std::string& message) {
  memory.create_node(memory::ChatPayload{kErrorSpeaker, message}, tick);
}

std::optional<Vec2> attention_point(const MemoryStore& memory, const std::string& speaker, Tick tick, Tick horizon) {
  const memory::PlayerPayload* chosen = nullptr;
  for (const auto& id : memory.of_type(NodeType::Player)) {
    const auto& p = std::get<memory::PlayerPayload>(memory.peek(id)->payload);
    if (p.name == speaker) {
      chosen = &p;
      break;
    }
    if (!chosen) chosen = &p;
  }
  if (!chosen || !chosen->attention || tick - chosen->attention_tick > horizon) return std::nullopt;
  return chosen->attention;
}

std::optional<Pose> agent_pose(const MemoryStore& memory) {
  const auto selves = memory.of_type(NodeType::Self);
  if (selves.empty()) return std::nullopt;
  return std::get<memory::SelfPayload>(memory.peek(selves.front())->payload).pose;
}

Resolved<Memid> resolve_reference_object(const dsl::ReferenceObjectSpec& spec, MemoryStore& memory,
                                         const std::string& speaker, Tick tick, Tick horizon) {
  auto filters = spec.filters;
  filters.node_type = NodeType::ReferenceObject;
  const auto matches = memory.query(filters, tick);
  if (matches.empty()) return NeedsClarification{spec.filters, memory::describe_phrase(spec.filters)};
  if (matches.size() == 1) return matches.front();

  std::optional<Vec2> anchor = attention_point(memory, speaker, tick, horizon);
  if (!anchor) {
    if (auto pose = agent_pose(memory)) anchor = pose->position();
  }
  if (!anchor) return matches.front();
  Memid best = matches.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& id : matches) {
    const double d = distance(*memory.peek(id)->position(), *anchor);
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  return best;
}

Resolved<LocationTarget> resolve_location(const dsl::LocationSpec& loc, MemoryStore& memory, const Pose& pose,
                                          const std::string& speaker, Tick tick, Tick horizon) {
  if (loc.absolute) return LocationTarget{*loc.absolute, std::nullopt};
  if (loc.relative) {
    return LocationTarget{tasks::offset_point(pose, {loc.relative->direction, loc.relative->distance}), std::nullopt};
  }
  if (!loc.reference_object) throw Error(ErrorCode::validation, "location has no member set");
  auto r = resolve_reference_object(*loc.reference_object, memory, speaker, tick, horizon);
  if (auto* nc = std::get_if<NeedsClarification>(&r)) return *nc;
  const Memid id = std::get<Memid>(r);
  return LocationTarget{*memory.peek(id)->position(), id};
}

void DialogueObject::say(DialogueContext& ctx, StepResult& out, std::string text) {
  ctx.memory.create_node(memory::ChatPayload{"agent", text}, ctx.tick);
  out.chats.push_back(std::move(text));
}

// ---- Interpret ------------------------------------------------------------

namespace {

struct PauseAll {};
struct ResumeAll {};
using Planned = std::variant<std::unique_ptr<tasks::Task>, PauseAll, ResumeAll>;

std::unique_ptr<tasks::Task> move_to_object(const MemoryStore& memory, const Memid& id, double tolerance) {
  const auto& ro = std::get<memory::ReferenceObjectPayload>(memory.peek(id)->payload);
  const double standoff = ro.radius + 0.05;
  return std::make_unique<tasks::MoveTask>(ro.position, std::max(tolerance, ro.radius + 0.1), standoff);
}

}  // namespace

StepResult InterpretObject::step(DialogueContext& ctx) {
  StepResult out;
  out.done = true;
  const Pose pose = agent_pose(ctx.memory).value_or(Pose{});
  const Tick horizon = ctx.config.attention_horizon;
  std::vector<Planned> plan;
  std::optional<NeedsClarification> need;

  auto location = [&](const dsl::LocationSpec& loc) -> std::optional<LocationTarget> {
    auto r = resolve_location(loc, ctx.memory, pose, speaker(), ctx.tick, horizon);
    if (auto* nc = std::get_if<NeedsClarification>(&r)) {
      if (!need) need = *nc;
      return std::nullopt;
    }
    auto target = std::get<LocationTarget>(r);
    if (target.object) out.targets.push_back(*target.object);
    return target;
  };

  for (const auto& action : lf_.action_sequence.value_or(std::vector<dsl::ActionSpec>{})) {
    std::unique_ptr<tasks::Task> task;
    switch (action.action_type) {
      case dsl::ActionType::Move: {
        const auto& loc = *action.location;
        if (loc.relative) {
          task = std::make_unique<tasks::MoveTask>(tasks::RelativeOffset{loc.relative->direction, loc.relative->distance});
        } else if (auto t = location(loc)) {
          if (t->object) {
            task = move_to_object(ctx.memory, *t->object, ctx.config.move_tolerance);
          } else {
            task = std::make_unique<tasks::MoveTask>(t->point);
          }
        }
        break;
      }
      case dsl::ActionType::Turn: {
        const auto& facing = *action.facing;
        if (facing.relative_yaw) {
          task = std::make_unique<tasks::TurnTask>(tasks::RelativeYaw{*facing.relative_yaw});
        } else if (auto t = location(*facing.location)) {
          task = std::make_unique<tasks::TurnTask>(tasks::FacePoint{t->point});
        }
        break;
      }
      case dsl::ActionType::Point: {
        dsl::LocationSpec loc;
        if (action.location) {
          loc = *action.location;
        } else {
          loc.reference_object = action.reference_object;
        }
        if (auto t = location(loc)) task = std::make_unique<tasks::PointTask>(t->point, ctx.config.point_hold_ticks);
        break;
      }
      case dsl::ActionType::Grasp: {
        auto r = resolve_reference_object(*action.reference_object, ctx.memory, speaker(), ctx.tick, horizon);
        if (auto* nc = std::get_if<NeedsClarification>(&r)) {
          if (!need) need = *nc;
        } else {
          out.targets.push_back(std::get<Memid>(r));
          task = std::make_unique<tasks::GraspTask>(std::get<Memid>(r));
        }
        break;
      }
      case dsl::ActionType::Stop: plan.emplace_back(PauseAll{}); continue;
      case dsl::ActionType::Resume: plan.emplace_back(ResumeAll{}); continue;
    }
    if (!task) continue;
    if (action.repeat) task = std::make_unique<tasks::LoopTask>(std::move(task), *action.repeat);
    plan.emplace_back(std::move(task));
  }

  const std::string lf_text = dsl::to_canonical(lf_);
  if (need) {
    out.targets.clear();
    ctx.memory.create_node(memory::ProgramPayload{lf_text, "needs_clarification"}, ctx.tick);
    out.spawned.push_back(std::make_unique<ClarifyObject>(lf_, *need, speaker()));
    return out;
  }
  for (auto& item : plan) {
    if (auto* t = std::get_if<std::unique_ptr<tasks::Task>>(&item)) {
      out.tasks_pushed.push_back(ctx.tasks.push(std::move(*t), ctx.memory, ctx.tick));
    } else if (std::holds_alternative<PauseAll>(item)) {
      ctx.tasks.pause_running(ctx.memory, ctx.tick);
    } else {
      ctx.tasks.resume(ctx.memory, ctx.tick);
    }
  }
  ctx.memory.create_node(memory::ProgramPayload{lf_text, "ok"}, ctx.tick);
  return out;
}

// ---- Clarify --------------------------------------------------------------

std::string ClarifyObject::question(const std::string& phrase) {
  return "I don't know what you mean by " + phrase + "; can you point at it or tag one?";
}

std::string ClarifyObject::describe() const {
  return "Clarify \"" + pending_.phrase + "\"" + (asked_at_ ? " (waiting)" : "");
}

StepResult ClarifyObject::step(DialogueContext& ctx) {
  StepResult out;
  if (!asked_at_) {
    asked_at_ = ctx.tick;
    say(ctx, out, question(pending_.phrase));
    return out;
  }
  auto filters = pending_.filters;
  filters.node_type = NodeType::ReferenceObject;
  if (!ctx.memory.query(filters, ctx.tick).empty()) {
    out.done = true;
    out.spawned.push_back(std::make_unique<InterpretObject>(lf_, speaker()));
    return out;
  }
  if (ctx.tick - *asked_at_ >= ctx.config.clarification_window) {
    out.done = true;
    say(ctx, out, "Sorry, I could not work out what you meant by " + pending_.phrase + ".");
  }
  return out;
}

// ---- DescribeQueue --------------------------------------------------------

StepResult DescribeQueueObject::step(DialogueContext& ctx) {
  StepResult out;
  out.done = true;
  const auto listing = ctx.tasks.listing();
  if (listing.empty()) {
    say(ctx, out, "nothing queued");
    return out;
  }
  std::string text;
  for (const auto& t : listing) {
    if (!text.empty()) text += "; ";
    text += t.description + " (" + std::string(tasks::to_string(t.status)) + ")";
  }
  say(ctx, out, text);
  return out;
}

// ---- PutMemory ------------------------------------------------------------

StepResult PutMemoryObject::step(DialogueContext& ctx) {
  StepResult out;
  out.done = true;
  const auto attention = attention_point(ctx.memory, speaker(), ctx.tick, ctx.config.attention_horizon);
  if (!attention) {
    say(ctx, out, "Please point at the object you mean.");
    return out;
  }
  std::optional<Memid> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& id : ctx.memory.of_type(NodeType::ReferenceObject)) {
    const double d = distance(*ctx.memory.peek(id)->position(), *attention);
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  if (!best) {
    say(ctx, out, "I don't see anything there.");
    return out;
  }
  for (const auto& [pred, value] : lf_.upsert->tags) {
    if (!ctx.memory.has_triple(*best, pred, value)) ctx.memory.add_triple(*best, pred, value, ctx.tick);
  }
  out.targets.push_back(*best);
  say(ctx, out, "OK, I will remember that.");
  return out;
}

// ---- InfoSeek -------------------------------------------------------------

StepResult InfoSeekObject::step(DialogueContext& ctx) {
  StepResult out;
  out.done = true;
  const auto selves = ctx.memory.of_type(NodeType::Self);
  if (selves.empty()) return out;
  const Memid self = selves.front();
  const Vec2 here = std::get<memory::SelfPayload>(ctx.memory.peek(self)->payload).pose.position();
  std::optional<Memid> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& id : ctx.memory.of_type(NodeType::ReferenceObject)) {
    if (ctx.memory.has_triple(self, "asked_about", id.hex())) continue;
    const double d = distance(*ctx.memory.peek(id)->position(), here);
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  if (!best) return out;
  ctx.memory.add_triple(self, "asked_about", *best, ctx.tick);
  std::vector<std::unique_ptr<tasks::Task>> steps;
  steps.push_back(std::make_unique<tasks::PointTask>(*ctx.memory.peek(*best)->position(), ctx.config.point_hold_ticks));
  steps.push_back(std::make_unique<tasks::SayTask>("what is this?"));
  out.tasks_pushed.push_back(
      ctx.tasks.push(std::make_unique<tasks::SequenceTask>(std::move(steps)), ctx.memory, ctx.tick));
  out.targets.push_back(*best);
  return out;
}

// ---- Queue and controller -------------------------------------------------

std::unique_ptr<DialogueObject> make_dialogue_object(const dsl::LogicalForm& lf, const std::string& speaker) {
  const auto violations = dsl::validate(lf);
  if (!violations.empty()) {
    std::string msg = "invalid logical form:";
    for (const auto& v : violations) msg += " " + v.path + ": " + v.rule + ";";
    throw Error(ErrorCode::validation, msg);
  }
  switch (lf.dialogue_type) {
    case dsl::DialogueType::HumanGiveCommand: return std::make_unique<InterpretObject>(lf, speaker);
    case dsl::DialogueType::GetMemory: return std::make_unique<DescribeQueueObject>(speaker);
    case dsl::DialogueType::PutMemory: return std::make_unique<PutMemoryObject>(lf, speaker);
    case dsl::DialogueType::Noop: return nullptr;
  }
  return nullptr;
}

int DialogueQueue::push(std::unique_ptr<DialogueObject> obj) {
  const int id = next_id_++;
  items_.push_back({id, std::move(obj)});
  return id;
}

std::size_t DialogueQueue::pick() const {
  std::size_t best = items_.size();
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (best == items_.size() || items_[i].obj->priority() > items_[best].obj->priority()) best = i;
  }
  return best;
}

const DialogueObject* DialogueQueue::front() const {
  const auto i = pick();
  return i == items_.size() ? nullptr : items_[i].obj.get();
}

std::vector<DialogueInfo> DialogueQueue::listing() const {
  std::vector<const Item*> order;
  for (const auto& item : items_) order.push_back(&item);
  std::stable_sort(order.begin(), order.end(),
                   [](const Item* a, const Item* b) { return a->obj->priority() > b->obj->priority(); });
  std::vector<DialogueInfo> out;
  for (const auto* item : order) {
    out.push_back({item->id, std::string(to_string(item->obj->kind())), item->obj->priority(), item->obj->describe()});
  }
  return out;
}

std::optional<DialogueStepReport> DialogueQueue::step_highest(DialogueContext& ctx) {
  const auto index = pick();
  if (index == items_.size()) return std::nullopt;
  Item* item = &items_[index];
  DialogueStepReport report;
  report.id = item->id;
  report.kind = std::string(to_string(item->obj->kind()));
  report.priority = item->obj->priority();
  StepResult r;
  try {
    r = item->obj->step(ctx);
  } catch (const std::exception& e) {
    r = StepResult{};
    r.done = true;
    report.error = e.what();
    log_error(ctx.memory, ctx.tick, report.kind + " failed: " + e.what());
  }
  report.done = r.done;
  report.tasks_pushed = r.tasks_pushed;
  report.targets = r.targets;
  report.chats = r.chats;
  if (r.done) {
    const int id = item->id;
    items_.erase(std::find_if(items_.begin(), items_.end(), [id](const Item& i) { return i.id == id; }));
  }
  for (auto& s : r.spawned) {
    report.spawned.push_back(std::string(to_string(s->kind())));
    push(std::move(s));
  }
  return report;
}

void DialogueController::dispatch(const dsl::LogicalForm& lf, const std::string& speaker, DialogueContext&) {
  if (auto obj = make_dialogue_object(lf, speaker)) queue_.push(std::move(obj));
}

std::optional<DialogueStepReport> DialogueController::step(DialogueContext& ctx) {
  if (ctx.config.idle_question && queue_.empty() && ctx.tasks.empty() &&
      ctx.tick - last_info_seek_ >= ctx.config.idle_question_period) {
    last_info_seek_ = ctx.tick;
    queue_.push(std::make_unique<InfoSeekObject>());
  }
  return queue_.step_highest(ctx);
}

}  // namespace minidroid::interp
