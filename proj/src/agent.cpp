#include "minidroid/agent.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "minidroid/error.hpp"
#include "minidroid/json_text.hpp"

namespace minidroid::core {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T number(const std::string& v, const std::string& key, int line) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ParseError("bad value for " + key + ": '" + v + "'", line);
  return out;
}

bool boolean(const std::string& v, const std::string& key, int line) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ParseError("bad value for " + key + ": '" + v + "'", line);
}

std::string quote_if_needed(const std::string& v) {
  if (!v.empty() && v.find_first_of(" \t\"=\n") == std::string::npos) return v;
  return json_text(json(v));
}

}  // namespace

// ---- config ---------------------------------------------------------------

AgentConfig AgentConfig::parse(std::string_view text) {
  AgentConfig c;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string l = trim(raw);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected key=value", line);
    const std::string key = trim(std::string_view(l).substr(0, eq));
    const std::string v = trim(std::string_view(l).substr(eq + 1));
    if (key == "slow_perception_period") c.slow_perception_period = number<int>(v, key, line);
    else if (key == "clarification_window") c.clarification_window = number<Tick>(v, key, line);
    else if (key == "dedup_distance") c.dedup_distance = number<double>(v, key, line);
    else if (key == "dedup_similarity") c.dedup_similarity = number<double>(v, key, line);
    else if (key == "max_step") c.max_step = number<double>(v, key, line);
    else if (key == "max_turn") c.max_turn = number<double>(v, key, line);
    else if (key == "grasp_range") c.grasp_range = number<double>(v, key, line);
    else if (key == "move_tolerance") c.move_tolerance = number<double>(v, key, line);
    else if (key == "blocked_limit") c.blocked_limit = number<int>(v, key, line);
    else if (key == "fov_half_angle_deg") c.fov_half_angle_deg = number<double>(v, key, line);
    else if (key == "view_range") c.view_range = number<double>(v, key, line);
    else if (key == "jitter_sigma") c.jitter_sigma = number<double>(v, key, line);
    else if (key == "attention_horizon") c.attention_horizon = number<Tick>(v, key, line);
    else if (key == "idle_question") c.idle_question = boolean(v, key, line);
    else if (key == "idle_question_period") c.idle_question_period = number<Tick>(v, key, line);
    else if (key == "gateway_port") c.gateway_port = number<int>(v, key, line);
    else if (key == "scenario") c.scenario = v;
    else if (key == "chat_history") c.chat_history = number<std::size_t>(v, key, line);
    else if (key == "state_every") c.state_every = number<int>(v, key, line);
    else throw ParseError("config: unknown key '" + key + "'", line);
  }
  c.validate();
  return c;
}

AgentConfig AgentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void AgentConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw Error(ErrorCode::validation, std::string("config: ") + msg);
  };
  require(slow_perception_period >= 1, "slow_perception_period must be >= 1");
  require(clarification_window >= 1, "clarification_window must be >= 1");
  require(idle_question_period >= 1, "idle_question_period must be >= 1");
  require(attention_horizon >= 1, "attention_horizon must be >= 1");
  require(state_every >= 1, "state_every must be >= 1");
  require(blocked_limit >= 1, "blocked_limit must be >= 1");
  require(dedup_distance > 0.0, "dedup_distance must be positive");
  require(dedup_similarity >= -1.0 && dedup_similarity <= 1.0, "dedup_similarity must be in [-1, 1]");
  require(max_step > 0.0 && max_turn > 0.0, "kinematic limits must be positive");
  require(grasp_range > 0.0 && move_tolerance > 0.0, "ranges must be positive");
  require(fov_half_angle_deg > 0.0 && fov_half_angle_deg <= 180.0, "fov_half_angle_deg must be in (0, 180]");
  require(view_range > 0.0, "view_range must be positive");
  require(jitter_sigma >= 0.0, "jitter_sigma must be non-negative");
  require(gateway_port >= 0 && gateway_port <= 65535, "gateway_port out of range");
}

world::WorldConfig AgentConfig::world() const {
  return {max_step, grasp_range, fov_half_angle_deg * kPi / 180.0, view_range, jitter_sigma};
}

tasks::TaskConfig AgentConfig::tasks() const {
  tasks::TaskConfig t;
  t.max_step = max_step;
  t.max_turn = max_turn;
  t.move_tolerance = move_tolerance;
  t.grasp_range = grasp_range;
  t.blocked_limit = blocked_limit;
  return t;
}

perception::PerceptionConfig AgentConfig::perception() const {
  perception::PerceptionConfig p;
  p.dedup_distance = dedup_distance;
  p.dedup_similarity = dedup_similarity;
  p.attention_horizon = attention_horizon;
  return p;
}

interp::InterpConfig AgentConfig::interp() const {
  interp::InterpConfig i;
  i.clarification_window = clarification_window;
  i.attention_horizon = attention_horizon;
  i.move_tolerance = move_tolerance;
  i.idle_question = idle_question;
  i.idle_question_period = idle_question_period;
  return i;
}

// ---- inbox and trace ------------------------------------------------------

bool is_teleop_command(std::string_view c) {
  return c == "forward" || c == "back" || c == "left" || c == "right" || c == "stop" || c == "resume";
}

void Inbox::push(InboxMessage msg) {
  std::lock_guard lock(mu_);
  items_.push_back(std::move(msg));
}

std::vector<InboxMessage> Inbox::drain() {
  std::lock_guard lock(mu_);
  std::vector<InboxMessage> out;
  out.swap(items_);
  return out;
}

std::optional<std::string> PhaseEntry::get(std::string_view key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string dump(const TickTrace& trace) {
  std::string out;
  for (const auto& e : trace.phases) {
    out += "tick=" + std::to_string(trace.tick) + " phase=" + e.phase;
    for (const auto& [k, v] : e.fields) out += " " + k + "=" + quote_if_needed(v);
    out += "\n";
  }
  return out;
}

std::vector<ChatScriptLine> parse_chat_script(std::string_view text) {
  std::vector<ChatScriptLine> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string l = trim(raw);
    if (l.empty() || l[0] == '#') continue;
    const auto sp = l.find_first_of(" \t");
    const std::string tick = l.substr(0, sp);
    ChatScriptLine entry{number<Tick>(tick, "chat script tick", line), sp == std::string::npos ? "" : trim(l.substr(sp))};
    if (entry.tick < 0) throw ParseError("chat script: negative tick", line);
    out.push_back(std::move(entry));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
  return out;
}

// ---- agent ----------------------------------------------------------------

Agent::Agent(world::WorldState world, AgentConfig config)
    : config_(std::move(config)),
      world_config_(config_.world()),
      task_config_(config_.tasks()),
      interp_config_(config_.interp()),
      perception_config_(config_.perception()),
      world_(std::move(world)),
      memory_(world_.seed),
      perception_(std::make_unique<perception::SimulatedPerception>(perception_config_)),
      parser_(std::make_shared<nlp::TemplateParser>(nlp::TemplateParser::with_default_templates())),
      controller_(std::make_unique<interp::DialogueController>()) {
  config_.validate();
}

void Agent::step_world(const world::ActionCommand& cmd) { world_ = world::step_physics(world_, cmd, world_config_); }

TickTrace Agent::tick() {
  TickTrace trace;
  trace.tick = world_.tick;
  // Scripted speech from the avatar comes before anything from the gateway.
  std::vector<InboxMessage> inbound;
  if (world_.human) {
    for (const auto& text : world_.human->pending_chats) inbound.push_back(ChatMessage{"human", text});
  }
  for (auto& m : inbox_.drain()) inbound.push_back(std::move(m));

  bool world_stepped = false;
  auto run = [&](const char* name, auto&& body) {
    PhaseEntry e{name, {}};
    try {
      body(e);
    } catch (const std::exception& ex) {
      e.add("error", ex.what());
      try {
        interp::log_error(memory_, world_.tick, std::string(name) + ": " + ex.what());
      } catch (...) {
      }
    }
    trace.phases.push_back(std::move(e));
  };
  run(kPhaseOrder[0], [&](PhaseEntry& e) { phase_fast(e, inbound); });
  run(kPhaseOrder[1], [&](PhaseEntry& e) { phase_memory(e, inbound); });
  run(kPhaseOrder[2], [&](PhaseEntry& e) { phase_controller(e, inbound); });
  run(kPhaseOrder[3], [&](PhaseEntry& e) { phase_tasks(e, world_stepped); });
  if (!world_stepped) step_world(world::Noop{});
  return trace;
}

void Agent::phase_fast(PhaseEntry& e, std::vector<InboxMessage>& inbound) {
  pending_detections_.clear();
  bool chat = false;
  for (const auto& m : inbound) chat = chat || std::holds_alternative<ChatMessage>(m);
  const bool slow = chat || world_.tick % config_.slow_perception_period == 0;
  const auto view = world::observe(world_, world_config_);
  e.add("slow", slow ? "1" : "0");
  perception_->fast(view, memory_, world_.tick);
  if (slow) {
    pending_detections_ = perception_->slow(view);
    e.add("detections", std::to_string(pending_detections_.size()));
  }
}

void Agent::phase_memory(PhaseEntry& e, const std::vector<InboxMessage>& inbound) {
  auto detections = std::move(pending_detections_);
  pending_detections_.clear();
  int fresh = 0;
  if (!detections.empty()) {
    for (const auto& d : perception::merge_detections(detections, memory_, world_.tick, perception_config_)) {
      if (d.verdict == perception::Verdict::new_object) ++fresh;
    }
  }
  e.add("merged", std::to_string(detections.size())).add("new", std::to_string(fresh));
  int tags = 0;
  for (const auto& m : inbound) {
    const auto* t = std::get_if<TagMessage>(&m);
    if (!t) continue;
    const auto* node = memory_.peek(t->memid);
    if (!node || node->node_type != memory::NodeType::ReferenceObject) {
      interp::log_error(memory_, world_.tick, "tag_object: unknown reference object " + t->memid.hex());
      continue;
    }
    if (!memory_.has_triple(t->memid, "has_tag", t->tag)) {
      memory_.add_triple(t->memid, "has_tag", t->tag, world_.tick);
      ++tags;
    }
  }
  if (tags) e.add("tags", std::to_string(tags));
}

void Agent::teleop(const std::string& command, PhaseEntry& e) {
  std::unique_ptr<tasks::Task> task;
  if (command == "forward") {
    task = std::make_unique<tasks::MoveTask>(tasks::RelativeOffset{dsl::Direction::Forward, 1.0});
  } else if (command == "back") {
    task = std::make_unique<tasks::MoveTask>(tasks::RelativeOffset{dsl::Direction::Back, 1.0});
  } else if (command == "left") {
    task = std::make_unique<tasks::TurnTask>(tasks::RelativeYaw{kPi / 2});
  } else if (command == "right") {
    task = std::make_unique<tasks::TurnTask>(tasks::RelativeYaw{-kPi / 2});
  } else if (command == "stop") {
    tasks_.pause_running(memory_, world_.tick);
  } else if (command == "resume") {
    tasks_.resume(memory_, world_.tick);
  } else {
    throw Error(ErrorCode::validation, "unknown teleop command '" + command + "'");
  }
  if (task) {
    task->set_priority(10);
    e.add("teleop_task", std::to_string(tasks_.push(std::move(task), memory_, world_.tick)));
  }
}

void Agent::phase_controller(PhaseEntry& e, const std::vector<InboxMessage>& inbound) {
  interp::DialogueContext ctx{memory_, tasks_, world_.tick, interp_config_};
  int chats = 0;
  for (const auto& m : inbound) {
    // A failing message must not hide the ones behind it.
    try {
      if (const auto* c = std::get_if<ChatMessage>(&m)) {
        ++chats;
        memory_.create_node(memory::ChatPayload{c->speaker, c->text}, world_.tick);
        const auto parsed = parser_->parse(c->text);
        last_parse_ = LastParse{c->text, dsl::to_canonical(parsed.lf), parsed.matched_template};
        e.add("parse", std::string(dsl::to_string(parsed.lf.dialogue_type)));
        controller_->dispatch(parsed.lf, c->speaker, ctx);
      } else if (const auto* t = std::get_if<TeleopMessage>(&m)) {
        teleop(t->command, e);
      } else if (std::holds_alternative<PauseMessage>(m)) {
        tasks_.pause_running(memory_, world_.tick);
        e.add("pause", "1");
      } else if (std::holds_alternative<ResumeMessage>(m)) {
        tasks_.resume(memory_, world_.tick);
        e.add("resume", "1");
      }
    } catch (const std::exception& ex) {
      e.add("error", ex.what());
      interp::log_error(memory_, world_.tick, std::string("controller_step: ") + ex.what());
    }
  }
  e.add("chats", std::to_string(chats));
  const auto report = controller_->step(ctx);
  if (!report) return;
  e.add("stepped", report->kind + "#" + std::to_string(report->id));
  if (report->done) e.add("done", "1");
  for (int id : report->tasks_pushed) {
    const auto* t = tasks_.find(id);
    e.add("pushed", (t ? std::string(t->kind()) : std::string("?")) + "#" + std::to_string(id));
  }
  for (const auto& m : report->targets) e.add("target", m.hex());
  for (const auto& s : report->spawned) e.add("spawned", s);
  for (const auto& c : report->chats) e.add("say", c);
  if (!report->error.empty()) e.add("error", report->error);
}

void Agent::phase_tasks(PhaseEntry& e, bool& world_stepped) {
  tasks::CommandSink sink = [this, &world_stepped](const world::ActionCommand& cmd) {
    step_world(cmd);
    world_stepped = true;
    return tasks::CommandResult{world_.last_outcome, world_.agent_pose};
  };
  tasks::TaskContext ctx(world_.agent_pose, sink, memory_, world_.tick, task_config_);
  const auto report = tasks_.step_highest(ctx);
  if (!report.stepped()) {
    e.add("task", "none");
    return;
  }
  e.add("task", std::to_string(*report.task_id))
      .add("kind", report.kind)
      .add("status", std::string(tasks::to_string(report.status)));
  if (report.command) e.add("cmd", *report.command);
  if (ctx.last_result()) e.add("outcome", std::string(world::to_string(ctx.last_result()->outcome.status)));
  if (!report.reason.empty()) e.add("reason", report.reason);
  if (report.preempted) e.add("preempted", std::to_string(*report.preempted));
}

// ---- snapshot -------------------------------------------------------------

namespace {

json vec(Vec2 v) { return json::array({v.x, v.y}); }

}  // namespace

AgentSnapshot Agent::snapshot(bool include_memory) const {
  json doc = json::object();
  doc["tick"] = world_.tick;
  const auto& b = world_.bounds();
  doc["bounds"] = {{"lo", vec(b.lo)}, {"hi", vec(b.hi)}};
  json agent = {{"pose", json::array({world_.agent_pose.x, world_.agent_pose.y, world_.agent_pose.yaw})}};
  agent["pointing"] = world_.agent_pointing ? vec(*world_.agent_pointing) : json(nullptr);
  agent["held"] = world_.held ? json(world_.held->class_label) : json(nullptr);
  doc["agent"] = agent;
  if (world_.human) {
    const auto& h = *world_.human;
    doc["human"] = {{"pose", json::array({h.pose.x, h.pose.y, h.pose.yaw})},
                    {"pointing", h.pointing_target ? vec(*h.pointing_target) : json(nullptr)}};
  } else {
    doc["human"] = nullptr;
  }

  json objects = json::array();
  for (const auto& id : memory_.of_type(memory::NodeType::ReferenceObject)) {
    const auto* node = memory_.peek(id);
    const auto& ro = std::get<memory::ReferenceObjectPayload>(node->payload);
    json tags = json::array();
    for (const auto& [p, v] : memory_.triples_about(id)) tags.push_back(json::array({p, v}));
    objects.push_back({{"memid", id.hex()},
                       {"class_label", ro.class_label},
                       {"position", vec(ro.position)},
                       {"radius", ro.radius},
                       {"last_seen_tick", ro.last_seen_tick},
                       {"tags", tags}});
  }
  doc["reference_objects"] = objects;

  json task_list = json::array();
  for (const auto& t : tasks_.listing()) {
    task_list.push_back({{"id", t.id},
                         {"kind", t.kind},
                         {"description", t.description},
                         {"status", std::string(tasks::to_string(t.status))},
                         {"priority", t.priority},
                         {"memid", t.memid.hex()}});
  }
  doc["tasks"] = task_list;
  json dialogue = json::array();
  for (const auto& d : controller_->listing()) {
    dialogue.push_back({{"id", d.id}, {"kind", d.kind}, {"priority", d.priority}, {"description", d.description}});
  }
  doc["dialogue"] = dialogue;

  if (last_parse_) {
    doc["last_parse"] = {{"utterance", last_parse_->utterance}, {"lf", last_parse_->lf_text}};
  } else {
    doc["last_parse"] = nullptr;
  }

  std::deque<json> chats;
  for (const auto& id : memory_.of_type(memory::NodeType::Chat)) {
    const auto* node = memory_.peek(id);
    const auto& c = std::get<memory::ChatPayload>(node->payload);
    chats.push_back({{"speaker", c.speaker}, {"text", c.text}, {"tick", node->created_tick}});
    if (chats.size() > config_.chat_history) chats.pop_front();
  }
  doc["chats"] = json(std::vector<json>(chats.begin(), chats.end()));
  if (include_memory) doc["memory"] = json::parse(memory_.dump());
  return {world_.tick, std::move(doc)};
}

}  // namespace minidroid::core
