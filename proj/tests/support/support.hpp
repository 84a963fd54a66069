#pragma once

// Random generators and brute-force oracles shared by the test binaries.
// Oracles deliberately avoid the code paths they check.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <random>
#include <string>
#include <vector>

#include "minidroid/dsl.hpp"
#include "minidroid/gateway.hpp"
#include "minidroid/memory.hpp"
#include "minidroid/world.hpp"

namespace testsupport {

using namespace minidroid;
using Rng = std::mt19937_64;

/// Contents of a file under the source tree, e.g. "scenarios/chair.scn".
inline std::string source_file(const std::string& rel) {
  std::ifstream in(std::string(MINIDROID_SOURCE_DIR) + "/" + rel);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }
template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(v.size()) - 1))];
}

inline const std::vector<std::string> kPredicates = {"has_tag", "has_colour", "near", "owned_by"};
inline const std::vector<std::string> kValues = {"chair", "cup", "red", "blue", "table", "ball", "green", "bob"};

// ---- memory ---------------------------------------------------------------

struct RandomStore {
  memory::MemoryStore store;
  std::vector<memory::Memid> ids;
};

/// Grid positions make distance ties likely; random ticks make created_tick
/// disagree with insertion order.
inline RandomStore random_store(Rng& rng, int n_nodes) {
  RandomStore out{memory::MemoryStore(rng()), {}};
  auto& s = out.store;
  auto grid = [&] { return Vec2{static_cast<double>(uniform_int(rng, -5, 5)), static_cast<double>(uniform_int(rng, -5, 5))}; };
  while (static_cast<int>(s.size()) < n_nodes) {
    const Tick tick = uniform_int(rng, 0, 40);
    const int kind = uniform_int(rng, 0, 9);
    if (kind <= 2 || out.ids.empty()) {
      memory::ReferenceObjectPayload ro{grid(), 0.2, pick(rng, kValues), world::feature_vector(rng()), tick, std::nullopt};
      out.ids.push_back(s.create_node(ro, tick));
    } else if (kind <= 6) {
      const auto& subject = pick(rng, out.ids);
      std::variant<memory::Memid, std::string> object = pick(rng, kValues);
      if (coin(rng, 0.15)) object = pick(rng, out.ids);
      s.add_triple(subject, pick(rng, kPredicates), object, tick);
    } else if (kind == 7) {
      out.ids.push_back(s.create_node(memory::ChatPayload{"human", pick(rng, kValues)}, tick));
    } else if (kind == 8) {
      out.ids.push_back(s.create_node(memory::PlayerPayload{"p", Pose{grid().x, grid().y, 0.0}, tick, std::nullopt, 0}, tick));
    } else {
      out.ids.push_back(s.create_node(memory::TaskPayload{1, "MOVE", "queued", 0, "x", {}}, tick));
    }
  }
  return out;
}

inline memory::FiltersClause random_filters(Rng& rng, const RandomStore& rs) {
  memory::FiltersClause f;
  do {
    const int n_tags = uniform_int(rng, 0, 2);
    for (int i = 0; i < n_tags; ++i) {
      if (coin(rng, 0.1) && !rs.ids.empty()) {
        f.tag(pick(rng, kPredicates), pick(rng, rs.ids).hex());
      } else {
        f.tag(pick(rng, kPredicates), pick(rng, kValues));
      }
    }
    if (coin(rng, 0.4)) f.node_type = static_cast<memory::NodeType>(uniform_int(rng, 0, 8));
    if (coin(rng, 0.3)) f.within = memory::WithinClause{{uniform(rng, -5, 5), uniform(rng, -5, 5)}, uniform(rng, 0, 6)};
    if (coin(rng, 0.3)) {
      f.selector = memory::DistanceSelector{coin(rng) ? memory::SelectorKind::argmin : memory::SelectorKind::argmax,
                                            {static_cast<double>(uniform_int(rng, -5, 5)), 0.0}};
    }
    if (coin(rng, 0.2)) f.limit = uniform_int(rng, 1, 10);
  } while (!f.has_constraint());
  return f;
}

/// Linear scan over every node and every triple; no index is consulted.
inline std::vector<memory::Memid> brute_force_query(const memory::MemoryStore& store, const memory::FiltersClause& f) {
  const auto all = store.nodes();
  struct Row {
    std::size_t order;
    const memory::MemoryNode* node;
    double dist;
  };
  auto holds = [&](const memory::Memid& subject, const std::string& pred, const std::string& value) {
    for (const auto* n : all) {
      const auto* t = std::get_if<memory::TriplePayload>(&n->payload);
      if (!t || t->subject != subject || t->predicate != pred) continue;
      const std::string text = std::holds_alternative<std::string>(t->object)
                                   ? std::get<std::string>(t->object)
                                   : std::get<memory::Memid>(t->object).hex();
      if (text == value) return true;
    }
    return false;
  };
  auto where = [](const memory::MemoryNode& n) -> std::optional<Vec2> {
    if (const auto* r = std::get_if<memory::ReferenceObjectPayload>(&n.payload)) return r->position;
    if (const auto* s = std::get_if<memory::SelfPayload>(&n.payload)) return Vec2{s->pose.x, s->pose.y};
    if (const auto* p = std::get_if<memory::PlayerPayload>(&n.payload)) return Vec2{p->pose.x, p->pose.y};
    return std::nullopt;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& n = *all[i];
    if (f.node_type && n.node_type != *f.node_type) continue;
    bool ok = true;
    for (const auto& [p, v] : f.tags) ok = ok && holds(n.memid, p, v);
    if (!ok) continue;
    double dist = 0.0;
    if (f.within || f.selector) {
      const auto pos = where(n);
      if (!pos) continue;
      if (f.within && std::hypot(pos->x - f.within->center.x, pos->y - f.within->center.y) > f.within->distance) continue;
      if (f.selector) dist = std::hypot(pos->x - f.selector->point.x, pos->y - f.selector->point.y);
    }
    rows.push_back({i, &n, dist});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.node->created_tick < b.node->created_tick;
  });
  if (f.selector) {
    const bool asc = f.selector->kind == memory::SelectorKind::argmin;
    std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
      return asc ? a.dist < b.dist : a.dist > b.dist;
    });
  }
  if (f.limit && static_cast<std::int64_t>(rows.size()) > *f.limit) rows.resize(static_cast<std::size_t>(*f.limit));
  std::vector<memory::Memid> out;
  for (const auto& r : rows) out.push_back(r.node->memid);
  return out;
}

// ---- logical forms --------------------------------------------------------

inline memory::FiltersClause random_object_filters(Rng& rng) {
  memory::FiltersClause f;
  f.tag("has_tag", pick(rng, kValues));
  if (coin(rng, 0.3)) f.tag("has_colour", pick(rng, kValues));
  if (coin(rng, 0.1)) f.limit = uniform_int(rng, 1, 3);
  return f;
}

inline dsl::LocationSpec random_location(Rng& rng) {
  dsl::LocationSpec loc;
  switch (uniform_int(rng, 0, 2)) {
    case 0: loc.reference_object = dsl::ReferenceObjectSpec{random_object_filters(rng), std::nullopt}; break;
    case 1: loc.absolute = Vec2{uniform(rng, -10, 10), uniform(rng, -10, 10)}; break;
    default:
      loc.relative = dsl::RelativeLocation{static_cast<dsl::Direction>(uniform_int(rng, 0, 3)), uniform(rng, 0.1, 5)};
  }
  return loc;
}

inline dsl::LogicalForm random_lf(Rng& rng) {
  dsl::LogicalForm lf;
  lf.dialogue_type = static_cast<dsl::DialogueType>(uniform_int(rng, 0, 3));
  switch (lf.dialogue_type) {
    case dsl::DialogueType::HumanGiveCommand: {
      lf.action_sequence.emplace();
      const int n = uniform_int(rng, 1, 3);
      for (int i = 0; i < n; ++i) {
        dsl::ActionSpec a;
        a.action_type = static_cast<dsl::ActionType>(uniform_int(rng, 0, 5));
        switch (a.action_type) {
          case dsl::ActionType::Move: a.location = random_location(rng); break;
          case dsl::ActionType::Turn:
            a.facing.emplace();
            if (coin(rng)) {
              a.facing->relative_yaw = uniform(rng, -3.0, 3.0);
            } else {
              a.facing->location = random_location(rng);
            }
            break;
          case dsl::ActionType::Point:
            if (coin(rng)) {
              a.location = random_location(rng);
            } else {
              a.reference_object = dsl::ReferenceObjectSpec{random_object_filters(rng), dsl::Span{0, 2}};
            }
            break;
          case dsl::ActionType::Grasp:
            a.reference_object = dsl::ReferenceObjectSpec{random_object_filters(rng), std::nullopt};
            break;
          default: break;
        }
        if (a.action_type != dsl::ActionType::Stop && a.action_type != dsl::ActionType::Resume && coin(rng, 0.3)) {
          a.repeat = coin(rng) ? dsl::ConditionSpec{dsl::ConditionKind::RepeatN, uniform_int(rng, 1, 5)}
                               : dsl::ConditionSpec{dsl::ConditionKind::UntilBlocked, std::nullopt};
        }
        lf.action_sequence->push_back(std::move(a));
      }
      break;
    }
    case dsl::DialogueType::GetMemory: {
      memory::FiltersClause f = random_object_filters(rng);
      if (coin(rng)) f.node_type = memory::NodeType::Task;
      if (coin(rng, 0.3)) f.within = memory::WithinClause{{uniform(rng, -5, 5), uniform(rng, -5, 5)}, uniform(rng, 0, 4)};
      if (coin(rng, 0.3)) f.selector = memory::DistanceSelector{memory::SelectorKind::argmax, {uniform(rng, -1, 1), 0.5}};
      lf.filters = f;
      break;
    }
    case dsl::DialogueType::PutMemory:
      lf.upsert.emplace();
      lf.upsert->tags.emplace("has_tag", pick(rng, kValues));
      if (coin(rng)) lf.upsert->tags.emplace("has_colour", pick(rng, kValues));
      break;
    case dsl::DialogueType::Noop: break;
  }
  return lf;
}

// ---- wire -----------------------------------------------------------------

inline std::string random_text(Rng& rng) {
  static const std::vector<std::string> pieces = {"go", " ", "to", "the", "chair", "\"", "\\", "\n", "\xc3\xa9",
                                                  "\xe2\x82\xac", "{", "}", "\t", "0", "\xf0\x9f\x99\x82", "x"};
  std::string s;
  const int n = uniform_int(rng, 0, 12);
  for (int i = 0; i < n; ++i) s += pick(rng, pieces);
  return s;
}

inline gateway::WireMessage random_wire(Rng& rng) {
  using gateway::MessageType;
  gateway::WireMessage m;
  m.type = static_cast<MessageType>(uniform_int(rng, 0, 8));
  if (m.type != MessageType::state || coin(rng, 0.2)) {
    m.seq = std::uniform_int_distribution<std::int64_t>(-1'000'000'000'000LL, 1'000'000'000'000LL)(rng);
  }
  nlohmann::json p = nlohmann::json::object();
  switch (m.type) {
    case MessageType::chat:
      p["text"] = random_text(rng);
      if (coin(rng)) p["speaker"] = "op" + std::to_string(uniform_int(rng, 0, 9));
      break;
    case MessageType::teleop:
      p["command"] = pick(rng, std::vector<std::string>{"forward", "back", "left", "right", "stop", "resume"});
      break;
    case MessageType::tag_object:
      p["memid"] = memory::Memid{rng(), rng()}.hex();
      p["tag"] = "t" + random_text(rng);
      break;
    case MessageType::state:
      p["tick"] = uniform_int(rng, 0, 100000);
      p["snapshot"] = {{"x", uniform(rng, -1e6, 1e6)}, {"chats", nlohmann::json::array({random_text(rng)})}};
      break;
    case MessageType::error: p["reason"] = random_text(rng); break;
    default: break;
  }
  m.payload = p;
  return m;
}

// ---- world ----------------------------------------------------------------

/// Field-of-view check via the dot product and acos, independent of the
/// atan2 path used by the world.
inline bool in_view_oracle(const Pose& viewer, Vec2 p, double half_angle, double range) {
  const double dx = p.x - viewer.x, dy = p.y - viewer.y;
  const double d = std::sqrt(dx * dx + dy * dy);
  if (d > range) return false;
  if (d == 0.0) return true;
  const double c = (dx * std::cos(viewer.yaw) + dy * std::sin(viewer.yaw)) / d;
  return std::acos(std::clamp(c, -1.0, 1.0)) <= half_angle;
}

/// Random non-overlapping scene with the agent at the origin.
inline world::WorldState random_scene(Rng& rng, int n_objects) {
  world::WorldState s;
  s.origin = {-10, -10};
  s.width = 20;
  s.height = 20;
  s.seed = rng();
  s.agent_pose = {0.0, 0.0, uniform(rng, -kPi, kPi)};
  static const std::vector<std::string> classes = {"chair", "cup", "table", "ball"};
  int oid = 1;
  int attempts = 0;
  while (static_cast<int>(s.objects.size()) < n_objects && attempts++ < 1000) {
    world::WorldObject o;
    o.oid = oid;
    o.class_label = pick(rng, classes);
    o.position = {uniform(rng, -9, 9), uniform(rng, -9, 9)};
    o.radius = uniform(rng, 0.1, 0.5);
    if (coin(rng)) o.properties.push_back(pick(rng, kValues));
    o.feature_seed = rng();
    bool ok = std::hypot(o.position.x, o.position.y) > o.radius + 0.1;
    for (const auto& other : s.objects) {
      ok = ok && std::hypot(o.position.x - other.position.x, o.position.y - other.position.y) > o.radius + other.radius;
    }
    if (!ok) continue;
    s.objects.push_back(o);
    ++oid;
  }
  return s;
}

}  // namespace testsupport
