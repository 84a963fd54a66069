#include "minidroid/world.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "minidroid/error.hpp"

namespace minidroid::world {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller on raw engine output; std::normal_distribution is not
// bit-stable across standard libraries.
double standard_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

bool collides(const WorldState& s, Vec2 from, Vec2 to) {
  if (!s.bounds().contains(to)) return true;
  for (const auto& wall : s.walls) {
    if (segment_hits_rect(from, to, wall)) return true;
  }
  for (const auto& obj : s.objects) {
    if (segment_point_distance(from, to, obj.position) < obj.radius) return true;
  }
  return false;
}

void apply_script(HumanAvatar& human, Tick tick) {
  human.pending_chats.clear();
  for (const auto& c : human.chat_script) {
    if (c.tick == tick) human.pending_chats.push_back(c.text);
  }
  for (const auto& p : human.point_script) {
    if (p.tick == tick) human.pointing_target = p.target;
  }
}

}  // namespace

FeatureVec feature_vector(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  FeatureVec v{};
  double norm2 = 0.0;
  while (norm2 == 0.0) {
    for (auto& c : v) {
      c = standard_normal(rng);
      norm2 += c * c;
    }
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& c : v) c *= inv;
  return v;
}

const WorldObject* WorldState::find(int oid) const {
  auto it = std::find_if(objects.begin(), objects.end(), [oid](const WorldObject& o) { return o.oid == oid; });
  return it == objects.end() ? nullptr : &*it;
}

std::string_view to_string(CommandStatus s) {
  switch (s) {
    case CommandStatus::ok: return "ok";
    case CommandStatus::blocked: return "blocked";
    case CommandStatus::failed: return "failed";
    case CommandStatus::rejected: return "rejected";
  }
  return "?";
}

std::string describe(const ActionCommand& cmd) {
  char buf[96];
  return std::visit(
      [&](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Forward>) {
          std::snprintf(buf, sizeof buf, "forward(%.6g)", c.distance);
        } else if constexpr (std::is_same_v<T, Turn>) {
          std::snprintf(buf, sizeof buf, "turn(%.6g)", c.delta);
        } else if constexpr (std::is_same_v<T, Grasp>) {
          std::snprintf(buf, sizeof buf, "grasp(%d)", c.oid);
        } else if constexpr (std::is_same_v<T, PointAt>) {
          if (c.target) {
            std::snprintf(buf, sizeof buf, "point(%.6g,%.6g)", c.target->x, c.target->y);
          } else {
            std::snprintf(buf, sizeof buf, "point(none)");
          }
        } else {
          std::snprintf(buf, sizeof buf, "noop");
        }
        return buf;
      },
      cmd);
}

WorldState step_physics(const WorldState& state, const ActionCommand& cmd, const WorldConfig& config) {
  WorldState next = state;
  next.last_outcome = {};

  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Forward>) {
          if (!(std::abs(c.distance) <= config.max_step)) {
            next.last_outcome = {CommandStatus::rejected, "step_too_long"};
            return;
          }
          const Vec2 from = state.agent_pose.position();
          const Vec2 to = from + state.agent_pose.heading() * c.distance;
          if (collides(state, from, to)) {
            next.last_outcome = {CommandStatus::blocked, "blocked"};
          } else {
            next.agent_pose.x = to.x;
            next.agent_pose.y = to.y;
          }
        } else if constexpr (std::is_same_v<T, Turn>) {
          next.agent_pose.yaw = normalize_angle(state.agent_pose.yaw + c.delta);
        } else if constexpr (std::is_same_v<T, Grasp>) {
          auto it = std::find_if(next.objects.begin(), next.objects.end(),
                                 [&](const WorldObject& o) { return o.oid == c.oid; });
          if (it == next.objects.end()) {
            next.last_outcome = {CommandStatus::rejected, "no_such_object"};
          } else if (next.held) {
            next.last_outcome = {CommandStatus::failed, "hands_full"};
          } else if (distance(it->position, state.agent_pose.position()) > config.grasp_range) {
            next.last_outcome = {CommandStatus::failed, "out_of_range"};
          } else {
            next.held = *it;
            next.objects.erase(it);
          }
        } else if constexpr (std::is_same_v<T, PointAt>) {
          next.agent_pointing = c.target;
        }
      },
      cmd);

  next.tick = state.tick + 1;
  if (next.human) apply_script(*next.human, next.tick);
  return next;
}

bool in_view(const Pose& viewer, Vec2 p, const WorldConfig& config) {
  const Vec2 d = p - viewer.position();
  const double dist = d.norm();
  if (dist > config.view_range) return false;
  if (dist == 0.0) return true;
  return std::abs(angle_diff(std::atan2(d.y, d.x), viewer.yaw)) <= config.fov_half_angle;
}

WorldView observe(const WorldState& state, const WorldConfig& config) {
  WorldView view;
  view.tick = state.tick;
  view.bounds = state.bounds();
  view.agent_pose = state.agent_pose;
  view.held = state.held;
  for (const auto& obj : state.objects) {
    if (!in_view(state.agent_pose, obj.position, config)) continue;
    WorldObject seen = obj;
    if (config.jitter_sigma > 0.0) {
      std::mt19937_64 rng(splitmix64(state.seed ^ splitmix64(static_cast<std::uint64_t>(state.tick)) ^
                                     splitmix64(static_cast<std::uint64_t>(obj.oid) << 32)));
      const Rect b = state.bounds();
      seen.position.x = std::clamp(obj.position.x + config.jitter_sigma * standard_normal(rng), b.lo.x, b.hi.x);
      seen.position.y = std::clamp(obj.position.y + config.jitter_sigma * standard_normal(rng), b.lo.y, b.hi.y);
    }
    view.objects.push_back(std::move(seen));
  }
  std::sort(view.objects.begin(), view.objects.end(),
            [](const WorldObject& a, const WorldObject& b) { return a.oid < b.oid; });
  if (state.human && in_view(state.agent_pose, state.human->pose.position(), config)) {
    view.human = HumanView{state.human->pose, state.human->pointing_target};
  }
  return view;
}

void validate(const WorldState& s) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::validation, msg); };
  if (!(s.width > 0.0) || !(s.height > 0.0)) fail("world width and height must be positive");
  const Rect b = s.bounds();
  if (!b.contains(s.agent_pose.position())) fail("agent outside world bounds");
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    if (!(o.radius > 0.0)) fail("object " + std::to_string(o.oid) + " has non-positive radius");
    if (!b.contains(o.position)) fail("object " + std::to_string(o.oid) + " outside world bounds");
    if (distance(o.position, s.agent_pose.position()) < o.radius) {
      fail("agent starts inside object " + std::to_string(o.oid));
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto& p = s.objects[j];
      if (p.oid == o.oid) fail("duplicate object id " + std::to_string(o.oid));
      if (!(distance(o.position, p.position) > o.radius + p.radius)) {
        fail("objects " + std::to_string(p.oid) + " and " + std::to_string(o.oid) + " overlap");
      }
    }
  }
  for (const auto& w : s.walls) {
    if (w.contains(s.agent_pose.position())) fail("agent starts inside a wall");
  }
  if (s.human && !b.contains(s.human->pose.position())) fail("human outside world bounds");
}

namespace {

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(a, e - a + 1));
}

struct LineReader {
  std::size_t line = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("scenario line " + std::to_string(line) + ": " + msg, line);
  }

  double number(std::string_view tok) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
      fail("expected a number, got '" + std::string(tok) + "'");
    }
    return v;
  }

  std::int64_t integer(std::string_view tok) const {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      fail("expected an integer, got '" + std::string(tok) + "'");
    }
    return v;
  }
};

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

WorldState load_scenario(std::string_view text) {
  WorldState s;
  LineReader r;
  std::string section;
  bool have_width = false;
  bool have_height = false;
  bool have_human = false;
  HumanAvatar human;
  int next_oid = 1;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++r.line;

    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') r.fail("unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "world" && section != "agent" && section != "objects" && section != "walls" &&
          section != "human") {
        r.fail("unknown section [" + section + "]");
      }
      if (section == "human") have_human = true;
      continue;
    }
    if (section.empty()) r.fail("content before the first section");

    if (section == "objects") {
      const auto tok = split_ws(line);
      if (tok.size() != 6) r.fail("object needs: class x y radius properties feature_seed");
      WorldObject o;
      o.oid = next_oid++;
      o.class_label = tok[0];
      o.position = {r.number(tok[1]), r.number(tok[2])};
      o.radius = r.number(tok[3]);
      if (tok[4] != "-") {
        std::string_view props = tok[4];
        while (!props.empty()) {
          const auto comma = props.find(',');
          auto p = props.substr(0, comma);
          if (p.empty()) r.fail("empty property");
          o.properties.emplace_back(p);
          props = comma == std::string_view::npos ? std::string_view{} : props.substr(comma + 1);
        }
      }
      const auto seed = r.integer(tok[5]);
      if (seed < 0) r.fail("feature_seed must be non-negative");
      o.feature_seed = static_cast<std::uint64_t>(seed);
      s.objects.push_back(std::move(o));
      continue;
    }
    if (section == "walls") {
      const auto tok = split_ws(line);
      if (tok.size() != 4) r.fail("wall needs: x0 y0 x1 y1");
      const double x0 = r.number(tok[0]), y0 = r.number(tok[1]), x1 = r.number(tok[2]), y1 = r.number(tok[3]);
      s.walls.push_back({{std::min(x0, x1), std::min(y0, y1)}, {std::max(x0, x1), std::max(y0, y1)}});
      continue;
    }
    if (section == "human" && line.rfind("tick", 0) == 0) {
      // tick N chat "text" | tick N point X Y | tick N unpoint
      const auto tok = split_ws(line);
      if (tok.size() < 3) r.fail("event needs: tick N <chat|point|unpoint> ...");
      const Tick t = r.integer(tok[1]);
      if (t < 0) r.fail("event tick must be non-negative");
      if (tok[2] == "chat") {
        const auto q0 = line.find('"');
        const auto q1 = line.rfind('"');
        if (q0 == std::string::npos || q1 == q0) r.fail("chat text must be double-quoted");
        human.chat_script.push_back({t, line.substr(q0 + 1, q1 - q0 - 1)});
      } else if (tok[2] == "point") {
        if (tok.size() != 5) r.fail("point needs: tick N point X Y");
        human.point_script.push_back({t, Vec2{r.number(tok[3]), r.number(tok[4])}});
      } else if (tok[2] == "unpoint") {
        if (tok.size() != 3) r.fail("unpoint takes no arguments");
        human.point_script.push_back({t, std::nullopt});
      } else {
        r.fail("unknown event '" + tok[2] + "'");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section == "world") {
      if (key == "width") {
        s.width = r.number(value);
        have_width = true;
      } else if (key == "height") {
        s.height = r.number(value);
        have_height = true;
      } else if (key == "seed") {
        s.seed = static_cast<std::uint64_t>(r.integer(value));
      } else if (key == "origin") {
        const auto tok = split_ws(value);
        if (tok.size() != 2) r.fail("origin needs: X Y");
        s.origin = {r.number(tok[0]), r.number(tok[1])};
      } else {
        r.fail("unknown [world] key '" + key + "'");
      }
    } else {
      Pose& pose = section == "agent" ? s.agent_pose : human.pose;
      if (key == "x") {
        pose.x = r.number(value);
      } else if (key == "y") {
        pose.y = r.number(value);
      } else if (key == "yaw") {
        pose.yaw = normalize_angle(r.number(value));
      } else {
        r.fail("unknown [" + section + "] key '" + key + "'");
      }
    }
  }

  if (!have_width || !have_height) throw ParseError("scenario: [world] needs width and height", r.line);
  if (have_human) {
    std::stable_sort(human.chat_script.begin(), human.chat_script.end(),
                     [](const auto& a, const auto& b) { return a.tick < b.tick; });
    std::stable_sort(human.point_script.begin(), human.point_script.end(),
                     [](const auto& a, const auto& b) { return a.tick < b.tick; });
    s.human = std::move(human);
    apply_script(*s.human, 0);
  }
  validate(s);
  return s;
}

WorldState load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open scenario " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_scenario(buf.str());
}

std::string dump(const WorldState& s) {
  std::ostringstream out;
  out << std::hexfloat;
  out << "tick " << s.tick << " outcome " << to_string(s.last_outcome.status) << ' ' << s.last_outcome.reason << '\n';
  out << "agent " << s.agent_pose.x << ' ' << s.agent_pose.y << ' ' << s.agent_pose.yaw << '\n';
  if (s.agent_pointing) out << "pointing " << s.agent_pointing->x << ' ' << s.agent_pointing->y << '\n';
  if (s.held) out << "held " << s.held->oid << '\n';
  for (const auto& o : s.objects) {
    out << "object " << o.oid << ' ' << o.class_label << ' ' << o.position.x << ' ' << o.position.y << '\n';
  }
  if (s.human) {
    out << "human " << s.human->pose.x << ' ' << s.human->pose.y << ' ' << s.human->pose.yaw;
    if (s.human->pointing_target) out << " point " << s.human->pointing_target->x << ' ' << s.human->pointing_target->y;
    out << '\n';
  }
  return out.str();
}

}  // namespace minidroid::world
