#include <cmath>

#include "doctest.h"
#include "minidroid/error.hpp"
#include "minidroid/world.hpp"
#include "support.hpp"

using namespace minidroid;
using namespace minidroid::world;

namespace {

WorldState open_field() {
  return load_scenario(R"([world]
width = 20
height = 20
origin = -10 -10
[agent]
x = 0
y = 0
yaw = 0
)");
}

}  // namespace

TEST_CASE("normalize_angle lands in [-pi, pi)") {
  testsupport::Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double a = testsupport::uniform(rng, -50, 50);
    const double n = normalize_angle(a);
    CHECK(n >= -kPi);
    CHECK(n < kPi);
    CHECK(std::abs(std::remainder(a - n, kTwoPi)) < 1e-9);
  }
  CHECK(normalize_angle(kPi) == doctest::Approx(-kPi));
}

TEST_CASE("feature vectors are unit norm and seed-determined") {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xffffffffffffffffULL}) {
    const auto v = feature_vector(seed);
    double n = 0;
    for (double c : v) n += c * c;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v == feature_vector(seed));
  }
  CHECK(feature_vector(1) != feature_vector(2));
}

TEST_CASE("forward moves along the heading and advances one tick") {
  auto s = open_field();
  const WorldConfig cfg;
  s.agent_pose.yaw = kPi / 2;
  const auto n = step_physics(s, Forward{0.25}, cfg);
  CHECK(n.agent_pose.x == doctest::Approx(0.0));
  CHECK(n.agent_pose.y == doctest::Approx(0.25));
  CHECK(n.tick == s.tick + 1);
  CHECK(n.last_outcome.status == CommandStatus::ok);
}

TEST_CASE("over-long steps are rejected without moving") {
  auto s = open_field();
  const auto n = step_physics(s, Forward{0.26}, WorldConfig{});
  CHECK(n.last_outcome.status == CommandStatus::rejected);
  CHECK(n.last_outcome.reason == "step_too_long");
  CHECK(n.agent_pose == s.agent_pose);
  CHECK(n.tick == 1);
}

TEST_CASE("discs and walls block motion") {
  auto s = open_field();
  s.objects.push_back({1, "box", {}, {0.4, 0.0}, 0.2, 1});
  auto n = step_physics(s, Forward{0.25}, WorldConfig{});
  CHECK(n.last_outcome.status == CommandStatus::blocked);
  CHECK(n.agent_pose.x == 0.0);

  auto w = open_field();
  w.walls.push_back({{0.1, -1.0}, {0.2, 1.0}});
  n = step_physics(w, Forward{0.25}, WorldConfig{});
  CHECK(n.blocked());

  auto edge = open_field();
  edge.agent_pose = {9.9, 0, 0};
  n = step_physics(edge, Forward{0.25}, WorldConfig{});
  CHECK(n.blocked());
}

TEST_CASE("turn wraps the heading") {
  auto s = open_field();
  s.agent_pose.yaw = 3.0;
  const auto n = step_physics(s, Turn{0.3}, WorldConfig{});
  CHECK(n.agent_pose.yaw == doctest::Approx(normalize_angle(3.3)));
}

TEST_CASE("grasp outcomes") {
  auto s = open_field();
  s.objects.push_back({1, "cup", {}, {0.5, 0.0}, 0.1, 1});
  s.objects.push_back({2, "cup", {}, {3.0, 0.0}, 0.1, 2});
  const WorldConfig cfg;
  CHECK(step_physics(s, Grasp{9}, cfg).last_outcome.reason == "no_such_object");
  CHECK(step_physics(s, Grasp{2}, cfg).last_outcome.reason == "out_of_range");
  auto held = step_physics(s, Grasp{1}, cfg);
  CHECK(held.last_outcome.status == CommandStatus::ok);
  REQUIRE(held.held);
  CHECK(held.held->oid == 1);
  CHECK(held.objects.size() == 1);
  s.objects[1].position = {0.0, 0.5};
  held.objects[0].position = {0.0, 0.5};
  CHECK(step_physics(held, Grasp{2}, cfg).last_outcome.reason == "hands_full");
}

TEST_CASE("field of view agrees with an acos oracle") {
  testsupport::Rng rng(7);
  for (int i = 0; i < 20000; ++i) {
    const Pose viewer{testsupport::uniform(rng, -5, 5), testsupport::uniform(rng, -5, 5),
                      testsupport::uniform(rng, -kPi, kPi)};
    const Vec2 p{testsupport::uniform(rng, -10, 10), testsupport::uniform(rng, -10, 10)};
    WorldConfig cfg;
    cfg.fov_half_angle = testsupport::uniform(rng, 0.1, kPi);
    cfg.view_range = testsupport::uniform(rng, 1, 12);
    // Skip points within rounding distance of the cone edge.
    const double dx = p.x - viewer.x, dy = p.y - viewer.y;
    const double ang = std::abs(angle_diff(std::atan2(dy, dx), viewer.yaw));
    if (std::abs(ang - cfg.fov_half_angle) < 1e-9 || std::abs(std::hypot(dx, dy) - cfg.view_range) < 1e-9) continue;
    CHECK(in_view(viewer, p, cfg) == testsupport::in_view_oracle(viewer, p, cfg.fov_half_angle, cfg.view_range));
  }
}

TEST_CASE("observe returns exactly the visible objects") {
  testsupport::Rng rng(11);
  for (int k = 0; k < 50; ++k) {
    const auto s = testsupport::random_scene(rng, 15);
    const WorldConfig cfg;
    const auto view = observe(s, cfg);
    std::vector<int> expect;
    for (const auto& o : s.objects) {
      if (testsupport::in_view_oracle(s.agent_pose, o.position, cfg.fov_half_angle, cfg.view_range)) expect.push_back(o.oid);
    }
    std::vector<int> got;
    for (const auto& o : view.objects) got.push_back(o.oid);
    CHECK(got == expect);
  }
}

TEST_CASE("jitter is deterministic and bounded to the world") {
  testsupport::Rng rng(3);
  auto s = testsupport::random_scene(rng, 10);
  WorldConfig cfg;
  cfg.jitter_sigma = 0.5;
  cfg.fov_half_angle = kPi;
  cfg.view_range = 100;
  const auto a = observe(s, cfg);
  const auto b = observe(s, cfg);
  REQUIRE(a.objects.size() == s.objects.size());
  bool moved = false;
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    CHECK(a.objects[i].position == b.objects[i].position);
    CHECK(s.bounds().contains(a.objects[i].position));
    moved = moved || a.objects[i].position != s.objects[i].position;
  }
  CHECK(moved);
}

TEST_CASE("scenario parsing") {
  const auto s = load_scenario(R"(# comment
[world]
width = 10
height = 6
origin = -2 -3
seed = 7
[agent]
x = 0
y = 0
yaw = 0
[objects]
chair 5 2 0.3 red,wooden 11
[walls]
1 1 2 2
[human]
x = 1
y = -1
yaw = 0
tick 0 chat "hello there"
tick 3 point 5 2
tick 9 unpoint
)");
  CHECK(s.width == 10);
  CHECK(s.origin == Vec2{-2, -3});
  REQUIRE(s.objects.size() == 1);
  CHECK(s.objects[0].oid == 1);
  CHECK(s.objects[0].properties == std::vector<std::string>{"red", "wooden"});
  REQUIRE(s.walls.size() == 1);
  REQUIRE(s.human);
  CHECK(s.human->pending_chats == std::vector<std::string>{"hello there"});
  auto t = s;
  for (int i = 0; i < 3; ++i) t = step_physics(t, Noop{}, WorldConfig{});
  CHECK(t.human->pointing_target == Vec2{5, 2});
  CHECK(t.human->pending_chats.empty());
  for (int i = 0; i < 6; ++i) t = step_physics(t, Noop{}, WorldConfig{});
  CHECK_FALSE(t.human->pointing_target);
}

TEST_CASE("scenario errors carry line numbers") {
  auto line_of = [](const char* text) {
    try {
      load_scenario(text);
    } catch (const ParseError& e) {
      return e.location();
    }
    return std::size_t{0};
  };
  CHECK(line_of("[world]\nwidth = 10\nheight = x\n") == 3);
  CHECK(line_of("[world]\nwidth = 1\nheight = 1\n[objects]\nchair 0 0\n") == 5);
  CHECK(line_of("width = 3\n") == 1);
  CHECK(line_of("[nowhere]\n") == 1);
  CHECK_THROWS_AS(load_scenario("[world]\nwidth = 4\nheight = 4\n[agent]\nx = 9\n"), Error);
  CHECK_THROWS_AS(load_scenario("[world]\nwidth = 4\nheight = 4\n[agent]\nx = 1\ny = 1\n[objects]\na 2 2 0.5 - 1\nb 2.5 2 0.5 - 2\n"),
                  Error);
}

TEST_CASE("dump is exact and stable") {
  auto s = load_scenario_file(MINIDROID_SOURCE_DIR "/scenarios/room.scn");
  auto a = s;
  auto b = s;
  for (int i = 0; i < 50; ++i) {
    const ActionCommand cmd = i % 3 ? ActionCommand{Forward{0.2}} : ActionCommand{Turn{0.1}};
    a = step_physics(a, cmd, WorldConfig{});
    b = step_physics(b, cmd, WorldConfig{});
  }
  CHECK(dump(a) == dump(b));
  CHECK(a == b);
  CHECK(dump(a) != dump(s));
}
