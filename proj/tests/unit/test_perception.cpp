#include <cmath>
#include <set>

#include "doctest.h"
#include "minidroid/perception.hpp"
#include "support.hpp"

using namespace minidroid;
using namespace minidroid::perception;
using memory::NodeType;

namespace {

/// Unit vector with the given cosine to e0.
world::FeatureVec with_cosine(double c, std::size_t axis = 1) {
  world::FeatureVec v{};
  v[0] = c;
  v[axis] = std::sqrt(1.0 - c * c);
  return v;
}

world::FeatureVec e0() {
  world::FeatureVec v{};
  v[0] = 1.0;
  return v;
}

memory::Memid add_ro(memory::MemoryStore& m, const std::string& cls, Vec2 p, const world::FeatureVec& f, Tick t = 0) {
  return m.create_node(memory::ReferenceObjectPayload{p, 0.3, cls, f, t, std::nullopt}, t);
}

Detection det(const std::string& cls, Vec2 p, const world::FeatureVec& f) {
  Detection d;
  d.class_label = cls;
  d.position = p;
  d.radius = 0.3;
  d.feature_vec = f;
  return d;
}

}  // namespace

TEST_CASE("cosine of constructed vectors") {
  CHECK(cosine(e0(), with_cosine(0.93)) == doctest::Approx(0.93));
  CHECK(cosine(e0(), world::FeatureVec{}) == 0.0);
  const auto f = world::feature_vector(42);
  CHECK(cosine(f, f) == doctest::Approx(1.0));
}

TEST_CASE("dedup thresholds") {
  memory::MemoryStore m;
  const auto id = add_ro(m, "chair", {0, 0}, e0());
  SUBCASE("inside both thresholds matches") {
    const auto d = deduplicate(det("chair", {0.5, 0}, with_cosine(0.95)), m);
    CHECK(d.verdict == Verdict::match);
    CHECK(*d.memid == id);
    CHECK(d.distance == doctest::Approx(0.5));
    CHECK(d.feature_similarity == doctest::Approx(0.95));
  }
  SUBCASE("distance at epsilon is new") {
    CHECK(deduplicate(det("chair", {0.75, 0}, e0()), m).verdict == Verdict::new_object);
    CHECK(deduplicate(det("chair", {0.7499, 0}, e0()), m).verdict == Verdict::match);
  }
  SUBCASE("similarity below tau is new") {
    CHECK(deduplicate(det("chair", {0.1, 0}, with_cosine(0.89)), m).verdict == Verdict::new_object);
    CHECK(deduplicate(det("chair", {0.1, 0}, with_cosine(0.9001)), m).verdict == Verdict::match);
  }
  SUBCASE("class must agree") {
    CHECK(deduplicate(det("cup", {0, 0}, e0()), m).verdict == Verdict::new_object);
  }
}

TEST_CASE("dedup prefers higher similarity over nearer") {
  memory::MemoryStore m;
  const auto near = add_ro(m, "chair", {0.1, 0}, with_cosine(0.92, 1));
  const auto far = add_ro(m, "chair", {0.6, 0}, with_cosine(0.95, 2));
  const auto d = deduplicate(det("chair", {0, 0}, e0()), m);
  CHECK(*d.memid == far);
  CHECK(d.feature_similarity == doctest::Approx(0.95));
  // Equal similarity: nearest.
  memory::MemoryStore n;
  add_ro(n, "chair", {0.6, 0}, e0());
  const auto b = add_ro(n, "chair", {0.2, 0}, e0());
  CHECK(*deduplicate(det("chair", {0, 0}, e0()), n).memid == b);
  (void)near;
}

TEST_CASE("dedup agrees with a brute-force oracle") {
  testsupport::Rng rng(5);
  const std::vector<std::string> classes = {"chair", "cup"};
  for (int trial = 0; trial < 300; ++trial) {
    memory::MemoryStore m;
    std::vector<memory::Memid> ids;
    const int n = testsupport::uniform_int(rng, 0, 12);
    for (int i = 0; i < n; ++i) {
      const double c = testsupport::uniform(rng, 0.8, 1.0);
      ids.push_back(add_ro(m, testsupport::pick(rng, classes),
                           {testsupport::uniform(rng, -1, 1), testsupport::uniform(rng, -1, 1)},
                           with_cosine(c, 1 + testsupport::uniform_int(rng, 0, 5))));
    }
    const auto d = det(testsupport::pick(rng, classes), {0, 0}, e0());
    // Oracle: filter, then lexicographic (similarity desc, distance asc, insertion).
    std::optional<std::size_t> best;
    double bs = 0, bd = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& ro = std::get<memory::ReferenceObjectPayload>(m.peek(ids[i])->payload);
      const double dist = std::hypot(ro.position.x, ro.position.y);
      const double sim = ro.feature_vec[0];
      if (ro.class_label != d.class_label || dist >= 0.75 || sim < 0.9) continue;
      if (!best || sim > bs || (sim == bs && dist < bd)) {
        best = i;
        bs = sim;
        bd = dist;
      }
    }
    const auto got = deduplicate(d, m);
    if (best) {
      REQUIRE(got.verdict == Verdict::match);
      CHECK(*got.memid == ids[*best]);
    } else {
      CHECK(got.verdict == Verdict::new_object);
    }
  }
}

TEST_CASE("merge writes tags and never lets two detections claim one node") {
  memory::MemoryStore m;
  Detection a = det("chair", {0, 0}, e0());
  a.properties = {"red", "wooden"};
  Detection b = det("chair", {0.2, 0}, e0());
  const auto out = merge_detections({a, b}, m, 3);
  REQUIRE(out.size() == 2);
  CHECK(out[0].verdict == Verdict::new_object);
  CHECK(out[1].verdict == Verdict::new_object);
  CHECK(*out[0].memid != *out[1].memid);
  CHECK(m.count(NodeType::ReferenceObject) == 2);
  CHECK(m.has_triple(*out[0].memid, "has_tag", "chair"));
  CHECK(m.has_triple(*out[0].memid, "has_tag", "red"));
  CHECK(m.has_triple(*out[0].memid, "has_colour", "red"));
  CHECK_FALSE(m.has_triple(*out[0].memid, "has_colour", "wooden"));

  // Second pass: both match, no new triples.
  const auto triples = m.count(NodeType::Triple);
  const auto again = merge_detections({a, b}, m, 4);
  CHECK(again[0].verdict == Verdict::match);
  CHECK(again[1].verdict == Verdict::match);
  CHECK(m.count(NodeType::ReferenceObject) == 2);
  CHECK(m.count(NodeType::Triple) == triples);
  CHECK(std::get<memory::ReferenceObjectPayload>(m.peek(*again[0].memid)->payload).last_seen_tick == 0);
}

TEST_CASE("fast pass maintains self, player and attention") {
  world::WorldState s;
  s.origin = {-5, -5};
  s.width = s.height = 10;
  s.human = world::HumanAvatar{};
  s.human->pose = {3, 0, kPi};
  world::WorldConfig wc;
  memory::MemoryStore m;
  PerceptionConfig pc;

  perceive_fast(world::observe(s, wc), m, 0, pc);
  REQUIRE(m.count(NodeType::Self) == 1);
  REQUIRE(m.count(NodeType::Player) == 1);
  auto player = [&] { return std::get<memory::PlayerPayload>(m.peek(m.of_type(NodeType::Player)[0])->payload); };
  CHECK(player().name == "human");
  CHECK_FALSE(player().attention);

  // Unchanged view: no writes.
  const auto before = m.dump();
  perceive_fast(world::observe(s, wc), m, 0, pc);
  CHECK(m.dump() == before);

  s.human->pointing_target = Vec2{2, 2};
  perceive_fast(world::observe(s, wc), m, 5, pc);
  REQUIRE(player().attention);
  CHECK(*player().attention == Vec2{2, 2});
  CHECK(player().attention_tick == 5);

  // The human leaves the field of view; attention persists until the horizon.
  s.human->pose = {-3, 0, 0};
  s.human->pointing_target.reset();
  perceive_fast(world::observe(s, wc), m, 100, pc);
  CHECK(player().attention);
  CHECK(player().pose.x == 3);
  perceive_fast(world::observe(s, wc), m, 305, pc);
  CHECK(player().attention);
  perceive_fast(world::observe(s, wc), m, 306, pc);
  CHECK_FALSE(player().attention);

  s.agent_pose = {1, 1, 0.5};
  perceive_fast(world::observe(s, wc), m, 307, pc);
  const auto self = std::get<memory::SelfPayload>(m.peek(m.of_type(NodeType::Self)[0])->payload);
  CHECK(self.pose == s.agent_pose);
  CHECK(m.count(NodeType::Self) == 1);
}

TEST_CASE("slow perception is idempotent over static scenes") {
  testsupport::Rng rng(99);
  for (int scene = 0; scene < 50; ++scene) {
    auto s = testsupport::random_scene(rng, testsupport::uniform_int(rng, 0, 12));
    world::WorldConfig wc;
    memory::MemoryStore m;
    std::set<int> seen;
    for (Tick t = 0; t < 100; ++t) {
      const auto view = world::observe(s, wc);
      for (const auto& o : view.objects) seen.insert(o.oid);
      perceive_slow(view, m, t);
      s = world::step_physics(s, world::Turn{0.1}, wc);
    }
    CHECK(m.count(NodeType::ReferenceObject) == seen.size());
    // Soundness: every remembered object is a real one of the same class.
    for (const auto& id : m.of_type(NodeType::ReferenceObject)) {
      const auto& ro = std::get<memory::ReferenceObjectPayload>(m.peek(id)->payload);
      REQUIRE(ro.track_id);
      const auto* o = s.find(*ro.track_id);
      REQUIRE(o);
      CHECK(o->class_label == ro.class_label);
      CHECK(ro.position == o->position);
    }
  }
}

TEST_CASE("jitter within epsilon keeps one node per object, large jitter splits") {
  world::WorldState s;
  s.origin = {-10, -10};
  s.width = s.height = 20;
  s.seed = 7;
  s.objects.push_back({1, "chair", {}, {3, 0}, 0.3, 11});
  world::WorldConfig small;
  small.jitter_sigma = 0.05;
  memory::MemoryStore m;
  int matches = 0;
  for (Tick t = 0; t < 100; ++t) {
    s.tick = t;
    for (const auto& d : perceive_slow(world::observe(s, small), m, t)) matches += d.verdict == Verdict::match;
  }
  CHECK(m.count(NodeType::ReferenceObject) == 1);
  CHECK(matches == 99);

  world::WorldConfig large;
  large.jitter_sigma = 2.0;
  memory::MemoryStore n;
  int fresh = 0;
  for (Tick t = 0; t < 100; ++t) {
    s.tick = t;
    for (const auto& d : perceive_slow(world::observe(s, large), n, t)) fresh += d.verdict == Verdict::new_object;
  }
  CHECK(fresh > 1);
  CHECK(n.count(NodeType::ReferenceObject) == static_cast<std::size_t>(fresh));
}

TEST_CASE("simulated module splits fast and slow") {
  auto s = testsupport::random_scene(*std::make_unique<testsupport::Rng>(3), 5);
  s.agent_pose.yaw = 0;
  SimulatedPerception p;
  memory::MemoryStore m;
  const auto view = world::observe(s, {});
  p.fast(view, m, 0);
  CHECK(m.count(NodeType::ReferenceObject) == 0);
  const auto dets = p.slow(view);
  CHECK(dets.size() == view.objects.size());
  CHECK(m.count(NodeType::ReferenceObject) == 0);
}
