#include <set>

#include "doctest.h"
#include "minidroid/error.hpp"
#include "minidroid/memory.hpp"
#include "support.hpp"

using namespace minidroid;
using namespace minidroid::memory;

namespace {

ReferenceObjectPayload chair_at(Vec2 p, std::uint64_t seed = 1) {
  return {p, 0.3, "chair", world::feature_vector(seed), 0, std::nullopt};
}

}  // namespace

TEST_CASE("memids are unique and hex round-trips") {
  MemoryStore s(5);
  std::set<Memid> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto id = s.create_node(ChatPayload{"human", "x"}, i);
    CHECK(seen.insert(id).second);
    CHECK(id.hex().size() == 32);
    CHECK(Memid::parse(id.hex()) == id);
  }
  CHECK_FALSE(Memid::parse("xyz"));
  CHECK_FALSE(Memid::parse(std::string(31, 'a')));
}

TEST_CASE("get_node touches access time and reports missing ids") {
  MemoryStore s;
  const auto id = s.create_node(chair_at({1, 2}), 3);
  CHECK(s.peek(id)->last_accessed_tick == 3);
  const auto n = s.get_node(id, 9);
  CHECK(n.created_tick == 3);
  CHECK(s.peek(id)->last_accessed_tick == 9);
  try {
    s.get_node(Memid{1, 1}, 0);
    FAIL("expected not_found");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_found);
  }
}

TEST_CASE("create_node validates its payload") {
  MemoryStore s;
  CHECK_THROWS_AS(s.create_node(NodeType::Chat, chair_at({0, 0}), 0), Error);
  auto bad = chair_at({0, 0});
  bad.feature_vec[0] += 0.1;
  CHECK_THROWS_AS(s.create_node(bad, 0), Error);
  CHECK_THROWS_AS(s.create_node(ArchivePayload{}, 0), Error);
  CHECK_THROWS_AS(s.add_triple(Memid{7, 7}, "has_tag", std::string("x"), 0), Error);
}

TEST_CASE("triples index both ways and die with their nodes") {
  MemoryStore s;
  const auto a = s.create_node(chair_at({0, 0}), 0);
  const auto b = s.create_node(chair_at({3, 0}, 2), 0);
  s.add_triple(a, "has_tag", std::string("chair"), 0);
  s.add_triple(a, "near", b, 0);
  s.add_triple(b, "has_colour", std::string("red"), 0);
  CHECK(s.has_triple(a, "near", b.hex()));
  CHECK(s.triples_about(a).size() == 2);
  CHECK(s.query(FiltersClause{}.tag("near", b.hex()), 0) == std::vector<Memid>{a});
  s.delete_node(b);
  CHECK_FALSE(s.contains(b));
  CHECK(s.count(NodeType::Triple) == 1);
  CHECK(s.query(FiltersClause{}.tag("near", b.hex()), 0).empty());
}

TEST_CASE("archives freeze a payload") {
  MemoryStore s;
  const auto id = s.create_node(chair_at({1, 1}), 0);
  const auto arch = s.archive(id, 4);
  s.upsert_reference_object(id, chair_at({2, 2}), 5);
  const auto& a = std::get<ArchivePayload>(s.peek(arch)->payload);
  CHECK(a.source_memid == id);
  CHECK(std::get<ReferenceObjectPayload>(archived_payload(a)).position == Vec2{1, 1});
  try {
    s.archive(arch, 6);
    FAIL("archiving an archive must fail");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_target);
  }
  CHECK_THROWS_AS(s.replace_payload(arch, ChatPayload{}, 7), Error);
}

TEST_CASE("upsert updates in place and rejects other node types") {
  MemoryStore s;
  const auto id = s.upsert_reference_object(std::nullopt, chair_at({0, 0}), 1);
  CHECK(s.upsert_reference_object(id, chair_at({0.1, 0}), 2) == id);
  CHECK(s.count(NodeType::ReferenceObject) == 1);
  CHECK(std::get<ReferenceObjectPayload>(s.peek(id)->payload).position == Vec2{0.1, 0});
  const auto chat = s.create_node(ChatPayload{"a", "b"}, 0);
  try {
    s.upsert_reference_object(chat, chair_at({0, 0}), 3);
    FAIL("expected invalid_target");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_target);
  }
}

TEST_CASE("query ordering: selector distance, then age, then insertion") {
  MemoryStore s;
  const auto far = s.create_node(chair_at({5, 0}), 0);
  const auto near_late = s.create_node(chair_at({1, 0}, 2), 4);
  const auto near_early = s.create_node(chair_at({-1, 0}, 3), 2);
  FiltersClause f;
  f.node_type = NodeType::ReferenceObject;
  CHECK(s.query(f, 0) == std::vector<Memid>{far, near_early, near_late});
  f.selector = DistanceSelector{SelectorKind::argmin, {0, 0}};
  CHECK(s.query(f, 0) == std::vector<Memid>{near_early, near_late, far});
  f.selector->kind = SelectorKind::argmax;
  f.limit = 1;
  CHECK(s.query(f, 0) == std::vector<Memid>{far});
  f = FiltersClause{};
  f.within = WithinClause{{0, 0}, 1.0};
  CHECK(s.query(f, 10).size() == 2);
  CHECK(s.peek(near_late)->last_accessed_tick == 10);
}

TEST_CASE("query equals a brute-force scan") {
  testsupport::Rng rng(2024);
  for (int store_i = 0; store_i < 10; ++store_i) {
    auto rs = testsupport::random_store(rng, testsupport::uniform_int(rng, 50, 600));
    for (int q = 0; q < 40; ++q) {
      const auto f = testsupport::random_filters(rng, rs);
      const auto expect = testsupport::brute_force_query(rs.store, f);
      CHECK(rs.store.query(f, 0) == expect);
    }
  }
}

TEST_CASE("filters text parsing and checking") {
  const auto f = parse_filters(R"({"has_tag":["chair","red"],"node_type":"REFERENCE_OBJECT","limit":2,
                                   "within":{"x":1,"y":2,"distance":3},"selector":{"kind":"ARGMAX","x":0,"y":0}})");
  CHECK(f.tags.size() == 2);
  CHECK(f.node_type == NodeType::ReferenceObject);
  CHECK(f.limit == 2);
  CHECK(f.within->distance == 3);
  CHECK(f.selector->kind == SelectorKind::argmax);
  CHECK(filters_from_json(to_json(f)) == f);
  CHECK(check(f).empty());
  CHECK_FALSE(check(FiltersClause{}).empty());
  FiltersClause lim;
  lim.node_type = NodeType::Chat;
  lim.limit = 0;
  CHECK(check(lim) == std::vector<std::string>{"filters.limit: must be >= 1"});
  CHECK_THROWS_AS(parse_filters(R"({"node_type":"THING"})"), ParseError);
  CHECK_THROWS_AS(parse_filters(R"({"within":{"x":1}})"), ParseError);
  CHECK_THROWS_AS(parse_filters(R"({"has_tag":3})"), ParseError);
  CHECK_THROWS_AS(parse_filters("{oops"), ParseError);
  CHECK(describe_phrase(FiltersClause{}.tag("has_tag", "chair").tag("has_colour", "red")) == "red chair");
  CHECK(describe_phrase(FiltersClause{}) == "that");
}

TEST_CASE("dump, load, dump is byte-identical") {
  testsupport::Rng rng(99);
  for (int i = 0; i < 5; ++i) {
    auto rs = testsupport::random_store(rng, 300);
    rs.store.archive(rs.ids.front(), 50);
    rs.store.create_node(SelfPayload{{1, 2, 0.5}, 3}, 7);
    rs.store.create_node(ProgramPayload{"{\"dialogue_type\":\"NOOP\"}", "ok"}, 7);
    rs.store.create_node(SetPayload{"s", {rs.ids[0], rs.ids[1]}}, 7);
    const auto text = rs.store.dump();
    auto loaded = MemoryStore::load(text);
    CHECK(loaded.dump() == text);
    CHECK(loaded.size() == rs.store.size());
    // Ids minted after loading continue the sequence.
    const auto next_a = rs.store.create_node(ChatPayload{"a", "b"}, 1);
    const auto next_b = loaded.create_node(ChatPayload{"a", "b"}, 1);
    CHECK(next_a == next_b);
    const auto f = testsupport::random_filters(rng, rs);
    CHECK(loaded.query(f, 0) == rs.store.query(f, 0));
  }
  CHECK_THROWS_AS(MemoryStore::load("{\"format\":\"other\"}"), ParseError);
  CHECK_THROWS(MemoryStore::load("not json"));
}
