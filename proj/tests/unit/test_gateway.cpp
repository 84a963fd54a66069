#include <atomic>
#include <chrono>
#include <thread>

#include "client.hpp"
#include "doctest.h"
#include "minidroid/error.hpp"
#include "minidroid/gateway.hpp"
#include "support.hpp"

using namespace minidroid;
using namespace minidroid::gateway;
using nlohmann::json;

namespace {

core::AgentSnapshot snapshot_with(const std::string& memid, std::vector<std::string> tags) {
  core::AgentSnapshot s;
  s.tick = 4;
  json t = json::array();
  for (const auto& tag : tags) t.push_back({"has_tag", tag});
  s.doc = {{"tick", 4}, {"reference_objects", json::array({{{"memid", memid}, {"tags", t}}})}};
  return s;
}

WireMessage msg(MessageType t, json payload, std::optional<std::int64_t> seq = std::nullopt) {
  return {t, seq, std::move(payload)};
}

}  // namespace

TEST_CASE("codec round trip over random messages") {
  testsupport::Rng rng(77);
  for (int i = 0; i < 2000; ++i) {
    const auto m = testsupport::random_wire(rng);
    const auto text = encode(m);
    const auto back = decode(text);
    CHECK(back == m);
    CHECK(encode(back) == text);
  }
}

TEST_CASE("encoding is canonical") {
  const auto text = encode(msg(MessageType::chat, {{"text", "hi"}, {"speaker", "human"}}, 7));
  CHECK(text == R"({"payload":{"speaker":"human","text":"hi"},"seq":7,"type":"chat"})");
  CHECK(encode(make_ack(std::nullopt)) == R"({"payload":{},"type":"ack"})");
}

TEST_CASE("decode rejects malformed documents") {
  CHECK_THROWS_AS(decode("{nope"), ParseError);
  CHECK_THROWS_AS(decode("[]"), Error);
  CHECK_THROWS_AS(decode(R"({"type":"dance","payload":{}})"), Error);
  CHECK_THROWS_AS(decode(R"({"type":"chat","payload":{}})"), Error);
  CHECK_THROWS_AS(decode(R"({"type":"chat","payload":{"text":3}})"), Error);
  CHECK_THROWS_AS(decode(R"({"type":"chat","seq":"1","payload":{"text":"x"}})"), Error);
  CHECK_THROWS_AS(decode(R"({"type":"chat","payload":{"text":"x"},"extra":1})"), Error);
  CHECK_THROWS_AS(decode(R"({"type":"teleop","payload":{"command":"dance"}})"), Error);
  CHECK_THROWS_AS(decode(R"({"type":"tag_object","payload":{"memid":"zz","tag":"x"}})"), Error);
  CHECK_NOTHROW(decode(R"({"type":"pause","payload":{}})"));
}

TEST_CASE("framing is a big-endian length prefix") {
  const auto f = frame("abc");
  CHECK(f == std::string("\0\0\0\3abc", 7));
  const std::string big(300, 'x');
  const auto g = frame(big);
  CHECK(static_cast<unsigned char>(g[2]) == 1);
  CHECK(static_cast<unsigned char>(g[3]) == 44);
}

TEST_CASE("frame decoder reassembles byte-at-a-time input") {
  testsupport::Rng rng(3);
  std::vector<std::string> payloads;
  std::string stream;
  for (int i = 0; i < 50; ++i) {
    payloads.push_back(encode(testsupport::random_wire(rng)));
    stream += frame(payloads.back());
  }
  FrameDecoder d;
  std::vector<std::string> got;
  std::size_t off = 0;
  while (off < stream.size()) {
    const auto n = std::min<std::size_t>(stream.size() - off, testsupport::uniform_int(rng, 1, 40));
    d.feed(std::string_view(stream).substr(off, n));
    off += n;
    while (auto p = d.next()) got.push_back(*p);
  }
  CHECK(got == payloads);
  CHECK(d.buffered() == 0);
}

TEST_CASE("oversized frames are refused") {
  FrameDecoder d(16);
  d.feed(std::string("\0\0\0\x11", 4));
  CHECK_THROWS_AS(d.next(), Error);
  FrameDecoder ok(16);
  ok.feed(frame(std::string(16, 'a')));
  CHECK(ok.next()->size() == 16);
}

TEST_CASE("annotations are checked against the snapshot") {
  core::Inbox inbox;
  const auto req = msg(MessageType::tag_object, {{"memid", "00000000000000000000000000000001"}, {"tag", "mine"}}, 5);
  auto r = apply_annotation(req, nullptr, inbox);
  CHECK(r.type == MessageType::error);
  CHECK(r.seq == 5);

  const auto other = snapshot_with("00000000000000000000000000000002", {});
  r = apply_annotation(req, &other, inbox);
  CHECK(r.type == MessageType::error);
  CHECK(inbox.drain().empty());

  const auto has = snapshot_with("00000000000000000000000000000001", {"mine"});
  r = apply_annotation(req, &has, inbox);
  CHECK(r.type == MessageType::ack);
  CHECK(inbox.drain().empty());

  const auto lacks = snapshot_with("00000000000000000000000000000001", {"chair"});
  r = apply_annotation(req, &lacks, inbox);
  CHECK(r.type == MessageType::ack);
  const auto items = inbox.drain();
  REQUIRE(items.size() == 1);
  const auto& tag = std::get<core::TagMessage>(items[0]);
  CHECK(tag.tag == "mine");
  CHECK(tag.memid.hex() == "00000000000000000000000000000001");
}

TEST_CASE("client messages route into the inbox") {
  core::Inbox inbox;
  bool sub = false;
  CHECK(handle_client_message(msg(MessageType::chat, {{"text", "hi"}}), nullptr, inbox).type == MessageType::ack);
  CHECK(handle_client_message(msg(MessageType::teleop, {{"command", "left"}}), nullptr, inbox).type ==
        MessageType::ack);
  CHECK(handle_client_message(msg(MessageType::pause, json::object()), nullptr, inbox).type == MessageType::ack);
  CHECK(handle_client_message(msg(MessageType::subscribe, json::object()), nullptr, inbox, &sub).type ==
        MessageType::ack);
  CHECK(sub);
  CHECK(handle_client_message(make_ack(1), nullptr, inbox).type == MessageType::error);
  const auto items = inbox.drain();
  REQUIRE(items.size() == 3);
  CHECK(std::get<core::ChatMessage>(items[0]).speaker == "human");
  CHECK(std::get<core::TeleopMessage>(items[1]).command == "left");
  CHECK(std::holds_alternative<core::PauseMessage>(items[2]));
}

TEST_CASE("live server") {
  core::Inbox inbox;
  Server server(inbox);
  server.start();
  REQUIRE(server.port() > 0);
  server.publish(snapshot_with("00000000000000000000000000000001", {"chair"}));

  testsupport::Client c(server.port());
  c.send(msg(MessageType::subscribe, json::object(), 1));
  const auto ack = c.recv();
  REQUIRE(ack);
  CHECK(ack->type == MessageType::ack);
  CHECK(ack->seq == 1);
  const auto state = c.recv();
  REQUIRE(state);
  CHECK(state->type == MessageType::state);
  CHECK(state->payload["tick"] == 4);

  c.send(msg(MessageType::chat, {{"text", "go to the chair"}}, 2));
  auto r = c.recv_reply();
  REQUIRE(r);
  CHECK(r->type == MessageType::ack);
  CHECK(r->seq == 2);

  SUBCASE("garbage payload gets an error and the connection survives") {
    c.send_raw(frame("{\"type\":\"chat\",\"seq\":3,\"payload\":{\"text\":7}}"));
    r = c.recv_reply();
    REQUIRE(r);
    CHECK(r->type == MessageType::error);
    CHECK(r->seq == 3);
    c.send_raw(frame("\xff\xfe not json"));
    r = c.recv_reply();
    REQUIRE(r);
    CHECK(r->type == MessageType::error);
    c.send(msg(MessageType::pause, json::object(), 4));
    r = c.recv_reply();
    REQUIRE(r);
    CHECK(r->type == MessageType::ack);
  }
  SUBCASE("tag_object for an unknown memid is refused") {
    c.send(msg(MessageType::tag_object, {{"memid", "000000000000000000000000000000ff"}, {"tag", "x"}}, 9));
    r = c.recv_reply();
    REQUIRE(r);
    CHECK(r->type == MessageType::error);
    CHECK(r->seq == 9);
  }
  SUBCASE("duplicate tag is acknowledged without a new inbox entry") {
    inbox.drain();
    c.send(msg(MessageType::tag_object, {{"memid", "00000000000000000000000000000001"}, {"tag", "chair"}}, 10));
    r = c.recv_reply();
    REQUIRE(r);
    CHECK(r->type == MessageType::ack);
    CHECK(inbox.drain().empty());
  }
  SUBCASE("an oversized length prefix closes the connection after an error") {
    c.send_raw(std::string("\x7f\0\0\0", 4));
    r = c.recv_reply();
    REQUIRE(r);
    CHECK(r->type == MessageType::error);
    CHECK(c.wait_closed());
  }
  SUBCASE("newer states keep flowing, repeats are suppressed") {
    server.publish(snapshot_with("00000000000000000000000000000001", {}));
    auto newer = snapshot_with("00000000000000000000000000000001", {});
    newer.tick = 5;
    server.publish(newer);
    bool saw = false;
    while (auto m = c.recv(1000)) {
      if (m->type == MessageType::state) {
        CHECK(m->payload["tick"] == 5);
        saw = true;
        break;
      }
    }
    CHECK(saw);
  }

  const auto items = inbox.drain();
  server.stop();
  (void)items;
}

TEST_CASE("a stalled subscriber does not slow publishing") {
  core::Inbox inbox;
  Server server(inbox);
  server.start();
  testsupport::Client c(server.port());
  c.send(msg(MessageType::subscribe, json::object()));
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  core::AgentSnapshot s;
  s.doc = {{"blob", std::string(200000, 'x')}};
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 500; ++i) {
    s.tick = i;
    server.publish(s);
  }
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  CHECK(ms < 2000);
  CHECK(server.client_count() == 1);
  // The newest state still arrives once the client reads.
  Tick last = -1;
  while (auto m = c.recv(500)) {
    if (m->type == MessageType::state) last = m->payload["tick"].get<Tick>();
  }
  CHECK(last == 499);
  server.stop();
}

TEST_CASE("state ticks strictly increase per connection") {
  core::Inbox inbox;
  Server server(inbox);
  server.start();
  std::atomic<bool> done{false};
  std::thread publisher([&] {
    core::AgentSnapshot s;
    for (Tick t = 0; !done; ++t) {
      s.tick = t;
      s.doc = {{"tick", t}};
      server.publish(s);
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
  });
  testsupport::Client c(server.port());
  for (int i = 0; i < 20; ++i) c.send(msg(MessageType::subscribe, json::object(), i));
  std::optional<Tick> last;
  int states = 0;
  bool increasing = true;
  const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(300);
  while (std::chrono::steady_clock::now() < until) {
    const auto m = c.recv(100);
    if (!m || m->type != MessageType::state) continue;
    const auto t = m->payload["tick"].get<Tick>();
    if (last && t <= *last) increasing = false;
    last = t;
    ++states;
  }
  done = true;
  publisher.join();
  server.stop();
  CHECK(states > 10);
  CHECK(increasing);
}

TEST_CASE("a chat over the wire shows up as a parse in a later state frame") {
  core::Agent agent(world::load_scenario(testsupport::source_file("scenarios/chair.scn")));
  Server server(agent.inbox());
  server.start();
  std::atomic<bool> done{false};
  std::thread loop([&] {
    while (!done) {
      agent.tick();
      server.publish(agent.snapshot());
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  });
  testsupport::Client c(server.port());
  c.send(msg(MessageType::subscribe, json::object(), 1));
  c.send(msg(MessageType::chat, {{"text", "go to the chair"}}, 2));
  bool acked = false;
  std::optional<json> parse;
  const auto until = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (!parse && std::chrono::steady_clock::now() < until) {
    const auto m = c.recv(500);
    if (!m) continue;
    if (m->type == MessageType::ack && m->seq == 2) acked = true;
    if (acked && m->type == MessageType::state && m->payload["snapshot"].contains("last_parse") &&
        !m->payload["snapshot"]["last_parse"].is_null()) {
      parse = m->payload["snapshot"]["last_parse"];
    }
  }
  done = true;
  loop.join();
  server.stop();
  CHECK(acked);
  REQUIRE(parse);
  CHECK((*parse)["utterance"] == "go to the chair");
  CHECK((*parse)["lf"].dump().find("chair") != std::string::npos);
}
