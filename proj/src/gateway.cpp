#include "minidroid/gateway.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "minidroid/error.hpp"
#include "minidroid/json_text.hpp"

namespace minidroid::gateway {

using nlohmann::json;

namespace {

constexpr std::pair<MessageType, std::string_view> kTypeNames[] = {
    {MessageType::chat, "chat"},          {MessageType::teleop, "teleop"}, {MessageType::tag_object, "tag_object"},
    {MessageType::pause, "pause"},        {MessageType::resume, "resume"}, {MessageType::subscribe, "subscribe"},
    {MessageType::state, "state"},        {MessageType::ack, "ack"},       {MessageType::error, "error"},
};

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::validation, msg); }

void expect_keys(const json& payload, std::initializer_list<std::string_view> required,
                 std::initializer_list<std::string_view> optional = {}) {
  for (auto key : required) {
    if (!payload.contains(std::string(key))) invalid("payload." + std::string(key) + ": missing");
  }
  for (const auto& [key, _] : payload.items()) {
    const bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                       std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) invalid("payload." + key + ": unexpected key");
  }
}

const std::string& string_field(const json& payload, const char* key, bool non_empty = false) {
  const auto& v = payload.at(key);
  if (!v.is_string()) invalid(std::string("payload.") + key + ": expected string");
  if (non_empty && v.get_ref<const std::string&>().empty()) invalid(std::string("payload.") + key + ": empty");
  return v.get_ref<const std::string&>();
}

void check_payload(MessageType type, const json& p) {
  switch (type) {
    case MessageType::chat:
      expect_keys(p, {"text"}, {"speaker"});
      string_field(p, "text");
      if (p.contains("speaker")) string_field(p, "speaker", true);
      return;
    case MessageType::teleop:
      expect_keys(p, {"command"});
      if (!core::is_teleop_command(string_field(p, "command"))) invalid("payload.command: unknown teleop command");
      return;
    case MessageType::tag_object:
      expect_keys(p, {"memid", "tag"});
      if (!memory::Memid::parse(string_field(p, "memid"))) invalid("payload.memid: not a memid");
      string_field(p, "tag", true);
      return;
    case MessageType::pause:
    case MessageType::resume:
    case MessageType::subscribe:
    case MessageType::ack:
      expect_keys(p, {});
      return;
    case MessageType::state:
      expect_keys(p, {"tick", "snapshot"});
      if (!p.at("tick").is_number_integer()) invalid("payload.tick: expected integer");
      if (!p.at("snapshot").is_object()) invalid("payload.snapshot: expected object");
      return;
    case MessageType::error:
      expect_keys(p, {"reason"});
      string_field(p, "reason");
      return;
  }
}

}  // namespace

std::string_view to_string(MessageType t) {
  for (const auto& [k, name] : kTypeNames) {
    if (k == t) return name;
  }
  return "?";
}

std::optional<MessageType> message_type_from_string(std::string_view s) {
  for (const auto& [k, name] : kTypeNames) {
    if (name == s) return k;
  }
  return std::nullopt;
}

std::string encode(const WireMessage& m) {
  json doc = {{"type", std::string(to_string(m.type))}, {"payload", m.payload}};
  if (m.seq) doc["seq"] = *m.seq;
  return json_text(doc);
}

WireMessage decode(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed document: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) invalid("message must be an object");
  WireMessage m;
  for (const auto& [key, _] : doc.items()) {
    if (key != "type" && key != "seq" && key != "payload") invalid(key + ": unexpected key");
  }
  if (!doc.contains("type") || !doc["type"].is_string()) invalid("type: expected string");
  const auto type = message_type_from_string(doc["type"].get_ref<const std::string&>());
  if (!type) invalid("type: unknown message type");
  m.type = *type;
  if (doc.contains("seq") && !doc["seq"].is_null()) {
    if (!doc["seq"].is_number_integer()) invalid("seq: expected integer");
    m.seq = doc["seq"].get<std::int64_t>();
  }
  if (!doc.contains("payload") || !doc["payload"].is_object()) invalid("payload: expected object");
  m.payload = doc["payload"];
  check_payload(m.type, m.payload);
  return m;
}

WireMessage make_ack(std::optional<std::int64_t> seq) { return {MessageType::ack, seq, json::object()}; }

WireMessage make_error(std::optional<std::int64_t> seq, const std::string& reason) {
  return {MessageType::error, seq, {{"reason", reason}}};
}

WireMessage make_state(const core::AgentSnapshot& snapshot) {
  return {MessageType::state, std::nullopt, {{"tick", snapshot.tick}, {"snapshot", snapshot.doc}}};
}

std::string frame(std::string_view payload) {
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(payload);
  return out;
}

std::optional<std::string> FrameDecoder::next() {
  if (buffer_.size() < 4) return std::nullopt;
  const auto* b = reinterpret_cast<const unsigned char*>(buffer_.data());
  const std::size_t n = (std::size_t{b[0]} << 24) | (std::size_t{b[1]} << 16) | (std::size_t{b[2]} << 8) | b[3];
  if (n > max_frame_) invalid("frame length " + std::to_string(n) + " exceeds limit " + std::to_string(max_frame_));
  if (buffer_.size() < 4 + n) return std::nullopt;
  std::string payload = buffer_.substr(4, n);
  buffer_.erase(0, 4 + n);
  return payload;
}

void SnapshotChannel::publish(core::AgentSnapshot s) {
  auto p = std::make_shared<const core::AgentSnapshot>(std::move(s));
  std::lock_guard lock(mu_);
  latest_ = std::move(p);
}

std::shared_ptr<const core::AgentSnapshot> SnapshotChannel::latest() const {
  std::lock_guard lock(mu_);
  return latest_;
}

WireMessage apply_annotation(const WireMessage& msg, const core::AgentSnapshot* snapshot, core::Inbox& inbox) {
  const auto& memid = msg.payload.at("memid").get_ref<const std::string&>();
  const auto& tag = msg.payload.at("tag").get_ref<const std::string&>();
  if (!snapshot) return make_error(msg.seq, "no snapshot available yet");
  const auto& objects = snapshot->doc.at("reference_objects");
  const auto it = std::find_if(objects.begin(), objects.end(), [&](const json& o) { return o.at("memid") == memid; });
  if (it == objects.end()) return make_error(msg.seq, "unknown memid " + memid);
  for (const auto& t : it->at("tags")) {
    if (t.at(0) == "has_tag" && t.at(1) == tag) return make_ack(msg.seq);
  }
  inbox.push(core::TagMessage{*memory::Memid::parse(memid), tag});
  return make_ack(msg.seq);
}

WireMessage handle_client_message(const WireMessage& msg, const core::AgentSnapshot* snapshot, core::Inbox& inbox,
                                  bool* subscribed) {
  switch (msg.type) {
    case MessageType::chat:
      inbox.push(core::ChatMessage{msg.payload.value("speaker", std::string("human")),
                                   msg.payload.at("text").get<std::string>()});
      return make_ack(msg.seq);
    case MessageType::teleop:
      inbox.push(core::TeleopMessage{msg.payload.at("command").get<std::string>()});
      return make_ack(msg.seq);
    case MessageType::tag_object: return apply_annotation(msg, snapshot, inbox);
    case MessageType::pause: inbox.push(core::PauseMessage{}); return make_ack(msg.seq);
    case MessageType::resume: inbox.push(core::ResumeMessage{}); return make_ack(msg.seq);
    case MessageType::subscribe:
      if (subscribed) *subscribed = true;
      return make_ack(msg.seq);
    default: return make_error(msg.seq, std::string(to_string(msg.type)) + " is a server message");
  }
}

// ---- server ---------------------------------------------------------------

struct Server::Connection {
  int fd = -1;
  std::mutex mu;
  std::condition_variable cv;
  struct Frame {
    std::string bytes;
    bool droppable;
  };
  std::deque<Frame> out;
  bool closed = false;
  bool close_after_flush = false;
  bool subscribed = false;
  std::optional<Tick> last_state_tick;  // state ticks sent must increase
  std::atomic<int> threads_done{0};
  std::thread reader, writer;
};

Server::Server(core::Inbox& inbox, ServerOptions options) : inbox_(inbox), options_(std::move(options)) {}

Server::~Server() { stop(); }

void Server::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::io, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(options_.port));
  if (::inet_pton(AF_INET, options_.host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw Error(ErrorCode::io, "bad listen address " + options_.host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 16) < 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    throw Error(ErrorCode::io, "bind " + options_.host + ":" + std::to_string(options_.port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    conns.swap(connections_);
  }
  for (auto& c : conns) {
    {
      std::lock_guard lock(c->mu);
      c->closed = true;
    }
    c->cv.notify_all();
    ::shutdown(c->fd, SHUT_RDWR);
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
    ::close(c->fd);
  }
}

std::size_t Server::client_count() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(connections_.begin(), connections_.end(),
                                                [](const auto& c) { return c->threads_done.load() < 2; }));
}

void Server::reap() {
  std::vector<std::shared_ptr<Connection>> done;
  {
    std::lock_guard lock(mu_);
    auto mid = std::stable_partition(connections_.begin(), connections_.end(),
                                     [](const auto& c) { return c->threads_done.load() < 2; });
    done.assign(mid, connections_.end());
    connections_.erase(mid, connections_.end());
  }
  for (auto& c : done) {
    c->reader.join();
    c->writer.join();
    ::close(c->fd);
  }
}

void Server::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) {
      reap();
      continue;
    }
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto c = std::make_shared<Connection>();
    c->fd = fd;
    c->reader = std::thread([this, c] { reader(c); });
    c->writer = std::thread([this, c] { writer(c); });
    std::lock_guard lock(mu_);
    connections_.push_back(std::move(c));
  }
}

void Server::push_locked(Connection& c, std::string bytes, bool droppable) {
  c.out.push_back({std::move(bytes), droppable});
  while (c.out.size() > options_.max_queue) {
    auto victim = std::find_if(c.out.begin(), c.out.end(), [](const auto& f) { return f.droppable; });
    if (victim == c.out.end()) victim = c.out.begin();
    c.out.erase(victim);
  }
}

void Server::enqueue(Connection& c, std::string bytes, bool droppable) {
  {
    std::lock_guard lock(c.mu);
    if (c.closed) return;
    push_locked(c, std::move(bytes), droppable);
  }
  c.cv.notify_one();
}

void Server::offer_state(Connection& c, Tick tick, const std::string& bytes) {
  {
    std::lock_guard lock(c.mu);
    if (c.closed || !c.subscribed || (c.last_state_tick && tick <= *c.last_state_tick)) return;
    c.last_state_tick = tick;
    push_locked(c, bytes, true);
  }
  c.cv.notify_one();
}

void Server::reader(std::shared_ptr<Connection> c) {
  FrameDecoder decoder(options_.max_frame);
  char buf[4096];
  bool open = true;
  while (open) {
    const ssize_t n = ::recv(c->fd, buf, sizeof buf, 0);
    if (n <= 0) break;
    decoder.feed({buf, static_cast<std::size_t>(n)});
    while (open) {
      std::optional<std::string> payload;
      try {
        payload = decoder.next();
      } catch (const std::exception& e) {
        enqueue(*c, frame(encode(make_error(std::nullopt, e.what()))), false);
        std::lock_guard lock(c->mu);
        c->close_after_flush = true;
        open = false;
        break;
      }
      if (!payload) break;
      WireMessage reply;
      std::shared_ptr<const core::AgentSnapshot> latest = snapshots_.latest();
      bool subscribe = false;
      try {
        reply = handle_client_message(decode(*payload), latest.get(), inbox_, &subscribe);
      } catch (const std::exception& e) {
        std::optional<std::int64_t> seq;
        const auto doc = json::parse(*payload, nullptr, false);
        if (doc.is_object() && doc.contains("seq") && doc["seq"].is_number_integer()) seq = doc["seq"].get<std::int64_t>();
        reply = make_error(seq, e.what());
      }
      enqueue(*c, frame(encode(reply)), false);
      if (subscribe) {
        {
          std::lock_guard lock(c->mu);
          c->subscribed = true;
        }
        if (auto now = snapshots_.latest()) offer_state(*c, now->tick, frame(encode(make_state(*now))));
      }
    }
  }
  {
    std::lock_guard lock(c->mu);
    if (!c->close_after_flush) c->closed = true;
  }
  c->cv.notify_all();
  c->threads_done.fetch_add(1);
}

void Server::writer(std::shared_ptr<Connection> c) {
  for (;;) {
    std::string bytes;
    {
      std::unique_lock lock(c->mu);
      c->cv.wait(lock, [&] { return c->closed || !c->out.empty() || c->close_after_flush; });
      if (c->out.empty()) break;
      if (c->closed && !c->close_after_flush) break;
      bytes = std::move(c->out.front().bytes);
      c->out.pop_front();
    }
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      const ssize_t n = ::send(c->fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) break;
      sent += static_cast<std::size_t>(n);
    }
    if (sent < bytes.size()) break;
  }
  {
    std::lock_guard lock(c->mu);
    c->closed = true;
    c->out.clear();
  }
  ::shutdown(c->fd, SHUT_RDWR);
  c->threads_done.fetch_add(1);
}

void Server::publish(const core::AgentSnapshot& snapshot) {
  snapshots_.publish(snapshot);
  std::vector<std::shared_ptr<Connection>> targets;
  {
    std::lock_guard lock(mu_);
    targets = connections_;
  }
  if (targets.empty()) return;
  const std::string bytes = frame(encode(make_state(snapshot)));
  for (auto& c : targets) offer_state(*c, snapshot.tick, bytes);
}

}  // namespace minidroid::gateway
