#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "minidroid/agent.hpp"

// Network boundary for operator consoles. Messages are canonical JSON
// documents framed by a 4-byte big-endian length; see PROTOCOL.md.
namespace minidroid::gateway {

enum class MessageType { chat, teleop, tag_object, pause, resume, subscribe, state, ack, error };
std::string_view to_string(MessageType t);
std::optional<MessageType> message_type_from_string(std::string_view s);

struct WireMessage {
  MessageType type = MessageType::ack;
  std::optional<std::int64_t> seq;
  nlohmann::json payload = nlohmann::json::object();

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

/// Canonical text of the message document.
std::string encode(const WireMessage& m);
/// Throws ParseError / Error(validation) with a reason fit for an error reply.
WireMessage decode(std::string_view text);

WireMessage make_ack(std::optional<std::int64_t> seq);
WireMessage make_error(std::optional<std::int64_t> seq, const std::string& reason);
WireMessage make_state(const core::AgentSnapshot& snapshot);

inline constexpr std::size_t kMaxFrame = 1 << 20;

/// 4-byte big-endian length followed by the payload bytes.
std::string frame(std::string_view payload);

/// Incremental frame splitter for a byte stream.
class FrameDecoder {
 public:
  explicit FrameDecoder(std::size_t max_frame = kMaxFrame) : max_frame_(max_frame) {}
  void feed(std::string_view bytes) { buffer_.append(bytes); }
  /// Next complete payload, if any. Throws Error(validation) when a length
  /// prefix exceeds the limit; the stream cannot be resynchronised after that.
  std::optional<std::string> next();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::size_t max_frame_;
  std::string buffer_;
};

/// Latest snapshot published by the agent loop.
class SnapshotChannel {
 public:
  void publish(core::AgentSnapshot s);
  std::shared_ptr<const core::AgentSnapshot> latest() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const core::AgentSnapshot> latest_;
};

/// Validates a tag_object request against `snapshot` and forwards it to the
/// agent inbox. Returns the ack or error reply.
WireMessage apply_annotation(const WireMessage& msg, const core::AgentSnapshot* snapshot, core::Inbox& inbox);

/// Routes one client message. `subscribe` is reported through `subscribed`.
WireMessage handle_client_message(const WireMessage& msg, const core::AgentSnapshot* snapshot, core::Inbox& inbox,
                                  bool* subscribed = nullptr);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::size_t max_queue = 64;
  std::size_t max_frame = kMaxFrame;
};

class Server {
 public:
  Server(core::Inbox& inbox, ServerOptions options = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting. Throws Error(io).
  void start();
  void stop();
  int port() const { return port_; }

  /// Called by the agent loop each tick; never blocks on clients.
  void publish(const core::AgentSnapshot& snapshot);
  std::size_t client_count() const;

 private:
  struct Connection;
  void accept_loop();
  void reader(std::shared_ptr<Connection> c);
  void writer(std::shared_ptr<Connection> c);
  void enqueue(Connection& c, std::string bytes, bool droppable);
  void push_locked(Connection& c, std::string bytes, bool droppable);
  /// Queues a state frame if the connection is subscribed and `tick` is
  /// newer than the last state it was sent.
  void offer_state(Connection& c, Tick tick, const std::string& bytes);
  void reap();

  core::Inbox& inbox_;
  ServerOptions options_;
  SnapshotChannel snapshots_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Connection>> connections_;
};

}  // namespace minidroid::gateway
