#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pitlab/trace.hpp"

namespace pitlab {

enum class MessageKind { Value, Status };

/// Exact-match tag; no wildcards.
struct Tag {
  int level = 0;  // 0 = fine, 1 = coarse
  MessageKind kind = MessageKind::Value;
  int iteration = 0;

  bool operator==(const Tag&) const = default;
  /// e.g. "fine.value.3"
  std::string str() const;
};

struct Message {
  int source = 0;
  int dest = 0;
  Tag tag;
  std::vector<std::byte> payload;
  double post_time = 0;
  double completion_time = 0;
};

struct CommOptions {
  /// Payloads larger than this complete only once the receiver matches them.
  std::size_t rendezvous_threshold = std::size_t(1) << 20;
  /// A message becomes matchable this long after it was posted.
  double latency_s = 0;

  static CommOptions eager() { return {SIZE_MAX, 0}; }
  static CommOptions rendezvous() { return {0, 0}; }
};

namespace detail {
struct Channel;
struct PendingSend {
  Channel* channel = nullptr;
  bool accepted = false;  // guarded by channel->mutex
  bool waited = false;    // touched by the sender only
  int source = 0;
  int dest = 0;
  std::string name;
  std::uint64_t bytes = 0;
};
}  // namespace detail

/// Result of isend; complete it with Network::wait.
class SendHandle {
 public:
  SendHandle() = default;
  bool valid() const { return state_ != nullptr; }
  bool waited() const { return state_ && state_->waited; }

 private:
  friend class Network;
  explicit SendHandle(std::shared_ptr<detail::PendingSend> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::PendingSend> state_;
};

struct ChannelStats {
  std::uint64_t sends = 0;
  std::uint64_t receives = 0;
};

/// In-process point-to-point transport between `size` ranks. One channel per
/// ordered rank pair; each is safe for one sender and one receiver thread.
class Network {
 public:
  Network(int size, CommOptions options = {});
  ~Network();
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  int size() const { return size_; }
  const CommOptions& options() const { return options_; }

  /// Enqueues without blocking; records send-post on `tracer` when given.
  SendHandle isend(int source, int dest, Tag tag, std::vector<std::byte> payload,
                   Tracer* tracer = nullptr);

  /// Blocks until a message with exactly `tag` from `source` is available.
  Message recv(int dest, int source, Tag tag, Tracer* tracer = nullptr);

  /// Blocks until the transport accepted the payload; idempotent.
  void wait(SendHandle& handle, Tracer* tracer = nullptr);

  /// Non-blocking queries used by the single-threaded scheduler.
  bool test(const SendHandle& handle) const;
  bool can_recv(int dest, int source, const Tag& tag) const;
  /// True if a matching message is queued but still in flight (latency).
  bool recv_in_flight(int dest, int source, const Tag& tag) const;

  /// Wakes every blocked call; pending and future calls throw ChannelClosed.
  void close();
  bool closed() const { return closed_.load(); }

  ChannelStats stats(int source, int dest) const;
  /// isend handles not yet waited (leak detector).
  std::int64_t unwaited() const { return unwaited_.load(); }

 private:
  detail::Channel& channel(int source, int dest) const;
  void check_ranks(int source, int dest) const;

  int size_;
  CommOptions options_;
  std::vector<std::unique_ptr<detail::Channel>> channels_;
  std::atomic<bool> closed_{false};
  std::atomic<std::int64_t> unwaited_{0};
};

}  // namespace pitlab
