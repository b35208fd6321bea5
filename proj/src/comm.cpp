#include "pitlab/comm.hpp"

#include <algorithm>
#include <chrono>

#include "pitlab/errors.hpp"

namespace pitlab {

std::string Tag::str() const {
  return std::string(level == 0 ? "fine" : "coarse") + (kind == MessageKind::Value ? ".value." : ".status.") +
         std::to_string(iteration);
}

namespace detail {

struct Entry {
  Message message;
  double available_at = 0;
  std::shared_ptr<PendingSend> pending;
};

struct Channel {
  mutable std::mutex mutex;
  std::condition_variable cv;
  std::deque<Entry> queue;
  ChannelStats stats;
};

}  // namespace detail

namespace {

using detail::Channel;
using detail::Entry;

auto find_match(std::deque<Entry>& q, const Tag& tag) {
  return std::find_if(q.begin(), q.end(), [&](const Entry& e) { return e.message.tag == tag; });
}

auto find_match(const std::deque<Entry>& q, const Tag& tag) {
  return std::find_if(q.begin(), q.end(), [&](const Entry& e) { return e.message.tag == tag; });
}

std::chrono::steady_clock::duration to_duration(double seconds) {
  return std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(std::max(0.0, seconds)));
}

}  // namespace

Network::Network(int size, CommOptions options) : size_(size), options_(options) {
  if (size < 1) throw InvalidArgument("network: size must be >= 1");
  channels_.reserve(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size * size; ++i) channels_.push_back(std::make_unique<Channel>());
}

Network::~Network() = default;

void Network::check_ranks(int source, int dest) const {
  if (source < 0 || source >= size_ || dest < 0 || dest >= size_ || source == dest)
    throw InvalidArgument("network: invalid rank pair " + std::to_string(source) + " -> " +
                          std::to_string(dest));
}

Channel& Network::channel(int source, int dest) const {
  return *channels_[static_cast<std::size_t>(source) * size_ + dest];
}

SendHandle Network::isend(int source, int dest, Tag tag, std::vector<std::byte> payload, Tracer* tracer) {
  check_ranks(source, dest);
  if (closed_) throw ChannelClosed("isend on closed network");
  Channel& ch = channel(source, dest);
  auto pending = std::make_shared<detail::PendingSend>();
  pending->channel = &ch;
  pending->source = source;
  pending->dest = dest;
  pending->name = tag.str();
  pending->bytes = payload.size();
  if (tracer) tracer->record_comm(EventKind::SendPost, pending->name, dest, pending->bytes);
  const double now = monotonic_seconds();
  {
    std::lock_guard lock(ch.mutex);
    pending->accepted = payload.size() <= options_.rendezvous_threshold;
    Entry entry{Message{source, dest, tag, std::move(payload), now, 0.0}, now + options_.latency_s, pending};
    ch.queue.push_back(std::move(entry));
    ++ch.stats.sends;
  }
  ch.cv.notify_all();
  ++unwaited_;
  return SendHandle(pending);
}

Message Network::recv(int dest, int source, Tag tag, Tracer* tracer) {
  check_ranks(source, dest);
  Channel& ch = channel(source, dest);
  const std::string name = tag.str();
  if (tracer) tracer->record_comm(EventKind::RecvPost, name, source, 0);
  Message msg;
  {
    std::unique_lock lock(ch.mutex);
    while (true) {
      auto it = find_match(ch.queue, tag);
      if (it != ch.queue.end()) {
        const double now = monotonic_seconds();
        if (now >= it->available_at) {
          msg = std::move(it->message);
          msg.completion_time = now;
          it->pending->accepted = true;
          ch.queue.erase(it);
          ++ch.stats.receives;
          break;
        }
        if (closed_) throw ChannelClosed("recv: network closed while " + name + " in flight");
        ch.cv.wait_for(lock, to_duration(it->available_at - now));
        continue;
      }
      if (closed_) throw ChannelClosed("recv: network closed waiting for " + name);
      ch.cv.wait(lock);
    }
  }
  ch.cv.notify_all();
  if (tracer) tracer->record_comm(EventKind::RecvComplete, name, source, msg.payload.size());
  return msg;
}

void Network::wait(SendHandle& handle, Tracer* tracer) {
  if (!handle.state_) throw InvalidArgument("wait: empty handle");
  detail::PendingSend& p = *handle.state_;
  if (p.waited) return;
  {
    std::unique_lock lock(p.channel->mutex);
    p.channel->cv.wait(lock, [&] { return p.accepted || closed_.load(); });
    if (!p.accepted) throw ChannelClosed("wait: network closed before " + p.name + " was accepted");
  }
  p.waited = true;
  --unwaited_;
  if (tracer) tracer->record_comm(EventKind::SendComplete, p.name, p.dest, p.bytes);
}

bool Network::test(const SendHandle& handle) const {
  if (!handle.state_) return false;
  std::lock_guard lock(handle.state_->channel->mutex);
  return handle.state_->accepted;
}

bool Network::can_recv(int dest, int source, const Tag& tag) const {
  check_ranks(source, dest);
  Channel& ch = channel(source, dest);
  std::lock_guard lock(ch.mutex);
  auto it = find_match(std::as_const(ch.queue), tag);
  return it != ch.queue.end() && monotonic_seconds() >= it->available_at;
}

bool Network::recv_in_flight(int dest, int source, const Tag& tag) const {
  check_ranks(source, dest);
  Channel& ch = channel(source, dest);
  std::lock_guard lock(ch.mutex);
  return find_match(std::as_const(ch.queue), tag) != ch.queue.end();
}

void Network::close() {
  closed_ = true;
  for (auto& ch : channels_) {
    { std::lock_guard lock(ch->mutex); }
    ch->cv.notify_all();
  }
}

ChannelStats Network::stats(int source, int dest) const {
  check_ranks(source, dest);
  Channel& ch = channel(source, dest);
  std::lock_guard lock(ch.mutex);
  return ch.stats;
}

}  // namespace pitlab
