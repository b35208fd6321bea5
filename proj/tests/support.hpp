#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "pitlab/trace.hpp"

namespace testing {

inline pitlab::TraceEvent ev(int rank, pitlab::EventKind kind, std::string name, double t,
                             std::optional<int> peer = {}, std::optional<std::uint64_t> bytes = {}) {
  pitlab::TraceEvent e;
  e.rank = rank;
  e.kind = kind;
  e.name = std::move(name);
  e.t = t;
  if (pitlab::is_comm(kind)) {
    e.peer = peer.value_or(0);
    e.bytes = bytes.value_or(8);
  }
  return e;
}

// Two ranks over [0, 10]: rank 0 computes 8 s then blocks 2 s in a send,
// rank 1 computes 5 s, waits 4 s for the message, computes 1 s.
// c = (8, 6); with free transfers the run would take 9 s.
inline pitlab::Trace hand_trace() {
  using K = pitlab::EventKind;
  pitlab::Trace t;
  t.ranks = 2;
  t.events = {
      ev(0, K::RegionEnter, "REGION -- IT_FINE -- 0", 0.0),
      ev(1, K::RegionEnter, "REGION -- IT_FINE -- 1", 0.0),
      ev(1, K::RegionExit, "REGION -- IT_FINE -- 1", 5.0),
      ev(1, K::RecvPost, "fine.value.1", 5.0, 0, 0),
      ev(0, K::RegionExit, "REGION -- IT_FINE -- 0", 8.0),
      ev(0, K::SendPost, "fine.value.1", 8.0, 1, 64),
      ev(1, K::RecvComplete, "fine.value.1", 9.0, 0, 64),
      ev(1, K::RegionEnter, "REGION -- IT_CHECK -- 1", 9.0),
      ev(0, K::SendComplete, "fine.value.1", 10.0, 1, 64),
      ev(1, K::RegionExit, "REGION -- IT_CHECK -- 1", 10.0),
  };
  return t;
}

// Send posted at 2, blocked until 5 when the receive is finally posted.
inline pitlab::Trace late_receiver_trace() {
  using K = pitlab::EventKind;
  pitlab::Trace t;
  t.ranks = 2;
  t.events = {
      ev(0, K::RegionEnter, "REGION -- IT_FINE -- 0", 0.0),
      ev(1, K::RegionEnter, "REGION -- IT_FINE -- 1", 0.0),
      ev(0, K::RegionExit, "REGION -- IT_FINE -- 0", 2.0),
      ev(0, K::SendPost, "fine.value.1", 2.0, 1, 64),
      ev(1, K::RegionExit, "REGION -- IT_FINE -- 1", 5.0),
      ev(1, K::RecvPost, "fine.value.1", 5.0, 0, 0),
      ev(0, K::SendComplete, "fine.value.1", 5.0, 1, 64),
      ev(1, K::RecvComplete, "fine.value.1", 5.0, 0, 64),
  };
  return t;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  std::random_device rd;
  auto p = std::filesystem::temp_directory_path() / ("pitlab_" + tag + "_" + std::to_string(rd()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
