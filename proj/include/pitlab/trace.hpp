#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pitlab {

/// Seconds on the process-wide monotonic clock.
double monotonic_seconds();

enum class EventKind { RegionEnter, RegionExit, SendPost, SendComplete, RecvPost, RecvComplete };

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);
inline bool is_comm(EventKind k) { return k != EventKind::RegionEnter && k != EventKind::RegionExit; }

struct TraceEvent {
  int rank = 0;
  EventKind kind = EventKind::RegionEnter;
  std::string name;
  double t = 0;
  std::optional<std::uint64_t> bytes;  // comm events only
  std::optional<int> peer;             // comm events only

  bool operator==(const TraceEvent&) const = default;
};

/// Events of all ranks merged and stably sorted by (t, rank).
struct Trace {
  int ranks = 0;
  std::vector<TraceEvent> events;

  bool operator==(const Trace&) const = default;
};

enum class Phase { Predict, ItFine, ItDown, ItCoarse, ItUp, ItCheck };

std::string_view phase_label(Phase phase);

/// "REGION -- <PHASE> -- <rank>"
std::string region_name(Phase phase, int rank);

struct RegionId {
  Phase phase;
  int rank;
};
std::optional<RegionId> parse_region_name(std::string_view name);

/// Per-rank event recorder. Owned by exactly one worker; no locking.
class Tracer {
 public:
  explicit Tracer(int rank, std::vector<std::string> filter = {});

  int rank() const { return rank_; }

  void enter(const std::string& name);
  void exit(const std::string& name);
  void record_comm(EventKind kind, std::string name, int peer, std::uint64_t bytes);

  const std::vector<TraceEvent>& events() const { return events_; }
  std::size_t open_regions() const { return stack_.size(); }

  /// Problems recorded so far plus regions still open.
  std::vector<std::string> structural_errors() const;

  /// Throws StructuralError if nesting was violated; otherwise returns the events.
  std::vector<TraceEvent> finalize() const;

 private:
  bool filtered(const std::string& name) const;

  int rank_;
  std::vector<std::string> filter_;
  std::vector<TraceEvent> events_;
  std::vector<std::string> stack_;
  std::vector<std::string> errors_;
};

/// Enters on construction, exits on destruction.
class ScopedRegion {
 public:
  ScopedRegion(Tracer& tracer, std::string name) : tracer_(tracer), name_(std::move(name)) {
    tracer_.enter(name_);
  }
  ~ScopedRegion() { tracer_.exit(name_); }
  ScopedRegion(const ScopedRegion&) = delete;
  ScopedRegion& operator=(const ScopedRegion&) = delete;

 private:
  Tracer& tracer_;
  std::string name_;
};

Trace merge_events(std::vector<std::vector<TraceEvent>> per_rank, int ranks);

/// Line-oriented JSON: one header line, then one event per line.
void write_trace(const Trace& trace, std::ostream& os);
void write_trace(const Trace& trace, const std::string& path);
Trace read_trace(std::istream& is);
Trace read_trace(const std::string& path);

/// Events of one rank, in recorded order.
std::vector<TraceEvent> rank_events(const Trace& trace, int rank);

/// A paired post/complete interval of one send or receive.
struct CommInterval {
  int rank = 0;
  bool is_send = false;
  int peer = 0;
  std::string name;
  std::uint64_t bytes = 0;
  double post = 0;
  double complete = 0;
};

/// Pairs posts with completions per (rank, direction, peer, name) in FIFO
/// order. Throws StructuralError on unpaired events.
std::vector<CommInterval> comm_intervals(const Trace& trace);

/// Length of the union of [begin, end) intervals.
double union_length(std::vector<std::pair<double, double>> intervals);

struct RegionStats {
  std::uint64_t calls = 0;
  double inclusive = 0;
  double exclusive = 0;
};

struct RankProfile {
  int rank = 0;
  double start = 0;
  double end = 0;
  double runtime = 0;
  double computation = 0;
  double communication = 0;
  double untracked = 0;  // runtime outside any region
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::map<std::string, RegionStats> regions;
};

struct Profile {
  std::vector<RankProfile> ranks;

  /// Exclusive time summed over ranks for every region with the given phase.
  double phase_exclusive(Phase phase) const;
  std::uint64_t phase_calls(Phase phase) const;
};

/// Aggregates call counts, inclusive/exclusive times and comm volume.
/// Throws StructuralError listing unbalanced regions.
Profile build_profile(const Trace& trace);

}  // namespace pitlab
