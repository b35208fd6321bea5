#include "pitlab/trace.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <deque>
#include <fstream>
#include <tuple>

#include "pitlab/errors.hpp"

namespace pitlab {

double monotonic_seconds() {
  static const auto epoch = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch).count();
}

namespace {

constexpr std::string_view kKindNames[] = {"region-enter", "region-exit",  "send-post",
                                           "send-complete", "recv-post", "recv-complete"};
constexpr std::string_view kPhaseNames[] = {"PREDICT", "IT_FINE", "IT_DOWN",
                                            "IT_COARSE", "IT_UP", "IT_CHECK"};
constexpr std::string_view kRegionPrefix = "REGION -- ";
constexpr std::string_view kFormatName = "pitlab-trace";
constexpr int kFormatVersion = 1;

}  // namespace

std::string_view to_string(EventKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (int i = 0; i < 6; ++i)
    if (kKindNames[i] == text) return static_cast<EventKind>(i);
  return std::nullopt;
}

std::string_view phase_label(Phase phase) { return kPhaseNames[static_cast<int>(phase)]; }

std::string region_name(Phase phase, int rank) {
  return std::string(kRegionPrefix) + std::string(phase_label(phase)) + " -- " + std::to_string(rank);
}

std::optional<RegionId> parse_region_name(std::string_view name) {
  if (!name.starts_with(kRegionPrefix)) return std::nullopt;
  name.remove_prefix(kRegionPrefix.size());
  const auto sep = name.find(" -- ");
  if (sep == std::string_view::npos) return std::nullopt;
  const std::string_view label = name.substr(0, sep);
  const std::string_view digits = name.substr(sep + 4);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  for (int i = 0; i < 6; ++i)
    if (kPhaseNames[i] == label) return RegionId{static_cast<Phase>(i), std::stoi(std::string(digits))};
  return std::nullopt;
}

// Tracer -------------------------------------------------------------------

Tracer::Tracer(int rank, std::vector<std::string> filter) : rank_(rank), filter_(std::move(filter)) {}

bool Tracer::filtered(const std::string& name) const {
  return std::find(filter_.begin(), filter_.end(), name) != filter_.end();
}

void Tracer::enter(const std::string& name) {
  if (filtered(name)) return;
  stack_.push_back(name);
  events_.push_back({rank_, EventKind::RegionEnter, name, monotonic_seconds(), std::nullopt, std::nullopt});
}

void Tracer::exit(const std::string& name) {
  if (filtered(name)) return;
  if (stack_.empty() || stack_.back() != name) {
    errors_.push_back("rank " + std::to_string(rank_) + ": exit of '" + name + "' without matching enter");
    return;
  }
  stack_.pop_back();
  events_.push_back({rank_, EventKind::RegionExit, name, monotonic_seconds(), std::nullopt, std::nullopt});
}

void Tracer::record_comm(EventKind kind, std::string name, int peer, std::uint64_t bytes) {
  events_.push_back({rank_, kind, std::move(name), monotonic_seconds(), bytes, peer});
}

std::vector<std::string> Tracer::structural_errors() const {
  std::vector<std::string> out = errors_;
  for (const auto& open : stack_)
    out.push_back("rank " + std::to_string(rank_) + ": region '" + open + "' never exited");
  return out;
}

std::vector<TraceEvent> Tracer::finalize() const {
  const auto errors = structural_errors();
  if (!errors.empty()) {
    std::string msg = "trace structure violated:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw StructuralError(msg);
  }
  return events_;
}

// Merging and file format --------------------------------------------------

Trace merge_events(std::vector<std::vector<TraceEvent>> per_rank, int ranks) {
  Trace trace;
  trace.ranks = ranks;
  for (auto& events : per_rank)
    trace.events.insert(trace.events.end(), std::make_move_iterator(events.begin()),
                        std::make_move_iterator(events.end()));
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const TraceEvent& a, const TraceEvent& b) {
                     return std::tie(a.t, a.rank) < std::tie(b.t, b.rank);
                   });
  return trace;
}

void write_trace(const Trace& trace, std::ostream& os) {
  nlohmann::json header = {{"format", kFormatName}, {"version", kFormatVersion}, {"ranks", trace.ranks}};
  os << header.dump() << '\n';
  for (const auto& e : trace.events) {
    nlohmann::ordered_json j;
    j["rank"] = e.rank;
    j["kind"] = to_string(e.kind);
    j["name"] = e.name;
    j["t"] = e.t;
    if (e.bytes) j["bytes"] = *e.bytes;
    if (e.peer) j["peer"] = *e.peer;
    os << j.dump() << '\n';
  }
}

void write_trace(const Trace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open trace file for writing: " + path);
  write_trace(trace, os);
  if (!os) throw Error("failed writing trace file: " + path);
}

Trace read_trace(std::istream& is) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw TraceParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw TraceParseError(lineno, "expected a JSON object");
    try {
      if (!have_header) {
        if (j.value("format", std::string()) != kFormatName)
          throw TraceParseError(lineno, "missing trace header");
        if (j.at("version").get<int>() != kFormatVersion)
          throw TraceParseError(lineno, "unsupported trace version");
        trace.ranks = j.at("ranks").get<int>();
        have_header = true;
        continue;
      }
      TraceEvent e;
      e.rank = j.at("rank").get<int>();
      const auto kind = parse_event_kind(j.at("kind").get<std::string>());
      if (!kind) throw TraceParseError(lineno, "unknown event kind");
      e.kind = *kind;
      e.name = j.at("name").get<std::string>();
      e.t = j.at("t").get<double>();
      if (j.contains("bytes")) e.bytes = j.at("bytes").get<std::uint64_t>();
      if (j.contains("peer")) e.peer = j.at("peer").get<int>();
      if (e.rank < 0 || e.rank >= trace.ranks) throw TraceParseError(lineno, "rank out of range");
      trace.events.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw TraceParseError(lineno, std::string("bad field: ") + ex.what());
    }
  }
  if (!have_header) throw TraceParseError(lineno, "empty trace file (no header)");
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const TraceEvent& a, const TraceEvent& b) {
                     return std::tie(a.t, a.rank) < std::tie(b.t, b.rank);
                   });
  return trace;
}

Trace read_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open trace file: " + path);
  return read_trace(is);
}

std::vector<TraceEvent> rank_events(const Trace& trace, int rank) {
  std::vector<TraceEvent> out;
  for (const auto& e : trace.events)
    if (e.rank == rank) out.push_back(e);
  return out;
}

// Communication intervals --------------------------------------------------

std::vector<CommInterval> comm_intervals(const Trace& trace) {
  using Key = std::tuple<int, bool, int, std::string>;
  std::map<Key, std::deque<const TraceEvent*>> open;
  std::vector<CommInterval> out;
  std::vector<std::string> problems;
  for (const auto& e : trace.events) {
    if (!is_comm(e.kind)) continue;
    const bool send = e.kind == EventKind::SendPost || e.kind == EventKind::SendComplete;
    const bool post = e.kind == EventKind::SendPost || e.kind == EventKind::RecvPost;
    Key key{e.rank, send, e.peer.value_or(-1), e.name};
    if (post) {
      open[key].push_back(&e);
      continue;
    }
    auto& q = open[key];
    if (q.empty()) {
      problems.push_back("rank " + std::to_string(e.rank) + ": " + std::string(to_string(e.kind)) +
                         " '" + e.name + "' without post");
      continue;
    }
    const TraceEvent* p = q.front();
    q.pop_front();
    out.push_back({e.rank, send, e.peer.value_or(-1), e.name, p->bytes.value_or(0), p->t, e.t});
  }
  for (const auto& [key, q] : open)
    for (const TraceEvent* p : q)
      problems.push_back("rank " + std::to_string(p->rank) + ": " + std::string(to_string(p->kind)) +
                         " '" + p->name + "' never completed");
  if (!problems.empty()) {
    std::string msg = "unpaired communication events:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw StructuralError(msg);
  }
  return out;
}

double union_length(std::vector<std::pair<double, double>> intervals) {
  std::sort(intervals.begin(), intervals.end());
  double total = 0, cur_begin = 0, cur_end = 0;
  bool active = false;
  for (const auto& [b, e] : intervals) {
    if (e <= b) continue;
    if (!active || b > cur_end) {
      if (active) total += cur_end - cur_begin;
      cur_begin = b;
      cur_end = e;
      active = true;
    } else {
      cur_end = std::max(cur_end, e);
    }
  }
  if (active) total += cur_end - cur_begin;
  return total;
}

// Profile ------------------------------------------------------------------

double Profile::phase_exclusive(Phase phase) const {
  double total = 0;
  for (const auto& r : ranks)
    for (const auto& [name, stats] : r.regions) {
      const auto id = parse_region_name(name);
      if (id && id->phase == phase) total += stats.exclusive;
    }
  return total;
}

std::uint64_t Profile::phase_calls(Phase phase) const {
  std::uint64_t total = 0;
  for (const auto& r : ranks)
    for (const auto& [name, stats] : r.regions) {
      const auto id = parse_region_name(name);
      if (id && id->phase == phase) total += stats.calls;
    }
  return total;
}

Profile build_profile(const Trace& trace) {
  Profile profile;
  profile.ranks.resize(trace.ranks);
  struct Frame {
    std::string name;
    double enter;
    double children;
  };
  std::vector<std::vector<Frame>> stacks(trace.ranks);
  std::vector<bool> seen(trace.ranks, false);
  std::vector<std::string> problems;

  for (const auto& e : trace.events) {
    RankProfile& rp = profile.ranks[e.rank];
    if (!seen[e.rank]) {
      rp.start = e.t;
      seen[e.rank] = true;
    }
    rp.end = e.t;
    auto& stack = stacks[e.rank];
    switch (e.kind) {
      case EventKind::RegionEnter:
        stack.push_back({e.name, e.t, 0.0});
        break;
      case EventKind::RegionExit: {
        if (stack.empty() || stack.back().name != e.name) {
          problems.push_back("rank " + std::to_string(e.rank) + ": unmatched exit of '" + e.name + "'");
          break;
        }
        const Frame f = stack.back();
        stack.pop_back();
        const double incl = e.t - f.enter;
        RegionStats& s = rp.regions[f.name];
        ++s.calls;
        s.inclusive += incl;
        s.exclusive += incl - f.children;
        if (!stack.empty())
          stack.back().children += incl;
        else
          rp.untracked -= incl;  // adjusted by runtime below
        break;
      }
      case EventKind::SendPost:
        rp.bytes_sent += e.bytes.value_or(0);
        break;
      case EventKind::RecvComplete:
        rp.bytes_received += e.bytes.value_or(0);
        break;
      default:
        break;
    }
  }
  for (int r = 0; r < trace.ranks; ++r)
    for (const auto& f : stacks[r])
      problems.push_back("rank " + std::to_string(r) + ": region '" + f.name + "' never exited");
  if (!problems.empty()) {
    std::string msg = "unbalanced regions:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw StructuralError(msg);
  }

  std::vector<std::vector<std::pair<double, double>>> comm(trace.ranks);
  for (const auto& ci : comm_intervals(trace)) comm[ci.rank].emplace_back(ci.post, ci.complete);
  for (int r = 0; r < trace.ranks; ++r) {
    RankProfile& rp = profile.ranks[r];
    rp.rank = r;
    rp.runtime = seen[r] ? rp.end - rp.start : 0.0;
    rp.untracked += rp.runtime;
    rp.communication = union_length(comm[r]);
    rp.computation = rp.runtime - rp.communication;
  }
  return profile;
}

}  // namespace pitlab
