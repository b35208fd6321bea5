#include "pitlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <tuple>

#include "pitlab/errors.hpp"

namespace pitlab {

PopReport pop_metrics(const std::vector<double>& computation, double runtime, double ideal_runtime) {
  if (computation.empty()) throw AnalysisError("pop: no ranks");
  if (!(runtime > 0)) throw AnalysisError("pop: runtime must be positive");
  if (!(ideal_runtime > 0)) throw AnalysisError("pop: ideal runtime must be positive");
  const double max_c = *std::max_element(computation.begin(), computation.end());
  if (!(max_c > 0)) throw AnalysisError("pop: no computation in the analysed phase");
  const double mean_c = std::accumulate(computation.begin(), computation.end(), 0.0) /
                        static_cast<double>(computation.size());
  PopReport r;
  r.computation = computation;
  r.runtime = runtime;
  r.ideal_runtime = ideal_runtime;
  r.load_balance = mean_c / max_c;
  r.serialisation_efficiency = max_c / ideal_runtime;
  r.transfer_efficiency = ideal_runtime / runtime;
  r.communication_efficiency = r.serialisation_efficiency * r.transfer_efficiency;
  r.parallel_efficiency = r.load_balance * r.communication_efficiency;
  return r;
}

namespace {

std::vector<std::vector<TraceEvent>> split_ranks(const Trace& trace) {
  std::vector<std::vector<TraceEvent>> out(static_cast<std::size_t>(std::max(trace.ranks, 0)));
  for (const auto& e : trace.events) {
    if (e.rank < 0 || e.rank >= trace.ranks) throw AnalysisError("event rank out of range");
    out[e.rank].push_back(e);
  }
  return out;
}

struct Op {
  int rank = 0;
  bool send = false;
  int peer = 0;
  std::string name;
  std::size_t post = 0;  // index into the rank's event list
  std::size_t complete = 0;
  std::string region;  // last region touched before the post
};

struct Matched {
  std::vector<std::vector<TraceEvent>> ranks;
  std::vector<std::pair<const Op*, const Op*>> pairs;  // (send, recv)
  std::vector<Op> ops;
  std::vector<const Op*> lone_sends;
  std::vector<const Op*> lone_recvs;
};

Matched match(const Trace& trace) {
  Matched m;
  m.ranks = split_ranks(trace);
  using Key = std::tuple<bool, int, std::string>;
  for (int r = 0; r < trace.ranks; ++r) {
    const auto& ev = m.ranks[r];
    std::map<Key, std::deque<std::pair<std::size_t, std::string>>> open;
    std::string region;
    for (std::size_t i = 0; i < ev.size(); ++i) {
      const TraceEvent& e = ev[i];
      if (!is_comm(e.kind)) {
        region = e.name;
        continue;
      }
      const bool send = e.kind == EventKind::SendPost || e.kind == EventKind::SendComplete;
      const bool post = e.kind == EventKind::SendPost || e.kind == EventKind::RecvPost;
      Key key{send, e.peer.value_or(-1), e.name};
      if (post) {
        open[key].emplace_back(i, region);
        continue;
      }
      auto& q = open[key];
      if (q.empty())
        throw StructuralError("rank " + std::to_string(r) + ": completion of '" + e.name + "' without post");
      m.ops.push_back({r, send, e.peer.value_or(-1), e.name, q.front().first, i, q.front().second});
      q.pop_front();
    }
    for (const auto& [key, q] : open)
      if (!q.empty())
        throw StructuralError("rank " + std::to_string(r) + ": '" + std::get<2>(key) + "' posted but never completed");
  }
  // ops are appended in completion order; matching is FIFO in post order
  std::stable_sort(m.ops.begin(), m.ops.end(), [](const Op& a, const Op& b) {
    return std::tie(a.rank, a.post) < std::tie(b.rank, b.post);
  });
  using Chan = std::tuple<int, int, std::string>;  // sender, receiver, name
  std::map<Chan, std::deque<const Op*>> sends, recvs;
  for (const Op& op : m.ops) {
    if (op.send)
      sends[{op.rank, op.peer, op.name}].push_back(&op);
    else
      recvs[{op.peer, op.rank, op.name}].push_back(&op);
  }
  for (auto& [chan, sq] : sends) {
    auto& rq = recvs[chan];
    while (!sq.empty() && !rq.empty()) {
      m.pairs.emplace_back(sq.front(), rq.front());
      sq.pop_front();
      rq.pop_front();
    }
    for (const Op* op : sq) m.lone_sends.push_back(op);
  }
  for (auto& [chan, rq] : recvs)
    for (const Op* op : rq) m.lone_recvs.push_back(op);
  return m;
}

CommInterval to_interval(const Matched& m, const Op& op) {
  const auto& ev = m.ranks[op.rank];
  return {op.rank, op.send, op.peer, op.name, ev[op.post].bytes.value_or(0), ev[op.post].t, ev[op.complete].t};
}

MessagePair to_pair(const Matched& m, const Op& s, const Op& r) {
  const auto& se = m.ranks[s.rank];
  const auto& re = m.ranks[r.rank];
  return {s.rank, r.rank, s.name, se[s.post].t, se[s.complete].t, re[r.post].t, re[r.complete].t};
}

}  // namespace

MessageMatching match_messages(const Trace& trace) {
  const Matched m = match(trace);
  MessageMatching out;
  for (const auto& [s, r] : m.pairs) out.pairs.push_back(to_pair(m, *s, *r));
  for (const Op* op : m.lone_sends) out.unmatched_sends.push_back(to_interval(m, *op));
  for (const Op* op : m.lone_recvs) out.unmatched_recvs.push_back(to_interval(m, *op));
  return out;
}

Trace select_phase(const Trace& trace, const AnalysisOptions& options) {
  if (options.full_run) return trace;
  auto ranks = split_ranks(trace);
  std::vector<std::vector<TraceEvent>> kept(ranks.size());
  for (std::size_t r = 0; r < ranks.size(); ++r) {
    const auto& ev = ranks[r];
    std::size_t first = 0;
    for (std::size_t i = 0; i < ev.size(); ++i) {
      if (ev[i].kind != EventKind::RegionExit) continue;
      auto id = parse_region_name(ev[i].name);
      if (id && id->phase == Phase::Predict) first = i;
    }
    // the last PREDICT exit stays in as the window's start marker
    kept[r].assign(ev.begin() + static_cast<std::ptrdiff_t>(first), ev.end());
  }
  return merge_events(std::move(kept), trace.ranks);
}

Trace replay_ideal(const Trace& trace) {
  Matched m = match(trace);
  const int P = trace.ranks;
  // recv-complete (rank, index) -> matched send op
  std::map<std::pair<int, std::size_t>, const Op*> sender_of;
  for (const auto& [s, r] : m.pairs) sender_of[{r->rank, r->complete}] = s;

  std::vector<std::vector<double>> t(P);
  for (int r = 0; r < P; ++r) t[r].assign(m.ranks[r].size(), 0.0);
  std::vector<std::size_t> cursor(P, 0);

  bool all_done = false;
  while (!all_done) {
    all_done = true;
    bool progressed = false;
    for (int r = 0; r < P; ++r) {
      const auto& ev = m.ranks[r];
      std::size_t& i = cursor[r];
      while (i < ev.size()) {
        const TraceEvent& e = ev[i];
        double ti;
        if (i == 0) {
          ti = e.t;
        } else if (e.kind == EventKind::SendComplete) {
          ti = t[r][i - 1];
        } else if (e.kind == EventKind::RecvComplete) {
          ti = t[r][i - 1];
          auto it = sender_of.find({r, i});
          if (it != sender_of.end()) {
            const Op* s = it->second;
            if (cursor[s->rank] <= s->post) break;  // send not replayed yet
            ti = std::max(ti, t[s->rank][s->post]);
          }
        } else {
          ti = t[r][i - 1] + (e.t - ev[i - 1].t);
        }
        t[r][i] = ti;
        ++i;
        progressed = true;
      }
      if (i < ev.size()) all_done = false;
    }
    if (!all_done && !progressed) throw AnalysisError("ideal replay: cyclic message dependency");
  }

  std::vector<std::vector<TraceEvent>> out(P);
  for (int r = 0; r < P; ++r) {
    out[r] = m.ranks[r];
    for (std::size_t i = 0; i < out[r].size(); ++i) out[r][i].t = t[r][i];
  }
  return merge_events(std::move(out), P);
}

namespace {

std::pair<double, double> span(const Trace& trace) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& e : trace.events) {
    lo = std::min(lo, e.t);
    hi = std::max(hi, e.t);
  }
  return {lo, hi};
}

}  // namespace

double ideal_replay(const Trace& trace) {
  const Trace replayed = replay_ideal(trace);
  if (replayed.events.empty()) return 0.0;
  auto [lo, hi] = span(replayed);
  return hi - lo;
}

PopReport pop_metrics(const Trace& full, const AnalysisOptions& options) {
  const Trace trace = select_phase(full, options);
  if (trace.events.empty()) throw AnalysisError("empty phase: no events to analyse");

  const Matched m = match(trace);
  for (const auto& [s, r] : m.pairs) {
    const double sp = m.ranks[s->rank][s->post].t;
    const double rc = m.ranks[r->rank][r->complete].t;
    if (rc < sp)
      throw AnalysisError("causality violation: '" + s->name + "' " + std::to_string(s->rank) + "->" +
                          std::to_string(r->rank) + " received before it was sent");
  }

  std::vector<std::vector<std::pair<double, double>>> comm(trace.ranks);
  for (const Op& op : m.ops) comm[op.rank].emplace_back(m.ranks[op.rank][op.post].t, m.ranks[op.rank][op.complete].t);

  std::vector<double> c;
  for (int r = 0; r < trace.ranks; ++r) {
    const auto& ev = m.ranks[r];
    if (ev.empty()) {
      c.push_back(0.0);
      continue;
    }
    const double runtime = ev.back().t - ev.front().t;
    c.push_back(runtime - union_length(comm[r]));
  }
  auto [lo, hi] = span(trace);
  if (!(hi > lo)) throw AnalysisError("empty phase: zero duration");
  return pop_metrics(c, hi - lo, ideal_replay(trace));
}

std::vector<WaitState> detect_late_receiver(const Trace& trace) {
  const Matched m = match(trace);
  std::vector<WaitState> out;
  for (const auto& [s, r] : m.pairs) {
    const MessagePair p = to_pair(m, *s, *r);
    if (p.send_complete > p.send_post && p.recv_post > p.send_post) {
      const double w = std::min(p.recv_post, p.send_complete) - p.send_post;
      out.push_back({"late-receiver", p.sender, p.receiver, w, s->region + " / " + p.name});
    }
  }
  return out;
}

std::vector<WaitState> detect_late_sender(const Trace& trace) {
  const Matched m = match(trace);
  std::vector<WaitState> out;
  for (const auto& [s, r] : m.pairs) {
    const MessagePair p = to_pair(m, *s, *r);
    if (p.recv_complete > p.recv_post && p.send_post > p.recv_post) {
      const double w = std::min(p.send_post, p.recv_complete) - p.recv_post;
      out.push_back({"late-sender", p.sender, p.receiver, w, r->region + " / " + p.name});
    }
  }
  return out;
}

double total_wait(const std::vector<WaitState>& waits, int sender, int receiver) {
  double sum = 0;
  for (const auto& w : waits)
    if ((sender < 0 || w.sender == sender) && (receiver < 0 || w.receiver == receiver)) sum += w.wait_s;
  return sum;
}

ReportFormat parse_report_format(const std::string& text) {
  if (text == "csv") return ReportFormat::Csv;
  if (text == "text") return ReportFormat::Text;
  throw InvalidArgument("unknown report format '" + text + "' (csv|text)");
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write report to " + path);
  return os;
}

}  // namespace

void emit_report(const PopReport& report, std::ostream& os, ReportFormat format) {
  const std::pair<const char*, double> rows[] = {
      {"load_balance", report.load_balance},
      {"communication_efficiency", report.communication_efficiency},
      {"serialisation_efficiency", report.serialisation_efficiency},
      {"transfer_efficiency", report.transfer_efficiency},
      {"parallel_efficiency", report.parallel_efficiency},
  };
  os << "metric,value\n";
  for (const auto& [name, v] : rows) {
    os << name << ',' << fixed(v, 3);
    if (format == ReportFormat::Text) os << "  (" << fixed(100.0 * v, 1) << " %)";
    os << '\n';
  }
  if (format == ReportFormat::Text) {
    os << "runtime_s," << fixed(report.runtime, 6) << '\n';
    os << "ideal_runtime_s," << fixed(report.ideal_runtime, 6) << '\n';
  }
}

void emit_report(const PopReport& report, const std::string& path, ReportFormat format) {
  auto os = open_out(path);
  emit_report(report, os, format);
}

void emit_report(const std::vector<WaitState>& waits, std::ostream& os, ReportFormat format) {
  os << "pattern,sender,receiver,wait_s,location\n";
  for (const auto& w : waits)
    os << w.pattern << ',' << w.sender << ',' << w.receiver << ',' << fixed(w.wait_s, 6) << ','
       << w.location << '\n';
  if (format == ReportFormat::Text) {
    double total = 0;
    for (const auto& w : waits) total += w.wait_s;
    os << "total," << waits.size() << " wait states," << fixed(total, 6) << " s\n";
  }
}

void emit_report(const std::vector<WaitState>& waits, const std::string& path, ReportFormat format) {
  auto os = open_out(path);
  emit_report(waits, os, format);
}

}  // namespace pitlab
