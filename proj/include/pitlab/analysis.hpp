#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pitlab/trace.hpp"

namespace pitlab {

struct PopReport {
  double load_balance = 0;
  double communication_efficiency = 0;
  double serialisation_efficiency = 0;
  double transfer_efficiency = 0;
  double parallel_efficiency = 0;
  std::vector<double> computation;  // c_p per rank
  double runtime = 0;               // T
  double ideal_runtime = 0;         // T_ideal
};

/// POP decomposition from per-rank computation times, runtime and ideal
/// runtime. CommE is formed as SerE*TE and PE as LB*CommE, so both
/// identities hold on the returned numbers by construction.
PopReport pop_metrics(const std::vector<double>& computation, double runtime, double ideal_runtime);

struct AnalysisOptions {
  /// false: each rank's window starts at its last PREDICT exit.
  bool full_run = false;
};

/// Restricts the trace to the analysed window (see AnalysisOptions).
Trace select_phase(const Trace& trace, const AnalysisOptions& options = {});

/// POP metrics of the selected phase; T_ideal comes from ideal_replay.
/// Throws AnalysisError on an empty phase or a causality violation.
PopReport pop_metrics(const Trace& trace, const AnalysisOptions& options = {});

/// Matched message: k-th send-post p->q of a tag with the k-th receive on q.
struct MessagePair {
  int sender = 0;
  int receiver = 0;
  std::string name;
  double send_post = 0;
  double send_complete = 0;
  double recv_post = 0;
  double recv_complete = 0;
};

struct MessageMatching {
  std::vector<MessagePair> pairs;
  std::vector<CommInterval> unmatched_sends;
  std::vector<CommInterval> unmatched_recvs;
};

MessageMatching match_messages(const Trace& trace);

/// Replays the trace with free, non-blocking transfers: computation gaps
/// keep their length, sends complete at once, a receive completes when both
/// it and the matching send are posted. Throws AnalysisError on a cycle.
Trace replay_ideal(const Trace& trace);

/// Makespan of replay_ideal.
double ideal_replay(const Trace& trace);

struct WaitState {
  std::string pattern;  // "late-receiver" or "late-sender"
  int sender = 0;
  int receiver = 0;
  double wait_s = 0;
  std::string location;
};

/// Blocked sends whose receive was posted after the send.
std::vector<WaitState> detect_late_receiver(const Trace& trace);
/// Receives posted before their send.
std::vector<WaitState> detect_late_sender(const Trace& trace);

double total_wait(const std::vector<WaitState>& waits, int sender = -1, int receiver = -1);

enum class ReportFormat { Csv, Text };
ReportFormat parse_report_format(const std::string& text);

void emit_report(const PopReport& report, std::ostream& os, ReportFormat format);
void emit_report(const PopReport& report, const std::string& path, ReportFormat format);
void emit_report(const std::vector<WaitState>& waits, std::ostream& os, ReportFormat format);
void emit_report(const std::vector<WaitState>& waits, const std::string& path, ReportFormat format);

}  // namespace pitlab
