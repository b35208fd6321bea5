#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pitlab/comm.hpp"
#include "pitlab/problems.hpp"
#include "pitlab/sweeper.hpp"
#include "pitlab/trace.hpp"
#include "pitlab/transfer.hpp"

namespace pitlab {

enum class ExecutionMode { Serial, Parallel };

std::string to_string(ExecutionMode mode);
ExecutionMode parse_execution_mode(const std::string& text);

struct RunConfig {
  ProblemConfig problem;
  int num_steps = 4;
  int workers = 4;
  double dt = 0.1;
  int num_nodes = 3;
  int fine_sweeps = 3;
  int coarse_sweeps = 1;
  double tolerance = 1e-8;
  int max_iterations = 50;
  double divergence_threshold = 1e6;
  CommOptions comm;
  /// Parallel mode aborts with Deadlock after this long without progress.
  double watchdog_s = 120;
  std::vector<std::string> trace_filter;
  /// Extra sleep per fine sweep on the given ranks (fault injection).
  std::map<int, double> fine_sweep_delay_s;

  void validate() const;
};

/// Message counts of one directed channel, summed over blocks.
struct ChannelAudit {
  int source = 0;
  int dest = 0;
  std::uint64_t sends = 0;
  std::uint64_t receives = 0;
};

struct RunResult {
  std::vector<Vector> final_values;  // end value of every step
  std::vector<int> iterations;       // per step
  double mean_iterations = 0;
  double wall_time = 0;
  Trace trace;
  /// Per step: fine residual after the predictor, then after each iteration.
  std::vector<std::vector<double>> residual_history;
  std::uint64_t fine_sweeps = 0;
  std::uint64_t coarse_sweeps = 0;
  std::vector<ChannelAudit> channels;
  std::int64_t unwaited_sends = 0;
};

/// Integrates `num_steps` steps with two-level PFASST, one step per worker
/// and blocks of `workers` steps. Serial mode runs the identical schedule
/// in one thread by round-robin over the workers.
RunResult run(const RunConfig& config, ExecutionMode mode);

/// Worker p may stop once its residual is below tolerance and its
/// predecessor has stopped (the first worker only checks its residual).
inline bool may_stop(double residual, double tolerance, bool first, bool predecessor_done) {
  return residual <= tolerance && (first || predecessor_done);
}

struct SdcResult {
  std::vector<Vector> final_values;
  std::vector<std::vector<Vector>> node_values;
  std::vector<int> sweeps;
  std::uint64_t total_sweeps = 0;
};

/// Time-serial single-level SDC: sweep each step until the residual meets
/// `tolerance` (at least one sweep), then hand the end value on.
SdcResult run_sdc(const Problem& problem, const Vector& u0, const Table& table, double dt,
                  int num_steps, double tolerance, int max_sweeps = 100);

/// Fixed number of sweeps per step, no residual check.
SdcResult run_sdc_fixed(const Problem& problem, const Vector& u0, const Table& table, double dt,
                        int num_steps, int sweeps);

/// "Time to solution: <t> sec." and "Mean number of iterations: <k>" lines.
std::string format_summary(const RunResult& result);

}  // namespace pitlab
