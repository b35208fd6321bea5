#include "pitlab/controller.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <sstream>
#include <thread>

#include "pitlab/errors.hpp"

namespace pitlab {

std::string to_string(ExecutionMode mode) { return mode == ExecutionMode::Serial ? "serial" : "parallel"; }

ExecutionMode parse_execution_mode(const std::string& text) {
  if (text == "serial") return ExecutionMode::Serial;
  if (text == "parallel") return ExecutionMode::Parallel;
  throw InvalidArgument("unknown mode '" + text + "' (serial|parallel)");
}

void RunConfig::validate() const {
  if (workers < 1) throw InvalidArgument("workers must be >= 1");
  if (num_steps < 1) throw InvalidArgument("num_steps must be >= 1");
  if (num_steps % workers != 0)
    throw InvalidArgument("num_steps (" + std::to_string(num_steps) + ") must be a multiple of workers (" +
                          std::to_string(workers) + ")");
  if (!(dt > 0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
  if (num_nodes < 1) throw InvalidArgument("num_nodes must be >= 1");
  if (fine_sweeps < 1 || coarse_sweeps < 1) throw InvalidArgument("sweep counts must be >= 1");
  if (!(tolerance >= 0)) throw InvalidArgument("tolerance must be >= 0");
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
  if (!(watchdog_s > 0)) throw InvalidArgument("watchdog must be positive");
}

namespace {

std::vector<std::byte> encode(const Vector& v, std::optional<double> head = {}) {
  const std::size_t extra = head ? 1 : 0;
  std::vector<std::byte> out((v.size() + extra) * sizeof(double));
  std::byte* p = out.data();
  if (head) {
    std::memcpy(p, &*head, sizeof(double));
    p += sizeof(double);
  }
  if (v.size() > 0) std::memcpy(p, v.data(), v.size() * sizeof(double));
  return out;
}

Vector decode(const std::vector<std::byte>& bytes, std::size_t skip = 0) {
  const std::size_t n = bytes.size() / sizeof(double) - skip;
  Vector v(static_cast<Eigen::Index>(n));
  if (n > 0) std::memcpy(v.data(), bytes.data() + skip * sizeof(double), n * sizeof(double));
  return v;
}

enum class Stage {
  PredictBegin,
  PredictRecv,
  PredictSweep,
  PredictSendWait,
  PredictEnd,
  FineSweeps,
  FineRecv,
  FineSend,
  FineSendWait,
  Down,
  CoarseRecv,
  CoarseSweep,
  CoarseSendWait,
  Up,
  CheckRecv,
  Check,
  CheckSendWait,
  CheckEnd,
  Finished
};

struct Requirement {
  enum Kind { None, Recv, Wait } kind = None;
  Tag tag;
};

constexpr int kFine = 0;
constexpr int kCoarse = 1;

// One time step on one worker, advanced in small units so that the same code
// runs either on its own thread or under the round-robin scheduler.
class Worker {
 public:
  Worker(int rank, const RunConfig& cfg, const LevelPair& pair, Network& net, Tracer& tracer)
      : rank_(rank), size_(cfg.workers), cfg_(cfg), pair_(pair), net_(net), tracer_(tracer) {
    auto d = cfg.fine_sweep_delay_s.find(rank);
    if (d != cfg.fine_sweep_delay_s.end()) delay_s_ = d->second;
  }

  void start(const Vector& u0) {
    block_u0_ = u0;
    stage_ = Stage::PredictBegin;
    k_ = 0;
    j_ = 0;
    prev_done_ = false;
    done_ = false;
    history_.clear();
  }

  bool finished() const { return stage_ == Stage::Finished; }
  bool first() const { return rank_ == 0; }
  bool last() const { return rank_ == size_ - 1; }
  bool listening() const { return !first() && !prev_done_; }

  Requirement requirement() const {
    switch (stage_) {
      case Stage::PredictRecv:
        if (j_ > 0) return {Requirement::Recv, Tag{kCoarse, MessageKind::Value, -j_}};
        break;
      case Stage::FineRecv:
        if (listening()) return {Requirement::Recv, Tag{kFine, MessageKind::Value, k_}};
        break;
      case Stage::CoarseRecv:
        if (listening()) return {Requirement::Recv, Tag{kCoarse, MessageKind::Value, k_}};
        break;
      case Stage::CheckRecv:
        if (listening()) return {Requirement::Recv, Tag{kFine, MessageKind::Status, k_}};
        break;
      case Stage::PredictSendWait:
      case Stage::FineSendWait:
      case Stage::CoarseSendWait:
      case Stage::CheckSendWait:
        return {Requirement::Wait, {}};
      default:
        break;
    }
    return {};
  }

  // True if the requirement can be met without blocking.
  bool ready() const {
    const Requirement r = requirement();
    if (r.kind == Requirement::Recv) return net_.can_recv(rank_, rank_ - 1, r.tag);
    if (r.kind == Requirement::Wait) return net_.test(pending_);
    return true;
  }

  bool in_flight() const {
    const Requirement r = requirement();
    return r.kind == Requirement::Recv && net_.recv_in_flight(rank_, rank_ - 1, r.tag);
  }

  void advance() {
    switch (stage_) {
      case Stage::PredictBegin: {
        ScopedRegion region(tracer_, region_name(Phase::Predict, rank_));
        fine_ = LevelState::spread(block_u0_, cfg_.num_nodes, cfg_.dt, *pair_.fine);
        restrict_state(fine_, coarse_, pair_);
        coarse_before_ = coarse_.u;
        coarse_u0_before_ = coarse_.u0;
        j_ = 0;
        stage_ = Stage::PredictRecv;
        break;
      }
      case Stage::PredictRecv:
        if (j_ > 0) coarse_.u0 = receive().head(coarse_.dofs());
        stage_ = Stage::PredictSweep;
        break;
      case Stage::PredictSweep: {
        {
          ScopedRegion region(tracer_, region_name(Phase::Predict, rank_));
          imex_sweep(coarse_, pair_.coarse_table, *pair_.coarse);
          ++coarse_sweeps_;
        }
        if (!last()) {
          send(Tag{kCoarse, MessageKind::Value, -(j_ + 1)}, encode(coarse_.end_value()));
          stage_ = Stage::PredictSendWait;
        } else {
          next_predict();
        }
        break;
      }
      case Stage::PredictSendWait:
        net_.wait(pending_, &tracer_);
        next_predict();
        break;
      case Stage::PredictEnd: {
        ScopedRegion region(tracer_, region_name(Phase::Predict, rank_));
        prolong_correction(fine_, coarse_, coarse_before_, pair_);
        fine_.u0 += pair_.transfer->prolong_space(coarse_.u0 - coarse_u0_before_);
        history_.push_back(compute_residual(fine_, pair_.fine_table));
        k_ = 1;
        stage_ = Stage::FineSweeps;
        break;
      }
      case Stage::FineSweeps:
        for (int s = 0; s < cfg_.fine_sweeps; ++s) {
          ScopedRegion region(tracer_, region_name(Phase::ItFine, rank_));
          if (delay_s_ > 0) std::this_thread::sleep_for(std::chrono::duration<double>(delay_s_));
          imex_sweep(fine_, pair_.fine_table, *pair_.fine);
          ++fine_sweeps_;
        }
        stage_ = Stage::FineRecv;
        break;
      case Stage::FineRecv:
        if (listening()) fine_.u0 = receive();
        stage_ = Stage::FineSend;
        break;
      case Stage::FineSend:
        if (!last()) {
          send(Tag{kFine, MessageKind::Value, k_}, encode(fine_.end_value()));
          stage_ = Stage::FineSendWait;
        } else {
          stage_ = Stage::Down;
        }
        break;
      case Stage::FineSendWait:
        net_.wait(pending_, &tracer_);
        stage_ = Stage::Down;
        break;
      case Stage::Down: {
        ScopedRegion region(tracer_, region_name(Phase::ItDown, rank_));
        restrict_state(fine_, coarse_, pair_);
        coarse_before_ = coarse_.u;
        stage_ = Stage::CoarseRecv;
        break;
      }
      case Stage::CoarseRecv:
        if (listening()) coarse_.u0 = receive();
        stage_ = Stage::CoarseSweep;
        break;
      case Stage::CoarseSweep:
        {
          ScopedRegion region(tracer_, region_name(Phase::ItCoarse, rank_));
          for (int s = 0; s < cfg_.coarse_sweeps; ++s) {
            imex_sweep(coarse_, pair_.coarse_table, *pair_.coarse);
            ++coarse_sweeps_;
          }
        }
        if (!last()) {
          send(Tag{kCoarse, MessageKind::Value, k_}, encode(coarse_.end_value()));
          stage_ = Stage::CoarseSendWait;
        } else {
          stage_ = Stage::Up;
        }
        break;
      case Stage::CoarseSendWait:
        net_.wait(pending_, &tracer_);
        stage_ = Stage::Up;
        break;
      case Stage::Up: {
        ScopedRegion region(tracer_, region_name(Phase::ItUp, rank_));
        prolong_correction(fine_, coarse_, coarse_before_, pair_);
        stage_ = Stage::CheckRecv;
        break;
      }
      case Stage::CheckRecv:
        if (listening()) {
          Vector status = receive();
          if (status.size() > 0 && status[0] != 0.0) {
            prev_done_ = true;
            fine_.u0 = status.tail(status.size() - 1);
          }
        }
        stage_ = Stage::Check;
        break;
      case Stage::Check: {
        double r = 0;
        {
          ScopedRegion region(tracer_, region_name(Phase::ItCheck, rank_));
          r = compute_residual(fine_, pair_.fine_table);
          history_.push_back(r);
        }
        if (!std::isfinite(r) || r > cfg_.divergence_threshold) {
          std::ostringstream os;
          os << "worker " << rank_ << " diverged at iteration " << k_ << ": residual " << r;
          throw Diverged(os.str());
        }
        done_ = may_stop(r, cfg_.tolerance, first(), prev_done_);
        if (!last()) {
          send(Tag{kFine, MessageKind::Status, k_},
               encode(done_ ? fine_.end_value() : Vector(), done_ ? 1.0 : 0.0));
          stage_ = Stage::CheckSendWait;
        } else {
          stage_ = Stage::CheckEnd;
        }
        break;
      }
      case Stage::CheckSendWait:
        net_.wait(pending_, &tracer_);
        stage_ = Stage::CheckEnd;
        break;
      case Stage::CheckEnd:
        if (done_) {
          stage_ = Stage::Finished;
        } else if (k_ >= cfg_.max_iterations) {
          std::ostringstream os;
          os << "worker " << rank_ << " not converged after " << k_ << " iterations; residuals:";
          for (double h : history_) os << ' ' << h;
          throw NotConverged(os.str());
        } else {
          ++k_;
          stage_ = Stage::FineSweeps;
        }
        break;
      case Stage::Finished:
        break;
    }
  }

  int rank() const { return rank_; }
  int iterations() const { return k_; }
  const Vector& end_value() const { return fine_.end_value(); }
  const std::vector<double>& history() const { return history_; }
  std::uint64_t fine_sweeps() const { return fine_sweeps_; }
  std::uint64_t coarse_sweeps() const { return coarse_sweeps_; }

 private:
  void next_predict() {
    ++j_;
    stage_ = j_ <= rank_ ? Stage::PredictRecv : Stage::PredictEnd;
  }

  Vector receive() {
    const Requirement r = requirement();
    Message m = net_.recv(rank_, rank_ - 1, r.tag, &tracer_);
    return decode(m.payload);
  }

  void send(Tag tag, std::vector<std::byte> payload) {
    pending_ = net_.isend(rank_, rank_ + 1, tag, std::move(payload), &tracer_);
  }

  int rank_;
  int size_;
  const RunConfig& cfg_;
  const LevelPair& pair_;
  Network& net_;
  Tracer& tracer_;
  double delay_s_ = 0;

  Vector block_u0_;
  LevelState fine_;
  LevelState coarse_;
  std::vector<Vector> coarse_before_;
  Vector coarse_u0_before_;
  SendHandle pending_;
  Stage stage_ = Stage::PredictBegin;
  int k_ = 0;
  int j_ = 0;
  bool prev_done_ = false;
  bool done_ = false;
  std::vector<double> history_;
  std::uint64_t fine_sweeps_ = 0;
  std::uint64_t coarse_sweeps_ = 0;
};

std::string last_event_dump(const std::vector<Tracer>& tracers) {
  std::ostringstream os;
  for (const Tracer& t : tracers) {
    os << "\n  worker " << t.rank() << ": ";
    if (t.events().empty()) {
      os << "(no events)";
    } else {
      const TraceEvent& e = t.events().back();
      os << to_string(e.kind) << ' ' << e.name;
      if (e.peer) os << " peer " << *e.peer;
    }
  }
  return os.str();
}

void drive_serial(std::vector<Worker>& workers, const std::vector<Tracer>& tracers) {
  while (true) {
    bool all_done = true;
    bool progressed = false;
    bool waiting_on_latency = false;
    for (Worker& w : workers) {
      if (w.finished()) continue;
      all_done = false;
      // run each worker as far as it goes without blocking
      while (!w.finished() && w.ready()) {
        w.advance();
        progressed = true;
      }
      if (!w.finished() && w.in_flight()) waiting_on_latency = true;
    }
    if (all_done) return;
    if (progressed) continue;
    if (waiting_on_latency) {
      std::this_thread::sleep_for(std::chrono::microseconds(100));
      continue;
    }
    throw Deadlock("no worker can advance and no message is in flight:" + last_event_dump(tracers));
  }
}

void drive_parallel(std::vector<Worker>& workers, Network& net, const std::vector<Tracer>& tracers,
                    double watchdog_s) {
  const std::size_t P = workers.size();
  std::vector<std::exception_ptr> errors(P);
  std::vector<char> closed_error(P, 0);
  std::atomic<std::uint64_t> progress{0};
  std::atomic<std::size_t> finished{0};

  std::vector<std::thread> threads;
  threads.reserve(P);
  for (std::size_t p = 0; p < P; ++p) {
    threads.emplace_back([&, p] {
      try {
        while (!workers[p].finished()) {
          workers[p].advance();
          progress.fetch_add(1, std::memory_order_relaxed);
        }
      } catch (const ChannelClosed&) {
        errors[p] = std::current_exception();
        closed_error[p] = 1;
        net.close();
      } catch (...) {
        errors[p] = std::current_exception();
        net.close();
      }
      finished.fetch_add(1);
    });
  }

  bool timed_out = false;
  std::uint64_t seen = progress.load();
  auto last_change = std::chrono::steady_clock::now();
  while (finished.load() < P) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    const std::uint64_t now = progress.load();
    if (now != seen) {
      seen = now;
      last_change = std::chrono::steady_clock::now();
    } else if (std::chrono::duration<double>(std::chrono::steady_clock::now() - last_change).count() >
               watchdog_s) {
      timed_out = true;
      net.close();
      break;
    }
  }
  for (auto& t : threads) t.join();

  if (timed_out)
    throw Deadlock("no progress for " + std::to_string(watchdog_s) + " s:" + last_event_dump(tracers));
  for (std::size_t p = 0; p < P; ++p)
    if (errors[p] && !closed_error[p]) std::rethrow_exception(errors[p]);
  for (std::size_t p = 0; p < P; ++p)
    if (errors[p]) std::rethrow_exception(errors[p]);
}

}  // namespace

RunResult run(const RunConfig& config, ExecutionMode mode) {
  config.validate();
  const int P = config.workers;
  const LevelPair pair = make_level_pair(config.problem, config.num_nodes);
  Vector u = initial_value(config.problem);

  std::vector<Tracer> tracers;
  tracers.reserve(P);
  for (int p = 0; p < P; ++p) tracers.emplace_back(p, config.trace_filter);

  RunResult result;
  std::vector<ChannelAudit> audit;
  for (int p = 0; p + 1 < P; ++p) audit.push_back({p, p + 1, 0, 0});

  const double t_start = monotonic_seconds();
  const int blocks = config.num_steps / P;
  for (int b = 0; b < blocks; ++b) {
    Network net(P, config.comm);
    std::vector<Worker> workers;
    workers.reserve(P);
    for (int p = 0; p < P; ++p) {
      workers.emplace_back(p, config, pair, net, tracers[p]);
      workers.back().start(u);
    }
    if (mode == ExecutionMode::Serial)
      drive_serial(workers, tracers);
    else
      drive_parallel(workers, net, tracers, config.watchdog_s);

    for (Worker& w : workers) {
      result.final_values.push_back(w.end_value());
      result.iterations.push_back(w.iterations());
      result.residual_history.push_back(w.history());
      result.fine_sweeps += w.fine_sweeps();
      result.coarse_sweeps += w.coarse_sweeps();
    }
    for (ChannelAudit& a : audit) {
      const ChannelStats s = net.stats(a.source, a.dest);
      a.sends += s.sends;
      a.receives += s.receives;
    }
    result.unwaited_sends += net.unwaited();
    u = workers.back().end_value();
  }
  result.wall_time = monotonic_seconds() - t_start;

  double sum = 0;
  for (int k : result.iterations) sum += k;
  result.mean_iterations = sum / static_cast<double>(result.iterations.size());
  result.channels = std::move(audit);

  std::vector<std::vector<TraceEvent>> per_rank;
  for (const Tracer& t : tracers) per_rank.push_back(t.finalize());
  result.trace = merge_events(std::move(per_rank), P);
  return result;
}

SdcResult run_sdc(const Problem& problem, const Vector& u0, const Table& table, double dt, int num_steps,
                  double tolerance, int max_sweeps) {
  if (num_steps < 1 || max_sweeps < 1 || !(dt > 0)) throw InvalidArgument("run_sdc: bad arguments");
  SdcResult out;
  Vector u = u0;
  for (int n = 0; n < num_steps; ++n) {
    LevelState s = LevelState::spread(u, table.num_nodes, dt, problem);
    int k = 0;
    do {
      imex_sweep(s, table, problem);
      ++k;
    } while (compute_residual(s, table) > tolerance && k < max_sweeps);
    if (s.residual_norm > tolerance)
      throw NotConverged("run_sdc: step " + std::to_string(n) + " residual " + std::to_string(s.residual_norm));
    out.sweeps.push_back(k);
    out.total_sweeps += k;
    out.final_values.push_back(s.end_value());
    out.node_values.push_back(s.u);
    u = s.end_value();
  }
  return out;
}

SdcResult run_sdc_fixed(const Problem& problem, const Vector& u0, const Table& table, double dt, int num_steps,
                        int sweeps) {
  if (num_steps < 1 || sweeps < 1 || !(dt > 0)) throw InvalidArgument("run_sdc_fixed: bad arguments");
  SdcResult out;
  Vector u = u0;
  for (int n = 0; n < num_steps; ++n) {
    LevelState s = LevelState::spread(u, table.num_nodes, dt, problem);
    for (int k = 0; k < sweeps; ++k) imex_sweep(s, table, problem);
    out.sweeps.push_back(sweeps);
    out.total_sweeps += sweeps;
    out.final_values.push_back(s.end_value());
    out.node_values.push_back(s.u);
    u = s.end_value();
  }
  return out;
}

std::string format_summary(const RunResult& result) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "Time to solution: %.6f sec.\nMean number of iterations: %.4f\n",
                result.wall_time, result.mean_iterations);
  return buf;
}

}  // namespace pitlab
