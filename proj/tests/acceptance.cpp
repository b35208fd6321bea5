// One line per criterion; exit status is nonzero when any of them fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pitlab/analysis.hpp"
#include "pitlab/collocation.hpp"
#include "pitlab/controller.hpp"
#include "pitlab/errors.hpp"
#include "pitlab/harness.hpp"
#include "pitlab/problems.hpp"
#include "pitlab/sweeper.hpp"
#include "pitlab/trace.hpp"
#include "pitlab/transfer.hpp"

using namespace pitlab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream why;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      why << " [" << what << "]";
    }
  }
};

// traces collected by criteria 4, 6 and 8 for the conservation and identity checks
std::vector<RunResult> g_runs;

double inf_norm(const Vector& v) { return v.lpNorm<Eigen::Infinity>(); }

std::vector<Vector> dense_collocation(const Table& tab, const Eigen::MatrixXd& a, const Vector& u0, double dt) {
  const Eigen::Index d = a.rows();
  const int M = tab.num_nodes;
  Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(d * M, d * M);
  Vector rhs(d * M);
  for (int m = 0; m < M; ++m) {
    rhs.segment(m * d, d) = u0;
    for (int j = 0; j < M; ++j) sys.block(m * d, j * d, d, d) -= dt * tab.q(m, j) * a;
  }
  const Vector x = sys.partialPivLu().solve(rhs);
  std::vector<Vector> out(M);
  for (int m = 0; m < M; ++m) out[m] = x.segment(m * d, d);
  return out;
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

void criterion1(Verdict& v) {
  const Table t2 = make_radau_table(2);
  Eigen::Matrix2d q, lu;
  q << 5.0 / 12, -1.0 / 12, 3.0 / 4, 1.0 / 4;
  lu << 5.0 / 12, 0, 3.0 / 4, 2.0 / 5;
  const double eq = (t2.q - q).cwiseAbs().maxCoeff(), elu = (t2.qd_implicit - lu).cwiseAbs().maxCoeff();
  v.require(eq <= 1e-13, "Q");
  v.require(elu <= 1e-13, "QD_LU");

  const Table t3 = make_radau_table(3);
  double worst = 0;
  for (int k = 0; k < 3; ++k)  // row m integrates t^k exactly over [0, tau_m] for k < M
    for (int m = 0; m < 3; ++m) {
      double s = 0;
      for (int j = 0; j < 3; ++j) s += t3.q(m, j) * std::pow(t3.nodes[j], k);
      worst = std::max(worst, std::abs(s - std::pow(t3.nodes[m], k + 1) / (k + 1)));
    }
  // the weights of the last row reach degree 2M-2
  for (int k = 3; k <= 4; ++k) {
    double s = 0;
    for (int j = 0; j < 3; ++j) s += t3.q(2, j) * std::pow(t3.nodes[j], k);
    worst = std::max(worst, std::abs(s - 1.0 / (k + 1)));
  }
  v.require(worst <= 1e-12, "M=3 exactness");
  v.why << " |dQ|=" << eq << " |dQD|=" << elu << " exactness=" << worst;
}

void criterion2(Verdict& v) {
  ProblemConfig cfg;
  cfg.lambda_implicit = -1.0;
  const LevelPair pair = make_level_pair(cfg, 3);
  // The collocation solution comes from the direct solve; SDC must land on it. At dt = 0.0125 the
  // error is ~1e-14, so the sweeps' own rounding shows up in their pairwise order.
  std::vector<double> dts{0.1, 0.05, 0.025, 0.0125}, err, err_sdc;
  const double exact = std::exp(-1.0);
  for (double dt : dts) {
    const int steps = static_cast<int>(std::lround(1.0 / dt));
    Vector u = Vector::Constant(1, 1.0);
    for (int k = 0; k < steps; ++k) u = collocation_solve_direct(u, pair.fine_table, dt, *pair.fine).back();
    err.push_back(std::abs(u[0] - exact));
    const auto r = run_sdc(*pair.fine, Vector::Constant(1, 1.0), pair.fine_table, dt, steps, 1e-14);
    err_sdc.push_back(std::abs(r.final_values.back()[0] - exact));
  }
  double min_order = 1e9, gap = 0;
  v.why << " orders";
  for (std::size_t i = 1; i < err.size(); ++i) {
    min_order = std::min(min_order, std::log2(err[i - 1] / err[i]));
    v.why << " " << std::log2(err[i - 1] / err[i]);
  }
  v.why << ", sdc";
  for (std::size_t i = 1; i < err.size(); ++i) v.why << " " << std::log2(err_sdc[i - 1] / err_sdc[i]);
  for (std::size_t i = 0; i < err.size(); ++i) gap = std::max(gap, std::abs(err_sdc[i] - err[i]));
  v.require(min_order >= 4.5, "order");
  v.require(gap <= 1e-13, "sdc off the collocation solution");
  v.why << ", finest error " << err.back() << ", max sdc gap " << gap;
}

void criterion3(Verdict& v) {
  const Table tab = make_radau_table(3);
  const Vector u0 = Vector::Constant(1, 1.0);
  const double dt = 0.2;
  double worst = 0;
  // implicit part through the LU preconditioner, explicit part through explicit Euler, then both
  const std::vector<std::pair<double, double>> splits{{-5.0, 0.0}, {0.0, -1.0}, {-5.0, 0.8}};
  for (auto [li, le] : splits) {
    DahlquistProblem p(li, le);
    Eigen::MatrixXd a(1, 1);
    a << li + le;
    const auto oracle = dense_collocation(tab, a, u0, dt);
    auto s = LevelState::spread(u0, 3, dt, p);
    for (int k = 0; k < 100; ++k) imex_sweep(s, tab, p);
    for (int m = 0; m < 3; ++m) worst = std::max(worst, inf_norm(s.u[m] - oracle[m]));
  }
  HeatProblem heat(8, 1.0);
  Vector h0(64);
  for (int i = 0; i < 64; ++i) h0[i] = std::cos(0.3 * i);
  const auto oracle = dense_collocation(tab, *heat.linear_operator(), h0, 0.002);
  auto s = LevelState::spread(h0, 3, 0.002, heat);
  for (int k = 0; k < 50; ++k) imex_sweep(s, tab, heat);
  for (int m = 0; m < 3; ++m) worst = std::max(worst, inf_norm(s.u[m] - oracle[m]));
  v.require(worst <= 1e-10, "oracle mismatch");
  v.why << " max deviation " << worst;
}

RunConfig allen_cahn(long n, long nc, int workers) {
  RunConfig c;
  c.problem.kind = ProblemKind::AllenCahn;
  c.problem.fine_n = n;
  c.problem.coarse_n = nc;
  c.problem.radius = 0.25;
  c.num_steps = workers;
  c.workers = workers;
  c.dt = 1e-3;
  c.tolerance = 1e-8;
  return c;
}

void criterion4(Verdict& v) {
  std::vector<std::pair<std::string, RunConfig>> cfgs;
  for (int P : {2, 4}) {
    RunConfig d;
    d.num_steps = P;
    d.workers = P;
    d.tolerance = 1e-10;
    cfgs.push_back({"dahlquist P=" + std::to_string(P), d});
    d.comm = CommOptions::rendezvous();
    cfgs.push_back({"dahlquist rendezvous P=" + std::to_string(P), d});
    cfgs.push_back({"allen-cahn P=" + std::to_string(P), allen_cahn(64, 32, P)});
    RunConfig a = allen_cahn(64, 32, P);
    a.comm = CommOptions::rendezvous();
    cfgs.push_back({"allen-cahn rendezvous P=" + std::to_string(P), a});
  }
  double worst = 0;
  for (const auto& [name, cfg] : cfgs) {
    const RunResult s = run(cfg, ExecutionMode::Serial);
    const RunResult p = run(cfg, ExecutionMode::Parallel);
    v.require(s.iterations == p.iterations, name + " iterations");
    for (std::size_t n = 0; n < s.final_values.size(); ++n)
      worst = std::max(worst, inf_norm(s.final_values[n] - p.final_values[n]));
    g_runs.push_back(s);
    g_runs.push_back(p);
  }
  v.require(worst <= 1e-12, "fields differ");
  v.why << " " << cfgs.size() << " configs, max field difference " << worst;
}

double circle_slope(long n, double dt, int steps, std::vector<double>* r2_out = nullptr) {
  ProblemConfig cfg;
  cfg.kind = ProblemKind::AllenCahn;
  cfg.fine_n = n;
  cfg.coarse_n = n / 4;
  cfg.radius = 0.25;
  const LevelPair pair = make_level_pair(cfg, 3);
  const Vector u0 = initial_value(cfg);
  const auto r = run_sdc(*pair.fine, u0, pair.fine_table, dt, steps, 1e-8);
  std::vector<double> t{0.0}, r2;
  const double r0 = measure_radius(as_field(u0, n), 1.0).radius;
  r2.push_back(r0 * r0);
  for (int k = 0; k < steps; ++k) {
    const double rk = measure_radius(as_field(r.final_values[k], n), 1.0).radius;
    t.push_back((k + 1) * dt);
    r2.push_back(rk * rk);
  }
  if (r2_out) *r2_out = r2;
  return least_squares_slope(t, r2);
}

void criterion5(Verdict& v) {
  const double slope = circle_slope(128, 1e-3, 20);
  const double ref = circle_slope(256, 2.5e-4, 80);
  const double rel = std::abs(slope + 2.0) / 2.0, rel_ref = std::abs(ref + 2.0) / 2.0;
  v.require(rel <= 0.15, "slope off by more than 15%");
  v.why << " slope " << slope << " (" << 100 * rel << " % from -2), reference slope " << ref << " ("
        << 100 * rel_ref << " %)";
}

void criterion6(Verdict& v) {
  RunConfig c = allen_cahn(128, 32, 4);
  c.problem.radius.reset();  // seeded random radius
  const RunResult r = run(c, ExecutionMode::Parallel);
  g_runs.push_back(r);
  const LevelPair pair = make_level_pair(c.problem, c.num_nodes);
  const SdcResult ref = run_sdc(*pair.fine, initial_value(c.problem), pair.fine_table, c.dt, c.num_steps, c.tolerance);
  double worst = 0;
  for (int n = 0; n < c.num_steps; ++n) worst = std::max(worst, inf_norm(r.final_values[n] - ref.final_values[n]));
  v.require(worst <= 1e-6, "fields differ from SDC");
  for (const auto& h : r.residual_history) v.require(h.back() <= c.tolerance, "worker not converged");
  for (int p = 1; p < c.workers; ++p) v.require(r.iterations[p] >= r.iterations[p - 1], "prefix stopping");
  for (const auto& ch : r.channels) v.require(ch.sends == ch.receives, "message balance");
  v.require(r.unwaited_sends == 0, "unwaited sends");
  v.require(r.fine_sweeps <= 1.5 * ref.total_sweeps, "fine sweep overhead");
  v.why << " max difference " << worst << ", fine sweeps " << r.fine_sweeps << " vs serial " << ref.total_sweeps;
}

// Region calls per rank and phase must follow the schedule, and the profile must add up.
void check_trace(const RunResult& r, int fine_sweeps, Verdict& v, double& worst_conservation) {
  const Profile prof = build_profile(r.trace);
  for (const auto& rank : prof.ranks) {
    double excl = 0;
    for (const auto& [name, s] : rank.regions) excl += s.exclusive;
    worst_conservation = std::max(worst_conservation, std::abs(excl + rank.untracked - rank.runtime));
  }
  const int P = r.trace.ranks;
  std::map<std::pair<int, Phase>, int> calls;
  std::map<std::pair<int, int>, int> sends, recvs;
  for (const auto& e : r.trace.events) {
    if (e.kind == EventKind::RegionEnter)
      if (auto id = parse_region_name(e.name)) ++calls[{e.rank, id->phase}];
    if (e.kind == EventKind::SendPost) ++sends[{e.rank, *e.peer}];
    if (e.kind == EventKind::RecvComplete) ++recvs[{*e.peer, e.rank}];
  }
  v.require(sends == recvs, "send/recv count");
  const int blocks = static_cast<int>(r.iterations.size()) / P;
  for (int p = 0; p < P; ++p) {
    int k = 0;
    for (int b = 0; b < blocks; ++b) k += r.iterations[b * P + p];
    bool ok = calls[{p, Phase::ItFine}] == fine_sweeps * k;
    for (Phase ph : {Phase::ItDown, Phase::ItCoarse, Phase::ItUp, Phase::ItCheck}) ok = ok && calls[{p, ph}] == k;
    ok = ok && calls[{p, Phase::Predict}] == blocks * (p + 3);
    v.require(ok, "region counts rank " + std::to_string(p));
  }
}

void criterion7(Verdict& v) {
  double worst = 0;
  for (const auto& r : g_runs) check_trace(r, 3, v, worst);
  v.require(worst <= 1e-9, "conservation");
  v.why << " " << g_runs.size() << " traces, max conservation error " << worst << " s";
}

Trace late_receiver_trace() {
  auto ev = [](int rank, EventKind k, const char* name, double t, bool comm) {
    TraceEvent e;
    e.rank = rank;
    e.kind = k;
    e.name = name;
    e.t = t;
    if (comm) {
      e.peer = 1 - rank;
      e.bytes = 64;
    }
    return e;
  };
  using K = EventKind;
  Trace t;
  t.ranks = 2;
  t.events = {ev(0, K::RegionEnter, "REGION -- IT_FINE -- 0", 0, false),
              ev(1, K::RegionEnter, "REGION -- IT_FINE -- 1", 0, false),
              ev(0, K::RegionExit, "REGION -- IT_FINE -- 0", 2, false),
              ev(0, K::SendPost, "fine.value.1", 2, true),
              ev(1, K::RegionExit, "REGION -- IT_FINE -- 1", 5, false),
              ev(1, K::RecvPost, "fine.value.1", 5, true),
              ev(0, K::SendComplete, "fine.value.1", 5, true),
              ev(1, K::RecvComplete, "fine.value.1", 5, true)};
  return t;
}

void criterion8(Verdict& v) {
  const auto syn = detect_late_receiver(late_receiver_trace());
  v.require(syn.size() == 1 && syn[0].wait_s == 3.0, "synthetic late receiver");

  RunConfig c = allen_cahn(64, 16, 4);
  c.comm = CommOptions::rendezvous();
  const RunResult rv = run(c, ExecutionMode::Parallel);
  c.comm = CommOptions::eager();
  const RunResult eg = run(c, ExecutionMode::Parallel);
  g_runs.push_back(rv);
  g_runs.push_back(eg);
  const auto lr_rv = detect_late_receiver(rv.trace), lr_eg = detect_late_receiver(eg.trace);
  v.why << " rendezvous LR per channel:";
  for (int p = 0; p + 1 < c.workers; ++p) {
    const double w = total_wait(lr_rv, p, p + 1);
    v.why << " " << w;
    v.require(w > 0, "no late receiver on " + std::to_string(p) + "->" + std::to_string(p + 1));
  }
  const double total_rv = total_wait(lr_rv), total_eg = total_wait(lr_eg);
  v.require(total_eg < 0.05 * total_rv, "eager late receiver too large");
  v.why << "; eager total " << total_eg << " vs rendezvous " << total_rv;
}

void criterion9(Verdict& v) {
  const PopReport h = pop_metrics({8.0, 6.0}, 10.0, 9.0);
  v.require(std::abs(h.load_balance - 0.875) <= 1e-12, "LB");
  v.require(std::abs(h.communication_efficiency - 0.8) <= 1e-12, "CommE");
  v.require(std::abs(h.serialisation_efficiency - 8.0 / 9.0) <= 1e-12, "SerE");
  v.require(std::abs(h.transfer_efficiency - 0.9) <= 1e-12, "TE");
  v.require(std::abs(h.parallel_efficiency - 0.7) <= 1e-12, "PE");
  double worst = 0;
  int analysed = 0;
  for (const auto& r : g_runs) {
    if (r.trace.ranks < 2) continue;
    const PopReport p = pop_metrics(r.trace);
    worst = std::max({worst, std::abs(p.parallel_efficiency - p.load_balance * p.communication_efficiency),
                      std::abs(p.communication_efficiency - p.serialisation_efficiency * p.transfer_efficiency)});
    ++analysed;
  }
  v.require(worst <= 1e-12, "identities");
  v.why << " hand case exact, identities on " << analysed << " traces, max violation " << worst;
}

void criterion10(Verdict& v) {
  harness::Config cfg = harness::load_config(fs::path(PITLAB_SOURCE_DIR) / "bench" / "pfasst.cfg");
  const auto specs = harness::expand(cfg.space);
  v.require(specs.size() == 20, "expansion size");
  std::random_device rd;
  const fs::path out = fs::temp_directory_path() / ("pitlab_acceptance_" + std::to_string(rd()));
  cfg.outpath = out;
  cfg.rules["EXE"] = PITLAB_EXE;
  const auto res = harness::run_sweep(cfg);
  int done = 0;
  for (const auto& r : res.runs) done += r.state == harness::RunState::Done && fs::exists(r.sandbox / "ready");
  v.require(done == 20, "runs done");
  const auto& cols = res.table.columns;
  auto col = [&](const std::string& n) { return std::find(cols.begin(), cols.end(), n) - cols.begin(); };
  const auto ti = col("timing_pat"), ni = col("niter_pat"), si = col("space_size");
  v.require(ti < static_cast<long>(cols.size()) && ni < static_cast<long>(cols.size()), "columns");
  bool floats = true, sorted = true;
  for (std::size_t i = 0; i < res.table.rows.size() && floats; ++i) {
    const auto& row = res.table.rows[i];
    try {
      std::stod(row.at(ti));
      std::stod(row.at(ni));
    } catch (...) {
      floats = false;
    }
    if (i > 0 && std::stod(row.at(si)) < std::stod(res.table.rows[i - 1].at(si))) sorted = false;
  }
  v.require(res.table.rows.size() == 20 && floats, "extraction");
  v.require(sorted, "sort order");
  v.require(fs::exists(out / "result.csv"), "result.csv");
  v.why << " " << specs.size() << " specs, " << done << " done, " << res.table.rows.size() << " rows";
  fs::remove_all(out);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    double limit_s;
    std::function<void(Verdict&)> check;
  };
  const std::vector<Criterion> all{
      {1, "quadrature tables", 1, criterion1},
      {2, "collocation order", 5, criterion2},
      {3, "sweep fixed point, both preconditioners", 5, criterion3},
      {4, "serial and parallel controllers agree", 120, criterion4},
      {5, "shrinking circle", 300, criterion5},
      {6, "PFASST matches time-serial SDC", 600, criterion6},
      {7, "trace and profile conservation", 60, criterion7},
      {8, "late receiver detection", 120, criterion8},
      {9, "POP identities", 60, criterion9},
      {10, "benchmark harness", 60, criterion10},
  };
  int failures = 0;
  for (const auto& c : all) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.check(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.why << " exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.limit_s) v.require(false, "took longer than " + std::to_string(int(c.limit_s)) + " s");
    failures += !v.pass;
    std::printf("%s criterion %d: %s (%.2f s)%s\n", v.pass ? "PASS" : "FAIL", c.id, c.title, secs, v.why.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
