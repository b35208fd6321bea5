#include "pitlab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pitlab/analysis.hpp"
#include "pitlab/controller.hpp"
#include "pitlab/errors.hpp"
#include "pitlab/harness.hpp"
#include "pitlab/trace.hpp"

namespace pitlab::cli {

namespace {

struct RunArgs {
  std::string problem = "dahlquist";
  int steps = 4;
  int workers = 4;
  double dt = 0.1;
  int nodes = 3;
  int fine_sweeps = 3;
  int coarse_sweeps = 1;
  double tol = 1e-8;
  int max_iter = 50;
  double lambda = -1.0;
  double lambda_explicit = 0.0;
  double u0 = 1.0;
  long fine_n = 128;
  long coarse_n = 32;
  int patches = 1;
  double eps = 0.04;
  std::uint64_t seed = 1;
  double radius = 0;  // 0: random radii
  std::string mode = "parallel";
  std::string comm = "default";
  double latency = 0;
  std::vector<std::string> delays;  // RANK:SECONDS
  std::string trace_dir;
  std::string trace_name = "pitlab";
  bool no_trace = false;
  std::string snapshot;
  double watchdog = 120;
};

struct AnalyzeArgs {
  std::string trace;
  bool pop = false;
  bool waits = false;
  bool full = false;
  std::string format = "csv";
  std::string pop_out;
  std::string waits_out;
};

struct SweepArgs {
  std::string config;
  std::string outpath;
  int pool = 0;
};

struct ReportArgs {
  std::string table;
  std::string trace;
  std::string sort;
  std::string style = "pretty";
};

CommOptions comm_options(const RunArgs& a) {
  CommOptions o;
  if (a.comm == "eager")
    o = CommOptions::eager();
  else if (a.comm == "rendezvous")
    o = CommOptions::rendezvous();
  else if (a.comm != "default")
    throw InvalidArgument("--comm must be default, eager or rendezvous");
  o.latency_s = a.latency;
  return o;
}

bool flag_given(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& s) { return s == flag || s.rfind(flag + "=", 0) == 0; });
}

// --trace-dir flag, then PITLAB_TRACE_DIR, then the config file, then cwd.
std::string trace_directory(const RunArgs& a, const std::vector<std::string>& args) {
  if (flag_given(args, "--trace-dir")) return a.trace_dir;
  if (const char* env = std::getenv("PITLAB_TRACE_DIR"); env && *env) return env;
  if (!a.trace_dir.empty()) return a.trace_dir;
  return ".";
}

int do_run(const RunArgs& a, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  cfg.problem.kind = parse_problem_kind(a.problem);
  cfg.problem.lambda_implicit = a.lambda;
  cfg.problem.lambda_explicit = a.lambda_explicit;
  cfg.problem.u0 = a.u0;
  cfg.problem.fine_n = a.fine_n;
  cfg.problem.coarse_n = a.coarse_n;
  cfg.problem.patches = a.patches;
  cfg.problem.eps = a.eps;
  cfg.problem.seed = a.seed;
  if (a.radius > 0) cfg.problem.radius = a.radius;
  cfg.num_steps = a.steps;
  cfg.workers = a.workers;
  cfg.dt = a.dt;
  cfg.num_nodes = a.nodes;
  cfg.fine_sweeps = a.fine_sweeps;
  cfg.coarse_sweeps = a.coarse_sweeps;
  cfg.tolerance = a.tol;
  cfg.max_iterations = a.max_iter;
  cfg.comm = comm_options(a);
  cfg.watchdog_s = a.watchdog;
  for (const auto& d : a.delays) {
    const auto colon = d.find(':');
    if (colon == std::string::npos) throw InvalidArgument("--delay expects RANK:SECONDS, got '" + d + "'");
    try {
      cfg.fine_sweep_delay_s[std::stoi(d.substr(0, colon))] = std::stod(d.substr(colon + 1));
    } catch (const std::logic_error&) {
      throw InvalidArgument("--delay expects RANK:SECONDS, got '" + d + "'");
    }
  }

  const RunResult r = run(cfg, parse_execution_mode(a.mode));
  out << format_summary(r);
  if (!a.no_trace) {
    const std::filesystem::path dir = trace_directory(a, args);
    std::filesystem::create_directories(dir);
    const auto path = dir / (a.trace_name + ".trc.jsonl");
    write_trace(r.trace, path.string());
    err << "trace: " << path.string() << '\n';
  }
  if (!a.snapshot.empty()) {
    if (cfg.problem.kind == ProblemKind::Dahlquist) throw InvalidArgument("--snapshot needs a field problem");
    const Vector& u = r.final_values.back();
    write_snapshot(a.snapshot, Field2D(as_field(u, cfg.problem.fine_n)), static_cast<std::uint32_t>(a.patches));
  }
  return kOk;
}

int do_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const ReportFormat fmt = parse_report_format(a.format);
  const Trace trace = read_trace(a.trace);
  AnalysisOptions opt;
  opt.full_run = a.full;
  const bool pop = a.pop || !a.waits;
  if (pop) {
    const PopReport rep = pop_metrics(trace, opt);
    if (a.pop_out.empty())
      emit_report(rep, out, fmt);
    else
      emit_report(rep, a.pop_out, fmt);
  }
  if (a.waits) {
    auto waits = detect_late_receiver(trace);
    auto ls = detect_late_sender(trace);
    waits.insert(waits.end(), ls.begin(), ls.end());
    if (a.waits_out.empty())
      emit_report(waits, out, fmt);
    else
      emit_report(waits, a.waits_out, fmt);
    const MessageMatching mm = match_messages(trace);
    if (!mm.unmatched_sends.empty() || !mm.unmatched_recvs.empty())
      std::cerr << "unmatched messages: " << mm.unmatched_sends.size() << " sends, " << mm.unmatched_recvs.size()
                << " receives\n";
  }
  return kOk;
}

int do_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  harness::Config cfg = harness::load_config(a.config);
  if (!a.outpath.empty()) cfg.outpath = std::filesystem::absolute(a.outpath);
  if (a.pool > 0) cfg.pool = a.pool;
  const harness::SweepResult r = harness::run_sweep(cfg);
  out << (cfg.style == "csv" ? harness::to_csv(r.table) : harness::to_pretty(r.table));
  for (const auto& w : r.table.warnings) err << "warning: " << w << '\n';
  const auto failed = std::count_if(r.runs.begin(), r.runs.end(),
                                    [](const auto& run) { return run.state != harness::RunState::Done; });
  err << r.runs.size() << " runs, " << failed << " failed; table in " << (cfg.outpath / "result.csv").string()
      << '\n';
  return failed == 0 ? kOk : kFailure;
}

harness::Table profile_table(const Profile& p) {
  harness::Table t;
  t.columns = {"rank", "region", "calls", "inclusive_s", "exclusive_s"};
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& rp : p.ranks) {
    for (const auto& [name, s] : rp.regions)
      t.rows.push_back({std::to_string(rp.rank), name, std::to_string(s.calls), num(s.inclusive), num(s.exclusive)});
    t.rows.push_back({std::to_string(rp.rank), "(communication)", "", num(rp.communication), ""});
    t.rows.push_back({std::to_string(rp.rank), "(untracked)", "", "", num(rp.untracked)});
    t.rows.push_back({std::to_string(rp.rank), "(runtime)", "", num(rp.runtime), ""});
  }
  return t;
}

int do_report(const ReportArgs& a, std::ostream& out) {
  if (a.table.empty() == a.trace.empty()) throw InvalidArgument("report needs exactly one of --table or --trace");
  if (a.style != "pretty" && a.style != "csv") throw InvalidArgument("--style must be pretty or csv");
  harness::Table t;
  if (!a.table.empty()) {
    std::ifstream is(a.table);
    if (!is) throw Error("cannot read " + a.table);
    std::ostringstream ss;
    ss << is.rdbuf();
    t = harness::parse_csv(ss.str());
  } else {
    t = profile_table(build_profile(read_trace(a.trace)));
  }
  if (!a.sort.empty()) harness::sort_table(t, a.sort);
  out << (a.style == "csv" ? harness::to_csv(t) : harness::to_pretty(t));
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"time-parallel integration and performance analysis", "pitlab"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with flag defaults ([run], [analyze] ... sections)");

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "integrate with two-level PFASST and write a trace");
  run_cmd->fallthrough();  // --config belongs to the parent
  run_cmd->add_option("--problem", ra.problem, "dahlquist | allen-cahn | heat")->capture_default_str();
  run_cmd->add_option("--steps", ra.steps, "number of time steps")->capture_default_str();
  run_cmd->add_option("--workers", ra.workers, "time-parallel workers")->capture_default_str();
  run_cmd->add_option("--dt", ra.dt, "step size")->capture_default_str();
  run_cmd->add_option("--nodes", ra.nodes, "collocation nodes per step")->capture_default_str();
  run_cmd->add_option("--fine-sweeps", ra.fine_sweeps)->capture_default_str();
  run_cmd->add_option("--coarse-sweeps", ra.coarse_sweeps)->capture_default_str();
  run_cmd->add_option("--tol", ra.tol, "residual tolerance")->capture_default_str();
  run_cmd->add_option("--max-iter", ra.max_iter)->capture_default_str();
  run_cmd->add_option("--lambda", ra.lambda, "dahlquist implicit rate")->capture_default_str();
  run_cmd->add_option("--lambda-explicit", ra.lambda_explicit)->capture_default_str();
  run_cmd->add_option("--u0", ra.u0, "dahlquist initial value")->capture_default_str();
  run_cmd->add_option("--fine-n", ra.fine_n, "fine grid points per direction")->capture_default_str();
  run_cmd->add_option("--coarse-n", ra.coarse_n, "coarse grid points per direction")->capture_default_str();
  run_cmd->add_option("--patches", ra.patches, "circles per direction")->capture_default_str();
  run_cmd->add_option("--eps", ra.eps, "interface width")->capture_default_str();
  run_cmd->add_option("--seed", ra.seed, "radius RNG seed")->capture_default_str();
  run_cmd->add_option("--radius", ra.radius, "fixed circle radius (0: random)")->capture_default_str();
  run_cmd->add_option("--mode", ra.mode, "parallel | serial")->capture_default_str();
  run_cmd->add_option("--comm", ra.comm, "default | eager | rendezvous")->capture_default_str();
  run_cmd->add_option("--latency", ra.latency, "injected message latency (s)")->capture_default_str();
  run_cmd->add_option("--delay", ra.delays, "slow down fine sweeps, RANK:SECONDS");
  run_cmd->add_option("--trace-dir", ra.trace_dir, "trace directory (else $PITLAB_TRACE_DIR, else .)");
  run_cmd->add_option("--trace-name", ra.trace_name)->capture_default_str();
  run_cmd->add_flag("--no-trace", ra.no_trace, "don't write a trace file");
  run_cmd->add_option("--snapshot", ra.snapshot, "write the final fine field here");
  run_cmd->add_option("--watchdog", ra.watchdog, "deadlock timeout (s)")->capture_default_str();

  AnalyzeArgs aa;
  auto* an_cmd = app.add_subcommand("analyze", "POP metrics and wait states of a trace");
  an_cmd->fallthrough();
  an_cmd->add_option("--trace", aa.trace, "trace file")->required();
  an_cmd->add_flag("--pop", aa.pop, "POP efficiency report (default)");
  an_cmd->add_flag("--waits", aa.waits, "late receiver / late sender report");
  an_cmd->add_flag("--full", aa.full, "analyse the whole run, predictor included");
  an_cmd->add_option("--format", aa.format, "csv | text")->capture_default_str();
  an_cmd->add_option("--pop-out", aa.pop_out, "write the POP report here");
  an_cmd->add_option("--waits-out", aa.waits_out, "write the wait-state report here");

  SweepArgs sa;
  auto* sw_cmd = app.add_subcommand("sweep", "expand and execute a benchmark config");
  sw_cmd->add_option("--config", sa.config, "benchmark config")->required();
  sw_cmd->add_option("--outpath", sa.outpath, "override the sandbox root");
  sw_cmd->add_option("--pool", sa.pool, "concurrent runs");

  ReportArgs pa;
  auto* rp_cmd = app.add_subcommand("report", "render a result table or a trace profile");
  rp_cmd->fallthrough();
  rp_cmd->add_option("--table", pa.table, "CSV table from sweep");
  rp_cmd->add_option("--trace", pa.trace, "trace file (profile per rank and region)");
  rp_cmd->add_option("--sort", pa.sort, "sort column");
  rp_cmd->add_option("--style", pa.style, "pretty | csv")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (*run_cmd) return do_run(ra, args, out, err);
    if (*an_cmd) return do_analyze(aa, out);
    if (*sw_cmd) return do_sweep(sa, out, err);
    if (*rp_cmd) return do_report(pa, out);
  } catch (const Diverged& e) {
    err << "error: " << e.what() << '\n';
    return kNoConvergence;
  } catch (const NotConverged& e) {
    err << "error: " << e.what() << '\n';
    return kNoConvergence;
  } catch (const StructuralError& e) {
    err << "error: " << e.what() << '\n';
    return kBadTrace;
  } catch (const TraceParseError& e) {
    err << "error: " << e.what() << '\n';
    return kBadTrace;
  } catch (const AnalysisError& e) {
    err << "error: " << e.what() << '\n';
    return kBadTrace;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace pitlab::cli
