#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pitlab::harness {

namespace fs = std::filesystem;

/// A swept parameter. Without `indexed_by` it is crossed with the others;
/// with it, it takes the value at the position of the index parameter's value.
struct Parameter {
  std::string name;
  std::vector<std::string> values;
  std::optional<std::string> indexed_by;
};

struct ParamSpace {
  std::vector<Parameter> parameters;  // document order
};

/// One resolved point of the space.
struct RunSpec {
  std::size_t index = 0;
  std::vector<std::pair<std::string, std::string>> values;  // document order

  const std::string* find(const std::string& name) const;
  const std::string& at(const std::string& name) const;
};

/// Cartesian product over crossed parameters, first parameter outermost.
/// `$name` inside a value is replaced by that parameter's resolved value.
std::vector<RunSpec> expand(const ParamSpace& space);

/// Number of specs expand() yields, without building them.
std::size_t expansion_size(const ParamSpace& space);

/// Replaces every `#NAME#`. Lookup order: explicit rules, then the parameter
/// named by lowercasing NAME. Unresolved names throw SubstitutionError.
std::string substitute(const std::string& text, const RunSpec& spec,
                       const std::map<std::string, std::string>& rules = {});

struct TemplateFile {
  std::string source;
  std::string target;
};

struct Pattern {
  std::string name;
  std::string regex;  // may use $jube_pat_fp, $jube_pat_int, $jube_pat_wrd
};

struct Config {
  std::string name = "benchmark";
  fs::path base_dir;  // files are resolved against this
  fs::path outpath = "bench_run";
  std::string done_file;  // empty: done once the steps succeed
  int pool = 1;
  double done_timeout_s = 30;
  ParamSpace space;
  std::map<std::string, std::string> rules;  // NAME of #NAME# -> value, may hold $refs
  std::vector<TemplateFile> templates;
  std::vector<std::string> files;
  std::vector<std::string> steps;
  std::vector<Pattern> patterns;
  std::string analyse_file = "stdout";
  std::vector<std::string> columns;  // empty: parameters then patterns
  std::string sort_by;
  std::string style = "pretty";
};

/// Section-based text format:
///   [benchmark] name/outpath/done_file/pool/timeout   key = value
///                a relative outpath is taken from the config directory
///   [parameters] name = v1, v2      name[index] = v1, v2
///   [substitute] #NAME# = value     in = source -> target
///                values may use $param and $bench_home (config directory)
///   [files] one path per line
///   [step] one shell command per line
///   [patterns] name = regex
///   [analyse] file = stdout
///   [result] columns = a, b   sort = a   style = pretty|csv
/// Lines starting with ';' are comments.
Config parse_config(std::istream& is, const fs::path& base_dir = ".");
Config load_config(const fs::path& path);

enum class RunState { Pending, Running, Done, Failed };
std::string to_string(RunState state);

struct RunRecord {
  RunSpec spec;
  fs::path sandbox;
  RunState state = RunState::Pending;
  bool reused = false;  // done-file already present, steps skipped
  std::string error;    // stderr tail or reason
};

/// Creates `<outpath>/<index>/` per spec, copies files, writes substituted
/// templates and runs the steps through /bin/sh with stdout/stderr captured
/// to files in the sandbox. A spec whose done-file already exists is not
/// rerun. Up to `config.pool` specs run concurrently.
std::vector<RunRecord> execute(const Config& config, const std::vector<RunSpec>& specs);

/// Standard regex with the macros replaced by capture groups.
std::string expand_pattern_macros(const std::string& pattern);

/// Last match of the pattern's first capture group, if any.
std::optional<std::string> match_last(const std::string& text, const Pattern& pattern);

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> warnings;
};

/// One row per run: parameter columns plus one column per pattern.
Table extract(const Config& config, const std::vector<RunRecord>& runs);

/// Stable sort by a column; numeric when both cells parse as numbers.
void sort_table(Table& table, const std::string& column);

std::string to_csv(const Table& table);
/// Inverse of to_csv (first line is the header).
Table parse_csv(const std::string& text);
std::string to_pretty(const Table& table);

struct SweepResult {
  std::vector<RunRecord> runs;
  Table table;
};

/// expand -> execute -> extract -> sort; writes `<outpath>/result.csv`.
SweepResult run_sweep(const Config& config);

}  // namespace pitlab::harness
