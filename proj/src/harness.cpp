#include "pitlab/harness.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "pitlab/errors.hpp"

namespace pitlab::harness {

namespace {

std::string trim(std::string s) {
  const char* ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  const auto end = s.find_last_not_of(ws);
  s.erase(end == std::string::npos ? 0 : end + 1);
  return s;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) out.push_back(trim(item));
  if (!text.empty() && text.back() == ',') out.emplace_back();
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

const std::regex& ref_regex() {
  static const std::regex re(R"(\$([A-Za-z_][A-Za-z0-9_]*))");
  return re;
}

// Replaces $name with spec values; unknown names are left for the caller.
std::string resolve_refs(const std::string& value, const RunSpec& spec, std::vector<std::string>* unknown) {
  std::string out;
  auto begin = std::sregex_iterator(value.begin(), value.end(), ref_regex());
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out.append(value, last, static_cast<std::size_t>(m.position(0)) - last);
    if (const std::string* v = spec.find(m[1].str()))
      out += *v;
    else {
      out += m[0].str();
      if (unknown) unknown->push_back(m[1].str());
    }
    last = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  out.append(value, last, std::string::npos);
  return out;
}

}  // namespace

const std::string* RunSpec::find(const std::string& name) const {
  for (const auto& [k, v] : values)
    if (k == name) return &v;
  return nullptr;
}

const std::string& RunSpec::at(const std::string& name) const {
  if (const std::string* v = find(name)) return *v;
  throw ConfigError("run " + std::to_string(index) + ": no parameter '" + name + "'");
}

namespace {

struct Layout {
  std::vector<std::size_t> crossed;                // indices into parameters
  std::vector<std::pair<std::size_t, std::size_t>> indexed;  // (param, index param)
  std::size_t count = 1;
};

Layout layout(const ParamSpace& space) {
  Layout l;
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < space.parameters.size(); ++i) {
    const Parameter& p = space.parameters[i];
    if (p.name.empty()) throw ConfigError("parameter without a name");
    if (!pos.emplace(p.name, i).second) throw ConfigError("parameter '" + p.name + "' defined twice");
    if (p.values.empty()) throw ConfigError("parameter '" + p.name + "' has no values");
  }
  for (std::size_t i = 0; i < space.parameters.size(); ++i) {
    const Parameter& p = space.parameters[i];
    if (!p.indexed_by) {
      l.crossed.push_back(i);
      l.count *= p.values.size();
      continue;
    }
    auto it = pos.find(*p.indexed_by);
    if (it == pos.end()) throw ConfigError("parameter '" + p.name + "' indexed by unknown '" + *p.indexed_by + "'");
    const Parameter& idx = space.parameters[it->second];
    if (idx.indexed_by) throw ConfigError("index parameter '" + idx.name + "' is itself indexed");
    if (idx.values.size() != p.values.size())
      throw ConfigError("parameter '" + p.name + "' has " + std::to_string(p.values.size()) + " values but index '" +
                        idx.name + "' has " + std::to_string(idx.values.size()));
    l.indexed.emplace_back(i, it->second);
  }
  return l;
}

}  // namespace

std::size_t expansion_size(const ParamSpace& space) { return layout(space).count; }

std::vector<RunSpec> expand(const ParamSpace& space) {
  const Layout l = layout(space);
  const auto& ps = space.parameters;
  std::vector<RunSpec> out;
  out.reserve(l.count);
  for (std::size_t n = 0; n < l.count; ++n) {
    std::vector<std::size_t> choice(ps.size(), 0);
    std::size_t rest = n;
    for (auto it = l.crossed.rbegin(); it != l.crossed.rend(); ++it) {
      const std::size_t size = ps[*it].values.size();
      choice[*it] = rest % size;
      rest /= size;
    }
    for (const auto& [p, idx] : l.indexed) choice[p] = choice[idx];
    RunSpec spec;
    spec.index = n;
    for (std::size_t i = 0; i < ps.size(); ++i) spec.values.emplace_back(ps[i].name, ps[i].values[choice[i]]);
    // $refs between parameters; a few passes allow short chains
    for (int pass = 0; pass < 4; ++pass) {
      bool changed = false;
      for (auto& [name, value] : spec.values) {
        std::string next = resolve_refs(value, spec, nullptr);
        if (next != value) {
          value = std::move(next);
          changed = true;
        }
      }
      if (!changed) break;
    }
    for (const auto& [name, value] : spec.values) {
      std::vector<std::string> unknown;
      resolve_refs(value, spec, &unknown);
      if (!unknown.empty()) throw ConfigError("parameter '" + name + "' refers to unknown $" + unknown.front());
    }
    out.push_back(std::move(spec));
  }
  return out;
}

std::string substitute(const std::string& text, const RunSpec& spec, const std::map<std::string, std::string>& rules) {
  static const std::regex re(R"(#([A-Za-z_][A-Za-z0-9_]*)#)");
  std::string out;
  std::vector<std::string> missing;
  std::size_t last = 0;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out.append(text, last, static_cast<std::size_t>(m.position(0)) - last);
    const std::string name = m[1].str();
    if (auto r = rules.find(name); r != rules.end())
      out += r->second;
    else if (const std::string* v = spec.find(lower(name)))
      out += *v;
    else {
      missing.push_back(name);
      out += m[0].str();
    }
    last = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  out.append(text, last, std::string::npos);
  if (!missing.empty()) {
    std::string msg = "unresolved placeholder";
    msg += missing.size() > 1 ? "s:" : ":";
    for (const auto& n : missing) msg += " " + n;
    throw SubstitutionError(msg);
  }
  return out;
}

Config parse_config(std::istream& is, const fs::path& base_dir) {
  static const std::set<std::string> sections{"benchmark", "parameters", "substitute", "files",
                                              "step",      "patterns",   "analyse",    "result"};
  static const std::regex indexed(R"(^([A-Za-z_][A-Za-z0-9_]*)\[([A-Za-z_][A-Za-z0-9_]*)\]$)");
  static const std::regex plain_name(R"(^[A-Za-z_][A-Za-z0-9_]*$)");
  static const std::regex placeholder(R"(^#([A-Za-z_][A-Za-z0-9_]*)#$)");
  Config c;
  c.base_dir = base_dir;
  std::string section, line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ConfigError("config line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      if (!sections.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    if (section.empty()) fail("entry outside a section");
    if (section == "step") {
      c.steps.push_back(t);
      continue;
    }
    if (section == "files") {
      c.files.push_back(t);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    std::smatch m;
    if (section == "benchmark") {
      try {
        if (key == "name") c.name = value;
        else if (key == "outpath") c.outpath = value;
        else if (key == "done_file") c.done_file = value;
        else if (key == "pool") c.pool = std::stoi(value);
        else if (key == "timeout") c.done_timeout_s = std::stod(value);
        else fail("unknown benchmark key '" + key + "'");
      } catch (const std::logic_error&) {
        fail("bad number '" + value + "'");
      }
      if (c.pool < 1) fail("pool must be >= 1");
    } else if (section == "parameters") {
      Parameter p;
      if (std::regex_match(key, m, indexed)) {
        p.name = m[1].str();
        p.indexed_by = m[2].str();
      } else if (std::regex_match(key, plain_name)) {
        p.name = key;
      } else {
        fail("bad parameter name '" + key + "'");
      }
      p.values = split_list(value);
      c.space.parameters.push_back(std::move(p));
    } else if (section == "substitute") {
      if (key == "in") {
        const auto arrow = value.find("->");
        if (arrow == std::string::npos) fail("expected 'in = source -> target'");
        c.templates.push_back({trim(value.substr(0, arrow)), trim(value.substr(arrow + 2))});
      } else if (std::regex_match(key, m, placeholder)) {
        c.rules[m[1].str()] = value;
      } else {
        fail("substitution key must look like #NAME#");
      }
    } else if (section == "patterns") {
      Pattern p{key, value};
      try {
        std::regex check(expand_pattern_macros(value));
      } catch (const std::regex_error& e) {
        fail("pattern '" + key + "': " + e.what());
      }
      c.patterns.push_back(std::move(p));
    } else if (section == "analyse") {
      if (key == "file") c.analyse_file = value;
      else fail("unknown analyse key '" + key + "'");
    } else if (section == "result") {
      if (key == "columns") c.columns = split_list(value);
      else if (key == "sort") c.sort_by = value;
      else if (key == "style") {
        if (value != "pretty" && value != "csv") fail("style must be pretty or csv");
        c.style = value;
      } else fail("unknown result key '" + key + "'");
    }
  }
  layout(c.space);  // validate early
  // sandboxes live next to the config, not wherever the caller happens to be
  if (c.outpath.is_relative()) c.outpath = fs::absolute(c.base_dir / c.outpath).lexically_normal();
  return c;
}

Config load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  return parse_config(is, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::string to_string(RunState state) {
  switch (state) {
    case RunState::Pending: return "pending";
    case RunState::Running: return "running";
    case RunState::Done: return "done";
    case RunState::Failed: return "failed";
  }
  return "?";
}

namespace {

// Runs one command in `dir`; returns the exit status (or 128+signal).
int run_shell(const std::string& command, const fs::path& dir) {
  const std::string out = (dir / "stdout").string();
  const std::string err = (dir / "stderr").string();
  const std::string cwd = dir.string();
  const pid_t pid = fork();
  if (pid < 0) throw Error("fork failed");
  if (pid == 0) {
    if (chdir(cwd.c_str()) != 0) _exit(126);
    const int fo = open(out.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    const int fe = open(err.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fo < 0 || fe < 0) _exit(126);
    dup2(fo, STDOUT_FILENO);
    dup2(fe, STDERR_FILENO);
    close(fo);
    close(fe);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0)
    if (errno != EINTR) throw Error("waitpid failed");
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return 1;
}

std::string tail(const std::string& s, std::size_t n) { return s.size() <= n ? s : s.substr(s.size() - n); }

void run_one(const Config& c, RunRecord& rec, std::mutex& state_mutex) {
  auto set_state = [&](RunState s, std::string error = {}) {
    std::lock_guard lock(state_mutex);
    rec.state = s;
    if (!error.empty()) rec.error = std::move(error);
  };
  try {
    fs::create_directories(rec.sandbox);
    if (!c.done_file.empty() && fs::exists(rec.sandbox / c.done_file)) {
      rec.reused = true;
      set_state(RunState::Done);
      return;
    }
    set_state(RunState::Running);
    // rules may also use $bench_home, the config file's directory
    RunSpec scope = rec.spec;
    scope.values.emplace_back("bench_home", fs::absolute(c.base_dir).lexically_normal().string());
    std::map<std::string, std::string> rules;
    for (const auto& [name, value] : c.rules) {
      std::vector<std::string> unknown;
      rules[name] = resolve_refs(value, scope, &unknown);
      if (!unknown.empty()) throw SubstitutionError("#" + name + "# refers to unknown $" + unknown.front());
    }
    for (const auto& f : c.files) {
      const fs::path src = c.base_dir / f;
      fs::copy_file(src, rec.sandbox / src.filename(), fs::copy_options::overwrite_existing);
    }
    for (const auto& t : c.templates) {
      const std::string text = substitute(read_file(c.base_dir / t.source), rec.spec, rules);
      std::ofstream os(rec.sandbox / t.target, std::ios::binary);
      os << text;
      if (!os) throw Error("cannot write " + (rec.sandbox / t.target).string());
    }
    for (std::size_t i = 0; i < c.steps.size(); ++i) {
      const std::string cmd = substitute(c.steps[i], rec.spec, rules);
      const int status = run_shell(cmd, rec.sandbox);
      if (status != 0) {
        std::string err;
        try {
          err = tail(read_file(rec.sandbox / "stderr"), 2000);
        } catch (const Error&) {
        }
        set_state(RunState::Failed, "step " + std::to_string(i + 1) + " exited with status " + std::to_string(status) +
                                        (err.empty() ? "" : ": " + err));
        return;
      }
    }
    if (!c.done_file.empty()) {
      const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(c.done_timeout_s);
      while (!fs::exists(rec.sandbox / c.done_file)) {
        if (std::chrono::steady_clock::now() > deadline) {
          set_state(RunState::Failed, "done-file '" + c.done_file + "' did not appear");
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
    }
    set_state(RunState::Done);
  } catch (const std::exception& e) {
    set_state(RunState::Failed, e.what());
  }
}

}  // namespace

std::vector<RunRecord> execute(const Config& config, const std::vector<RunSpec>& specs) {
  std::vector<RunRecord> records(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    records[i].spec = specs[i];
    records[i].sandbox = config.outpath / std::to_string(specs[i].index);
  }
  std::mutex state_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) run_one(config, records[i], state_mutex);
  };
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(config.pool, 1)), records.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return records;
}

std::string expand_pattern_macros(const std::string& pattern) {
  static const std::regex macro(R"(\$jube_pat_(fp|int|wrd)\b)");
  std::string out;
  std::size_t last = 0;
  for (auto it = std::sregex_iterator(pattern.begin(), pattern.end(), macro); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out.append(pattern, last, static_cast<std::size_t>(m.position(0)) - last);
    const std::string kind = m[1].str();
    if (kind == "fp")
      out += R"(([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?))";
    else if (kind == "int")
      out += R"(([+-]?\d+))";
    else
      out += R"((\S+))";
    last = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  out.append(pattern, last, std::string::npos);
  return out;
}

std::optional<std::string> match_last(const std::string& text, const Pattern& pattern) {
  std::regex re;
  try {
    re = std::regex(expand_pattern_macros(pattern.regex));
  } catch (const std::regex_error& e) {
    throw ConfigError("pattern '" + pattern.name + "': " + e.what());
  }
  std::optional<std::string> found;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it)
    found = it->size() > 1 ? (*it)[1].str() : (*it)[0].str();
  return found;
}

Table extract(const Config& config, const std::vector<RunRecord>& runs) {
  Table t;
  if (!config.columns.empty()) {
    t.columns = config.columns;
  } else {
    for (const auto& p : config.space.parameters) t.columns.push_back(p.name);
    for (const auto& p : config.patterns) t.columns.push_back(p.name);
  }
  for (const auto& run : runs) {
    std::map<std::string, std::string> cells;
    for (const auto& [k, v] : run.spec.values) cells[k] = v;
    std::string text;
    const fs::path file = run.sandbox / config.analyse_file;
    if (fs::exists(file)) text = read_file(file);
    for (const auto& p : config.patterns) {
      auto v = match_last(text, p);
      if (v) {
        cells[p.name] = *v;
      } else {
        cells[p.name] = "";
        t.warnings.push_back("run " + std::to_string(run.spec.index) + ": pattern '" + p.name + "' not found");
      }
    }
    if (run.state == RunState::Failed)
      t.warnings.push_back("run " + std::to_string(run.spec.index) + " failed: " + run.error);
    std::vector<std::string> row;
    for (const auto& col : t.columns) {
      auto it = cells.find(col);
      if (it == cells.end()) throw ConfigError("result column '" + col + "' is neither a parameter nor a pattern");
      row.push_back(it->second);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace {

std::optional<double> as_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

void sort_table(Table& table, const std::string& column) {
  auto it = std::find(table.columns.begin(), table.columns.end(), column);
  if (it == table.columns.end()) throw ConfigError("cannot sort by unknown column '" + column + "'");
  const auto col = static_cast<std::size_t>(it - table.columns.begin());
  std::stable_sort(table.rows.begin(), table.rows.end(), [col](const auto& a, const auto& b) {
    auto x = as_number(a[col]), y = as_number(b[col]);
    if (x && y) return *x < *y;
    if (x != y) return x.has_value();  // numbers before text and blanks
    return a[col] < b[col];
  });
}

std::string to_csv(const Table& table) {
  auto cell = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  std::ostringstream os;
  for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << cell(table.columns[i]);
  os << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << cell(row[i]);
    os << '\n';
  }
  return os.str();
}

Table parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    any = true;
    if (quoted) {
      if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(cell));
      cell.clear();
    } else if (ch == '\n') {
      row.push_back(std::move(cell));
      cell.clear();
      lines.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  if (quoted) throw ConfigError("csv: unterminated quote");
  if (any) {
    row.push_back(std::move(cell));
    lines.push_back(std::move(row));
  }
  if (lines.empty()) throw ConfigError("csv: no header");
  Table t;
  t.columns = std::move(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].size() != t.columns.size())
      throw ConfigError("csv line " + std::to_string(i + 1) + ": expected " + std::to_string(t.columns.size()) +
                        " cells");
    t.rows.push_back(std::move(lines[i]));
  }
  return t;
}

std::string to_pretty(const Table& table) {
  std::vector<std::size_t> width(table.columns.size());
  for (std::size_t i = 0; i < width.size(); ++i) {
    width[i] = table.columns[i].size();
    for (const auto& row : table.rows) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << " | ";
      os << cells[i] << std::string(width[i] - cells[i].size(), ' ');
    }
    os << '\n';
  };
  line(table.columns);
  for (std::size_t i = 0; i < width.size(); ++i) os << (i ? "-+-" : "") << std::string(width[i], '-');
  os << '\n';
  for (const auto& row : table.rows) line(row);
  return os.str();
}

SweepResult run_sweep(const Config& config) {
  SweepResult r;
  r.runs = execute(config, expand(config.space));
  r.table = extract(config, r.runs);
  if (!config.sort_by.empty()) sort_table(r.table, config.sort_by);
  fs::create_directories(config.outpath);
  std::ofstream os(config.outpath / "result.csv");
  os << to_csv(r.table);
  return r;
}

}  // namespace pitlab::harness
