/*
 * SPDX-License-Identifier: Apache-2.0
 */

// pucoord: compile, simulate, explore, assemble and inspect multi-PU plans.
//
// Exit codes: 0 ok, 2 usage, 3 validation, 4 infeasible, 5 deadlock.

#include "pucoord/compiler.hpp"
#include "pucoord/dse.hpp"
#include "pucoord/error.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace pucoord;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kValidation = 3, kInfeasible = 4, kDeadlock = 5 };

int exit_code(ErrorKind k) {
  switch (k) {
  case ErrorKind::Usage:
    return kUsage;
  case ErrorKind::Infeasible:
  case ErrorKind::ChannelsExhausted:
    return kInfeasible;
  case ErrorKind::DeadlockDetected:
  case ErrorKind::LimitExceeded:
    return kDeadlock;
  default:
    return kValidation;
  }
}

std::string read_text(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path &p, const std::string &s) {
  if (p.has_parent_path())
    fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw Error(ErrorKind::Io, "cannot write " + p.string());
  out << s;
}

SystemSpec load_system(const std::string &path) {
  if (path.empty())
    return default_system();
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error &e) {
    throw Error(ErrorKind::SchemaError, path + ": " + e.what());
  }
  return system_from_json(j);
}

graph::NodeDag load_dag(const std::string &path, const SystemSpec &spec) {
  std::int64_t rows = 0;
  for (const auto &pu : spec.pus)
    rows = rows == 0 ? pu.sa_rows : std::min<std::int64_t>(rows, pu.sa_rows);
  return graph::tile(graph::fuse(graph::ingest_file(path)), rows > 0 ? rows : 64);
}

std::pair<int, int> parse_config(const std::string &s) {
  int a = -1, b = -1;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d,%d%c", &a, &b, &tail) != 2 || a < 0 || b < 0)
    throw Error(ErrorKind::Usage, "--config expects A,B with non-negative integers");
  if (a + b == 0)
    throw Error(ErrorKind::Usage, "--config 0,0 selects no PU");
  return {a, b};
}

std::vector<int> pick_pids(const SystemSpec &spec, int a, int b) {
  std::vector<int> pids;
  for (const auto &pu : spec.pus) {
    int &want = pu.type == PuType::X1 ? a : b;
    if (want > 0) {
      pids.push_back(pu.pid);
      --want;
    }
  }
  if (a > 0 || b > 0)
    throw Error(ErrorKind::Infeasible, "system has too few PUs for the requested configuration");
  return pids;
}

std::string fmt(double v, int prec) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(prec) << v;
  return ss.str();
}

struct CompileArgs {
  std::string model, system, config, out;
  int io_depth = 4;
  int chunk_divisor = 64;
};

int cmd_compile(const CompileArgs &a) {
  const auto spec = load_system(a.system);
  const auto [na, nb] = parse_config(a.config);
  const auto dag = load_dag(a.model, spec);
  compiler::CompileOptions o;
  o.pids = pick_pids(spec, na, nb);
  o.io_depth = a.io_depth;
  o.chunk_divisor = a.chunk_divisor;
  const auto plan = compiler::compile(dag, spec, o);
  compiler::write_plan(plan, a.out);
  compiler::read_plan(a.out); // validates what was written
  std::cout << "plan " << a.out << ": " << plan.partition.occupied() << " stages on "
            << o.pids.size() << " PUs, makespan " << plan.partition.makespan << " cycles, predicted "
            << fmt(plan.metrics.predicted_fps, 1) << " fps, pbe " << fmt(plan.metrics.pbe, 3)
            << ", " << plan.buffers.channels_used << " HBM channels\n";
  return kOk;
}

struct SimulateArgs {
  std::string plan, out;
  std::uint64_t rounds = 8;
  std::uint64_t limit = 1000000000ULL;
};

int cmd_simulate(const SimulateArgs &a) {
  const auto plan = compiler::read_plan(a.plan);
  sim::RunOptions ro;
  ro.rounds = a.rounds;
  ro.limit = a.limit;
  ro.throw_on_deadlock = false;
  const auto rep = sim::run(plan.system, plan.programs, ro);
  const fs::path out = a.out.empty() ? fs::path(a.plan) / "sim" : fs::path(a.out);
  fs::create_directories(out);
  write_text(out / "report.json", sim::to_json(rep).dump(2) + "\n");
  std::ostringstream trace;
  sim::write_trace_csv(rep, trace);
  write_text(out / "trace.csv", trace.str());

  if (rep.deadlock) {
    write_text(out / "deadlock.txt", rep.deadlock->describe() + "\n");
    std::cerr << "deadlock at cycle " << rep.deadlock->cycle << "\n" << rep.deadlock->describe() << "\n";
    return kDeadlock;
  }
  const auto hazards = sim::detect_hazards(rep, plan.regions);
  json hz = json::array();
  for (const auto &h : hazards)
    hz.push_back(h.describe());
  write_text(out / "hazards.json", hz.dump(2) + "\n");

  std::vector<int> pids;
  for (const auto &p : plan.programs)
    pids.push_back(p.pid);
  double lat = 0;
  if (!rep.latency_cycles.empty()) {
    const std::size_t from = rep.latency_cycles.size() / 2;
    for (std::size_t r = from; r < rep.latency_cycles.size(); ++r)
      lat += static_cast<double>(rep.latency_cycles[r]);
    lat /= static_cast<double>(rep.latency_cycles.size() - from);
  }
  std::cout << "rounds " << rep.rounds << ", cycles " << rep.total_cycles << ", interval "
            << fmt(rep.round_interval_cycles, 1) << " cycles, throughput " << fmt(rep.throughput_rps, 1)
            << " fps, latency " << fmt(1e3 * lat / plan.system.clocks.sys_clk_hz, 3) << " ms, pbe "
            << fmt(dse::simulated_pbe(rep, pids), 3) << ", hazards " << hazards.size() << "\n";
  if (!hazards.empty()) {
    std::cerr << hazards.front().describe() << "\n";
    return kValidation;
  }
  return kOk;
}

struct DseArgs {
  std::string model, system, out;
  std::vector<std::string> constraints;
  double tolerance = 0.01;
  std::uint64_t rounds = 8;
  unsigned threads = 0;
};

dse::Constraints parse_constraints(const std::vector<std::string> &items) {
  dse::Constraints c;
  for (const auto &item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Usage, "--constraint expects key=value: " + item);
    const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
    try {
      if (key == "max_latency_ms")
        c.max_latency_ms = std::stod(val);
      else if (key == "min_throughput_fps")
        c.min_throughput_fps = std::stod(val);
      else if (key == "batch_count")
        c.batch_count = static_cast<std::size_t>(std::stoul(val));
      else
        throw Error(ErrorKind::Usage, "unknown constraint " + key);
    } catch (const std::logic_error &) {
      throw Error(ErrorKind::Usage, "bad constraint value: " + item);
    }
  }
  return c;
}

int cmd_dse(const DseArgs &a) {
  const auto spec = load_system(a.system);
  const auto c = parse_constraints(a.constraints);
  const auto dag = load_dag(a.model, spec);
  compiler::ProfileCache cache;
  dse::ExploreOptions o;
  o.rounds = a.rounds;
  o.threads = a.threads;
  o.cache = &cache;
  const auto e = dse::explore(dag, spec, c, a.tolerance, o);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "dse.json", dse::to_json(e).dump(2) + "\n");
  std::ostringstream csv;
  dse::write_csv(e, csv);
  write_text(fs::path(a.out) / "dse.csv", csv.str());

  std::size_t feasible = 0;
  for (const auto &s : e.singles)
    feasible += s.feasible ? 1 : 0;
  std::cout << e.singles.size() << " single-batch configs (" << feasible << " feasible), "
            << e.schedules.size() << " schedules, " << e.frontier.size() << " on the frontier\n";
  const auto j = dse::to_json(e);
  for (auto i : e.frontier) {
    const auto &s = e.schedules[i];
    std::cout << "  " << std::left << std::setw(28) << j["schedules"][i]["members"].get<std::string>()
              << std::right << std::setw(10) << fmt(s.throughput_fps, 1) << " fps" << std::setw(10)
              << fmt(s.latency_ms, 3) << " ms" << std::setw(8) << fmt(s.pbe_weighted, 3) << " pbe\n";
  }
  return kOk;
}

struct AsmArgs {
  std::string input, output, group = "LD";
  int pid = 0;
};

int cmd_asm(const AsmArgs &a) {
  const auto g = isa::group_from_string(a.group);
  if (!g)
    throw Error(ErrorKind::Usage, "unknown group " + a.group);
  if (a.pid < 0 || a.pid > 0xffff)
    throw Error(ErrorKind::Usage, "pid out of range");
  const auto text = read_text(a.input);
  const auto prog = isa::assemble(text, *g);
  if (prog.instructions.empty())
    throw Error(ErrorKind::InvalidProgram, a.input + ": empty program");
  isa::validate(prog);
  const auto bytes = isa::serialize(isa::to_image(prog, static_cast<std::uint16_t>(a.pid)));
  const std::string out = a.output.empty() ? fs::path(a.input).replace_extension(".bin").string() : a.output;
  write_text(out, std::string(bytes.begin(), bytes.end()));
  return kOk;
}

struct DisasmArgs {
  std::string input, output;
};

int cmd_disasm(const DisasmArgs &a) {
  const auto raw = read_text(a.input);
  const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
  const auto img = isa::parse_image(bytes);
  const auto prog = isa::from_image(img);
  const std::string text = "; pu " + std::to_string(img.pu_id) + " " + isa::to_string(img.group) + "\n" +
                           isa::disassemble(prog);
  if (a.output.empty())
    std::cout << text;
  else
    write_text(a.output, text);
  return kOk;
}

struct ReportArgs {
  std::string plan;
};

int cmd_report(const ReportArgs &a) {
  const auto plan = compiler::read_plan(a.plan);
  const auto &m = plan.meta;
  std::cout << "config (" << m["metadata"]["config"][0] << "," << m["metadata"]["config"][1] << "), makespan "
            << m["metadata"]["makespan_cycles"] << " cycles, predicted "
            << fmt(m["metadata"]["predicted_fps"].get<double>(), 1) << " fps, "
            << fmt(m["metadata"]["predicted_latency_ms"].get<double>(), 3) << " ms, pbe "
            << fmt(m["metadata"]["pbe"].get<double>(), 3) << "\n";
  for (const auto &p : plan.programs) {
    std::cout << "  pu " << p.pid;
    for (int g = 0; g < 3; ++g)
      if (p.groups[static_cast<std::size_t>(g)])
        std::cout << " " << isa::to_string(static_cast<isa::Group>(g)) << "="
                  << p.groups[static_cast<std::size_t>(g)]->instructions.size();
    std::cout << " offline_weights=" << p.offline_weight_bytes << "\n";
  }
  const fs::path rep = fs::path(a.plan) / "sim" / "report.json";
  if (fs::exists(rep)) {
    const auto j = json::parse(read_text(rep));
    std::cout << "simulated: " << j.value("rounds", 0) << " rounds, "
              << fmt(j.value("throughput_fps", 0.0), 1) << " fps\n";
  }
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Multi-PU coordination toolchain"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for randomized tie-breaks (the toolchain is deterministic)");

  CompileArgs ca;
  auto *c = app.add_subcommand("compile", "Compile a model IR into a deployment plan directory");
  c->add_option("--model", ca.model, "Model IR JSON")->required()->check(CLI::ExistingFile);
  c->add_option("--system", ca.system, "System spec JSON (default: built-in 5x1 + 5x2 system)")
      ->check(CLI::ExistingFile);
  c->add_option("--config", ca.config, "A,B: number of 1x and 2x PUs")->required();
  c->add_option("--out", ca.out, "Output plan directory")->required();
  c->add_option("--io-depth", ca.io_depth, "Host I/O buffer regions")->check(CLI::Range(1, 256));
  c->add_option("--chunk-divisor", ca.chunk_divisor, "URAM capacity / weight chunk size")
      ->check(CLI::Range(1, 1 << 20));

  SimulateArgs sa;
  auto *s = app.add_subcommand("simulate", "Simulate a plan directory");
  s->add_option("--plan", sa.plan, "Plan directory")->required()->check(CLI::ExistingDirectory);
  s->add_option("--rounds", sa.rounds, "Rounds to simulate");
  s->add_option("--limit", sa.limit, "Cycle limit");
  s->add_option("--out", sa.out, "Report directory (default: PLAN/sim)");

  DseArgs da;
  auto *d = app.add_subcommand("dse", "Explore single- and multi-batch configurations");
  d->add_option("--model", da.model, "Model IR JSON")->required()->check(CLI::ExistingFile);
  d->add_option("--system", da.system, "System spec JSON")->check(CLI::ExistingFile);
  d->add_option("--out", da.out, "Output directory")->required();
  d->add_option("--constraint", da.constraints, "max_latency_ms=X, min_throughput_fps=X or batch_count=N");
  d->add_option("--tolerance", da.tolerance, "Relative Pareto tolerance")->check(CLI::Range(0.0, 1.0));
  d->add_option("--rounds", da.rounds, "Rounds per simulated config")->check(CLI::Range(1, 1 << 20));
  d->add_option("--threads", da.threads, "Worker threads (0: all cores)");

  AsmArgs aa;
  auto *as = app.add_subcommand("asm", "Assemble a text program into a binary image");
  as->add_option("input", aa.input, "Assembly file")->required()->check(CLI::ExistingFile);
  as->add_option("-o,--out", aa.output, "Image file (default: input with .bin)");
  as->add_option("--group", aa.group, "LD, CP or ST");
  as->add_option("--pid", aa.pid, "PU id stored in the image");

  DisasmArgs ia;
  auto *ds = app.add_subcommand("disasm", "Disassemble a binary image to canonical text");
  ds->add_option("input", ia.input, "Image file")->required()->check(CLI::ExistingFile);
  ds->add_option("-o,--out", ia.output, "Text file (default: stdout)");

  ReportArgs ra;
  auto *r = app.add_subcommand("report", "Summarize a plan directory");
  r->add_option("--plan", ra.plan, "Plan directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*c)
      return cmd_compile(ca);
    if (*s)
      return cmd_simulate(sa);
    if (*d)
      return cmd_dse(da);
    if (*as)
      return cmd_asm(aa);
    if (*ds)
      return cmd_disasm(ia);
    if (*r)
      return cmd_report(ra);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const fs::filesystem_error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kUsage;
}
