/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/dse.hpp"
#include "pucoord/error.hpp"

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace pucoord::dse {

using nlohmann::json;

PoolSize pool_size(const SystemSpec &spec) {
  PoolSize p;
  for (const auto &pu : spec.pus)
    (pu.type == PuType::X1 ? p.a : p.b) += 1;
  return p;
}

double pu_tops(const PuSpec &pu, const SystemSpec &spec) {
  const double dsp_hz = spec.clocks.sys_clk_hz * spec.clocks.dsp_clk_ratio;
  return static_cast<double>(pu.sa_rows) * pu.sa_cols * 2.0 * dsp_hz / 1e12;
}

std::vector<PoolSize> single_shapes(PoolSize pool) {
  std::vector<PoolSize> out;
  for (int a = 0; a <= pool.a; ++a)
    for (int b = 0; b <= pool.b; ++b)
      if (a + b > 0)
        out.push_back({a, b});
  return out;
}

double round_interval(const std::vector<std::uint64_t> &e) {
  const std::size_t r = e.size();
  if (r == 0)
    return 0;
  if (r == 1)
    return static_cast<double>(e[0]);
  const std::size_t half = r / 2;
  return static_cast<double>(e[r - 1] - e[half - 1]) / static_cast<double>(r - half);
}

double simulated_pbe(const sim::SimReport &report, const std::vector<int> &pids) {
  if (report.rounds == 0)
    return 0;
  std::vector<std::int64_t> stage;
  for (int pid : pids) {
    double busy = 0;
    for (int g = 0; g < 3; ++g) {
      const auto grp = static_cast<isa::Group>(g);
      busy = std::max(busy, report.cycles_by_cause(pid, grp, sim::Cause::Compute) +
                                report.cycles_by_cause(pid, grp, sim::Cause::Hbm) +
                                report.cycles_by_cause(pid, grp, sim::Cause::Control));
    }
    stage.push_back(static_cast<std::int64_t>(busy / static_cast<double>(report.rounds)));
  }
  return compiler::pbe(stage);
}

namespace {

std::vector<int> pick_pids(const SystemSpec &spec, int a, int b, std::set<int> &used) {
  std::vector<int> pids;
  for (const auto &pu : spec.pus) {
    int &want = pu.type == PuType::X1 ? a : b;
    if (want > 0 && !used.count(pu.pid)) {
      pids.push_back(pu.pid);
      used.insert(pu.pid);
      --want;
    }
  }
  if (a > 0 || b > 0)
    throw Error(ErrorKind::Infeasible, "pool too small for the requested configuration");
  return pids;
}

double steady_latency_cycles(const std::vector<std::uint64_t> &lat) {
  if (lat.empty())
    return 0;
  const std::size_t from = lat.size() / 2;
  double sum = 0;
  for (std::size_t r = from; r < lat.size(); ++r)
    sum += static_cast<double>(lat[r]);
  return sum / static_cast<double>(lat.size() - from);
}

template <typename F> void parallel_for(std::size_t n, unsigned threads, F &&f) {
  if (threads == 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++)
      f(i);
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t)
    pool.emplace_back(worker);
  worker();
  for (auto &t : pool)
    t.join();
}

} // namespace

std::vector<SingleBatchConfig> enumerate_single(const graph::NodeDag &dag, const SystemSpec &spec,
                                                const ExploreOptions &options) {
  const auto shapes = single_shapes(pool_size(spec));
  const compiler::Profiles prof = compiler::profile(dag, spec, options.cache);
  std::vector<SingleBatchConfig> out(shapes.size());
  parallel_for(shapes.size(), options.threads, [&](std::size_t i) {
    SingleBatchConfig &c = out[i];
    c.a = shapes[i].a;
    c.b = shapes[i].b;
    std::set<int> used;
    c.pids = pick_pids(spec, c.a, c.b, used);
    for (int pid : c.pids)
      c.tops += pu_tops(spec.pu(pid), spec);
    try {
      compiler::CompileOptions o;
      o.pids = c.pids;
      o.profiles = &prof;
      const auto plan = compiler::compile(dag, spec, o);
      sim::RunOptions ro;
      ro.record_timelines = false;
      const auto rep = compiler::simulate(plan, options.rounds, ro);
      c.feasible = true;
      c.throughput_fps = rep.throughput_rps;
      c.latency_ms = 1e3 * steady_latency_cycles(rep.latency_cycles) / spec.clocks.sys_clk_hz;
      c.occupied = plan.partition.occupied();
      c.makespan = plan.partition.makespan;
      c.pbe_profiled = plan.metrics.pbe;
      c.pbe = simulated_pbe(rep, plan.partition.occupied_pids());
    } catch (const Error &e) {
      c.feasible = false;
      c.error = e.what();
    }
  });
  return out;
}

std::vector<MultiBatchSchedule> compose_multi(const std::vector<SingleBatchConfig> &singles,
                                              PoolSize pool) {
  std::vector<MultiBatchSchedule> out;
  std::vector<std::size_t> cur;
  auto emit = [&]() {
    MultiBatchSchedule s;
    s.members = cur;
    double pbe_sum = 0;
    for (std::size_t m : cur) {
      const auto &c = singles[m];
      s.throughput_fps += c.throughput_fps;
      s.latency_ms = std::max(s.latency_ms, c.latency_ms);
      s.tops += c.tops;
      s.pbe_weighted += c.pbe * c.tops;
      pbe_sum += c.pbe;
    }
    if (s.tops > 0)
      s.pbe_weighted /= s.tops;
    s.pbe_mean = pbe_sum / static_cast<double>(cur.size());
    out.push_back(std::move(s));
  };
  auto rec = [&](auto &self, std::size_t from, int a, int b) -> void {
    for (std::size_t i = from; i < singles.size(); ++i) {
      const auto &c = singles[i];
      if (!c.feasible || c.a > a || c.b > b)
        continue;
      cur.push_back(i);
      emit();
      self(self, i, a - c.a, b - c.b);
      cur.pop_back();
    }
  };
  rec(rec, 0, pool.a, pool.b);
  return out;
}

bool dominates(const MultiBatchSchedule &t, const MultiBatchSchedule &s, double tol) {
  if (t.throughput_fps < s.throughput_fps || t.latency_ms > s.latency_ms)
    return false;
  return t.throughput_fps > s.throughput_fps * (1 + tol) || t.latency_ms < s.latency_ms * (1 - tol);
}

bool satisfies(const MultiBatchSchedule &s, const Constraints &c) {
  if (c.max_latency_ms && s.latency_ms > *c.max_latency_ms)
    return false;
  if (c.min_throughput_fps && s.throughput_fps < *c.min_throughput_fps)
    return false;
  if (c.batch_count && s.batch_count() != *c.batch_count)
    return false;
  return true;
}

std::vector<std::size_t> pareto(const std::vector<MultiBatchSchedule> &schedules, double tol,
                                const Constraints &constraints) {
  std::vector<std::size_t> cand;
  for (std::size_t i = 0; i < schedules.size(); ++i)
    if (satisfies(schedules[i], constraints))
      cand.push_back(i);
  // only schedules with at least the same throughput can dominate
  std::vector<std::size_t> by_thr = cand;
  std::stable_sort(by_thr.begin(), by_thr.end(), [&](std::size_t x, std::size_t y) {
    return schedules[x].throughput_fps > schedules[y].throughput_fps;
  });
  std::vector<std::size_t> out;
  for (std::size_t s : cand) {
    bool dominated = false;
    for (std::size_t t : by_thr) {
      if (schedules[t].throughput_fps < schedules[s].throughput_fps)
        break;
      if (t != s && dominates(schedules[t], schedules[s], tol)) {
        dominated = true;
        break;
      }
    }
    if (!dominated)
      out.push_back(s);
  }
  return out;
}

HybridResult cosimulate(const graph::NodeDag &dag, const SystemSpec &spec,
                        const std::vector<PoolSize> &members, std::uint64_t rounds,
                        compiler::ProfileCache *cache) {
  if (members.empty())
    throw Error(ErrorKind::Usage, "hybrid schedule without members");
  const compiler::Profiles prof = compiler::profile(dag, spec, cache);
  HybridResult res;
  std::set<int> used;
  int total_pus = 0;
  for (const auto &m : members) {
    if (m.a < 0 || m.b < 0 || m.a + m.b == 0)
      throw Error(ErrorKind::Usage, "member (0,0)");
    HybridMember hm;
    hm.a = m.a;
    hm.b = m.b;
    hm.pids = pick_pids(spec, m.a, m.b, used);
    total_pus += m.a + m.b;
    res.members.push_back(std::move(hm));
  }
  // channels proportional to member size, contiguous ranges
  const int nch = spec.hbm.num_channels;
  int next = 0, acc = 0;
  for (auto &hm : res.members) {
    acc += hm.a + hm.b;
    const int end = nch * acc / total_pus;
    for (int c = next; c < end; ++c)
      hm.channels.push_back(c);
    next = end;
  }

  std::vector<sim::PuProgram> all;
  for (auto &hm : res.members) {
    compiler::CompileOptions o;
    o.pids = hm.pids;
    o.channels = hm.channels;
    o.profiles = &prof;
    auto plan = compiler::compile(dag, spec, o);
    for (auto &p : plan.programs)
      all.push_back(std::move(p));
  }
  sim::RunOptions ro;
  ro.rounds = rounds;
  ro.record_timelines = false;
  res.report = sim::run(spec, all, ro);

  for (auto &hm : res.members) {
    const sim::PuRounds *sink = nullptr;
    std::vector<const sim::PuRounds *> mine;
    for (const auto &pr : res.report.pu_rounds)
      if (std::find(hm.pids.begin(), hm.pids.end(), pr.pid) != hm.pids.end()) {
        mine.push_back(&pr);
        if (!pr.end.empty() && (!sink || pr.end.back() >= sink->end.back()))
          sink = &pr;
      }
    if (!sink)
      continue;
    const double iv = round_interval(sink->end);
    hm.throughput_fps = iv > 0 ? spec.clocks.sys_clk_hz / iv : 0;
    std::vector<std::uint64_t> lat;
    for (std::size_t r = 0; r < sink->end.size(); ++r) {
      std::uint64_t lo = UINT64_MAX, hi = 0;
      for (const auto *pr : mine)
        if (r < pr->start.size() && r < pr->end.size()) {
          lo = std::min(lo, pr->start[r]);
          hi = std::max(hi, pr->end[r]);
        }
      lat.push_back(hi - lo);
    }
    hm.latency_ms = 1e3 * steady_latency_cycles(lat) / spec.clocks.sys_clk_hz;
    res.throughput_fps += hm.throughput_fps;
  }
  return res;
}

Exploration explore(const graph::NodeDag &dag, const SystemSpec &spec, const Constraints &c,
                    double tolerance, const ExploreOptions &options) {
  Exploration e;
  e.pool = pool_size(spec);
  e.tolerance = tolerance;
  e.constraints = c;
  e.singles = enumerate_single(dag, spec, options);
  e.schedules = compose_multi(e.singles, e.pool);
  e.frontier = pareto(e.schedules, tolerance, c);
  return e;
}

namespace {

std::string members_label(const Exploration &e, const MultiBatchSchedule &s) {
  std::string out;
  for (std::size_t m : s.members) {
    if (!out.empty())
      out += "+";
    out += "(" + std::to_string(e.singles[m].a) + "," + std::to_string(e.singles[m].b) + ")";
  }
  return out;
}

} // namespace

json to_json(const Exploration &e) {
  json j;
  j["schema_version"] = 1;
  j["pool"] = {{"a", e.pool.a}, {"b", e.pool.b}};
  j["tolerance"] = e.tolerance;
  json cons = json::object();
  if (e.constraints.max_latency_ms)
    cons["max_latency_ms"] = *e.constraints.max_latency_ms;
  if (e.constraints.min_throughput_fps)
    cons["min_throughput_fps"] = *e.constraints.min_throughput_fps;
  if (e.constraints.batch_count)
    cons["batch_count"] = *e.constraints.batch_count;
  j["constraints"] = cons;
  json singles = json::array();
  for (const auto &c : e.singles) {
    json s = {{"a", c.a},   {"b", c.b},       {"pids", c.pids}, {"feasible", c.feasible},
              {"fps", c.throughput_fps}, {"latency_ms", c.latency_ms}, {"tops", c.tops},
              {"pbe", c.pbe}, {"pbe_profiled", c.pbe_profiled}, {"occupied", c.occupied},
              {"makespan_cycles", c.makespan}};
    if (!c.feasible)
      s["error"] = c.error;
    singles.push_back(std::move(s));
  }
  j["singles"] = singles;
  json scheds = json::array();
  for (const auto &s : e.schedules)
    scheds.push_back({{"members", members_label(e, s)},
                      {"batch_count", s.batch_count()},
                      {"fps", s.throughput_fps},
                      {"latency_ms", s.latency_ms},
                      {"tops", s.tops},
                      {"pbe_weighted", s.pbe_weighted},
                      {"pbe_mean", s.pbe_mean}});
  j["schedules"] = scheds;
  j["frontier"] = e.frontier;
  return j;
}

void write_csv(const Exploration &e, std::ostream &out) {
  std::set<std::size_t> front(e.frontier.begin(), e.frontier.end());
  out << "kind,members,batch_count,fps,latency_ms,tops,pbe,frontier\n";
  out << std::setprecision(10);
  for (const auto &c : e.singles)
    if (c.feasible)
      out << "single,(" << c.a << "," << c.b << "),1," << c.throughput_fps << "," << c.latency_ms
          << "," << c.tops << "," << c.pbe << ",0\n";
  for (std::size_t i = 0; i < e.schedules.size(); ++i) {
    const auto &s = e.schedules[i];
    out << "schedule," << members_label(e, s) << "," << s.batch_count() << "," << s.throughput_fps
        << "," << s.latency_ms << "," << s.tops << "," << s.pbe_weighted << ","
        << (front.count(i) ? 1 : 0) << "\n";
  }
}

} // namespace pucoord::dse
