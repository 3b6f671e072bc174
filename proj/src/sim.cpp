/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/sim.hpp"
#include "pucoord/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

namespace pucoord::sim {

using isa::Group;
using isa::Opcode;

std::int64_t DefaultCostModel::gemm_cycles(std::int64_t macs, const PuSpec &pu,
                                           const SystemSpec &spec) const {
  if (macs <= 0)
    return 1;
  const std::int64_t per_cycle =
      static_cast<std::int64_t>(pu.sa_rows) * pu.sa_cols * spec.clocks.dsp_clk_ratio;
  const std::int64_t ideal = (macs + per_cycle - 1) / per_cycle;
  const double cycles = std::ceil(static_cast<double>(ideal) / spec.efficiency - 1e-9);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(cycles * pu.compute_scale - 1e-9)));
}

std::int64_t gemm_cycles(std::int64_t macs, const PuSpec &pu, const SystemSpec &spec) {
  return DefaultCostModel{}.gemm_cycles(macs, pu, spec);
}

int RoundRobinArbiter::grant(const std::vector<int> &contenders) {
  if (contenders.empty())
    return -1;
  int best = -1;
  for (int c : contenders)
    if (c > last_ && (best < 0 || c < best))
      best = c;
  if (best < 0)
    best = *std::min_element(contenders.begin(), contenders.end());
  last_ = best;
  return best;
}

std::vector<int> arbitrate(const std::vector<std::vector<int>> &contenders_per_cycle) {
  RoundRobinArbiter arb;
  std::vector<int> grants;
  for (const auto &c : contenders_per_cycle)
    grants.push_back(arb.grant(c));
  return grants;
}

const char *to_string(Cause c) {
  switch (c) {
  case Cause::WaitReq: return "wait_req";
  case Cause::WaitAck: return "wait_ack";
  case Cause::Queue: return "queue";
  case Cause::Weights: return "weights";
  case Cause::Hbm: return "hbm";
  case Cause::Compute: return "compute";
  case Cause::Control: return "control";
  }
  return "?";
}

std::string Deadlock::describe() const {
  std::ostringstream os;
  os << "deadlock at cycle " << cycle << ":";
  for (const auto &b : blocked)
    os << " [pu" << b.pid << "." << isa::to_string(b.group) << " @" << b.ip << " "
       << b.instruction << " (" << to_string(b.cause) << ")]";
  return os.str();
}

double SimReport::cycles_by_cause(int pid, isa::Group g, Cause c) const {
  for (const auto &t : timelines)
    if (t.pid == pid && t.group == g)
      return static_cast<double>(t.cycles_by_cause[static_cast<std::size_t>(c)]);
  return 0;
}

namespace {

constexpr int kQueueDepth = 2;
constexpr std::uint32_t kLutramMax = 0xffff;

struct Queue {
  int occupied = 0; // reserved or filled slots
  int filled = 0;
};

struct Transfer {
  int group = -1; // owning group runtime, -1 for weight prefetch
  int pu = -1;
  std::uint64_t target = 0;
  std::int64_t bytes = 0;
  double remaining = 0;
  std::size_t access = SIZE_MAX;
};

struct Channel {
  std::vector<int> active;
  std::uint64_t last = 0;
  std::uint64_t version = 0;
};

struct PendingToken {
  std::uint64_t ready = 0;
  int src = 0;
  std::size_t token = 0;
};

struct PuRt {
  const PuSpec *spec = nullptr;
  Queue main, res, out;
  std::int64_t offline = 0;
  std::int64_t dyn = 0;
  std::int64_t peak = 0;
  bool active = false;
  std::uint64_t gemms_issued = 0;
  std::uint32_t lead = 0;
  std::map<std::uint64_t, int> pending_weights;
  std::multimap<std::uint64_t, std::int64_t> held;
  std::map<std::tuple<int, std::uint32_t, int>, std::uint32_t> lutram;
  std::deque<PendingToken> port;
  RoundRobinArbiter arbiter;
  std::uint64_t last_delivery = UINT64_MAX;
};

struct GroupRt {
  const isa::Program *prog = nullptr;
  int pid = 0;
  std::size_t pu = 0;
  Group group = Group::LD;
  std::uint32_t ip = 0;
  std::uint64_t round = 0, total = 0;
  bool done = false;
  bool busy = false;
  Cause busy_cause = Cause::Control;
  std::uint64_t busy_start = 0;
  bool blocked = false;
  Cause block_cause = Cause::Control;
  std::uint64_t block_start = 0;
  std::uint64_t cur_gemm = 0;
  std::uint64_t done_at = 0;
  std::vector<isa::AddrCycState> ac;
  std::vector<isa::SyncState> sync;
  std::vector<std::uint64_t> cur_ba;
  std::vector<std::uint64_t> starts, ends;
  GroupTimeline *timeline = nullptr;
};

enum class EvType { Finish, Channel, Port };

struct Event {
  std::uint64_t t;
  std::uint64_t seq;
  EvType type;
  int a;
  std::uint64_t b;
  bool operator>(const Event &o) const { return std::tie(t, seq) > std::tie(o.t, o.seq); }
};

class Engine {
public:
  Engine(const SystemSpec &spec, const std::vector<PuProgram> &programs, const RunOptions &opt)
      : spec_(spec), opt_(opt) {
    cost_ = opt.cost_model ? opt.cost_model : std::make_shared<DefaultCostModel>();
    channels_.resize(static_cast<std::size_t>(spec.hbm.num_channels));
    pus_.resize(spec.pus.size());
    for (std::size_t i = 0; i < spec.pus.size(); ++i)
      pus_[i].spec = &spec.pus[i];
    std::set<int> seen;
    for (const auto &p : programs) {
      const auto pi = spec.index_of(p.pid);
      if (!seen.insert(p.pid).second)
        throw Error(ErrorKind::InvalidProgram, "duplicate programs for pu" + std::to_string(p.pid));
      pus_[pi].offline = p.offline_weight_bytes;
      pus_[pi].peak = p.offline_weight_bytes;
      pus_[pi].active = true;
      for (int g = 0; g < 3; ++g) {
        if (!p.groups[static_cast<std::size_t>(g)])
          continue;
        const auto &prog = *p.groups[static_cast<std::size_t>(g)];
        check_program(prog, static_cast<Group>(g), p.pid);
        GroupRt rt;
        rt.prog = &prog;
        rt.pid = p.pid;
        rt.pu = pi;
        rt.group = static_cast<Group>(g);
        const auto &ctl = prog.instructions.front().as<isa::ProgCtrl>();
        rt.total = ctl.num_rounds > 0 ? std::min<std::uint64_t>(opt.rounds, ctl.num_rounds)
                                      : opt.rounds;
        const auto n = prog.instructions.size();
        rt.ac.resize(n);
        rt.sync.resize(n);
        rt.cur_ba.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
          const auto &ins = prog.instructions[k];
          if (ins.is<isa::DataMove>())
            rt.cur_ba[k] = ins.as<isa::DataMove>().cur_base_addr;
          if (ins.is<isa::AddrCyc>())
            rt.ac[k] = {ins.as<isa::AddrCyc>().iter_counter,
                        prog.instructions[k - 1].as<isa::DataMove>().cur_base_addr};
          if (ins.is<isa::Sync>())
            rt.sync[k] = {ins.as<isa::Sync>().bid, ins.as<isa::Sync>().iter_counter};
        }
        groups_.push_back(std::move(rt));
      }
    }
    std::sort(groups_.begin(), groups_.end(), [](const GroupRt &a, const GroupRt &b) {
      return std::tie(a.pid, a.group) < std::tie(b.pid, b.group);
    });
    report_.timelines.resize(groups_.size());
    for (std::size_t i = 0; i < groups_.size(); ++i) {
      report_.timelines[i].pid = groups_[i].pid;
      report_.timelines[i].group = groups_[i].group;
      groups_[i].timeline = &report_.timelines[i];
    }
  }

  SimReport run() {
    report_.rounds = opt_.rounds;
    report_.sys_clk_hz = spec_.clocks.sys_clk_hz;
    for (auto &g : groups_) {
      g.done = g.total == 0;
      if (!g.done)
        arrive(g, 0);
    }
    settle();
    while (!events_.empty()) {
      Event ev = events_.top();
      events_.pop();
      if (ev.t > opt_.limit)
        throw Error(ErrorKind::LimitExceeded,
                    "cycle limit " + std::to_string(opt_.limit) + " exceeded");
      now_ = ev.t;
      switch (ev.type) {
      case EvType::Finish: finish(groups_[static_cast<std::size_t>(ev.a)]); break;
      case EvType::Channel: channel_check(ev.a, ev.b); break;
      case EvType::Port: port_deliver(static_cast<std::size_t>(ev.a)); break;
      }
      settle();
    }
    std::uint64_t end = 0;
    bool all_done = true;
    for (const auto &g : groups_) {
      all_done = all_done && g.done;
      end = std::max(end, g.done_at);
    }
    if (!all_done) {
      Deadlock d;
      d.cycle = now_;
      for (const auto &g : groups_) {
        if (g.done)
          continue;
        BlockedInstruction b;
        b.pid = g.pid;
        b.group = g.group;
        b.ip = g.ip;
        b.instruction = isa::disassemble(g.prog->instructions[g.ip]);
        b.cause = g.block_cause;
        d.blocked.push_back(b);
      }
      if (opt_.throw_on_deadlock)
        throw Error(ErrorKind::DeadlockDetected, d.describe());
      report_.deadlock = d;
      end = now_;
    }
    report_.total_cycles = end;
    summarize();
    return std::move(report_);
  }

private:
  void check_program(const isa::Program &prog, Group g, int pid) {
    if (prog.group != g)
      throw Error(ErrorKind::InvalidProgram, "program group mismatch on pu" + std::to_string(pid));
    isa::validate(prog);
    for (const auto &ins : prog.instructions)
      if (ins.is<isa::Sync>() && !spec_.has(static_cast<int>(ins.as<isa::Sync>().peer_pid)))
        throw Error(ErrorKind::UnknownPid, "pu" + std::to_string(pid) + " references pid " +
                                               std::to_string(ins.as<isa::Sync>().peer_pid));
  }

  void push(std::uint64_t t, EvType type, int a, std::uint64_t b = 0) {
    events_.push(Event{t, seq_++, type, a, b});
  }

  void arrive(GroupRt &g, std::uint32_t ip) {
    g.ip = ip;
    if (ip == g.prog->base_addr() && g.starts.size() == g.round)
      g.starts.push_back(now_);
  }

  void record(GroupRt &g, std::uint64_t start, bool busy, Cause c) {
    if (now_ <= start && !busy)
      return;
    g.timeline->cycles_by_cause[static_cast<std::size_t>(c)] += now_ - start;
    if (opt_.record_timelines)
      g.timeline->intervals.push_back(Interval{start, now_, busy, c, g.ip});
  }

  void settle() {
    bool progress = true;
    while (progress) {
      progress = false;
      for (std::size_t i = 0; i < groups_.size(); ++i)
        progress = try_start(i) || progress;
    }
  }

  bool block(GroupRt &g, Cause c) {
    if (!g.blocked) {
      g.blocked = true;
      g.block_start = now_;
    }
    g.block_cause = c;
    return false;
  }

  bool try_start(std::size_t gi) {
    GroupRt &g = groups_[gi];
    if (g.done || g.busy)
      return false;
    const auto &ins = g.prog->instructions[g.ip];
    PuRt &pu = pus_[g.pu];
    const Opcode op = isa::opcode_of(ins);

    // admission checks
    switch (op) {
    case Opcode::WaitReq:
    case Opcode::WaitAck: {
      const auto &s = ins.as<isa::Sync>();
      const int kind = op == Opcode::WaitReq ? 0 : 1;
      auto it = pu.lutram.find({kind, g.sync[g.ip].bid, static_cast<int>(s.peer_pid)});
      if (it == pu.lutram.end() || it->second == 0)
        return block(g, op == Opcode::WaitReq ? Cause::WaitReq : Cause::WaitAck);
      break;
    }
    case Opcode::Im2colAdm:
    case Opcode::StrideAdm:
    case Opcode::LinearAdm:
      if (g.group == Group::LD) {
        Queue &q = op == Opcode::LinearAdm ? pu.res : pu.main;
        if (q.occupied >= kQueueDepth)
          return block(g, Cause::Queue);
      } else if (pu.out.filled == 0) {
        return block(g, Cause::Queue);
      }
      break;
    case Opcode::ResAddAdm:
    case Opcode::ResAddStrideAdm:
      if (pu.res.filled == 0)
        return block(g, Cause::Queue);
      break;
    case Opcode::WeightsAdm: {
      const auto len = static_cast<std::int64_t>(ins.as<isa::DataMove>().length);
      if (pu.offline + pu.dyn + len > pu.spec->uram_capacity_bytes)
        return block(g, Cause::Weights);
      break;
    }
    case Opcode::Gemm:
      if (pu.main.filled == 0 || pu.out.occupied >= kQueueDepth)
        return block(g, Cause::Queue);
      if (!pu.pending_weights.empty() && pu.pending_weights.begin()->first <= pu.gemms_issued)
        return block(g, Cause::Weights);
      break;
    default: break;
    }

    if (g.blocked) {
      record(g, g.block_start, false, g.block_cause);
      g.blocked = false;
    }
    g.busy = true;
    g.busy_start = now_;
    g.busy_cause = Cause::Control;
    const auto gidx = static_cast<int>(gi);
    std::uint64_t duration = 1;

    switch (op) {
    case Opcode::UramPrm: pu.lead = ins.as<isa::Config>().params[1]; break;
    case Opcode::CycleAddr: {
      g.ac[g.ip] = isa::addr_cyc_update(g.ac[g.ip], ins.as<isa::AddrCyc>());
      g.cur_ba[g.ip - 1] = g.ac[g.ip].cur_base_addr;
      break;
    }
    case Opcode::SendReq:
    case Opcode::SendAck: {
      const auto &s = ins.as<isa::Sync>();
      send(op == Opcode::SendReq ? TokenKind::Req : TokenKind::Ack, g.sync[g.ip].bid, g.pid,
           static_cast<int>(s.peer_pid));
      g.sync[g.ip] = isa::sync_update(g.sync[g.ip], s);
      break;
    }
    case Opcode::WaitReq:
    case Opcode::WaitAck: {
      const auto &s = ins.as<isa::Sync>();
      const int kind = op == Opcode::WaitReq ? 0 : 1;
      --pu.lutram[{kind, g.sync[g.ip].bid, static_cast<int>(s.peer_pid)}];
      ++report_.waits_completed;
      g.sync[g.ip] = isa::sync_update(g.sync[g.ip], s);
      break;
    }
    case Opcode::Im2colAdm:
    case Opcode::StrideAdm:
    case Opcode::LinearAdm: {
      const auto len = ins.as<isa::DataMove>().length;
      const bool write = g.group == Group::ST;
      if (!write)
        ++(op == Opcode::LinearAdm ? pu.res : pu.main).occupied;
      else
        --pu.out.filled;
      g.busy_cause = Cause::Hbm;
      if (len > 0) {
        start_transfer(gidx, g.cur_ba[g.ip], len, write, true);
        return true;
      }
      break;
    }
    case Opcode::WeightsAdm: {
      const auto len = ins.as<isa::DataMove>().length;
      const std::uint64_t target = pu.gemms_issued + pu.lead;
      pu.dyn += len;
      pu.peak = std::max(pu.peak, pu.offline + pu.dyn);
      pu.held.emplace(target, static_cast<std::int64_t>(len));
      if (len > 0) {
        ++pu.pending_weights[target];
        const int t = start_transfer(-1, g.cur_ba[g.ip], len, false, false);
        transfers_[static_cast<std::size_t>(t)].pu = static_cast<int>(g.pu);
        transfers_[static_cast<std::size_t>(t)].target = target;
      }
      break;
    }
    case Opcode::ResAddAdm:
    case Opcode::ResAddStrideAdm: {
      --pu.res.filled;
      g.busy_cause = Cause::Compute;
      duration = std::max<std::uint64_t>(1, (ins.as<isa::DataMove>().length + 63) / 64);
      break;
    }
    case Opcode::Gemm: {
      const auto &c = ins.as<isa::Compute>();
      --pu.main.filled;
      ++pu.out.occupied;
      g.cur_gemm = pu.gemms_issued++;
      g.busy_cause = Cause::Compute;
      const std::int64_t macs = static_cast<std::int64_t>(c.m) * c.k * c.n * std::max(1u, c.rounds);
      duration = static_cast<std::uint64_t>(cost_->gemm_cycles(macs, *pu.spec, spec_));
      break;
    }
    default: break;
    }
    push(now_ + duration, EvType::Finish, gidx);
    return true;
  }

  void finish(GroupRt &g) {
    record(g, g.busy_start, true, g.busy_cause);
    g.busy = false;
    PuRt &pu = pus_[g.pu];
    const auto &ins = g.prog->instructions[g.ip];
    switch (isa::opcode_of(ins)) {
    case Opcode::Im2colAdm:
    case Opcode::StrideAdm:
    case Opcode::LinearAdm:
      if (g.group == Group::LD)
        ++(isa::opcode_of(ins) == Opcode::LinearAdm ? pu.res : pu.main).filled;
      else
        --pu.out.occupied;
      break;
    case Opcode::ResAddAdm:
    case Opcode::ResAddStrideAdm: --pu.res.occupied; break;
    case Opcode::Gemm: {
      --pu.main.occupied;
      ++pu.out.filled;
      auto range = pu.held.equal_range(g.cur_gemm);
      for (auto it = range.first; it != range.second; ++it)
        pu.dyn -= it->second;
      pu.held.erase(range.first, range.second);
      break;
    }
    default: break;
    }
    if (ins.prg_end) {
      g.ends.push_back(now_);
      ++g.round;
      if (g.round >= g.total) {
        g.done = true;
        g.done_at = now_;
        return;
      }
      arrive(g, g.prog->base_addr());
    } else {
      arrive(g, g.ip + 1);
    }
  }

  void send(TokenKind kind, std::uint32_t bid, int src, int dst) {
    TokenEvent t;
    t.kind = kind;
    t.bid = bid;
    t.src = src;
    t.dst = dst;
    t.sent = now_;
    report_.tokens.push_back(t);
    const auto di = spec_.index_of(dst);
    const std::uint64_t ready = now_ + static_cast<std::uint64_t>(route_latency(src, dst, spec_));
    pus_[di].port.push_back(PendingToken{ready, src, report_.tokens.size() - 1});
    push(ready, EvType::Port, static_cast<int>(di));
  }

  void port_deliver(std::size_t pi) {
    PuRt &pu = pus_[pi];
    if (pu.last_delivery == now_) {
      push(now_ + 1, EvType::Port, static_cast<int>(pi));
      return;
    }
    std::vector<int> contenders;
    for (const auto &p : pu.port)
      if (p.ready <= now_ && std::find(contenders.begin(), contenders.end(), p.src) == contenders.end())
        contenders.push_back(p.src);
    if (contenders.empty())
      return;
    const int src = pu.arbiter.grant(contenders);
    auto it = std::find_if(pu.port.begin(), pu.port.end(),
                           [&](const PendingToken &p) { return p.src == src && p.ready <= now_; });
    auto &tok = report_.tokens[it->token];
    tok.delivered = now_;
    auto &counter = pu.lutram[{tok.kind == TokenKind::Req ? 0 : 1, tok.bid, tok.src}];
    counter = std::min(counter + 1, kLutramMax);
    pu.port.erase(it);
    pu.last_delivery = now_;
    for (const auto &p : pu.port)
      if (p.ready <= now_) {
        push(now_ + 1, EvType::Port, static_cast<int>(pi));
        break;
      }
  }

  int start_transfer(int group, std::uint64_t addr, std::uint64_t len, bool write, bool access) {
    Transfer t;
    t.group = group;
    t.bytes = static_cast<std::int64_t>(len);
    t.remaining = static_cast<double>(len);
    report_.hbm_bytes += len;
    if (access) {
      const auto &g = groups_[static_cast<std::size_t>(group)];
      Access a;
      a.pid = g.pid;
      a.group = g.group;
      a.write = write;
      a.addr = addr;
      a.len = len;
      a.start = now_;
      a.round = g.round;
      report_.accesses.push_back(a);
      t.access = report_.accesses.size() - 1;
    }
    transfers_.push_back(t);
    const int id = static_cast<int>(transfers_.size() - 1);
    const int ch = spec_.hbm.channel_of(addr);
    advance(ch);
    channels_[static_cast<std::size_t>(ch)].active.push_back(id);
    reschedule(ch);
    return id;
  }

  double rate(const Channel &c) const {
    return spec_.hbm.bytes_per_cycle_per_channel / static_cast<double>(std::max<std::size_t>(1, c.active.size()));
  }

  void advance(int ch) {
    Channel &c = channels_[static_cast<std::size_t>(ch)];
    const double r = rate(c);
    const double dt = static_cast<double>(now_ - c.last);
    for (int id : c.active)
      transfers_[static_cast<std::size_t>(id)].remaining -= dt * r;
    c.last = now_;
  }

  void reschedule(int ch) {
    Channel &c = channels_[static_cast<std::size_t>(ch)];
    ++c.version;
    if (c.active.empty())
      return;
    double least = -1;
    for (int id : c.active) {
      const double rem = transfers_[static_cast<std::size_t>(id)].remaining;
      if (least < 0 || rem < least)
        least = rem;
    }
    const double dt = std::ceil(std::max(0.0, least) / rate(c) - 1e-9);
    push(now_ + std::max<std::uint64_t>(1, static_cast<std::uint64_t>(dt)), EvType::Channel, ch,
         c.version);
  }

  void channel_check(int ch, std::uint64_t version) {
    Channel &c = channels_[static_cast<std::size_t>(ch)];
    if (version != c.version)
      return;
    advance(ch);
    std::vector<int> finished, remaining;
    for (int id : c.active)
      (transfers_[static_cast<std::size_t>(id)].remaining < 0.5 ? finished : remaining).push_back(id);
    c.active = remaining;
    reschedule(ch);
    for (int id : finished) {
      Transfer &t = transfers_[static_cast<std::size_t>(id)];
      if (t.access != SIZE_MAX)
        report_.accesses[t.access].end = now_;
      if (t.group >= 0) {
        finish(groups_[static_cast<std::size_t>(t.group)]);
      } else {
        PuRt &pu = pus_[static_cast<std::size_t>(t.pu)];
        if (--pu.pending_weights[t.target] == 0)
          pu.pending_weights.erase(t.target);
      }
    }
  }

  void summarize() {
    std::map<int, std::array<const GroupRt *, 3>> by_pu;
    for (const auto &g : groups_)
      by_pu[g.pid][static_cast<std::size_t>(g.group)] = &g;
    std::uint64_t latest = 0;
    for (const auto &[pid, gs] : by_pu) {
      PuRounds pr;
      pr.pid = pid;
      for (int k = 0; k < 3; ++k)
        if (gs[static_cast<std::size_t>(k)]) {
          pr.start = gs[static_cast<std::size_t>(k)]->starts;
          break;
        }
      for (int k = 2; k >= 0; --k)
        if (gs[static_cast<std::size_t>(k)]) {
          pr.end = gs[static_cast<std::size_t>(k)]->ends;
          break;
        }
      if (!pr.end.empty() && (report_.sink_pid < 0 || pr.end.back() >= latest)) {
        latest = pr.end.back();
        report_.sink_pid = pid;
      }
      report_.pu_rounds.push_back(std::move(pr));
    }
    for (const auto &pu : pus_)
      if (pu.active)
        report_.uram_peak_bytes[pu.spec->pid] = pu.peak;
    if (opt_.sink_pid >= 0)
      report_.sink_pid = opt_.sink_pid;
    const PuRounds *sink = nullptr;
    for (const auto &pr : report_.pu_rounds)
      if (pr.pid == report_.sink_pid)
        sink = &pr;
    if (sink && !sink->end.empty()) {
      const auto &e = sink->end;
      const std::size_t r = e.size();
      if (r == 1) {
        report_.round_interval_cycles = static_cast<double>(e[0]);
      } else {
        const std::size_t half = r / 2; // intervals e[half..r-1]
        report_.round_interval_cycles =
            static_cast<double>(e[r - 1] - e[half - 1]) / static_cast<double>(r - half);
      }
      if (report_.round_interval_cycles > 0)
        report_.throughput_rps = spec_.clocks.sys_clk_hz / report_.round_interval_cycles;
    }
    std::size_t rounds = SIZE_MAX;
    for (const auto &pr : report_.pu_rounds)
      rounds = std::min({rounds, pr.start.size(), pr.end.size()});
    if (rounds == SIZE_MAX)
      rounds = 0;
    for (std::size_t r = 0; r < rounds; ++r) {
      std::uint64_t lo = UINT64_MAX, hi = 0;
      for (const auto &pr : report_.pu_rounds) {
        lo = std::min(lo, pr.start[r]);
        hi = std::max(hi, pr.end[r]);
      }
      report_.latency_cycles.push_back(hi - lo);
    }
  }

  const SystemSpec &spec_;
  const RunOptions &opt_;
  std::shared_ptr<const CostModel> cost_;
  std::vector<PuRt> pus_;
  std::vector<GroupRt> groups_;
  std::vector<Channel> channels_;
  std::vector<Transfer> transfers_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::uint64_t seq_ = 0;
  std::uint64_t now_ = 0;
  SimReport report_;
};

} // namespace

SimReport run(const SystemSpec &spec, const std::vector<PuProgram> &programs,
              const RunOptions &options) {
  spec.validate();
  Engine engine(spec, programs, options);
  return engine.run();
}

std::string Hazard::describe() const {
  std::ostringstream os;
  os << (kind == HazardKind::RAW ? "RAW" : "WAR") << " on " << region << " round " << round
     << ": pu" << first.pid << "." << isa::to_string(first.group) << (first.write ? " write" : " read")
     << " [" << first.start << "," << first.end << ") vs pu" << second.pid << "."
     << isa::to_string(second.group) << (second.write ? " write" : " read") << " [" << second.start
     << "," << second.end << ")";
  return os.str();
}

std::vector<Hazard> detect_hazards(const SimReport &report, const std::vector<Region> &regions) {
  std::vector<Hazard> out;
  for (const auto &reg : regions) {
    std::map<std::uint64_t, std::vector<const Access *>> writes, reads;
    for (const auto &a : report.accesses) {
      if (a.len == 0 || a.addr >= reg.addr + reg.len || reg.addr >= a.addr + a.len)
        continue;
      (a.write ? writes : reads)[a.round].push_back(&a);
    }
    std::set<std::pair<int, std::uint64_t>> seen;
    auto add = [&](HazardKind k, std::uint64_t round, const Access &x, const Access &y) {
      if (!seen.insert({static_cast<int>(k), round}).second)
        return;
      out.push_back(Hazard{k, reg.name, round, x, y});
    };
    for (const auto &[round, rs] : reads) {
      auto w = writes.find(round);
      for (const Access *rd : rs) {
        if (w == writes.end()) {
          add(HazardKind::RAW, round, *rd, *rd);
          continue;
        }
        for (const Access *wr : w->second)
          if (wr->end > rd->start)
            add(HazardKind::RAW, round, *wr, *rd);
      }
      auto next = writes.upper_bound(round);
      if (next == writes.end())
        continue;
      for (const Access *rd : rs)
        for (const Access *wr : next->second)
          if (wr->start < rd->end)
            add(HazardKind::WAR, round, *rd, *wr);
    }
  }
  return out;
}

nlohmann::json to_json(const SimReport &r, bool detail) {
  using nlohmann::json;
  json j;
  j["schema_version"] = 1;
  j["rounds"] = r.rounds;
  j["total_cycles"] = r.total_cycles;
  j["sink_pid"] = r.sink_pid;
  j["round_interval_cycles"] = r.round_interval_cycles;
  j["throughput_fps"] = r.throughput_rps;
  j["latency_cycles"] = r.latency_cycles;
  j["waits_completed"] = r.waits_completed;
  j["tokens_sent"] = r.tokens.size();
  j["hbm_bytes"] = r.hbm_bytes;
  json pus = json::array();
  for (const auto &pr : r.pu_rounds)
    pus.push_back({{"pid", pr.pid}, {"round_start", pr.start}, {"round_end", pr.end}});
  j["pus"] = pus;
  json groups = json::array();
  for (const auto &t : r.timelines) {
    json causes = json::object();
    for (int c = 0; c < 7; ++c)
      causes[to_string(static_cast<Cause>(c))] = t.cycles_by_cause[static_cast<std::size_t>(c)];
    json g = {{"pid", t.pid}, {"group", isa::to_string(t.group)}, {"cycles", causes}};
    if (detail) {
      json iv = json::array();
      for (const auto &i : t.intervals)
        iv.push_back({i.start, i.end, i.busy ? "busy" : "wait", to_string(i.cause), i.ip});
      g["intervals"] = iv;
    }
    groups.push_back(g);
  }
  j["groups"] = groups;
  if (detail) {
    json toks = json::array();
    for (const auto &t : r.tokens)
      toks.push_back({{"kind", t.kind == TokenKind::Req ? "REQ" : "ACK"},
                      {"bid", t.bid},
                      {"src", t.src},
                      {"dst", t.dst},
                      {"sent", t.sent},
                      {"delivered", t.delivered}});
    j["tokens"] = toks;
    json acc = json::array();
    for (const auto &a : r.accesses)
      acc.push_back({{"pid", a.pid},
                     {"group", isa::to_string(a.group)},
                     {"op", a.write ? "write" : "read"},
                     {"addr", a.addr},
                     {"len", a.len},
                     {"start", a.start},
                     {"end", a.end},
                     {"round", a.round}});
    j["accesses"] = acc;
  }
  if (r.deadlock) {
    json blocked = json::array();
    for (const auto &b : r.deadlock->blocked)
      blocked.push_back({{"pid", b.pid},
                         {"group", isa::to_string(b.group)},
                         {"ip", b.ip},
                         {"instruction", b.instruction},
                         {"cause", to_string(b.cause)}});
    j["deadlock"] = {{"cycle", r.deadlock->cycle}, {"blocked", blocked}};
  } else {
    j["deadlock"] = nullptr;
  }
  return j;
}

void write_trace_csv(const SimReport &r, std::ostream &out) {
  struct Row {
    std::uint64_t cycle;
    int pu;
    std::string group, event, detail;
  };
  std::vector<Row> rows;
  for (const auto &t : r.timelines)
    for (const auto &i : t.intervals) {
      rows.push_back({i.start, t.pid, isa::to_string(t.group), i.busy ? "begin" : "wait_begin",
                      std::string(to_string(i.cause)) + ":" + std::to_string(i.ip)});
      rows.push_back({i.end, t.pid, isa::to_string(t.group), i.busy ? "end" : "wait_end",
                      std::string(to_string(i.cause)) + ":" + std::to_string(i.ip)});
    }
  for (const auto &t : r.tokens) {
    const std::string what = std::string(t.kind == TokenKind::Req ? "REQ" : "ACK") +
                             " bid=" + std::to_string(t.bid);
    rows.push_back({t.sent, t.src, "ISU", "send", what + " dst=" + std::to_string(t.dst)});
    rows.push_back({t.delivered, t.dst, "ISU", "deliver", what + " src=" + std::to_string(t.src)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row &a, const Row &b) { return a.cycle < b.cycle; });
  out << "cycle,pu,group,event,detail\n";
  for (const auto &row : rows)
    out << row.cycle << ',' << row.pu << ',' << row.group << ',' << row.event << ',' << row.detail << '\n';
}

} // namespace pucoord::sim
