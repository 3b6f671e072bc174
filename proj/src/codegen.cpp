/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/compiler.hpp"
#include "pucoord/error.hpp"

#include <algorithm>
#include <set>

namespace pucoord::compiler {

using isa::Instruction;

namespace {

Instruction prg(std::uint32_t base) { return {isa::ProgCtrl{0, base}}; }

Instruction config(isa::ConfigKind kind, std::vector<std::uint32_t> params) {
  return {isa::Config{kind, std::move(params)}};
}

Instruction move(isa::MoveKind kind, std::uint64_t addr, std::int64_t len) {
  return {isa::DataMove{kind, addr, static_cast<std::uint32_t>(len)}};
}

Instruction cycle(std::uint64_t base, std::int64_t stride, int regions) {
  const auto n = static_cast<std::uint32_t>(regions - 1);
  return {isa::AddrCyc{base, stride, n, n}};
}

Instruction sync(isa::SyncKind kind, int peer, std::uint32_t bid, std::uint32_t base, int depth) {
  const auto n = static_cast<std::uint32_t>(depth - 1);
  return {isa::Sync{kind, static_cast<std::uint32_t>(peer), bid, base, n, n}};
}

std::uint32_t shift_of(int scale) { return static_cast<std::uint32_t>(std::clamp(-scale, 0, 31)); }

// Emits the data move plus the address cycler for multi-region buffers.
void emit_move(std::vector<Instruction> &out, isa::MoveKind kind, const TensorBuffer &b,
               std::int64_t offset, std::int64_t len) {
  const std::uint64_t addr = b.region(0) + static_cast<std::uint64_t>(offset);
  out.push_back(move(kind, addr, len));
  if (b.regions > 1)
    out.push_back(cycle(addr, b.region_bytes, b.regions));
}

isa::Program finish(isa::Group group, std::vector<Instruction> prologue,
                    std::vector<Instruction> body) {
  if (body.empty())
    throw Error(ErrorKind::InvalidProgram, std::string("empty ") + isa::to_string(group) + " body");
  isa::Program p;
  p.group = group;
  p.instructions.push_back(prg(static_cast<std::uint32_t>(1 + prologue.size())));
  for (auto &i : prologue)
    p.instructions.push_back(std::move(i));
  for (auto &i : body)
    p.instructions.push_back(std::move(i));
  p.instructions.back().prg_end = true;
  isa::validate(p);
  return p;
}

} // namespace

std::vector<sim::PuProgram> codegen(const graph::NodeDag &dag, const Partition &part,
                                    const std::map<int, WeightSchedule> &weights,
                                    const BufferPlan &buffers) {
  std::vector<sim::PuProgram> out;
  const auto &tb = buffers.tensors;
  auto buf = [&](int t) -> const TensorBuffer & { return tb[static_cast<std::size_t>(t)]; };

  for (int pid : part.occupied_pids()) {
    std::vector<std::size_t> nodes;
    for (std::size_t v = 0; v < dag.nodes.size(); ++v)
      if (part.node_pid[v] == pid)
        nodes.push_back(v);

    // last node on this PU reading each tensor
    std::map<int, std::size_t> last_reader;
    for (std::size_t v : nodes)
      for (int t : dag.nodes[v].inputs)
        last_reader[t] = v;

    // ---- LD
    std::vector<Instruction> ld_pro, ld;
    for (const auto &[t, v] : last_reader) {
      (void)v;
      const auto &b = buf(t);
      if (b.host)
        continue;
      for (int i = 0; i < b.beta; ++i)
        ld_pro.push_back(sync(isa::SyncKind::SendAck, b.producer_pid, b.bid_base + static_cast<std::uint32_t>(i),
                              b.bid_base + static_cast<std::uint32_t>(i), 1));
    }
    std::set<int> waited;
    for (std::size_t v : nodes) {
      const auto &n = dag.nodes[v];
      for (int t : n.inputs) {
        const auto &b = buf(t);
        if (b.host || !waited.insert(t).second)
          continue;
        ld.push_back(sync(isa::SyncKind::WaitReq, b.producer_pid, b.bid_base, b.bid_base, b.beta));
      }
      const auto &mainb = buf(n.inputs.at(0));
      const std::int64_t pixels = n.gemm.n;
      for (const auto &tile : n.tiles) {
        ld.push_back(config(isa::ConfigKind::Im2col,
                            {static_cast<std::uint32_t>(n.kernel), static_cast<std::uint32_t>(n.stride),
                             static_cast<std::uint32_t>(n.in.c)}));
        emit_move(ld, isa::MoveKind::Im2col, mainb, 0, std::min(mainb.bytes, n.in.bytes()));
        if (n.has_residual())
          emit_move(ld, isa::MoveKind::Linear, buf(n.inputs[1]), tile.row_begin * pixels,
                    tile.rows * pixels);
      }
      std::set<int> acked;
      for (int t : n.inputs) {
        const auto &b = buf(t);
        if (!b.host && last_reader[t] == v && acked.insert(t).second)
          ld.push_back(sync(isa::SyncKind::SendAck, b.producer_pid, b.bid_base, b.bid_base, b.beta));
      }
    }

    // ---- CP
    const WeightSchedule &ws = weights.at(pid);
    std::vector<std::int64_t> dyn;
    std::vector<std::uint64_t> waddr;
    std::uint64_t cursor = buffers.weight_base.count(pid) ? buffers.weight_base.at(pid) : 0;
    for (const auto &tw : ws.tiles) {
      dyn.push_back(tw.dynamic_bytes);
      waddr.push_back(cursor);
      cursor += static_cast<std::uint64_t>((tw.dynamic_bytes + 63) / 64 * 64);
    }
    const std::size_t T = dyn.size();
    auto fetch = [&](std::vector<Instruction> &dst, std::size_t g, std::uint32_t lead) {
      if (dyn[g] == 0)
        return;
      dst.push_back(config(isa::ConfigKind::UramAddr, {static_cast<std::uint32_t>(g % 2), lead}));
      dst.push_back(move(isa::MoveKind::Weights, waddr[g], dyn[g]));
    };
    std::vector<Instruction> cp_pro, cp;
    if (T > 0)
      fetch(cp_pro, 0, 0);
    std::size_t g = 0;
    for (std::size_t v : nodes) {
      const auto &n = dag.nodes[v];
      for (const auto &tile : n.tiles) {
        fetch(cp, (g + 1) % T, 1);
        if (n.has_residual())
          cp.push_back(move(isa::MoveKind::ResAdd, 0, tile.rows * n.gemm.n));
        isa::Compute c;
        c.relu_enable = n.relu;
        c.add_enable = n.has_residual();
        c.rounds = 1;
        c.out_shift = shift_of(n.quant_scale);
        c.res_shift = shift_of(n.residual_scale);
        c.m = static_cast<std::uint32_t>(tile.rows);
        c.k = static_cast<std::uint32_t>(n.gemm.k);
        c.n = static_cast<std::uint32_t>(n.gemm.n);
        cp.push_back({c});
        ++g;
      }
    }

    // ---- ST
    std::vector<Instruction> st;
    for (std::size_t v : nodes) {
      const auto &n = dag.nodes[v];
      const auto &b = buf(n.output);
      if (!b.host)
        for (int c : b.consumer_pids)
          st.push_back(sync(isa::SyncKind::WaitAck, c, b.bid_base, b.bid_base, b.beta));
      for (const auto &tile : n.tiles)
        emit_move(st, isa::MoveKind::Linear, b, tile.row_begin * n.gemm.n, tile.rows * n.gemm.n);
      if (!b.host)
        for (int c : b.consumer_pids)
          st.push_back(sync(isa::SyncKind::SendReq, c, b.bid_base, b.bid_base, b.beta));
    }

    sim::PuProgram p;
    p.pid = pid;
    p.offline_weight_bytes = ws.offline_bytes;
    p.groups[0] = finish(isa::Group::LD, std::move(ld_pro), std::move(ld));
    p.groups[1] = finish(isa::Group::CP, std::move(cp_pro), std::move(cp));
    p.groups[2] = finish(isa::Group::ST, {}, std::move(st));
    out.push_back(std::move(p));
  }
  return out;
}

DeploymentPlan lower(const graph::NodeDag &dag, const SystemSpec &spec, const Partition &part,
                     const Profiles &profiles, const CompileOptions &options) {
  DeploymentPlan plan;
  plan.system = spec;
  for (const auto &n : dag.nodes)
    plan.node_ids.push_back(n.id);
  plan.partition = part;

  plan.buffers = plan_buffers(part, dag, options.io_depth);
  for (const auto &[t, r] : options.region_override) {
    if (t < 0 || static_cast<std::size_t>(t) >= plan.buffers.tensors.size() || r < 1)
      throw Error(ErrorKind::Usage, "bad region override for tensor " + std::to_string(t));
    plan.buffers.tensors[static_cast<std::size_t>(t)].regions = r;
  }

  for (int pid : part.occupied_pids()) {
    const PuSpec &pu = spec.pu(pid);
    std::vector<TileLoad> loads;
    for (std::size_t v = 0; v < dag.nodes.size(); ++v)
      if (part.node_pid[v] == pid)
        for (const auto &t : dag.nodes[v].tiles)
          loads.push_back({t.weight_bytes, sim::gemm_cycles(t.macs, pu, spec)});
    const double bpc = spec.hbm.bytes_per_cycle_per_channel;
    if (options.all_offline) {
      WeightSchedule ws = schedule_weights({}, 0, bpc, 1);
      for (const auto &l : loads) {
        TileWeights tw;
        tw.bytes = tw.offline_bytes = l.bytes;
        tw.exec_cycles = l.exec_cycles;
        ws.tiles.push_back(tw);
        ws.offline_bytes += l.bytes;
      }
      ws.capacity = ws.offline_bytes;
      plan.weights[pid] = std::move(ws);
    } else {
      const std::int64_t chunk = std::max<std::int64_t>(1, pu.uram_capacity_bytes / std::max<std::int64_t>(1, options.chunk_divisor));
      plan.weights[pid] = schedule_weights(loads, pu.uram_capacity_bytes, bpc, chunk);
    }
  }

  if (options.dedicated_channels) {
    std::vector<int> chans = options.channels;
    if (chans.empty())
      for (int c = 0; c < spec.hbm.num_channels; ++c)
        chans.push_back(c);
    std::size_t next = 0;
    auto take = [&]() {
      if (next >= chans.size())
        throw Error(ErrorKind::ChannelsExhausted, "not enough channels for dedicated placement");
      return chans[next++];
    };
    for (const auto &[pid, s] : plan.buffers.stage) {
      (void)s;
      const int ch = take();
      plan.buffers.weight_channel[pid] = ch;
      plan.buffers.weight_base[pid] = spec.hbm.channel_base(ch);
    }
    for (auto &b : plan.buffers.tensors) {
      b.channel = take();
      b.base = spec.hbm.channel_base(b.channel);
    }
    plan.buffers.channels_used = static_cast<int>(next);
  } else {
    const SteadyTrace trace = steady_state_trace(part, dag, profiles, plan.buffers, spec);
    assign_channels(plan.buffers, trace, dag, spec.hbm, options.channels);
  }

  plan.programs = codegen(dag, part, plan.weights, plan.buffers);

  Metrics &m = plan.metrics;
  for (int pid : part.pus)
    (spec.pu(pid).type == PuType::X1 ? m.a : m.b) += 1;
  m.makespan = part.makespan;
  std::vector<std::int64_t> occ;
  for (std::size_t k = 0; k + 1 < part.cuts.size(); ++k)
    if (part.cuts[k + 1] > part.cuts[k])
      occ.push_back(part.stage_time[k]);
  m.pbe = pbe(occ);
  int depth = 0;
  for (const auto &[pid, s] : plan.buffers.stage)
    depth = std::max(depth, s + 1);
  if (part.makespan > 0) {
    m.predicted_fps = spec.clocks.sys_clk_hz / static_cast<double>(part.makespan);
    m.predicted_latency_ms = 1e3 * depth * static_cast<double>(part.makespan) / spec.clocks.sys_clk_hz;
  }
  return plan;
}

DeploymentPlan compile(const graph::NodeDag &dag, const SystemSpec &spec,
                       const CompileOptions &options) {
  if (dag.nodes.empty())
    throw Error(ErrorKind::EmptyGraph, "DAG has no nodes");
  spec.validate();
  const auto pool = pool_of(spec, options.pids);
  Profiles local;
  const Profiles *prof = options.profiles;
  if (!prof) {
    local = profile(dag, spec, options.cache);
    prof = &local;
  }
  const Partition part = partition(dag, pool, *prof);
  return lower(dag, spec, part, *prof, options);
}

std::vector<sim::Region> hazard_regions(const DeploymentPlan &plan) {
  std::vector<sim::Region> out;
  for (const auto &b : plan.buffers.tensors) {
    if (b.host)
      continue;
    for (int i = 0; i < b.regions; ++i)
      out.push_back({b.name + "#" + std::to_string(i), b.region(i), static_cast<std::uint64_t>(b.bytes)});
  }
  return out;
}

sim::SimReport simulate(const DeploymentPlan &plan, std::uint64_t rounds, sim::RunOptions options) {
  options.rounds = rounds;
  return sim::run(plan.system, plan.programs, options);
}

} // namespace pucoord::compiler
