/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/compiler.hpp"
#include "pucoord/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace pucoord::compiler {

namespace {

constexpr std::int64_t kRegionAlign = 4096;

std::int64_t align_up(std::int64_t v, std::int64_t a) { return (v + a - 1) / a * a; }

} // namespace

BufferPlan plan_buffers(const Partition &part, const graph::NodeDag &dag, int io_depth) {
  if (io_depth < 1)
    throw Error(ErrorKind::Usage, "io depth must be at least 1");
  BufferPlan plan;
  const auto &np = part.node_pid;

  // slices are contiguous in topological order, so slice order is a
  // topological order of the PU graph
  std::map<int, std::set<int>> preds;
  for (const auto &t : dag.tensors) {
    if (t.producer < 0)
      continue;
    const int p = np[static_cast<std::size_t>(t.producer)];
    for (int c : t.consumers) {
      const int q = np[static_cast<std::size_t>(c)];
      if (q != p)
        preds[q].insert(p);
    }
  }
  for (int pid : part.occupied_pids()) {
    int s = 0;
    for (int p : preds[pid])
      s = std::max(s, plan.stage.at(p) + 1);
    plan.stage[pid] = s;
  }

  std::map<int, std::uint32_t> next_bid;
  for (const auto &t : dag.tensors) {
    TensorBuffer b;
    b.tensor = t.id;
    b.name = t.name;
    b.bytes = t.byte_size;
    b.region_bytes = std::max<std::int64_t>(kRegionAlign, align_up(t.byte_size, kRegionAlign));
    b.producer_pid = t.producer < 0 ? -1 : np[static_cast<std::size_t>(t.producer)];
    std::set<int> cons;
    for (int c : t.consumers)
      cons.insert(np[static_cast<std::size_t>(c)]);
    b.consumer_pids.assign(cons.begin(), cons.end());
    b.host = t.model_input() || t.model_output();
    if (b.host) {
      b.beta = b.regions = io_depth;
    } else {
      int dist = 0;
      for (int c : b.consumer_pids)
        dist = std::max(dist, plan.stage.at(c) - plan.stage.at(b.producer_pid));
      b.beta = b.regions = dist + 1;
      b.bid_base = next_bid[b.producer_pid];
      next_bid[b.producer_pid] += static_cast<std::uint32_t>(b.beta);
      if (next_bid[b.producer_pid] > (1u << isa::kBidBits))
        throw Error(ErrorKind::Infeasible,
                    "PU " + std::to_string(b.producer_pid) + " runs out of buffer ids");
    }
    plan.tensors.push_back(std::move(b));
  }
  return plan;
}

SteadyTrace steady_state_trace(const Partition &part, const graph::NodeDag &dag,
                               const Profiles &profiles, const BufferPlan &plan,
                               const SystemSpec &spec) {
  SteadyTrace tr;
  tr.period = static_cast<double>(std::max<std::int64_t>(1, part.makespan));
  std::map<int, double> cursor;
  for (std::size_t v = 0; v < dag.nodes.size(); ++v) {
    const int pid = part.node_pid[v];
    const double d = static_cast<double>(profiles.at(v, spec.pu(pid).type));
    auto it = plan.stage.find(pid);
    const double s = (it == plan.stage.end() ? 0 : it->second) * tr.period + cursor[pid];
    cursor[pid] += d;
    const auto &n = dag.nodes[v];
    for (int t : n.inputs)
      tr.windows.push_back({t, false, pid, static_cast<int>(v), s, s + d});
    tr.windows.push_back({n.output, true, pid, static_cast<int>(v), s, s + d});
  }
  return tr;
}

bool windows_overlap(const AccessWindow &a, const AccessWindow &b, double period) {
  const double la = a.end - a.start, lb = b.end - b.start;
  if (la <= 0 || lb <= 0)
    return false;
  if (la >= period || lb >= period)
    return true;
  auto norm = [&](double x) {
    const double r = std::fmod(x, period);
    return r < 0 ? r + period : r;
  };
  const double as = norm(a.start), bs = norm(b.start);
  for (double shift : {-period, 0.0, period})
    if (std::max(as, bs + shift) < std::min(as + la, bs + shift + lb))
      return true;
  return false;
}

void assign_channels(BufferPlan &plan, const SteadyTrace &trace, const graph::NodeDag &dag,
                     const HbmSpec &hbm, const std::vector<int> &channels_in) {
  std::vector<int> channels = channels_in;
  if (channels.empty())
    for (int c = 0; c < hbm.num_channels; ++c)
      channels.push_back(c);
  for (int c : channels)
    if (c < 0 || c >= hbm.num_channels)
      throw Error(ErrorKind::Usage, "channel " + std::to_string(c) + " out of range");

  std::size_t next = 0;
  std::map<int, std::uint64_t> bump;
  for (const auto &[pid, stage] : plan.stage) {
    (void)stage;
    if (next >= channels.size())
      throw Error(ErrorKind::ChannelsExhausted, "no channel left for weights of PU " + std::to_string(pid));
    const int ch = channels[next++];
    plan.weight_channel[pid] = ch;
    plan.weight_base[pid] = hbm.channel_base(ch);
  }
  const std::vector<int> pool(channels.begin() + static_cast<std::ptrdiff_t>(next), channels.end());

  std::map<int, std::vector<const AccessWindow *>> by_tensor;
  for (const auto &w : trace.windows)
    by_tensor[w.tensor].push_back(&w);

  // inputs of one node that come from different PUs must not share a channel
  std::map<int, std::set<int>> apart;
  for (const auto &n : dag.nodes)
    for (std::size_t i = 0; i < n.inputs.size(); ++i)
      for (std::size_t j = 0; j < n.inputs.size(); ++j)
        if (n.inputs[i] != n.inputs[j]) {
          const auto &a = plan.tensors[static_cast<std::size_t>(n.inputs[i])];
          const auto &b = plan.tensors[static_cast<std::size_t>(n.inputs[j])];
          if (a.producer_pid != b.producer_pid || a.producer_pid < 0)
            apart[a.tensor].insert(b.tensor);
        }

  std::map<int, std::vector<int>> on_channel;
  std::set<int> used;
  for (auto &tb : plan.tensors) {
    const auto &mine = by_tensor[tb.tensor];
    int chosen = -1;
    for (int ch : pool) {
      bool ok = true;
      for (int other : on_channel[ch]) {
        if (apart[tb.tensor].count(other)) {
          ok = false;
          break;
        }
        for (const auto *w : by_tensor[other]) {
          for (const auto *m : mine)
            if (m->write == w->write && windows_overlap(*m, *w, trace.period)) {
              ok = false;
              break;
            }
          if (!ok)
            break;
        }
        if (!ok)
          break;
      }
      if (ok) {
        chosen = ch;
        break;
      }
    }
    if (chosen < 0)
      throw Error(ErrorKind::ChannelsExhausted,
                  "no conflict-free channel for tensor " + tb.name + " among " +
                      std::to_string(pool.size()));
    on_channel[chosen].push_back(tb.tensor);
    used.insert(chosen);
    auto [it, fresh] = bump.try_emplace(chosen, hbm.channel_base(chosen));
    (void)fresh;
    tb.channel = chosen;
    tb.base = it->second;
    it->second += static_cast<std::uint64_t>(tb.region_bytes) * static_cast<std::uint64_t>(tb.regions);
    if (it->second > hbm.channel_base(chosen) + hbm.channel_size())
      throw Error(ErrorKind::ChannelsExhausted, "channel " + std::to_string(chosen) + " is full");
  }
  plan.channels_used = static_cast<int>(plan.weight_channel.size() + used.size());
}

} // namespace pucoord::compiler
