/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "doctest.h"

#include "compiler_fixtures.hpp"
#include "pingpong_programs.hpp"
#include "pucoord/compiler.hpp"
#include "pucoord/error.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace pucoord;
using namespace pucoord::compiler;

namespace {

struct Candidate {
  std::int64_t makespan;
  std::size_t occupied;
  std::vector<std::int64_t> key; // interleaved (cut, type)
};

// Exhaustive enumeration over type orders and cut vectors.
Candidate brute_force(const std::vector<std::int64_t> &c1, const std::vector<std::int64_t> &c2,
                      std::vector<int> types) {
  const std::size_t n = c1.size(), k = types.size();
  std::sort(types.begin(), types.end());
  Candidate best{INT64_MAX, 0, {}};
  do {
    std::vector<std::size_t> cuts(k - 1, 0);
    for (;;) {
      std::vector<std::size_t> full{0};
      full.insert(full.end(), cuts.begin(), cuts.end());
      full.push_back(n);
      std::int64_t ms = 0;
      std::size_t occ = 0;
      std::vector<std::int64_t> key;
      for (std::size_t s = 0; s < k; ++s) {
        std::int64_t t = 0;
        for (std::size_t v = full[s]; v < full[s + 1]; ++v)
          t += types[s] == 0 ? c1[v] : c2[v];
        ms = std::max(ms, t);
        occ += full[s + 1] > full[s] ? 1 : 0;
        key.push_back(static_cast<std::int64_t>(full[s + 1]));
        key.push_back(types[s]);
      }
      Candidate c{ms, occ, key};
      if (std::tie(c.makespan, c.occupied, c.key) < std::tie(best.makespan, best.occupied, best.key))
        best = c;
      // next non-decreasing cut vector
      std::size_t i = k - 1;
      while (i > 0 && cuts[i - 1] == n)
        --i;
      if (i == 0)
        break;
      ++cuts[i - 1];
      for (std::size_t j = i; j < k - 1; ++j)
        cuts[j] = cuts[i - 1];
    }
  } while (std::next_permutation(types.begin(), types.end()));
  return best;
}

std::vector<std::int64_t> dp_key(const Partition &p, const std::vector<PoolEntry> &pool) {
  std::vector<std::int64_t> key;
  for (std::size_t s = 0; s < p.pus.size(); ++s) {
    key.push_back(static_cast<std::int64_t>(p.cuts[s + 1]));
    for (const auto &e : pool)
      if (e.pid == p.pus[s])
        key.push_back(e.type == PuType::X1 ? 0 : 1);
  }
  return key;
}

} // namespace

TEST_CASE("partition: small fixed cases") {
  const std::vector<PoolEntry> one{{0, PuType::X1}};
  auto p = partition({7}, {4}, one);
  CHECK(p.makespan == 7);
  CHECK(p.node_pid == std::vector<int>{0});

  const std::vector<PoolEntry> two{{0, PuType::X1}, {2, PuType::X1}};
  p = partition({4, 4, 4, 4}, {2, 2, 2, 2}, two);
  CHECK(p.makespan == 8);
  CHECK(p.cuts == std::vector<std::size_t>{0, 2, 4});
  CHECK(p.occupied() == 2);

  // one heavy node: the second PU stays empty
  p = partition({10, 1}, {5, 1}, two);
  CHECK(p.makespan == 10);
  CHECK(p.occupied() == 2);
  p = partition({10, 0}, {5, 0}, two);
  CHECK(p.makespan == 10);
  CHECK(p.occupied() == 1);

  CHECK_THROWS_AS(partition({}, {}, two), Error);
  CHECK_THROWS_AS(partition({1}, {1}, {}), Error);
}

TEST_CASE("partition: DP equals brute force on 200 random graphs") {
  std::mt19937 rng(2024);
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n = 1 + rng() % 12;
    const std::size_t k = 1 + rng() % 3;
    std::vector<std::int64_t> c1(n), c2(n);
    for (std::size_t i = 0; i < n; ++i) {
      c1[i] = 1 + static_cast<std::int64_t>(rng() % 100);
      c2[i] = (c1[i] + 1) / 2 + static_cast<std::int64_t>(rng() % 5);
    }
    std::vector<PoolEntry> pool;
    std::vector<int> types;
    for (std::size_t s = 0; s < k; ++s) {
      const int t = static_cast<int>(rng() % 2);
      pool.push_back({static_cast<int>(s), t == 0 ? PuType::X1 : PuType::X2});
      types.push_back(t);
    }
    const Partition p = partition(c1, c2, pool);
    const Candidate oracle = brute_force(c1, c2, types);
    CAPTURE(iter);
    REQUIRE(p.makespan == oracle.makespan);
    CHECK(p.occupied() == oracle.occupied);
    CHECK(dp_key(p, pool) == oracle.key);
    // contiguity and single assignment
    for (std::size_t s = 0; s < p.pus.size(); ++s)
      for (std::size_t v = p.cuts[s]; v < p.cuts[s + 1]; ++v)
        CHECK(p.node_pid[v] == p.pus[s]);
    CHECK(*std::max_element(p.stage_time.begin(), p.stage_time.end()) == p.makespan);
  }
}

TEST_CASE("pbe") {
  CHECK(pbe({10}) == doctest::Approx(1.0));
  CHECK(pbe({10, 10}) == doctest::Approx(1.0));
  CHECK(pbe({10, 5}) == doctest::Approx(0.75));
}

// ------------------------------------------------------------ weights

namespace {

// Minimum total deficit over every chunk-prefix placement that fits.
std::int64_t oracle_min_stall(const std::vector<TileLoad> &tiles, std::int64_t cap, double bpc,
                              std::int64_t chunk) {
  const std::size_t T = tiles.size();
  std::vector<std::int64_t> nchunks(T);
  for (std::size_t k = 0; k < T; ++k)
    nchunks[k] = (tiles[k].bytes + chunk - 1) / chunk;
  std::vector<std::int64_t> promoted(T, 0);
  std::int64_t best = INT64_MAX;
  for (;;) {
    std::vector<std::int64_t> dyn(T);
    std::int64_t off = 0;
    for (std::size_t k = 0; k < T; ++k) {
      off += std::min(tiles[k].bytes, promoted[k] * chunk);
      dyn[k] = tiles[k].bytes - std::min(tiles[k].bytes, promoted[k] * chunk);
    }
    std::int64_t peak = 0;
    for (std::size_t k = 0; k < T; ++k)
      peak = std::max(peak, dyn[k] + dyn[(k + 1) % T]);
    if (off + peak <= cap)
      best = std::min(best, deficit_stall(tiles, dyn, bpc));
    std::size_t i = 0;
    while (i < T && promoted[i] == nchunks[i])
      promoted[i++] = 0;
    if (i == T)
      break;
    ++promoted[i];
  }
  return best;
}

} // namespace

TEST_CASE("weights: two-tile deficit example") {
  // tile1 executes 60 cycles; tile2 needs 100 cycles to load at 32 B/cycle
  const std::vector<TileLoad> tiles{{640, 60}, {3200, 60}};
  const std::int64_t all_dynamic = 640 + 3200;
  const std::int64_t cap = all_dynamic + 3200 * 40 / 100;
  const auto ws = schedule_weights(tiles, cap, 32.0, 128);
  CHECK(ws.tiles[1].deficit == 0);
  CHECK(ws.stall_cycles == 0);
  // the first ten promotions go to tile2 and remove exactly its 40-cycle deficit
  REQUIRE(ws.promotion_order.size() >= 10);
  for (int i = 0; i < 10; ++i)
    CHECK(ws.promotion_order[static_cast<std::size_t>(i)] == 1);
  CHECK(ws.offline_bytes + ws.peak_dynamic_bytes <= cap);
  CHECK(oracle_min_stall(tiles, cap, 32.0, 128) == 0);

  // before any promotion the deficit is 40 cycles
  CHECK(deficit_stall(tiles, {640, 3200}, 32.0) == 40);
}

TEST_CASE("weights: capacity edge cases") {
  const std::vector<TileLoad> tiles{{1000, 10}, {2000, 10}, {500, 10}};
  // everything fits offline
  auto ws = schedule_weights(tiles, 1 << 20, 32.0, 64);
  CHECK(ws.offline_bytes == 3500);
  CHECK(ws.stall_cycles == 0);
  for (const auto &t : ws.tiles)
    for (const auto &c : t.chunks)
      CHECK(c.offline);
  // capacity 0 cannot hold the adjacent-tile working set
  CHECK_THROWS_AS(schedule_weights(tiles, 0, 32.0, 64), Error);
  // exactly the all-dynamic working set: stall is the sum of deficits
  ws = schedule_weights(tiles, 3000, 32.0, 64);
  std::vector<std::int64_t> dyn;
  for (const auto &t : ws.tiles)
    dyn.push_back(t.dynamic_bytes);
  CHECK(ws.stall_cycles == deficit_stall(tiles, dyn, 32.0));
  CHECK(ws.offline_bytes + ws.peak_dynamic_bytes <= 3000);
  // a single tile double-buffers against itself
  CHECK_THROWS_AS(schedule_weights({{100, 5}}, 150, 32.0, 64), Error);
  CHECK_NOTHROW(schedule_weights({{100, 5}}, 200, 32.0, 64));
}

TEST_CASE("weights: greedy against exhaustive oracle, monotone in capacity") {
  std::mt19937 rng(7);
  for (int iter = 0; iter < 60; ++iter) {
    const std::size_t T = 2 + rng() % 3;
    std::vector<TileLoad> tiles;
    for (std::size_t k = 0; k < T; ++k)
      tiles.push_back({64 * static_cast<std::int64_t>(1 + rng() % 8), static_cast<std::int64_t>(rng() % 12)});
    std::int64_t lo = 0;
    for (std::size_t k = 0; k < T; ++k)
      lo = std::max(lo, tiles[k].bytes + tiles[(k + 1) % T].bytes);
    std::int64_t prev = INT64_MAX, prev_off = -1;
    std::vector<int> prev_order;
    for (std::int64_t cap = lo; cap <= lo + 1024; cap += 64) {
      const auto ws = schedule_weights(tiles, cap, 8.0, 64);
      CAPTURE(iter);
      CAPTURE(cap);
      CHECK(ws.offline_bytes + ws.peak_dynamic_bytes <= cap);
      CHECK(ws.stall_cycles >= oracle_min_stall(tiles, cap, 8.0, 64));
      CHECK(ws.stall_cycles <= prev);
      CHECK(ws.offline_bytes >= prev_off);
      // prefix stability
      CHECK(std::equal(prev_order.begin(), prev_order.end(), ws.promotion_order.begin()));
      prev = ws.stall_cycles;
      prev_off = ws.offline_bytes;
      prev_order = ws.promotion_order;
    }
  }
}

// ---------------------------------------------------------- profiling

namespace {

std::vector<std::string> mnemonics(const isa::Program &p) {
  std::vector<std::string> out;
  for (const auto &i : p.instructions)
    out.emplace_back(isa::mnemonic(isa::opcode_of(i)));
  return out;
}

graph::NodeDag two_conv() {
  return graph::tile(graph::fuse(graph::ingest_file(fixtures::models_dir() + "two_conv.ir.json")), 64);
}

int count_sync(const DeploymentPlan &plan, isa::SyncKind kind, int pid, int peer) {
  int n = 0;
  for (const auto &pp : plan.programs)
    if (pp.pid == pid)
      for (const auto &g : pp.groups)
        for (const auto &i : g->instructions)
          if (const auto *s = std::get_if<isa::Sync>(&i.body);
              s && s->kind == kind && static_cast<int>(s->peer_pid) == peer && s->num_cycles > 0)
            ++n;
  return n;
}

} // namespace

TEST_CASE("profile: 2x halves the compute portion") {
  const auto spec = default_system();
  const auto dag = two_conv();
  const auto &n = dag.nodes[0];
  const std::int64_t t1 = profile_node(n, PuType::X1, spec);
  const std::int64_t t2 = profile_node(n, PuType::X2, spec);
  const std::int64_t c1 = sim::gemm_cycles(n.macs(), spec.pu(0), spec);
  const std::int64_t c2 = sim::gemm_cycles(n.macs(), spec.pu(1), spec);
  CHECK(c2 * 2 == doctest::Approx(c1).epsilon(0.001));
  // the transfer overhead does not depend on the PU type
  CHECK(t1 - c1 == t2 - c2);
  ProfileCache cache;
  profile(dag, spec, &cache);
  CHECK(cache.size() == 2); // both convs share a shape
}

TEST_CASE("profile: chain on one PU is the sum of its parts") {
  fixtures::IrBuilder b(64, 8);
  b.conv(b.conv(b.conv()));
  const auto dag = b.dag();
  const auto spec = fixtures::system_of({0});
  const auto prof = profile(dag, spec);
  CompileOptions o;
  o.profiles = &prof;
  o.all_offline = true;
  const auto plan = compile(dag, spec, o);
  sim::RunOptions ro;
  const auto rep = simulate(plan, 1, ro);
  const std::int64_t sum = std::accumulate(prof.x1.begin(), prof.x1.end(), std::int64_t{0});
  // three nodes: at most one pipeline fill (transfer overhead) saved per boundary
  const std::int64_t fill = prof.x1[0] - sim::gemm_cycles(dag.nodes[0].macs(), spec.pu(0), spec);
  CHECK(static_cast<std::int64_t>(rep.total_cycles) <= sum + 2 * fill);
  CHECK(static_cast<std::int64_t>(rep.total_cycles) >= sum - 2 * fill);
}

// ------------------------------------------------------------ codegen

TEST_CASE("codegen: two-conv chain matches the reference listing shape") {
  const auto dag = two_conv();
  const auto spec = default_system();
  CompileOptions o;
  o.pids = {0, 2};
  const auto plan = compile(dag, spec, o);
  REQUIRE(plan.programs.size() == 2);
  const auto ref = test::pingpong_listings();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto &[name, group, text] = ref[i];
    const auto &pp = plan.programs[i / 3];
    CAPTURE(name);
    CHECK(mnemonics(*pp.groups[static_cast<std::size_t>(group)]) ==
          mnemonics(isa::assemble(text, group)));
  }
  // intermediate ping-pong, model I/O four deep
  CHECK(plan.buffers.tensors.size() == 3);
  for (const auto &t : plan.buffers.tensors)
    CHECK(t.beta == (t.host ? 4 : 2));
  const auto rep = simulate(plan, 8);
  CHECK(sim::detect_hazards(rep, hazard_regions(plan)).empty());
}

TEST_CASE("codegen: single-PU plan only synchronizes with itself") {
  auto dag = graph::tile(graph::fuse(graph::ingest_file(fixtures::models_dir() + "resnet50.ir.json")), 64);
  const auto spec = default_system();
  CompileOptions o;
  o.pids = {1};
  const auto plan = compile(dag, spec, o);
  REQUIRE(plan.programs.size() == 1);
  for (const auto &g : plan.programs[0].groups)
    for (const auto &i : g->instructions)
      if (const auto *s = std::get_if<isa::Sync>(&i.body))
        CHECK(s->peer_pid == 1u);
  for (const auto &t : plan.buffers.tensors)
    CHECK(t.beta == (t.host ? 4 : 1));
  CHECK(plan.metrics.pbe == doctest::Approx(1.0));
  const auto rep = simulate(plan, 2);
  CHECK(sim::detect_hazards(rep, hazard_regions(plan)).empty());
}

TEST_CASE("codegen: stage-distance-2 skip cycles three BIDs") {
  // conv0 -> conv1 -> conv2 + conv0 (residual), one conv per PU
  fixtures::IrBuilder b(64, 8);
  const auto c0 = b.conv();
  const auto c1 = b.conv(c0);
  const auto c2 = b.conv(c1);
  b.add(c2, c0, true);
  const auto dag = b.dag();
  const auto spec = default_system();
  CompileOptions o;
  o.pids = {0, 2, 4};
  const auto plan = compile(dag, spec, o);
  REQUIRE(plan.partition.occupied() == 3);
  const int t_skip = dag.nodes[2].inputs[1];
  const auto &skip = plan.buffers.tensors[static_cast<std::size_t>(t_skip)];
  CHECK(skip.beta == 3);
  CHECK(plan.buffers.stage.at(plan.partition.node_pid[2]) - plan.buffers.stage.at(skip.producer_pid) == 2);
  // trace the consumer WAIT_REQ with the sync_update oracle
  const auto &ld = *plan.programs[2].groups[0];
  const isa::Sync *wait = nullptr;
  for (const auto &i : ld.instructions)
    if (const auto *s = std::get_if<isa::Sync>(&i.body);
        s && s->kind == isa::SyncKind::WaitReq && s->bid == skip.bid_base && static_cast<int>(s->peer_pid) == skip.producer_pid)
      wait = s;
  REQUIRE(wait != nullptr);
  isa::SyncState st{wait->bid, wait->iter_counter};
  std::vector<std::uint32_t> seen;
  for (int r = 0; r < 6; ++r) {
    seen.push_back(st.bid);
    st = isa::sync_update(st, *wait);
  }
  const std::uint32_t b0 = skip.bid_base;
  CHECK(seen == std::vector<std::uint32_t>{b0, b0 + 1, b0 + 2, b0, b0 + 1, b0 + 2});
  const auto rep = simulate(plan, 12);
  CHECK(sim::detect_hazards(rep, hazard_regions(plan)).empty());
}

TEST_CASE("codegen: handshake completeness on random DAGs") {
  std::mt19937 rng(11);
  const auto spec = default_system();
  for (int iter = 0; iter < 20; ++iter) {
    const auto dag = fixtures::random_dag(rng, 4 + static_cast<int>(rng() % 6), 0.4, 0.2);
    CompileOptions o;
    o.pids = {0, 1, 2, 3};
    const auto plan = compile(dag, spec, o);
    for (const auto &t : plan.buffers.tensors) {
      if (t.host)
        continue;
      for (int c : t.consumer_pids) {
        // one REQ/ACK pair per tensor per consumer PU per round
        int sreq = 0, wreq = 0, sack = 0, wack = 0;
        for (const auto &pp : plan.programs)
          for (const auto &g : pp.groups)
            for (std::size_t k = g->base_addr(); k < g->instructions.size(); ++k)
              if (const auto *s = std::get_if<isa::Sync>(&g->instructions[k].body); s && s->base_bid == t.bid_base) {
                const int peer = static_cast<int>(s->peer_pid);
                if (pp.pid == t.producer_pid && peer == c && s->kind == isa::SyncKind::SendReq) ++sreq;
                if (pp.pid == t.producer_pid && peer == c && s->kind == isa::SyncKind::WaitAck) ++wack;
                if (pp.pid == c && peer == t.producer_pid && s->kind == isa::SyncKind::WaitReq) ++wreq;
                if (pp.pid == c && peer == t.producer_pid && s->kind == isa::SyncKind::SendAck) ++sack;
              }
        CAPTURE(t.name);
        CHECK(sreq == 1);
        CHECK(wreq == 1);
        CHECK(sack == 1);
        CHECK(wack == 1);
      }
    }
    (void)count_sync;
  }
}

// ----------------------------------------------------- sim-backed properties

TEST_CASE("codegen soundness: random DAGs on pools of 1 to 4 PUs") {
  std::mt19937 rng(99);
  const auto spec = default_system();
  for (int iter = 0; iter < 40; ++iter) {
    const auto dag = fixtures::random_dag(rng, 2 + static_cast<int>(rng() % 8), 0.35, 0.25);
    std::vector<int> pids(10);
    std::iota(pids.begin(), pids.end(), 0);
    std::shuffle(pids.begin(), pids.end(), rng);
    pids.resize(1 + rng() % 4);
    CompileOptions o;
    o.pids = pids;
    const auto plan = compile(dag, spec, o);
    sim::RunOptions ro;
    ro.throw_on_deadlock = false;
    const auto rep = simulate(plan, 6, ro);
    CAPTURE(iter);
    REQUIRE_FALSE(rep.deadlock.has_value());
    const auto hz = sim::detect_hazards(rep, hazard_regions(plan));
    CHECK(hz.empty());
    for (const auto &[pid, peak] : rep.uram_peak_bytes)
      CHECK(peak <= spec.pu(pid).uram_capacity_bytes);
  }
}

TEST_CASE("buffer minimality: beta regions are hazard-free, beta-1 is not") {
  std::mt19937 rng(5);
  const auto spec = default_system();
  int checked = 0;
  for (int iter = 0; iter < 100; ++iter) {
    // one multi-tile conv per 1x PU, random skips across stages
    const int n = 2 + static_cast<int>(rng() % 4);
    const auto dag = fixtures::random_dag(rng, n, 0.5, 0.0, 256);
    CompileOptions o;
    o.pids = {0, 2, 4, 6, 8};
    o.pids.resize(dag.nodes.size());
    const auto plan = compile(dag, spec, o);
    CAPTURE(iter);
    REQUIRE(plan.partition.occupied() == dag.nodes.size());
    const auto rep = simulate(plan, 12);
    CHECK(sim::detect_hazards(rep, hazard_regions(plan)).empty());

    int max_beta = 0;
    for (const auto &t : plan.buffers.tensors)
      if (!t.host)
        max_beta = std::max(max_beta, t.beta);
    if (max_beta < 2)
      continue;
    for (const auto &t : plan.buffers.tensors) {
      if (t.host || t.beta != max_beta)
        continue;
      CompileOptions shrunk = o;
      shrunk.region_override[t.tensor] = t.beta - 1;
      const auto bad = compile(dag, spec, shrunk);
      const auto rep2 = simulate(bad, 12);
      CAPTURE(t.name);
      CHECK_FALSE(sim::detect_hazards(rep2, hazard_regions(bad)).empty());
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("channels: shared channels never carry overlapping same-type windows") {
  std::mt19937 rng(17);
  const auto spec = default_system();
  for (int iter = 0; iter < 40; ++iter) {
    const auto dag = fixtures::random_dag(rng, 3 + static_cast<int>(rng() % 10), 0.4, 0.3);
    std::vector<int> pids{0, 1, 2, 3, 4, 5};
    pids.resize(2 + rng() % 5);
    const auto pool = pool_of(spec, pids);
    const auto prof = profile(dag, spec);
    const auto part = partition(dag, pool, prof);
    auto bp = plan_buffers(part, dag);
    const auto trace = steady_state_trace(part, dag, prof, bp, spec);
    assign_channels(bp, trace, dag, spec.hbm, {});
    CAPTURE(iter);
    for (const auto &a : trace.windows)
      for (const auto &b : trace.windows) {
        if (a.tensor == b.tensor || a.write != b.write)
          continue;
        if (bp.tensors[static_cast<std::size_t>(a.tensor)].channel !=
            bp.tensors[static_cast<std::size_t>(b.tensor)].channel)
          continue;
        CHECK_FALSE(windows_overlap(a, b, trace.period));
      }
    // forked inputs from different PUs are split
    for (const auto &n : dag.nodes)
      if (n.inputs.size() == 2 && n.inputs[0] != n.inputs[1]) {
        const auto &x = bp.tensors[static_cast<std::size_t>(n.inputs[0])];
        const auto &y = bp.tensors[static_cast<std::size_t>(n.inputs[1])];
        if (x.producer_pid != y.producer_pid)
          CHECK(x.channel != y.channel);
      }
    // weight channels are exclusive
    std::set<int> wch;
    for (const auto &[pid, ch] : bp.weight_channel)
      CHECK(wch.insert(ch).second);
    for (const auto &t : bp.tensors) {
      CHECK(wch.count(t.channel) == 0);
      CHECK(t.base % 4096 == 0);
      CHECK(spec.hbm.channel_of(t.base) == t.channel);
    }
  }
}

TEST_CASE("channels: windows overlap on the circle") {
  AccessWindow a{0, true, 0, 0, 0, 10}, b{1, true, 0, 0, 10, 20};
  CHECK_FALSE(windows_overlap(a, b, 100));
  b.start = 95;
  b.end = 105;
  CHECK(windows_overlap(a, b, 100));
  b.start = 195;
  b.end = 199;
  CHECK_FALSE(windows_overlap(a, b, 100));
  b.end = 300;
  CHECK(windows_overlap(a, b, 100));
}

TEST_CASE("channels: exhausted subset is reported") {
  fixtures::IrBuilder b(64, 8);
  const auto c0 = b.conv();
  b.add(b.conv(c0), c0, false);
  const auto dag = b.dag();
  CompileOptions o;
  o.pids = {0, 2};
  o.channels = {0, 1};
  try {
    compile(dag, default_system(), o);
    FAIL("expected ChannelsExhausted");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::ChannelsExhausted);
  }
}

TEST_CASE("weights: simulated URAM occupancy stays within random capacities") {
  std::mt19937 rng(23);
  fixtures::IrBuilder b(256, 8);
  b.conv(b.conv(b.conv()));
  const auto dag = b.dag();
  std::int64_t total = 0, pair = 0;
  for (const auto &n : dag.nodes)
    total += n.weight_bytes;
  pair = 2 * dag.nodes[0].tiles[0].weight_bytes;
  std::int64_t prev_stall = INT64_MAX;
  std::vector<std::int64_t> caps;
  for (int i = 0; i < 100; ++i)
    caps.push_back(pair + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(total)));
  std::sort(caps.begin(), caps.end());
  for (std::int64_t cap : caps) {
    auto spec = fixtures::system_of({0});
    spec.pus[0].uram_capacity_bytes = cap;
    const auto prof = profile(dag, spec);
    CompileOptions o;
    o.profiles = &prof;
    o.chunk_divisor = 64;
    const auto pool = pool_of(spec, {});
    const auto part = partition(dag, pool, prof);
    // fixed chunk size across capacities keeps the greedy order comparable
    std::vector<TileLoad> loads;
    for (const auto &n : dag.nodes)
      for (const auto &t : n.tiles)
        loads.push_back({t.weight_bytes, sim::gemm_cycles(t.macs, spec.pus[0], spec)});
    const auto ws = schedule_weights(loads, cap, spec.hbm.bytes_per_cycle_per_channel, 4096);
    CHECK(ws.stall_cycles <= prev_stall);
    prev_stall = ws.stall_cycles;

    const auto plan = lower(dag, spec, part, prof, o);
    sim::RunOptions ro;
    ro.record_timelines = false;
    const auto rep = simulate(plan, 3, ro);
    CAPTURE(cap);
    REQUIRE(rep.uram_peak_bytes.count(0) == 1);
    CHECK(rep.uram_peak_bytes.at(0) <= cap);
    CHECK(plan.weights.at(0).offline_bytes + plan.weights.at(0).peak_dynamic_bytes <= cap);
  }
}

TEST_CASE("plan directory round trip") {
  const auto dag = two_conv();
  CompileOptions o;
  o.pids = {0, 2};
  const auto plan = compile(dag, default_system(), o);
  const auto dir = std::filesystem::temp_directory_path() / "pucoord_plan_rt";
  std::filesystem::remove_all(dir);
  write_plan(plan, dir);
  CHECK(std::filesystem::exists(dir / "images" / "pu0_ld.bin"));
  CHECK(std::filesystem::exists(dir / "images" / "pu2_st.s"));
  const auto lp = read_plan(dir);
  REQUIRE(lp.programs.size() == plan.programs.size());
  for (std::size_t i = 0; i < lp.programs.size(); ++i)
    for (std::size_t g = 0; g < 3; ++g)
      CHECK(*lp.programs[i].groups[g] == *plan.programs[i].groups[g]);
  const auto a = sim::run(lp.system, lp.programs, {});
  const auto b = simulate(plan, 1);
  CHECK(sim::to_json(a, true).dump() == sim::to_json(b, true).dump());
  CHECK(lp.regions.size() == hazard_regions(plan).size());
  CHECK(lp.meta.at("metadata").at("config") == nlohmann::json::array({2, 0}));
  // determinism of the serialized plan
  const auto again = compile(dag, default_system(), o);
  CHECK(plan_json(again).dump() == plan_json(plan).dump());
  std::filesystem::remove_all(dir);
}

TEST_CASE("compile: empty graph and unknown pid") {
  graph::NodeDag empty;
  CHECK_THROWS_AS(compile(empty, default_system()), Error);
  CompileOptions o;
  o.pids = {42};
  try {
    compile(two_conv(), default_system(), o);
    FAIL("expected UnknownPid");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::UnknownPid);
  }
}
