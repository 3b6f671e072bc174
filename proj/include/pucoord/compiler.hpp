/*
 * SPDX-License-Identifier: Apache-2.0
 */

// Lowering of a tiled node DAG onto a PU pool: profiling, contiguous
// partitioning, weight placement, buffer sizing with HBM channel assignment,
// and LD/CP/ST program generation.

#pragma once

#include "pucoord/graph.hpp"
#include "pucoord/sim.hpp"
#include "pucoord/system.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace pucoord::compiler {

// ---------------------------------------------------------------- profiling

/// Thread-safe memo of single-node profiles keyed by node shape and PU type.
class ProfileCache {
public:
  bool lookup(const std::string &key, std::int64_t &cycles) const;
  void store(const std::string &key, std::int64_t cycles);
  std::size_t size() const;

private:
  mutable std::mutex mu_;
  std::map<std::string, std::int64_t> map_;
};

/// exec[type][node] in sys-clk cycles.
struct Profiles {
  std::vector<std::int64_t> x1, x2;
  std::int64_t at(std::size_t node, PuType t) const { return t == PuType::X1 ? x1[node] : x2[node]; }
};

/// Round time of one node simulated alone: weights resident, every tensor on
/// its own HBM channel.
std::int64_t profile_node(const graph::DagNode &node, PuType type, const SystemSpec &spec,
                          ProfileCache *cache = nullptr);
Profiles profile(const graph::NodeDag &dag, const SystemSpec &spec, ProfileCache *cache = nullptr);

// ------------------------------------------------------------- partitioning

struct PoolEntry {
  int pid = 0;
  PuType type = PuType::X1;
};

std::vector<PoolEntry> pool_of(const SystemSpec &spec, const std::vector<int> &pids);

struct Partition {
  std::vector<int> pus;                // pid per slice, pipeline order
  std::vector<std::size_t> cuts;       // slice k = [cuts[k], cuts[k+1])
  std::vector<int> node_pid;           // per DAG node
  std::vector<std::int64_t> stage_time; // per slice
  std::int64_t makespan = 0;

  std::size_t occupied() const;
  std::vector<int> occupied_pids() const;
};

/// Makespan-optimal contiguous split of the topological order over the pool,
/// then fewest occupied PUs, then earliest cut vector. cost[t][i] is node i's
/// time on type t (0 = 1x, 1 = 2x).
Partition partition(const std::vector<std::int64_t> &cost_1x,
                    const std::vector<std::int64_t> &cost_2x, const std::vector<PoolEntry> &pool);
Partition partition(const graph::NodeDag &dag, const std::vector<PoolEntry> &pool,
                    const Profiles &profiles);

// --------------------------------------------------------- weight schedule

struct TileLoad {
  std::int64_t bytes = 0;
  std::int64_t exec_cycles = 0;
};

struct Chunk {
  int id = 0;
  std::int64_t bytes = 0;
  bool offline = false;
};

struct TileWeights {
  std::int64_t bytes = 0;
  std::int64_t exec_cycles = 0;
  std::int64_t offline_bytes = 0;
  std::int64_t dynamic_bytes = 0;
  std::int64_t deficit = 0;  // cycles
  int load_window = -1;      // tile whose execution hides the dynamic load
  std::vector<Chunk> chunks;
};

struct WeightSchedule {
  std::int64_t capacity = 0;
  std::int64_t chunk_bytes = 0;
  double bytes_per_cycle = 0;
  std::vector<TileWeights> tiles;
  std::int64_t offline_bytes = 0;
  std::int64_t peak_dynamic_bytes = 0; // max over cyclically adjacent tile pairs
  std::int64_t stall_cycles = 0;       // sum of deficits
  std::vector<int> promotion_order;    // tile index of each promoted chunk
};

/// Deficit-driven greedy: every chunk starts dynamic; repeatedly promote one
/// chunk of the tile with the largest (deficit, dynamic bytes, -index) while
/// offline + peak adjacent dynamic bytes stays within capacity.
/// Throws Infeasible when the all-dynamic placement does not fit.
WeightSchedule schedule_weights(const std::vector<TileLoad> &tiles, std::int64_t capacity,
                                double bytes_per_cycle, std::int64_t chunk_bytes);

std::int64_t deficit_stall(const std::vector<TileLoad> &tiles,
                           const std::vector<std::int64_t> &dynamic_bytes, double bytes_per_cycle);

// ------------------------------------------------------------------ buffers

struct TensorBuffer {
  int tensor = -1;
  std::string name;
  std::int64_t bytes = 0;
  std::int64_t region_bytes = 0; // 4 KiB aligned stride
  int beta = 1;                  // sync depth (BID cycle length)
  int regions = 1;               // physical regions
  bool host = false;             // model input or output
  int producer_pid = -1;
  std::vector<int> consumer_pids;
  int channel = -1;
  std::uint64_t base = 0;
  std::uint32_t bid_base = 0;

  std::uint64_t region(int i) const { return base + static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(region_bytes); }
};

struct BufferPlan {
  std::map<int, int> stage; // pid -> pipeline stage
  std::vector<TensorBuffer> tensors;
  std::map<int, int> weight_channel;          // pid -> channel
  std::map<int, std::uint64_t> weight_base;   // pid -> base address
  int channels_used = 0;
};

/// Stages are longest-path depths in the PU dependency graph;
/// beta = max consumer stage distance + 1; model I/O gets io_depth regions.
BufferPlan plan_buffers(const Partition &part, const graph::NodeDag &dag, int io_depth = 4);

/// One access window of a tensor in the steady-state period.
struct AccessWindow {
  int tensor = -1;
  bool write = false;
  int pid = -1;
  int node = -1;
  double start = 0, end = 0; // cycles, may exceed the period
};

struct SteadyTrace {
  double period = 0;
  std::vector<AccessWindow> windows;
};

SteadyTrace steady_state_trace(const Partition &part, const graph::NodeDag &dag,
                               const Profiles &profiles, const BufferPlan &plan,
                               const SystemSpec &spec);

/// Assigns one channel per occupied PU for weights, then places tensors
/// first-fit so that no shared channel carries overlapping same-type windows
/// and forked inputs of one consumer are split. Allocates 4 KiB-aligned
/// regions. Throws ChannelsExhausted.
void assign_channels(BufferPlan &plan, const SteadyTrace &trace, const graph::NodeDag &dag,
                     const HbmSpec &hbm, const std::vector<int> &channels);

bool windows_overlap(const AccessWindow &a, const AccessWindow &b, double period);

// ------------------------------------------------------------------ codegen

struct Metrics {
  int a = 0, b = 0; // 1x / 2x PUs in the pool
  std::int64_t makespan = 0;
  double predicted_fps = 0;
  double predicted_latency_ms = 0;
  double pbe = 0;
};

struct DeploymentPlan {
  SystemSpec system;
  std::vector<std::string> node_ids;
  Partition partition;
  std::map<int, WeightSchedule> weights; // pid -> schedule
  BufferPlan buffers;
  std::vector<sim::PuProgram> programs;
  Metrics metrics;
};

struct CompileOptions {
  std::vector<int> pids;     // empty: every PU of the system
  std::vector<int> channels; // empty: every HBM channel
  int io_depth = 4;
  std::int64_t chunk_divisor = 64;
  std::map<int, int> region_override; // tensor -> physical regions (testing)
  bool all_offline = false;           // ignore URAM capacity (profiling)
  bool dedicated_channels = false;    // one channel per tensor (profiling)
  ProfileCache *cache = nullptr;
  const Profiles *profiles = nullptr; // precomputed, else profiled here
};

std::vector<sim::PuProgram> codegen(const graph::NodeDag &dag, const Partition &part,
                                    const std::map<int, WeightSchedule> &weights,
                                    const BufferPlan &buffers);

DeploymentPlan compile(const graph::NodeDag &dag, const SystemSpec &spec,
                       const CompileOptions &options = {});

/// Everything after partitioning, for a caller-supplied partition.
DeploymentPlan lower(const graph::NodeDag &dag, const SystemSpec &spec, const Partition &part,
                     const Profiles &profiles, const CompileOptions &options);

/// mean / max of the occupied slices' stage times.
double pbe(const std::vector<std::int64_t> &stage_times);

/// Buffer regions checked for hazards (host-managed I/O excluded).
std::vector<sim::Region> hazard_regions(const DeploymentPlan &plan);

/// Runs the plan in the simulator with its resident-weight sizes.
sim::SimReport simulate(const DeploymentPlan &plan, std::uint64_t rounds,
                        sim::RunOptions options = {});

// ------------------------------------------------------------ serialization

nlohmann::json plan_json(const DeploymentPlan &plan);

/// plan.json, images/pu{pid}_{ld,cp,st}.bin and matching .s listings.
void write_plan(const DeploymentPlan &plan, const std::filesystem::path &dir);

struct LoadedPlan {
  SystemSpec system;
  std::vector<sim::PuProgram> programs;
  std::vector<sim::Region> regions;
  nlohmann::json meta;
};

LoadedPlan read_plan(const std::filesystem::path &dir);

} // namespace pucoord::compiler
