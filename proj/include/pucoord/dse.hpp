/*
 * SPDX-License-Identifier: Apache-2.0
 */

// Design space exploration: single-batch (a,b) configurations, multi-batch
// compositions over disjoint PU subsets, and Pareto filtering.

#pragma once

#include "pucoord/compiler.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pucoord::dse {

struct PoolSize {
  int a = 0; // 1x PUs
  int b = 0; // 2x PUs
};

/// Counts the PU types present in the system.
PoolSize pool_size(const SystemSpec &spec);

/// Peak DSP throughput of one PU in TOPS (MAC = 2 ops at dsp clock).
double pu_tops(const PuSpec &pu, const SystemSpec &spec);

struct SingleBatchConfig {
  int a = 0, b = 0;
  std::vector<int> pids;
  bool feasible = false;
  std::string error;
  double throughput_fps = 0;
  double latency_ms = 0;
  double tops = 0;
  double pbe = 0;          // from simulated per-PU busy time
  double pbe_profiled = 0; // from partition stage times
  std::size_t occupied = 0;
  std::int64_t makespan = 0;
};

struct MultiBatchSchedule {
  std::vector<std::size_t> members; // indices into the singles list, sorted
  std::size_t batch_count() const { return members.size(); }
  double throughput_fps = 0;
  double latency_ms = 0;
  double tops = 0;
  double pbe_weighted = 0; // by member TOPS
  double pbe_mean = 0;
};

struct ExploreOptions {
  std::uint64_t rounds = 8;
  unsigned threads = 0; // 0: hardware concurrency
  compiler::ProfileCache *cache = nullptr;
};

/// (a+1)(b+1)-1 configurations, each compiled onto the first a 1x and first b
/// 2x pids of the system and simulated. Sorted by (a, b).
std::vector<SingleBatchConfig> enumerate_single(const graph::NodeDag &dag, const SystemSpec &spec,
                                                const ExploreOptions &options = {});

/// Enumerates the feasible (a,b) pairs only.
std::vector<PoolSize> single_shapes(PoolSize pool);

/// Every multiset of feasible singles whose summed (a,b) fits the pool,
/// singletons included, in canonical order.
std::vector<MultiBatchSchedule> compose_multi(const std::vector<SingleBatchConfig> &singles,
                                              PoolSize pool);

struct Constraints {
  std::optional<double> max_latency_ms;
  std::optional<double> min_throughput_fps;
  std::optional<std::size_t> batch_count;
};

/// Indices of schedules that satisfy the constraints and are not dominated:
/// s is dominated by t when t is no worse on both axes and better by more than
/// `tolerance` (relative) on at least one.
std::vector<std::size_t> pareto(const std::vector<MultiBatchSchedule> &schedules, double tolerance,
                                const Constraints &constraints = {});

bool dominates(const MultiBatchSchedule &t, const MultiBatchSchedule &s, double tolerance);
bool satisfies(const MultiBatchSchedule &s, const Constraints &c);

/// mean / max of per-PU busy cycles per round, measured in the simulator.
double simulated_pbe(const sim::SimReport &report, const std::vector<int> &pids);

/// Steady-state round interval of one PU's round ends.
double round_interval(const std::vector<std::uint64_t> &ends);

struct HybridMember {
  int a = 0, b = 0;
  std::vector<int> pids;
  std::vector<int> channels;
  double throughput_fps = 0;
  double latency_ms = 0;
};

struct HybridResult {
  std::vector<HybridMember> members;
  double throughput_fps = 0; // sum over members, measured jointly
  sim::SimReport report;
};

/// Compiles each member on disjoint pids and disjoint channel subsets and runs
/// all of them in one simulation.
HybridResult cosimulate(const graph::NodeDag &dag, const SystemSpec &spec,
                        const std::vector<PoolSize> &members, std::uint64_t rounds,
                        compiler::ProfileCache *cache = nullptr);

struct Exploration {
  PoolSize pool;
  std::vector<SingleBatchConfig> singles;
  std::vector<MultiBatchSchedule> schedules;
  std::vector<std::size_t> frontier;
  double tolerance = 0.01;
  Constraints constraints;
};

Exploration explore(const graph::NodeDag &dag, const SystemSpec &spec, const Constraints &c,
                    double tolerance = 0.01, const ExploreOptions &options = {});

nlohmann::json to_json(const Exploration &e);
void write_csv(const Exploration &e, std::ostream &out);

} // namespace pucoord::dse
