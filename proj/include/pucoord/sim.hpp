/*
 * SPDX-License-Identifier: Apache-2.0
 */

// Discrete-event simulator of the multi-PU system. Each PU runs three
// instruction decoders (LD, CP, ST) over its programs; REQ/ACK tokens travel
// through the switch fabric into per-PU LUTRAM counters; data moves share HBM
// channel bandwidth.

#pragma once

#include "pucoord/isa.hpp"
#include "pucoord/system.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pucoord::sim {

class CostModel {
public:
  virtual ~CostModel() = default;
  virtual std::int64_t gemm_cycles(std::int64_t macs, const PuSpec &pu,
                                   const SystemSpec &spec) const = 0;
};

/// ceil(ceil(macs / (rows * cols * dsp_ratio)) / efficiency), scaled by the
/// PU's compute_scale.
class DefaultCostModel : public CostModel {
public:
  std::int64_t gemm_cycles(std::int64_t macs, const PuSpec &pu,
                           const SystemSpec &spec) const override;
};

std::int64_t gemm_cycles(std::int64_t macs, const PuSpec &pu, const SystemSpec &spec);

/// Round-robin grant over the contenders of one cycle; one grant per call.
class RoundRobinArbiter {
public:
  int grant(const std::vector<int> &contenders);
  void reset() { last_ = -1; }

private:
  int last_ = -1;
};

/// Grant sequence for a cycle-by-cycle list of contender sets.
std::vector<int> arbitrate(const std::vector<std::vector<int>> &contenders_per_cycle);

struct PuProgram {
  int pid = 0;
  std::array<std::optional<isa::Program>, 3> groups; // indexed by isa::Group
  std::int64_t offline_weight_bytes = 0;
};

struct RunOptions {
  std::uint64_t rounds = 1;
  std::uint64_t limit = 1000000000ULL;
  bool record_timelines = true;
  bool throw_on_deadlock = true;
  int sink_pid = -1; // -1: PU finishing last
  std::shared_ptr<const CostModel> cost_model;
};

enum class Cause { WaitReq, WaitAck, Queue, Weights, Hbm, Compute, Control };

const char *to_string(Cause c);

struct Interval {
  std::uint64_t start = 0, end = 0;
  bool busy = true;
  Cause cause = Cause::Control;
  std::uint32_t ip = 0;
};

struct GroupTimeline {
  int pid = 0;
  isa::Group group = isa::Group::LD;
  std::vector<Interval> intervals;
  std::array<std::uint64_t, 7> cycles_by_cause{};
};

enum class TokenKind { Req, Ack };

struct TokenEvent {
  TokenKind kind = TokenKind::Req;
  std::uint32_t bid = 0;
  int src = 0, dst = 0;
  std::uint64_t sent = 0, delivered = 0;
};

struct Access {
  int pid = 0;
  isa::Group group = isa::Group::LD;
  bool write = false;
  std::uint64_t addr = 0, len = 0;
  std::uint64_t start = 0, end = 0;
  std::uint64_t round = 0;
};

struct BlockedInstruction {
  int pid = 0;
  isa::Group group = isa::Group::LD;
  std::uint32_t ip = 0;
  std::string instruction;
  Cause cause = Cause::Control;
};

struct Deadlock {
  std::uint64_t cycle = 0;
  std::vector<BlockedInstruction> blocked;
  std::string describe() const;
};

struct PuRounds {
  int pid = 0;
  std::vector<std::uint64_t> start; // first body instruction of each round
  std::vector<std::uint64_t> end;   // END of each round on the last active group
};

struct SimReport {
  std::uint64_t rounds = 0;
  std::uint64_t total_cycles = 0;
  std::vector<GroupTimeline> timelines;
  std::vector<TokenEvent> tokens;
  std::vector<Access> accesses;
  std::vector<PuRounds> pu_rounds;
  int sink_pid = -1;
  double round_interval_cycles = 0; // steady state at the sink
  double throughput_rps = 0;        // rounds per second at sys_clk
  std::vector<std::uint64_t> latency_cycles;
  std::uint64_t waits_completed = 0;
  std::uint64_t hbm_bytes = 0;
  std::map<int, std::int64_t> uram_peak_bytes; // offline + in-flight dynamic
  std::optional<Deadlock> deadlock;
  double sys_clk_hz = 0;

  double cycles_by_cause(int pid, isa::Group g, Cause c) const;
};

/// Simulates `options.rounds` rounds. Throws DeadlockDetected when no event
/// can fire with rounds incomplete, LimitExceeded past options.limit.
SimReport run(const SystemSpec &spec, const std::vector<PuProgram> &programs,
              const RunOptions &options);

enum class HazardKind { RAW, WAR };

struct Region {
  std::string name;
  std::uint64_t addr = 0, len = 0;
};

struct Hazard {
  HazardKind kind = HazardKind::RAW;
  std::string region;
  std::uint64_t round = 0;
  Access first, second;
  std::string describe() const;
};

/// Checks every read of round r against the writes of round r (RAW) and
/// against the next write round of the same region (WAR).
std::vector<Hazard> detect_hazards(const SimReport &report, const std::vector<Region> &regions);

nlohmann::json to_json(const SimReport &report, bool include_detail = false);
void write_trace_csv(const SimReport &report, std::ostream &out);

} // namespace pucoord::sim
