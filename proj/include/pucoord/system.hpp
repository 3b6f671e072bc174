/*
 * SPDX-License-Identifier: Apache-2.0
 */

// Hardware description of the multi-PU system: PU pool, HBM, switch fabric
// latencies and clocks.

#pragma once

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pucoord {

enum class PuType { X1, X2 };

const char *to_string(PuType t);

struct PuSpec {
  int pid = 0;
  PuType type = PuType::X1;
  int sa_rows = 64;
  int sa_cols = 4;
  int slr = 0;
  std::int64_t uram_capacity_bytes = 0;
  std::int64_t act_buffer_bytes = 0;
  double compute_scale = 1.0; // multiplies GEMM cycles
};

struct HbmSpec {
  int num_channels = 32;
  double bytes_per_cycle_per_channel = 32.0;
  std::uint64_t address_space = 1ULL << 33;

  std::uint64_t channel_size() const { return address_space / static_cast<std::uint64_t>(num_channels); }
  int channel_of(std::uint64_t addr) const {
    return static_cast<int>(addr / channel_size()) % num_channels;
  }
  std::uint64_t channel_base(int ch) const { return channel_size() * static_cast<std::uint64_t>(ch); }
};

struct IsuSpec {
  int same_pu_cycles = 2;
  int same_slr_hop_cycles = 1;
  int slr_crossing_penalty_cycles = 13;
  /// latency[src][dst] indexed by position in SystemSpec::pus; overrides the formula.
  std::optional<std::vector<std::vector<int>>> latency_matrix;
};

struct ClockSpec {
  double sys_clk_hz = 300e6;
  int dsp_clk_ratio = 2;
};

struct SystemSpec {
  std::vector<PuSpec> pus;
  HbmSpec hbm;
  IsuSpec isu;
  ClockSpec clocks;
  double efficiency = 0.98;

  const PuSpec &pu(int pid) const;
  std::size_t index_of(int pid) const; // throws UnknownPid
  bool has(int pid) const;
  void validate() const;
};

/// Five 1x and five 2x PUs over two SLRs; even pids are 1x.
SystemSpec default_system();

/// Token latency between two PUs in sys-clk cycles.
int route_latency(int src_pid, int dst_pid, const SystemSpec &spec);

nlohmann::json to_json(const SystemSpec &spec);
SystemSpec system_from_json(const nlohmann::json &j);

} // namespace pucoord
