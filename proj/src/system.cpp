/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/system.hpp"
#include "pucoord/error.hpp"

#include <cstdlib>
#include <set>

namespace pucoord {

using nlohmann::json;

const char *to_string(PuType t) { return t == PuType::X1 ? "1x" : "2x"; }

std::size_t SystemSpec::index_of(int pid) const {
  for (std::size_t i = 0; i < pus.size(); ++i)
    if (pus[i].pid == pid)
      return i;
  throw Error(ErrorKind::UnknownPid, "unknown pid " + std::to_string(pid));
}

const PuSpec &SystemSpec::pu(int pid) const { return pus[index_of(pid)]; }

bool SystemSpec::has(int pid) const {
  for (const auto &p : pus)
    if (p.pid == pid)
      return true;
  return false;
}

void SystemSpec::validate() const {
  std::set<int> pids;
  for (const auto &p : pus) {
    if (!pids.insert(p.pid).second)
      throw Error(ErrorKind::SchemaError, "duplicate pid " + std::to_string(p.pid));
    if (p.pid < 0 || p.pid > 15)
      throw Error(ErrorKind::SchemaError, "pid out of range: " + std::to_string(p.pid));
    if (p.sa_rows <= 0 || p.sa_cols <= 0 || p.compute_scale <= 0)
      throw Error(ErrorKind::SchemaError, "bad SA geometry for pid " + std::to_string(p.pid));
  }
  if (hbm.num_channels <= 0 || hbm.bytes_per_cycle_per_channel <= 0)
    throw Error(ErrorKind::SchemaError, "bad HBM parameters");
  if (efficiency <= 0 || efficiency > 1)
    throw Error(ErrorKind::SchemaError, "efficiency must be in (0, 1]");
  if (isu.latency_matrix) {
    const auto &m = *isu.latency_matrix;
    if (m.size() != pus.size())
      throw Error(ErrorKind::SchemaError, "latency matrix size mismatch");
    for (const auto &row : m)
      if (row.size() != pus.size())
        throw Error(ErrorKind::SchemaError, "latency matrix size mismatch");
  }
}

SystemSpec default_system() {
  SystemSpec s;
  for (int pid = 0; pid < 10; ++pid) {
    PuSpec p;
    p.pid = pid;
    p.type = pid % 2 == 0 ? PuType::X1 : PuType::X2;
    p.sa_cols = p.type == PuType::X1 ? 4 : 8;
    p.slr = pid / 5;
    p.uram_capacity_bytes = p.type == PuType::X1 ? 3 * (1 << 19) : 3 * (1 << 20);
    p.act_buffer_bytes = 2 * (1 << 20);
    s.pus.push_back(p);
  }
  return s;
}

int route_latency(int src_pid, int dst_pid, const SystemSpec &spec) {
  const auto si = spec.index_of(src_pid);
  const auto di = spec.index_of(dst_pid);
  if (spec.isu.latency_matrix)
    return (*spec.isu.latency_matrix)[si][di];
  const auto &isu = spec.isu;
  if (src_pid == dst_pid)
    return isu.same_pu_cycles;
  const int hops = std::abs(src_pid - dst_pid);
  const int slrs = std::abs(spec.pus[si].slr - spec.pus[di].slr);
  return isu.same_pu_cycles + (hops > 1 ? isu.same_slr_hop_cycles : 0) +
         slrs * isu.slr_crossing_penalty_cycles;
}

json to_json(const SystemSpec &s) {
  json pus = json::array();
  for (const auto &p : s.pus)
    pus.push_back({{"pid", p.pid},
                   {"pu_type", to_string(p.type)},
                   {"sa_rows", p.sa_rows},
                   {"sa_cols", p.sa_cols},
                   {"slr", p.slr},
                   {"uram_capacity_bytes", p.uram_capacity_bytes},
                   {"act_buffer_bytes", p.act_buffer_bytes},
                   {"compute_scale", p.compute_scale}});
  json isu = {{"same_pu_cycles", s.isu.same_pu_cycles},
              {"same_slr_hop_cycles", s.isu.same_slr_hop_cycles},
              {"slr_crossing_penalty_cycles", s.isu.slr_crossing_penalty_cycles}};
  if (s.isu.latency_matrix)
    isu["latency_matrix"] = *s.isu.latency_matrix;
  return {{"pus", pus},
          {"hbm",
           {{"num_channels", s.hbm.num_channels},
            {"bytes_per_cycle_per_channel", s.hbm.bytes_per_cycle_per_channel},
            {"address_space", s.hbm.address_space}}},
          {"isu", isu},
          {"clocks", {{"sys_clk_hz", s.clocks.sys_clk_hz}, {"dsp_clk_ratio", s.clocks.dsp_clk_ratio}}},
          {"efficiency", s.efficiency}};
}

SystemSpec system_from_json(const json &j) {
  try {
    SystemSpec s;
    if (j.contains("pus")) {
      for (const auto &p : j.at("pus")) {
        PuSpec pu;
        pu.pid = p.at("pid").get<int>();
        const auto type = p.value("pu_type", std::string("1x"));
        if (type != "1x" && type != "2x")
          throw Error(ErrorKind::SchemaError, "pu_type must be 1x or 2x");
        pu.type = type == "1x" ? PuType::X1 : PuType::X2;
        pu.sa_rows = p.value("sa_rows", 64);
        pu.sa_cols = p.value("sa_cols", pu.type == PuType::X1 ? 4 : 8);
        pu.slr = p.value("slr", 0);
        pu.uram_capacity_bytes = p.value("uram_capacity_bytes",
                                         std::int64_t{pu.type == PuType::X1 ? 3 << 19 : 3 << 20});
        pu.act_buffer_bytes = p.value("act_buffer_bytes", std::int64_t{2 << 20});
        pu.compute_scale = p.value("compute_scale", 1.0);
        s.pus.push_back(pu);
      }
    } else {
      s.pus = default_system().pus;
    }
    if (j.contains("hbm")) {
      const auto &h = j["hbm"];
      s.hbm.num_channels = h.value("num_channels", s.hbm.num_channels);
      s.hbm.bytes_per_cycle_per_channel =
          h.value("bytes_per_cycle_per_channel", s.hbm.bytes_per_cycle_per_channel);
      s.hbm.address_space = h.value("address_space", s.hbm.address_space);
    }
    if (j.contains("isu")) {
      const auto &i = j["isu"];
      s.isu.same_pu_cycles = i.value("same_pu_cycles", s.isu.same_pu_cycles);
      s.isu.same_slr_hop_cycles = i.value("same_slr_hop_cycles", s.isu.same_slr_hop_cycles);
      s.isu.slr_crossing_penalty_cycles =
          i.value("slr_crossing_penalty_cycles", s.isu.slr_crossing_penalty_cycles);
      if (i.contains("latency_matrix"))
        s.isu.latency_matrix = i["latency_matrix"].get<std::vector<std::vector<int>>>();
    }
    if (j.contains("clocks")) {
      s.clocks.sys_clk_hz = j["clocks"].value("sys_clk_hz", s.clocks.sys_clk_hz);
      s.clocks.dsp_clk_ratio = j["clocks"].value("dsp_clk_ratio", s.clocks.dsp_clk_ratio);
    }
    s.efficiency = j.value("efficiency", s.efficiency);
    s.validate();
    return s;
  } catch (const json::exception &e) {
    throw Error(ErrorKind::SchemaError, std::string("system spec: ") + e.what());
  }
}

} // namespace pucoord
