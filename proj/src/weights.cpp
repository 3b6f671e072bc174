/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/compiler.hpp"
#include "pucoord/error.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace pucoord::compiler {

namespace {

std::int64_t deficit_of(std::int64_t dyn, std::int64_t hide_cycles, double bpc) {
  const double load = static_cast<double>(dyn) / bpc;
  return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(load - static_cast<double>(hide_cycles) - 1e-9)));
}

std::int64_t peak_pair(const std::vector<std::int64_t> &dyn) {
  std::int64_t peak = 0;
  for (std::size_t k = 0; k < dyn.size(); ++k)
    peak = std::max(peak, dyn[k] + dyn[(k + 1) % dyn.size()]);
  return peak;
}

} // namespace

std::int64_t deficit_stall(const std::vector<TileLoad> &tiles,
                           const std::vector<std::int64_t> &dynamic_bytes, double bytes_per_cycle) {
  std::int64_t total = 0;
  const std::size_t T = tiles.size();
  for (std::size_t k = 0; k < T; ++k)
    total += deficit_of(dynamic_bytes[k], tiles[(k + T - 1) % T].exec_cycles, bytes_per_cycle);
  return total;
}

WeightSchedule schedule_weights(const std::vector<TileLoad> &tiles, std::int64_t capacity,
                                double bytes_per_cycle, std::int64_t chunk_bytes) {
  if (bytes_per_cycle <= 0)
    throw Error(ErrorKind::Usage, "weight bandwidth must be positive");
  WeightSchedule ws;
  ws.capacity = capacity;
  ws.chunk_bytes = std::max<std::int64_t>(1, chunk_bytes);
  ws.bytes_per_cycle = bytes_per_cycle;
  const std::size_t T = tiles.size();
  if (T == 0)
    return ws;

  std::vector<std::int64_t> dyn(T);
  int next_id = 0;
  for (std::size_t k = 0; k < T; ++k) {
    TileWeights tw;
    tw.bytes = tiles[k].bytes;
    tw.exec_cycles = tiles[k].exec_cycles;
    tw.load_window = static_cast<int>((k + T - 1) % T);
    for (std::int64_t off = 0; off < tw.bytes; off += ws.chunk_bytes)
      tw.chunks.push_back({next_id++, std::min(ws.chunk_bytes, tw.bytes - off), false});
    dyn[k] = tw.bytes;
    ws.tiles.push_back(std::move(tw));
  }
  if (peak_pair(dyn) > capacity)
    throw Error(ErrorKind::Infeasible,
                "adjacent tiles need " + std::to_string(peak_pair(dyn)) +
                    " bytes of URAM, capacity is " + std::to_string(capacity));

  std::vector<std::size_t> next_chunk(T, 0);
  std::int64_t offline = 0;
  for (;;) {
    std::size_t pick = T;
    std::tuple<std::int64_t, std::int64_t, std::int64_t> best{-1, -1, 0};
    for (std::size_t k = 0; k < T; ++k) {
      if (next_chunk[k] >= ws.tiles[k].chunks.size())
        continue;
      const auto key = std::make_tuple(
          deficit_of(dyn[k], tiles[(k + T - 1) % T].exec_cycles, bytes_per_cycle), dyn[k],
          -static_cast<std::int64_t>(k));
      if (pick == T || key > best) {
        best = key;
        pick = k;
      }
    }
    if (pick == T)
      break;
    Chunk &c = ws.tiles[pick].chunks[next_chunk[pick]];
    dyn[pick] -= c.bytes;
    if (offline + c.bytes + peak_pair(dyn) > capacity) {
      dyn[pick] += c.bytes;
      break;
    }
    c.offline = true;
    offline += c.bytes;
    ++next_chunk[pick];
    ws.promotion_order.push_back(static_cast<int>(pick));
  }

  ws.offline_bytes = offline;
  ws.peak_dynamic_bytes = peak_pair(dyn);
  for (std::size_t k = 0; k < T; ++k) {
    auto &tw = ws.tiles[k];
    tw.dynamic_bytes = dyn[k];
    tw.offline_bytes = tw.bytes - dyn[k];
    tw.deficit = deficit_of(dyn[k], tiles[(k + T - 1) % T].exec_cycles, bytes_per_cycle);
    ws.stall_cycles += tw.deficit;
  }
  return ws;
}

} // namespace pucoord::compiler
