/*
 * SPDX-License-Identifier: Apache-2.0
 */

// Model IR: ingestion of the IR-JSON graph, hardware-aware fusion into the
// node DAG consumed by the compiler, and M-dimension tiling.

#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pucoord::graph {

struct Shape {
  std::int64_t c = 0, h = 1, w = 1;
  std::int64_t bytes() const { return c * h * w; } // INT8 elements
  bool operator==(const Shape &) const = default;
};

enum class OpKind { Input, Conv, FC, Add, Relu, Other };

const char *to_string(OpKind op);

struct ModelNode {
  std::string id;
  OpKind op = OpKind::Other;
  std::string other_name; // original op name for OpKind::Other
  Shape in, out;
  std::int64_t kernel_h = 1, kernel_w = 1, stride = 1;
  std::int64_t weight_bytes = 0;
  std::int64_t bias_bytes = 0;
  int quant_scale = 0; // power-of-two exponent

  std::int64_t macs() const;
};

struct ModelEdge {
  std::string src, dst;
  Shape shape;
};

struct ModelGraph {
  std::string name;
  std::vector<ModelNode> nodes;
  std::vector<ModelEdge> edges;

  /// Node indices in topological order, ties broken by id.
  std::vector<std::size_t> topo_order() const;
  std::size_t index_of(const std::string &id) const;
  std::int64_t total_macs() const;
};

inline constexpr int kIrSchemaVersion = 1;

/// Validates and converts IR-JSON. Throws SchemaError, CycleDetected or
/// NegativeDim.
ModelGraph ingest(const nlohmann::json &doc);
ModelGraph ingest_file(const std::filesystem::path &path);
nlohmann::json to_json(const ModelGraph &g);

enum class NodeKind { Conv, FC, FusedConvAdd, FusedConvAddReLU, ConvReLU };

const char *to_string(NodeKind kind);

struct GemmDims {
  std::int64_t m = 0, k = 0, n = 0;
  bool operator==(const GemmDims &) const = default;
};

struct TileDescriptor {
  std::int64_t tile_index = 0;
  std::int64_t row_begin = 0;
  std::int64_t rows = 0;
  std::int64_t weight_bytes = 0;
  std::int64_t macs = 0;
};

struct DagNode {
  std::string id;
  NodeKind kind = NodeKind::Conv;
  bool relu = false;
  GemmDims gemm;
  Shape in, out;
  std::int64_t kernel = 1, stride = 1;
  std::int64_t weight_bytes = 0, bias_bytes = 0;
  int quant_scale = 0;
  int residual_scale = 0;
  /// inputs[0] is the GEMM operand; inputs[1], when present, is the residual.
  std::vector<int> inputs;
  int output = -1;
  std::vector<std::string> fused_from;
  std::vector<TileDescriptor> tiles;
  std::int64_t exec_time_est = 0;

  bool has_residual() const { return inputs.size() > 1; }
  std::int64_t macs() const { return gemm.m * gemm.k * gemm.n; }
};

struct Tensor {
  int id = -1;
  std::string name;
  std::int64_t byte_size = 0;
  int producer = -1; // DAG node index; -1 = model input written by the host
  std::vector<int> consumers;
  bool model_output() const { return consumers.empty(); }
  bool model_input() const { return producer < 0; }
};

struct NodeDag {
  std::vector<DagNode> nodes; // topological order
  std::vector<Tensor> tensors;
  std::vector<std::string> host_ops; // non-GEMM ops contracted away

  std::int64_t total_macs() const;
};

/// Pattern-based fusion: Conv+Add(+ReLU) -> FusedConvAdd(ReLU), Conv+ReLU ->
/// ConvReLU, FC+ReLU -> FC with relu set. Host ops are contracted.
NodeDag fuse(const ModelGraph &g);

/// Splits each node's M dimension into tiles of at most sa_rows rows.
NodeDag tile(NodeDag dag, std::int64_t sa_rows);

} // namespace pucoord::graph
