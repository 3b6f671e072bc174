/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/graph.hpp"
#include "pucoord/error.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>

namespace pucoord::graph {

using nlohmann::json;

const char *to_string(OpKind op) {
  switch (op) {
  case OpKind::Input: return "input";
  case OpKind::Conv: return "conv";
  case OpKind::FC: return "fc";
  case OpKind::Add: return "add";
  case OpKind::Relu: return "relu";
  case OpKind::Other: return "other";
  }
  return "?";
}

const char *to_string(NodeKind kind) {
  switch (kind) {
  case NodeKind::Conv: return "Conv";
  case NodeKind::FC: return "FC";
  case NodeKind::FusedConvAdd: return "FusedConvAdd";
  case NodeKind::FusedConvAddReLU: return "FusedConvAddReLU";
  case NodeKind::ConvReLU: return "ConvReLU";
  }
  return "?";
}

std::int64_t ModelNode::macs() const {
  switch (op) {
  case OpKind::Conv: return out.bytes() * in.c * kernel_h * kernel_w;
  case OpKind::FC: return out.c * in.c;
  default: return 0;
  }
}

std::size_t ModelGraph::index_of(const std::string &id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id)
      return i;
  throw Error(ErrorKind::SchemaError, "unknown node '" + id + "'");
}

std::int64_t ModelGraph::total_macs() const {
  std::int64_t s = 0;
  for (const auto &n : nodes)
    s += n.macs();
  return s;
}

std::vector<std::size_t> ModelGraph::topo_order() const {
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    idx[nodes[i].id] = i;
  std::vector<std::vector<std::size_t>> succ(nodes.size());
  std::vector<int> indeg(nodes.size(), 0);
  for (const auto &e : edges) {
    auto s = idx.at(e.src), d = idx.at(e.dst);
    succ[s].push_back(d);
    ++indeg[d];
  }
  auto cmp = [this](std::size_t a, std::size_t b) { return nodes[a].id > nodes[b].id; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> ready(cmp);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (indeg[i] == 0)
      ready.push(i);
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    auto n = ready.top();
    ready.pop();
    order.push_back(n);
    for (auto d : succ[n])
      if (--indeg[d] == 0)
        ready.push(d);
  }
  if (order.size() != nodes.size())
    throw Error(ErrorKind::CycleDetected, "model graph contains a cycle");
  return order;
}

namespace {

[[noreturn]] void schema(const std::string &msg) { throw Error(ErrorKind::SchemaError, msg); }

std::int64_t dim(const json &v, const std::string &what) {
  if (!v.is_number_integer())
    schema(what + ": expected integer");
  auto x = v.get<std::int64_t>();
  if (x < 0)
    throw Error(ErrorKind::NegativeDim, what + " = " + std::to_string(x));
  return x;
}

Shape shape_of(const json &v, const std::string &what) {
  if (v.is_number_integer())
    return Shape{dim(v, what), 1, 1};
  if (!v.is_array() || v.empty() || v.size() > 4)
    schema(what + ": expected [C,H,W] or [N,C,H,W]");
  std::vector<std::int64_t> d;
  for (const auto &x : v)
    d.push_back(dim(x, what));
  if (d.size() == 4) {
    if (d[0] != 1)
      schema(what + ": batch must be 1");
    d.erase(d.begin());
  }
  d.resize(3, 1);
  return Shape{d[0], d[1], d[2]};
}

json shape_json(const Shape &s) { return json::array({s.c, s.h, s.w}); }

OpKind parse_op(const std::string &op) {
  if (op == "input") return OpKind::Input;
  if (op == "conv") return OpKind::Conv;
  if (op == "fc") return OpKind::FC;
  if (op == "add") return OpKind::Add;
  if (op == "relu") return OpKind::Relu;
  return OpKind::Other;
}

const json &field(const json &obj, const char *key, const std::string &ctx) {
  auto it = obj.find(key);
  if (it == obj.end())
    schema(ctx + ": missing '" + key + "'");
  return *it;
}

ModelNode parse_node(const json &j) {
  if (!j.is_object())
    schema("node: expected object");
  ModelNode n;
  const auto &id = field(j, "id", "node");
  if (!id.is_string())
    schema("node id must be a string");
  n.id = id.get<std::string>();
  const std::string ctx = "node '" + n.id + "'";
  const auto &op = field(j, "op", ctx);
  if (!op.is_string())
    schema(ctx + ": op must be a string");
  const auto op_name = op.get<std::string>();
  n.op = parse_op(op_name);
  if (n.op == OpKind::Other)
    n.other_name = op_name == "other" ? j.value("name", std::string("other")) : op_name;

  const json dims = j.value("dims", json::object());
  if (!dims.is_object())
    schema(ctx + ": dims must be an object");
  switch (n.op) {
  case OpKind::Conv: {
    n.in = shape_of(field(dims, "in", ctx), ctx + " in");
    n.out = shape_of(field(dims, "out", ctx), ctx + " out");
    const auto &k = field(dims, "kernel", ctx);
    if (k.is_array() && k.size() == 2) {
      n.kernel_h = dim(k[0], ctx + " kernel");
      n.kernel_w = dim(k[1], ctx + " kernel");
    } else {
      n.kernel_h = n.kernel_w = dim(k, ctx + " kernel");
    }
    n.stride = dims.contains("stride") ? dim(dims["stride"], ctx + " stride") : 1;
    n.weight_bytes = n.out.c * n.in.c * n.kernel_h * n.kernel_w;
    n.bias_bytes = 4 * n.out.c;
    break;
  }
  case OpKind::FC:
    n.in = Shape{shape_of(field(dims, "in", ctx), ctx + " in").bytes(), 1, 1};
    n.out = Shape{shape_of(field(dims, "out", ctx), ctx + " out").bytes(), 1, 1};
    n.weight_bytes = n.out.c * n.in.c;
    n.bias_bytes = 4 * n.out.c;
    break;
  case OpKind::Input:
  case OpKind::Add:
  case OpKind::Relu:
    n.in = n.out = shape_of(field(dims, "shape", ctx), ctx + " shape");
    break;
  case OpKind::Other:
    if (dims.contains("in"))
      n.in = shape_of(dims["in"], ctx + " in");
    if (dims.contains("out"))
      n.out = shape_of(dims["out"], ctx + " out");
    if (dims.contains("shape"))
      n.in = n.out = shape_of(dims["shape"], ctx + " shape");
    break;
  }
  if (j.contains("weight_bytes"))
    n.weight_bytes = dim(j["weight_bytes"], ctx + " weight_bytes");
  if (j.contains("bias_bytes"))
    n.bias_bytes = dim(j["bias_bytes"], ctx + " bias_bytes");
  if (j.contains("quant_scale")) {
    if (!j["quant_scale"].is_number_integer())
      schema(ctx + ": quant_scale must be an integer exponent");
    n.quant_scale = j["quant_scale"].get<int>();
  }
  return n;
}

} // namespace

ModelGraph ingest(const json &doc) {
  if (!doc.is_object())
    schema("IR root must be an object");
  if (doc.contains("schema_version") && doc["schema_version"] != kIrSchemaVersion)
    schema("unsupported schema_version");
  ModelGraph g;
  g.name = doc.value("name", std::string("model"));
  const auto &nodes = field(doc, "nodes", "IR");
  if (!nodes.is_array())
    schema("nodes must be an array");
  std::set<std::string> ids;
  for (const auto &j : nodes) {
    g.nodes.push_back(parse_node(j));
    if (!ids.insert(g.nodes.back().id).second)
      schema("duplicate node id '" + g.nodes.back().id + "'");
  }
  const json edges = doc.value("edges", json::array());
  if (!edges.is_array())
    schema("edges must be an array");
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto &j : edges) {
    if (!j.is_object())
      schema("edge: expected object");
    ModelEdge e;
    auto endpoint = [&](const char *a, const char *b) {
      const json *v = j.contains(a) ? &j[a] : j.contains(b) ? &j[b] : nullptr;
      if (!v || !v->is_string())
        schema(std::string("edge: missing '") + a + "'");
      return v->get<std::string>();
    };
    e.src = endpoint("src_node", "src");
    e.dst = endpoint("dst_node", "dst");
    if (!ids.count(e.src) || !ids.count(e.dst))
      schema("edge " + e.src + "->" + e.dst + " references an unknown node");
    if (e.src == e.dst)
      throw Error(ErrorKind::CycleDetected, "self-loop on '" + e.src + "'");
    if (!seen.insert({e.src, e.dst}).second)
      schema("duplicate edge " + e.src + "->" + e.dst);
    if (j.contains("tensor_shape"))
      e.shape = shape_of(j["tensor_shape"], "edge tensor_shape");
    else if (j.contains("shape"))
      e.shape = shape_of(j["shape"], "edge shape");
    else
      e.shape = g.nodes[g.index_of(e.src)].out;
    g.edges.push_back(e);
  }
  (void)g.topo_order();

  std::map<std::string, int> indeg;
  for (const auto &e : g.edges)
    ++indeg[e.dst];
  for (const auto &n : g.nodes) {
    const int d = indeg[n.id];
    if (n.op == OpKind::Input && d != 0)
      schema("input node '" + n.id + "' has predecessors");
    if ((n.op == OpKind::Add || n.op == OpKind::Relu || n.op == OpKind::Other) && d == 0)
      schema("node '" + n.id + "' has no predecessor");
    if ((n.op == OpKind::Conv || n.op == OpKind::FC || n.op == OpKind::Relu) && d > 1)
      schema("node '" + n.id + "' expects a single input");
  }
  return g;
}

ModelGraph ingest_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error &e) {
    schema(path.string() + ": " + e.what());
  }
  return ingest(doc);
}

json to_json(const ModelGraph &g) {
  json nodes = json::array();
  for (const auto &n : g.nodes) {
    json j;
    j["id"] = n.id;
    j["op"] = to_string(n.op);
    json dims = json::object();
    switch (n.op) {
    case OpKind::Conv:
      dims = {{"in", shape_json(n.in)},
              {"out", shape_json(n.out)},
              {"kernel", json::array({n.kernel_h, n.kernel_w})},
              {"stride", n.stride}};
      break;
    case OpKind::FC: dims = {{"in", n.in.c}, {"out", n.out.c}}; break;
    case OpKind::Other:
      j["name"] = n.other_name;
      dims = {{"in", shape_json(n.in)}, {"out", shape_json(n.out)}};
      break;
    default: dims = {{"shape", shape_json(n.out)}}; break;
    }
    j["dims"] = dims;
    j["weight_bytes"] = n.weight_bytes;
    j["bias_bytes"] = n.bias_bytes;
    j["quant_scale"] = n.quant_scale;
    nodes.push_back(j);
  }
  json edges = json::array();
  for (const auto &e : g.edges)
    edges.push_back({{"src_node", e.src}, {"dst_node", e.dst}, {"tensor_shape", shape_json(e.shape)}});
  return {{"schema_version", kIrSchemaVersion}, {"name", g.name}, {"nodes", nodes}, {"edges", edges}};
}

std::int64_t NodeDag::total_macs() const {
  std::int64_t s = 0;
  for (const auto &n : nodes)
    s += n.macs();
  return s;
}

NodeDag fuse(const ModelGraph &g) {
  const auto order = g.topo_order();
  const std::size_t n = g.nodes.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < order.size(); ++i)
    rank[order[i]] = i;
  std::vector<std::vector<std::size_t>> pred(n), succ(n);
  for (const auto &e : g.edges) {
    auto s = g.index_of(e.src), d = g.index_of(e.dst);
    succ[s].push_back(d);
    pred[d].push_back(s);
  }
  for (auto &p : pred)
    std::sort(p.begin(), p.end(), [&](auto a, auto b) { return rank[a] < rank[b]; });

  auto op = [&](std::size_t i) { return g.nodes[i].op; };
  auto is_gemm = [&](std::size_t i) { return op(i) == OpKind::Conv || op(i) == OpKind::FC; };
  auto sole_succ = [&](std::size_t i, OpKind k) -> long {
    return succ[i].size() == 1 && op(succ[i][0]) == k ? static_cast<long>(succ[i][0]) : -1;
  };

  // owner[x] = GEMM node that absorbs add/relu node x
  std::vector<long> owner(n, -1);
  std::vector<long> fused_add(n, -1), fused_relu(n, -1);
  for (auto a : order) {
    if (op(a) != OpKind::Add)
      continue;
    if (pred[a].size() != 2)
      throw Error(ErrorKind::UnsupportedPattern, "add '" + g.nodes[a].id + "' needs two inputs");
    long pick = -1;
    for (auto p : pred[a])
      if (op(p) == OpKind::Conv && sole_succ(p, OpKind::Add) == static_cast<long>(a) &&
          fused_add[p] < 0)
        pick = static_cast<long>(p); // later in topological order wins
    if (pick < 0)
      throw Error(ErrorKind::UnsupportedPattern,
                  "add '" + g.nodes[a].id + "' has no fusable conv producer");
    fused_add[pick] = static_cast<long>(a);
    owner[a] = pick;
    if (long r = sole_succ(a, OpKind::Relu); r >= 0) {
      fused_relu[pick] = r;
      owner[r] = pick;
    }
  }
  for (auto c : order) {
    if (!is_gemm(c) || fused_add[c] >= 0)
      continue;
    if (long r = sole_succ(c, OpKind::Relu); r >= 0) {
      fused_relu[c] = r;
      owner[r] = static_cast<long>(c);
    }
  }
  for (auto i : order) {
    if ((op(i) == OpKind::Add || op(i) == OpKind::Relu) && owner[i] < 0)
      throw Error(ErrorKind::UnsupportedPattern,
                  std::string(to_string(op(i))) + " '" + g.nodes[i].id +
                      "' cannot be fused into a GEMM producer");
  }

  NodeDag dag;
  std::vector<int> dag_index(n, -1);
  for (auto i : order)
    if (is_gemm(i)) {
      dag_index[i] = static_cast<int>(dag.nodes.size());
      dag.nodes.emplace_back();
    }

  // value[x] = tensor carrying model node x's output
  std::vector<int> value(n, -1);
  auto new_tensor = [&](const std::string &name, int producer) {
    Tensor t;
    t.id = static_cast<int>(dag.tensors.size());
    t.name = name;
    t.producer = producer;
    dag.tensors.push_back(t);
    return t.id;
  };
  auto grow = [&](int t, std::int64_t bytes) {
    dag.tensors[t].byte_size = std::max(dag.tensors[t].byte_size, bytes);
  };

  for (auto i : order) {
    const auto &m = g.nodes[i];
    if (m.op == OpKind::Input) {
      value[i] = new_tensor(m.id, -1);
      grow(value[i], m.out.bytes());
      continue;
    }
    if (m.op == OpKind::Other) {
      dag.host_ops.push_back(m.id);
      value[i] = value[pred[i].front()];
      if (value[i] >= 0)
        grow(value[i], std::max(m.in.bytes(), m.out.bytes()));
      continue;
    }
    if (!is_gemm(i)) {
      value[i] = value[owner[i]];
      continue;
    }
    const int di = dag_index[i];
    DagNode d;
    d.id = m.id;
    d.fused_from.push_back(m.id);
    d.in = m.in;
    d.out = m.out;
    d.kernel = m.kernel_h;
    d.stride = m.stride;
    d.weight_bytes = m.weight_bytes;
    d.bias_bytes = m.bias_bytes;
    d.quant_scale = m.quant_scale;
    if (m.op == OpKind::Conv)
      d.gemm = {m.out.c, m.in.c * m.kernel_h * m.kernel_w, m.out.h * m.out.w};
    else
      d.gemm = {m.out.c, m.in.c, 1};
    d.kind = m.op == OpKind::FC ? NodeKind::FC : NodeKind::Conv;

    const int in_t =
        pred[i].empty() ? new_tensor(m.id + ".in", -1) : value[pred[i].front()];
    grow(in_t, m.in.bytes());
    d.inputs.push_back(in_t);

    if (fused_add[i] >= 0) {
      const auto a = static_cast<std::size_t>(fused_add[i]);
      d.fused_from.push_back(g.nodes[a].id);
      d.residual_scale = g.nodes[a].quant_scale;
      const auto other = pred[a][0] == i ? pred[a][1] : pred[a][0];
      const int res_t = value[other];
      grow(res_t, m.out.bytes());
      d.inputs.push_back(res_t);
      d.kind = NodeKind::FusedConvAdd;
    }
    if (fused_relu[i] >= 0) {
      d.fused_from.push_back(g.nodes[static_cast<std::size_t>(fused_relu[i])].id);
      d.relu = true;
      if (d.kind == NodeKind::FusedConvAdd)
        d.kind = NodeKind::FusedConvAddReLU;
      else if (d.kind == NodeKind::Conv)
        d.kind = NodeKind::ConvReLU;
    }
    d.output = new_tensor(m.id + ".out", di);
    grow(d.output, m.out.bytes());
    value[i] = d.output;
    dag.nodes[di] = std::move(d);
  }

  for (std::size_t k = 0; k < dag.nodes.size(); ++k)
    for (int t : dag.nodes[k].inputs) {
      auto &c = dag.tensors[t].consumers;
      if (std::find(c.begin(), c.end(), static_cast<int>(k)) == c.end())
        c.push_back(static_cast<int>(k));
    }
  for (const auto &t : dag.tensors)
    if (t.model_input() && t.consumers.empty())
      throw Error(ErrorKind::UnsupportedPattern, "model input '" + t.name + "' is never consumed");
  if (dag.nodes.empty())
    throw Error(ErrorKind::EmptyGraph, "model has no conv or fc layer");
  return dag;
}

NodeDag tile(NodeDag dag, std::int64_t sa_rows) {
  if (sa_rows <= 0)
    throw Error(ErrorKind::InvalidProgram, "sa_rows must be positive");
  for (auto &d : dag.nodes) {
    d.tiles.clear();
    const std::int64_t m = d.gemm.m;
    const std::int64_t count = (m + sa_rows - 1) / sa_rows;
    for (std::int64_t t = 0; t < count; ++t) {
      TileDescriptor td;
      td.tile_index = t;
      td.row_begin = t * sa_rows;
      td.rows = std::min(sa_rows, m - td.row_begin);
      const std::int64_t end = td.row_begin + td.rows;
      td.weight_bytes = d.weight_bytes * end / m - d.weight_bytes * td.row_begin / m;
      td.macs = td.rows * d.gemm.k * d.gemm.n;
      d.tiles.push_back(td);
    }
  }
  return dag;
}

} // namespace pucoord::graph
