/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/compiler.hpp"
#include "pucoord/error.hpp"

#include <sstream>

namespace pucoord::compiler {

bool ProfileCache::lookup(const std::string &key, std::int64_t &cycles) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = map_.find(key);
  if (it == map_.end())
    return false;
  cycles = it->second;
  return true;
}

void ProfileCache::store(const std::string &key, std::int64_t cycles) {
  std::lock_guard<std::mutex> lock(mu_);
  map_[key] = cycles;
}

std::size_t ProfileCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return map_.size();
}

namespace {

std::string key_of(const graph::DagNode &n, const PuSpec &pu) {
  std::ostringstream os;
  os << to_string(pu.type) << ':' << pu.sa_rows << 'x' << pu.sa_cols << ':' << pu.compute_scale
     << ':' << n.gemm.m << ',' << n.gemm.k << ',' << n.gemm.n << ':' << n.kernel << '/' << n.stride
     << ':' << n.in.bytes() << '>' << n.out.bytes() << ':' << n.has_residual() << ':'
     << n.tiles.size();
  return os.str();
}

const PuSpec &first_of_type(const SystemSpec &spec, PuType type) {
  for (const auto &p : spec.pus)
    if (p.type == type)
      return p;
  throw Error(ErrorKind::Infeasible, std::string("no PU of type ") + to_string(type));
}

} // namespace

std::int64_t profile_node(const graph::DagNode &node, PuType type, const SystemSpec &spec,
                          ProfileCache *cache) {
  const PuSpec &pu = first_of_type(spec, type);
  const std::string key = key_of(node, pu);
  std::int64_t cycles = 0;
  if (cache && cache->lookup(key, cycles))
    return cycles;

  graph::NodeDag dag;
  graph::DagNode n = node;
  n.inputs.clear();
  auto add_tensor = [&](const std::string &name, std::int64_t bytes, int producer) {
    graph::Tensor t;
    t.id = static_cast<int>(dag.tensors.size());
    t.name = name;
    t.byte_size = bytes;
    t.producer = producer;
    dag.tensors.push_back(t);
    return t.id;
  };
  n.inputs.push_back(add_tensor("in", node.in.bytes(), -1));
  if (node.has_residual())
    n.inputs.push_back(add_tensor("res", node.out.bytes(), -1));
  n.output = add_tensor("out", node.out.bytes(), 0);
  for (int t : n.inputs)
    dag.tensors[static_cast<std::size_t>(t)].consumers.push_back(0);
  if (n.tiles.empty())
    n = graph::tile(graph::NodeDag{{n}, {}, {}}, pu.sa_rows).nodes.front();
  dag.nodes.push_back(n);

  Partition part;
  part.pus = {pu.pid};
  part.cuts = {0, 1};
  part.node_pid = {pu.pid};
  part.stage_time = {0};

  CompileOptions opts;
  opts.all_offline = true;
  opts.dedicated_channels = true;
  opts.io_depth = 1;
  Profiles zero{{0}, {0}};
  const DeploymentPlan plan = lower(dag, spec, part, zero, opts);
  sim::RunOptions ro;
  ro.record_timelines = false;
  const sim::SimReport rep = simulate(plan, 1, ro);
  cycles = static_cast<std::int64_t>(rep.total_cycles);
  if (cache)
    cache->store(key, cycles);
  return cycles;
}

Profiles profile(const graph::NodeDag &dag, const SystemSpec &spec, ProfileCache *cache) {
  Profiles p;
  bool has1 = false, has2 = false;
  for (const auto &pu : spec.pus)
    (pu.type == PuType::X1 ? has1 : has2) = true;
  for (const auto &n : dag.nodes) {
    p.x1.push_back(has1 ? profile_node(n, PuType::X1, spec, cache) : 0);
    p.x2.push_back(has2 ? profile_node(n, PuType::X2, spec, cache) : 0);
  }
  return p;
}

} // namespace pucoord::compiler
