/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "pucoord/compiler.hpp"
#include "pucoord/error.hpp"

#include <fstream>
#include <iterator>

namespace pucoord::compiler {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char *const kGroupFile[3] = {"ld", "cp", "st"};

std::string image_name(int pid, int g, const char *ext) {
  return "images/pu" + std::to_string(pid) + "_" + kGroupFile[g] + ext;
}

void write_bytes(const fs::path &p, const std::vector<std::uint8_t> &bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw Error(ErrorKind::Io, "cannot write " + p.string());
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::Io, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

json plan_json(const DeploymentPlan &plan) {
  json j;
  j["schema_version"] = 1;
  j["system"] = to_json(plan.system);
  j["nodes"] = plan.node_ids;

  const auto &p = plan.partition;
  j["partition"] = {{"pus", p.pus},
                    {"cuts", p.cuts},
                    {"node_pid", p.node_pid},
                    {"stage_time", p.stage_time},
                    {"makespan", p.makespan}};

  json stages = json::object();
  for (const auto &[pid, s] : plan.buffers.stage)
    stages[std::to_string(pid)] = s;
  j["stages"] = stages;

  json tensors = json::array();
  for (const auto &b : plan.buffers.tensors)
    tensors.push_back({{"tensor", b.tensor},
                       {"name", b.name},
                       {"bytes", b.bytes},
                       {"region_bytes", b.region_bytes},
                       {"beta", b.beta},
                       {"regions", b.regions},
                       {"host", b.host},
                       {"producer_pid", b.producer_pid},
                       {"consumer_pids", b.consumer_pids},
                       {"channel", b.channel},
                       {"base", b.base},
                       {"bid_base", b.bid_base}});
  j["tensors"] = tensors;

  json weights = json::object();
  for (const auto &[pid, ws] : plan.weights) {
    json tiles = json::array();
    for (const auto &t : ws.tiles)
      tiles.push_back({{"bytes", t.bytes},
                       {"offline_bytes", t.offline_bytes},
                       {"dynamic_bytes", t.dynamic_bytes},
                       {"exec_cycles", t.exec_cycles},
                       {"deficit", t.deficit}});
    weights[std::to_string(pid)] = {{"capacity", ws.capacity},
                                    {"chunk_bytes", ws.chunk_bytes},
                                    {"offline_bytes", ws.offline_bytes},
                                    {"peak_dynamic_bytes", ws.peak_dynamic_bytes},
                                    {"stall_cycles", ws.stall_cycles},
                                    {"channel", plan.buffers.weight_channel.count(pid) ? plan.buffers.weight_channel.at(pid) : -1},
                                    {"tiles", tiles}};
  }
  j["weights"] = weights;
  j["channels_used"] = plan.buffers.channels_used;

  json programs = json::array();
  for (const auto &pp : plan.programs) {
    json images = json::object();
    for (int g = 0; g < 3; ++g)
      if (pp.groups[static_cast<std::size_t>(g)])
        images[kGroupFile[g]] = image_name(pp.pid, g, ".bin");
    programs.push_back({{"pid", pp.pid}, {"offline_weight_bytes", pp.offline_weight_bytes}, {"images", images}});
  }
  j["programs"] = programs;

  const auto &m = plan.metrics;
  j["metadata"] = {{"config", {m.a, m.b}},
                   {"makespan_cycles", m.makespan},
                   {"predicted_fps", m.predicted_fps},
                   {"predicted_latency_ms", m.predicted_latency_ms},
                   {"pbe", m.pbe}};
  return j;
}

void write_plan(const DeploymentPlan &plan, const fs::path &dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec)
    throw Error(ErrorKind::Io, "cannot create " + (dir / "images").string() + ": " + ec.message());
  for (const auto &pp : plan.programs)
    for (int g = 0; g < 3; ++g) {
      const auto &prog = pp.groups[static_cast<std::size_t>(g)];
      if (!prog)
        continue;
      write_bytes(dir / image_name(pp.pid, g, ".bin"),
                  isa::serialize(isa::to_image(*prog, static_cast<std::uint16_t>(pp.pid))));
      std::ofstream s(dir / image_name(pp.pid, g, ".s"));
      s << isa::disassemble(*prog);
    }
  std::ofstream out(dir / "plan.json");
  if (!out)
    throw Error(ErrorKind::Io, "cannot write " + (dir / "plan.json").string());
  out << plan_json(plan).dump(2) << "\n";
}

LoadedPlan read_plan(const fs::path &dir) {
  LoadedPlan lp;
  std::ifstream in(dir / "plan.json");
  if (!in)
    throw Error(ErrorKind::Io, "cannot read " + (dir / "plan.json").string());
  try {
    in >> lp.meta;
  } catch (const json::exception &e) {
    throw Error(ErrorKind::SchemaError, std::string("plan.json: ") + e.what());
  }
  try {
    if (lp.meta.value("schema_version", 0) != 1)
      throw Error(ErrorKind::SchemaError, "plan.json: unsupported schema_version");
    lp.system = system_from_json(lp.meta.at("system"));
    for (const auto &pj : lp.meta.at("programs")) {
      sim::PuProgram pp;
      pp.pid = pj.at("pid").get<int>();
      pp.offline_weight_bytes = pj.value("offline_weight_bytes", std::int64_t{0});
      const auto &images = pj.at("images");
      for (int g = 0; g < 3; ++g) {
        if (!images.contains(kGroupFile[g]))
          continue;
        const auto img = isa::parse_image(read_bytes(dir / images.at(kGroupFile[g]).get<std::string>()));
        if (img.pu_id != pp.pid || static_cast<int>(img.group) != g)
          throw Error(ErrorKind::BadImage, "image header does not match plan entry for PU " +
                                               std::to_string(pp.pid));
        auto prog = isa::from_image(img);
        isa::validate(prog);
        pp.groups[static_cast<std::size_t>(g)] = std::move(prog);
      }
      lp.programs.push_back(std::move(pp));
    }
    for (const auto &t : lp.meta.at("tensors")) {
      if (t.at("host").get<bool>())
        continue;
      const auto base = t.at("base").get<std::uint64_t>();
      const auto stride = t.at("region_bytes").get<std::uint64_t>();
      for (int i = 0; i < t.at("regions").get<int>(); ++i)
        lp.regions.push_back({t.at("name").get<std::string>() + "#" + std::to_string(i),
                              base + static_cast<std::uint64_t>(i) * stride,
                              t.at("bytes").get<std::uint64_t>()});
    }
  } catch (const json::exception &e) {
    throw Error(ErrorKind::SchemaError, std::string("plan.json: ") + e.what());
  }
  return lp;
}

} // namespace pucoord::compiler
