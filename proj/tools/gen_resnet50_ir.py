#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Emit ResNet-50 (v1.5, 224x224, INT8) as IR-JSON and print layer statistics."""

import argparse
import json
import sys


class Builder:
    def __init__(self):
        self.nodes = []
        self.edges = []

    def add(self, label, op, dims, src=(), **extra):
        node_id = "n%03d_%s" % (len(self.nodes), label)
        node = {"id": node_id, "op": op, "dims": dims}
        node.update(extra)
        self.nodes.append(node)
        for s, shape in src:
            self.edges.append({"src_node": s, "dst_node": node_id, "tensor_shape": list(shape)})
        return node_id

    def conv(self, name, src, c, h, w, m, k, stride):
        pad = k // 2
        p = (h + 2 * pad - k) // stride + 1
        q = (w + 2 * pad - k) // stride + 1
        node = self.add(
            name, "conv",
            {"in": [c, h, w], "out": [m, p, q], "kernel": [k, k], "stride": stride},
            [(src, (c, h, w))],
            weight_bytes=m * c * k * k, bias_bytes=4 * m, quant_scale=-7)
        return node, (m, p, q)

    def relu(self, name, src, shape):
        return self.add(name, "relu", {"shape": list(shape)}, [(src, shape)], quant_scale=0)


def resnet50():
    b = Builder()
    shape = (3, 224, 224)
    x = b.add("input", "input", {"shape": list(shape)})
    x, shape = b.conv("conv1", x, *shape, 64, 7, 2)
    x = b.relu("relu1", x, shape)
    c, h, w = shape
    oh = (h + 2 - 3) // 2 + 1
    pooled = (c, oh, oh)
    x = b.add("maxpool", "other", {"in": list(shape), "out": list(pooled)}, [(x, shape)],
              name="MaxPool")
    shape = pooled
    for stage, (blocks, width) in enumerate(zip((3, 4, 6, 3), (64, 128, 256, 512)), 1):
        for blk in range(blocks):
            stride = 2 if (blk == 0 and stage > 1) else 1
            pre = "l%d.%d." % (stage, blk)
            out_c = width * 4
            identity, id_shape = x, shape
            if blk == 0:
                identity, id_shape = b.conv(pre + "down", x, *shape, out_c, 1, stride)
            y, s = b.conv(pre + "conv1", x, *shape, width, 1, 1)
            y = b.relu(pre + "relu1", y, s)
            y, s = b.conv(pre + "conv2", y, *s, width, 3, stride)
            y = b.relu(pre + "relu2", y, s)
            y, s = b.conv(pre + "conv3", y, *s, out_c, 1, 1)
            assert s == id_shape
            a = b.add(pre + "add", "add", {"shape": list(s)}, [(y, s), (identity, id_shape)],
                      quant_scale=-1)
            x = b.relu(pre + "relu3", a, s)
            shape = s
    c = shape[0]
    x = b.add("avgpool", "other", {"in": list(shape), "out": [c, 1, 1]}, [(x, shape)],
              name="GlobalAveragePool")
    b.add("fc", "fc", {"in": c, "out": 1000}, [(x, (c, 1, 1))],
          weight_bytes=1000 * c, bias_bytes=4000, quant_scale=-8)
    return {"schema_version": 1, "name": "resnet50", "nodes": b.nodes, "edges": b.edges}


def stats(ir):
    ops = {}
    macs = 0
    for n in ir["nodes"]:
        ops[n["op"]] = ops.get(n["op"], 0) + 1
        d = n["dims"]
        if n["op"] == "conv":
            m, p, q = d["out"]
            macs += m * p * q * d["in"][0] * d["kernel"][0] * d["kernel"][1]
        elif n["op"] == "fc":
            macs += d["in"] * d["out"]
    conv1 = next(n for n in ir["nodes"] if n["id"].endswith("_conv1"))
    return {
        "ops": ops,
        "macs": macs,
        "weight_bytes": sum(n.get("weight_bytes", 0) for n in ir["nodes"]),
        "gemm_nodes": ops.get("conv", 0) + ops.get("fc", 0),
        "residual_adds": ops.get("add", 0),
        "conv1_tiles": -(-conv1["dims"]["out"][0] // 64),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--output", default="-")
    ap.add_argument("--stats", action="store_true", help="print statistics to stderr")
    args = ap.parse_args()
    ir = resnet50()
    text = json.dumps(ir, indent=1)
    if args.output == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(args.output, "w") as f:
            f.write(text + "\n")
    if args.stats:
        json.dump(stats(ir), sys.stderr, indent=1)
        sys.stderr.write("\n")


if __name__ == "__main__":
    main()
