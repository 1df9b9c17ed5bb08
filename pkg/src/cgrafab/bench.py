"""Bundled synthetic benchmark applications and test fabrics.

Four dataflow shapes sized for an 8x8 fabric: a linear pipeline, a
tree reduction, a stencil-like mesh, and a fan-out-heavy shuffle whose
all-to-all traffic congests narrow-track interconnects.
"""
from __future__ import annotations

import random
from typing import Dict, List, Optional

from .appgraph import AppGraph
from .arch import (
    SB_IN_DELAY,
    SB_OUT_DELAY,
    SBTopology,
    topology_map,
)
from .ir import IrNode, NodeKind, RoutingGraph, SBDir, Side


def pipeline_app(stages: int = 6) -> AppGraph:
    a = AppGraph()
    a.add_instance("io_in", "IO")
    a.add_instance("io_out", "IO")
    prev = "io_in.out0"
    for i in range(stages):
        a.add_instance(f"pe{i}", "PE")
        if i % 2 == 1:
            a.add_instance(f"r{i}", "REG")
            a.add_net(prev, [f"r{i}.in"])
            a.add_net(f"r{i}.out", [f"pe{i}.in0"])
        else:
            a.add_net(prev, [f"pe{i}.in0"])
        prev = f"pe{i}.out0"
    a.add_net(prev, ["io_out.in0"])
    a.check()
    return a


def tree_reduce_app(leaves: int = 8) -> AppGraph:
    assert leaves & (leaves - 1) == 0 and leaves >= 2
    a = AppGraph()
    frontier = []
    for i in range(leaves):
        a.add_instance(f"io{i}", "IO")
        frontier.append(f"io{i}.out0")
    level = 0
    while len(frontier) > 1:
        nxt = []
        for j in range(0, len(frontier), 2):
            name = f"pe_l{level}_{j // 2}"
            a.add_instance(name, "PE")
            a.add_net(frontier[j], [f"{name}.in0"])
            a.add_net(frontier[j + 1], [f"{name}.in1"])
            nxt.append(f"{name}.out0")
        frontier = nxt
        level += 1
    a.add_instance("io_out", "IO")
    a.add_net(frontier[0], ["io_out.in0"])
    a.check()
    return a


def stencil_app(size: int = 3) -> AppGraph:
    a = AppGraph()
    a.add_instance("io_in", "IO")
    a.add_instance("io_out", "IO")
    names = {}
    for j in range(size):
        for i in range(size):
            name = f"pe_{i}_{j}"
            names[(i, j)] = name
            a.add_instance(name, "PE")
            a.add_instance(f"k_{i}_{j}", "CONST", value=i + j)
            a.add_net(f"k_{i}_{j}.out", [f"{name}.in2"])
    a.add_net("io_in.out0", [f"{names[(0, 0)]}.in0"])
    for j in range(size):
        for i in range(size):
            src = f"{names[(i, j)]}.out0"
            sinks = []
            if i + 1 < size:
                sinks.append(f"{names[(i + 1, j)]}.in0")
            if j + 1 < size:
                sinks.append(f"{names[(i, j + 1)]}.in1")
            if sinks:
                a.add_net(src, sinks)
    a.add_net(f"{names[(size - 1, size - 1)]}.out0", ["io_out.in0"])
    a.check()
    return a


def shuffle_app(lanes: int = 8, stages: int = 3, fan: int = 4) -> AppGraph:
    """Multistage shuffle: every lane fans out to `fan` lanes of the next
    rank with a per-stage stride. The crossing traffic saturates
    narrow-track interconnects, making this the congestion-heavy member
    of the suite."""
    assert fan <= 4
    a = AppGraph()
    prev = []
    for i in range(lanes):
        a.add_instance(f"io_in{i}", "IO")
        prev.append(f"io_in{i}.out0")
    for s in range(stages):
        cur = []
        for i in range(lanes):
            name = f"pe_s{s}_{i}"
            a.add_instance(name, "PE")
            cur.append(f"{name}.out0")
        sink_count = [0] * lanes
        for i in range(lanes):
            sinks = []
            for d in range(fan):
                t = (i + (1 << s) * d) % lanes
                if sink_count[t] < 4:
                    sinks.append(f"pe_s{s}_{t}.in{sink_count[t]}")
                    sink_count[t] += 1
            if sinks:
                a.add_net(prev[i], sinks)
        prev = cur
    for i in range(lanes):
        a.add_instance(f"io_out{i}", "IO")
        a.add_net(prev[i], [f"io_out{i}.in0"])
    a.check()
    return a


BENCHMARKS = {
    "pipeline": pipeline_app,
    "tree": tree_reduce_app,
    "stencil": stencil_app,
    "shuffle": shuffle_app,
}


def benchmark(name: str) -> AppGraph:
    try:
        return BENCHMARKS[name]()
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; have "
                       f"{sorted(BENCHMARKS)}")


def random_app(seed: int, n_pe: Optional[int] = None,
               n_io_in: Optional[int] = None) -> AppGraph:
    """Seeded random dataflow DAG for routability experiments."""
    rng = random.Random(seed)
    n_pe = n_pe if n_pe is not None else rng.randint(10, 16)
    n_io_in = n_io_in if n_io_in is not None else rng.randint(2, 4)
    a = AppGraph()
    sources: List[str] = []
    for i in range(n_io_in):
        a.add_instance(f"io_in{i}", "IO")
        sources.append(f"io_in{i}.out0")
    sinks_of: Dict[str, List[str]] = {s: [] for s in sources}
    for i in range(n_pe):
        name = f"pe{i}"
        a.add_instance(name, "PE")
        for port in range(rng.randint(1, 3)):
            drv = rng.choice(sources)
            sinks_of[drv].append(f"{name}.in{port}")
        out = f"{name}.out0"
        sources.append(out)
        sinks_of[out] = []
        if rng.random() < 0.3:
            out2 = f"{name}.out1"
            sources.append(out2)
            sinks_of[out2] = []
    n_out = 0
    for src, sinks in sinks_of.items():
        if not sinks and src.startswith("pe"):
            io = f"io_out{n_out}"
            a.add_instance(io, "IO")
            sinks.append(f"{io}.in0")
            n_out += 1
    for src, sinks in sinks_of.items():
        if sinks:
            a.add_net(src, sinks)
    a.check()
    return a


# --- crafted routability-gap fabric ----------------------------------------------
#
# A 3x3 switch-box mesh where the source core drives only track 1 on its
# east side and the sink's connection box taps only track 0 arriving
# from the west. A disjoint box preserves the track index on every turn,
# so the sink is unreachable; a Wilton box permutes tracks on turns and
# a detour fixes the index.

def crafted_track_change_fabric(topology: SBTopology) -> RoutingGraph:
    tracks = 2
    g = RoutingGraph(3, 3, {16: tracks})
    tmap = topology_map(topology)
    vec = {Side.North: (0, -1), Side.East: (1, 0),
           Side.South: (0, 1), Side.West: (-1, 0)}
    sb: Dict[tuple, int] = {}
    for y in range(3):
        for x in range(3):
            for side in Side:
                for io in (SBDir.Incoming, SBDir.Outgoing):
                    delay = SB_IN_DELAY if io is SBDir.Incoming \
                        else SB_OUT_DELAY
                    for t in range(tracks):
                        sb[(x, y, side, t, io)] = g.add_node(IrNode(
                            kind=NodeKind.SwitchBox, x=x, y=y, bitwidth=16,
                            track=t, side=side, io=io, delay=delay))
    for y in range(3):
        for x in range(3):
            for from_side in Side:
                for t in range(tracks):
                    for to_side in Side:
                        if to_side == from_side:
                            continue
                        t_out = tmap(from_side, to_side, t, tracks)
                        g.add_edge(sb[(x, y, from_side, t, SBDir.Incoming)],
                                   sb[(x, y, to_side, t_out, SBDir.Outgoing)])
            for side in Side:
                dx, dy = vec[side]
                nx, ny = x + dx, y + dy
                if 0 <= nx < 3 and 0 <= ny < 3:
                    for t in range(tracks):
                        g.add_edge(
                            sb[(x, y, side, t, SBDir.Outgoing)],
                            sb[(nx, ny, side.opposite(), t, SBDir.Incoming)])
    src = g.add_node(IrNode(kind=NodeKind.Port, x=0, y=1, bitwidth=16,
                            port_name="pe_out0", delay=2))
    g.add_edge(src, sb[(0, 1, Side.East, 1, SBDir.Outgoing)])
    dst = g.add_node(IrNode(kind=NodeKind.Port, x=2, y=1, bitwidth=16,
                            port_name="pe_in0", delay=0))
    g.add_edge(sb[(2, 1, Side.West, 0, SBDir.Incoming)], dst)
    g.canonicalize()
    assert g.validate() == []
    return g.freeze()


def crafted_track_change_app() -> AppGraph:
    a = AppGraph()
    a.add_instance("a", "PE")
    a.add_instance("b", "PE")
    a.add_net("a.out0", ["b.in0"])
    a.check()
    return a
