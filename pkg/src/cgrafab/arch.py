"""Builders that turn a declarative architecture spec into a routing graph.

A uniform fabric is a width x height grid of tiles. Every tile carries a
switch box (4 sides x num_tracks x in/out nodes per layer); boundary
tiles host IO cores, designated interior columns host MEM cores and the
rest host PE cores. Core inputs are fed by connection-box muxes tapping
the incoming tracks, core outputs drive the outgoing switch box sides.
"""
from __future__ import annotations

import configparser
import enum
import io as _io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import EmptyPolicy, InvalidSpec, ParseError, SameSide
from .ir import IrNode, NodeId, NodeKind, RoutingGraph, SBDir, Side

# Node delays used by the generated graphs: one time unit per tile hop,
# charged on the outgoing switch box node; registers cost one unit.
SB_OUT_DELAY = 1
SB_IN_DELAY = 0
REGISTER_DELAY = 1
REGMUX_DELAY = 0

# Direction each side points at, in (dx, dy) with y growing southward.
_SIDE_VECTOR = {
    Side.North: (0, -1),
    Side.East: (1, 0),
    Side.South: (0, 1),
    Side.West: (-1, 0),
}


@enum.unique
class SBTopology(enum.Enum):
    Wilton = "wilton"
    Disjoint = "disjoint"


@dataclass(frozen=True)
class CoreSpec:
    name: str
    inputs: Tuple[Tuple[str, int], ...]
    outputs: Tuple[Tuple[str, int], ...]
    delay: int = 0

    def __post_init__(self):
        names = [p for p, _ in self.inputs] + [p for p, _ in self.outputs]
        if len(set(names)) != len(names):
            raise InvalidSpec(f"core {self.name}: duplicate port names")
        if not names:
            raise InvalidSpec(f"core {self.name}: needs at least one port")

    @staticmethod
    def simple(name: str, n_in: int, n_out: int, bitwidth: int = 16,
               delay: int = 0) -> "CoreSpec":
        return CoreSpec(
            name=name,
            inputs=tuple((f"in{i}", bitwidth) for i in range(n_in)),
            outputs=tuple((f"out{i}", bitwidth) for i in range(n_out)),
            delay=delay)


@dataclass(frozen=True)
class PortConnPolicy:
    cb_sides: Tuple[Side, ...] = (Side.North, Side.East, Side.South, Side.West)
    sb_out_sides: Tuple[Side, ...] = (Side.North, Side.East, Side.South, Side.West)

    def __post_init__(self):
        if not self.cb_sides or not self.sb_out_sides:
            raise EmptyPolicy("policy side sets must be non-empty")


def default_pe_core() -> CoreSpec:
    return CoreSpec.simple("pe", n_in=4, n_out=2, delay=2)


def default_mem_core() -> CoreSpec:
    return CoreSpec.simple("mem", n_in=2, n_out=1, delay=3)


def default_io_core() -> CoreSpec:
    return CoreSpec.simple("io", n_in=1, n_out=1, delay=0)


@dataclass
class ArchSpec:
    width: int = 8
    height: int = 8
    layers: Tuple[Tuple[int, int], ...] = ((16, 5),)
    sb_topology: SBTopology = SBTopology.Wilton
    reg_density: float = 0.0
    mem_column_stride: int = 0
    pe_core: CoreSpec = field(default_factory=default_pe_core)
    mem_core: CoreSpec = field(default_factory=default_mem_core)
    io_core: CoreSpec = field(default_factory=default_io_core)
    port_policy: PortConnPolicy = field(default_factory=PortConnPolicy)

    def check(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidSpec("array must be at least 1x1")
        if not self.layers:
            raise InvalidSpec("at least one layer required")
        for bw, tracks in self.layers:
            if tracks < 1:
                raise InvalidSpec(f"layer {bw}: num_tracks must be >= 1")
        if not 0.0 <= self.reg_density <= 1.0:
            raise InvalidSpec("reg_density must be within [0, 1]")
        if self.mem_column_stride < 0:
            raise InvalidSpec("mem_column_stride must be 0 (none) or >= 1")

    def tile_role(self, x: int, y: int) -> str:
        """Core role hosted at a tile: io on the boundary ring, mem on
        every mem_column_stride-th interior column, pe elsewhere."""
        if x == 0 or y == 0 or x == self.width - 1 or y == self.height - 1:
            return "io"
        if self.mem_column_stride and x % self.mem_column_stride == 0:
            return "mem"
        return "pe"

    def core_for_role(self, role: str) -> CoreSpec:
        return {"pe": self.pe_core, "mem": self.mem_core,
                "io": self.io_core}[role]


# --- switch box topology maps -------------------------------------------------

def _turn(from_side: Side, to_side: Side) -> int:
    if from_side == to_side:
        raise SameSide(f"no internal connection {from_side} -> {from_side}")
    return (to_side.value - from_side.value) % 4


def disjoint_map(from_side: Side, to_side: Side, track: int, num_tracks: int) -> int:
    """Disjoint switch box: track index is preserved on every turn."""
    _turn(from_side, to_side)
    if not 0 <= track < num_tracks:
        raise ValueError(f"track {track} outside 0..{num_tracks - 1}")
    return track


def wilton_map(from_side: Side, to_side: Side, track: int, num_tracks: int) -> int:
    """Wilton-style switch box: straight-through keeps the track,
    clockwise turns map t -> (W - t) mod W, counter-clockwise turns map
    t -> (t + 1) mod W. Each (from, to) pair is a track permutation, so
    per-output fan-in matches the disjoint box exactly."""
    turn = _turn(from_side, to_side)
    if not 0 <= track < num_tracks:
        raise ValueError(f"track {track} outside 0..{num_tracks - 1}")
    if turn == 2:
        return track
    if turn == 1:
        return (num_tracks - track) % num_tracks
    return (track + 1) % num_tracks


def topology_map(topology: SBTopology):
    return wilton_map if topology is SBTopology.Wilton else disjoint_map


def port_node_name(role: str, port: str) -> str:
    return f"{role}_{port}"


# --- fabric construction --------------------------------------------------------

def _build_base(spec: ArchSpec) -> RoutingGraph:
    g = RoutingGraph(spec.width, spec.height, dict(spec.layers))
    track_map = topology_map(spec.sb_topology)

    sb_ids: Dict[tuple, NodeId] = {}

    def sb(x, y, bw, side, track, io):
        return sb_ids[(x, y, bw, side, track, io)]

    # Nodes: switch boxes and core ports for every tile and layer.
    for y in range(spec.height):
        for x in range(spec.width):
            role = spec.tile_role(x, y)
            core = spec.core_for_role(role)
            for bw, tracks in spec.layers:
                for side in Side:
                    for io_dir in (SBDir.Incoming, SBDir.Outgoing):
                        delay = SB_IN_DELAY if io_dir is SBDir.Incoming \
                            else SB_OUT_DELAY
                        for t in range(tracks):
                            nid = g.add_node(IrNode(
                                kind=NodeKind.SwitchBox, x=x, y=y,
                                bitwidth=bw, track=t, side=side, io=io_dir,
                                delay=delay))
                            sb_ids[(x, y, bw, side, t, io_dir)] = nid
                for pname, pbw in core.inputs:
                    if pbw == bw:
                        g.add_node(IrNode(
                            kind=NodeKind.Port, x=x, y=y, bitwidth=bw,
                            port_name=port_node_name(role, pname), delay=0))
                for pname, pbw in core.outputs:
                    if pbw == bw:
                        g.add_node(IrNode(
                            kind=NodeKind.Port, x=x, y=y, bitwidth=bw,
                            port_name=port_node_name(role, pname),
                            delay=core.delay))

    # Edges, tile by tile: switch box internal wires, then core output
    # hookups, then connection boxes.
    for y in range(spec.height):
        for x in range(spec.width):
            role = spec.tile_role(x, y)
            core = spec.core_for_role(role)
            for bw, tracks in spec.layers:
                for from_side in Side:
                    for t in range(tracks):
                        src = sb(x, y, bw, from_side, t, SBDir.Incoming)
                        for to_side in Side:
                            if to_side == from_side:
                                continue
                            t_out = track_map(from_side, to_side, t, tracks)
                            g.add_edge(src, sb(x, y, bw, to_side, t_out,
                                               SBDir.Outgoing))
                # the port-connection policy trims PE/MEM hookups; IO
                # cores are the fabric entry points and keep all sides
                if role == "io":
                    out_sides = in_sides = tuple(Side)
                else:
                    out_sides = spec.port_policy.sb_out_sides
                    in_sides = spec.port_policy.cb_sides
                for pname, pbw in core.outputs:
                    if pbw != bw:
                        continue
                    pid = g.find(NodeKind.Port, x, y, bw,
                                 port_name=port_node_name(role, pname))
                    for side in Side:
                        if side not in out_sides:
                            continue
                        for t in range(tracks):
                            g.add_edge(pid, sb(x, y, bw, side, t, SBDir.Outgoing))
                for pname, pbw in core.inputs:
                    if pbw != bw:
                        continue
                    pid = g.find(NodeKind.Port, x, y, bw,
                                 port_name=port_node_name(role, pname))
                    for side in Side:
                        if side not in in_sides:
                            continue
                        for t in range(tracks):
                            g.add_edge(sb(x, y, bw, side, t, SBDir.Incoming), pid)

    # Inter-tile wiring: out(side) -> neighbor in(opposite side), same track.
    for y in range(spec.height):
        for x in range(spec.width):
            for bw, tracks in spec.layers:
                for side in Side:
                    dx, dy = _SIDE_VECTOR[side]
                    nx, ny = x + dx, y + dy
                    if not (0 <= nx < spec.width and 0 <= ny < spec.height):
                        continue
                    for t in range(tracks):
                        g.add_edge(
                            sb(x, y, bw, side, t, SBDir.Outgoing),
                            sb(nx, ny, bw, side.opposite(), t, SBDir.Incoming))
    return g


def registered_tracks(num_tracks: int, reg_density: float) -> List[int]:
    """Tracks that receive a pipeline register at a given density:
    every ceil(1/density)-th track, all of them at density 1, none at 0."""
    if reg_density <= 0:
        return []
    stride = math.ceil(1.0 / reg_density)
    return [t for t in range(num_tracks) if t % stride == 0]


def _rebuild(g: RoutingGraph, spec: ArchSpec, keep_edge, split_edge) -> RoutingGraph:
    """Copy g, dropping edges keep_edge rejects and splitting edges
    split_edge selects (split inserts register + bypass mux)."""
    out = RoutingGraph(g.width, g.height, {bw: g.num_tracks(bw)
                                           for bw in g.bitwidths()})
    remap: Dict[NodeId, NodeId] = {}
    for n in g.nodes():
        remap[n.id] = out.add_node(n)
    for src, dst in g.edges():
        if not keep_edge(g.node(src), g.node(dst)):
            continue
        if split_edge is not None and split_edge(g.node(src), g.node(dst)):
            a = g.node(src)
            reg = out.add_node(IrNode(
                kind=NodeKind.Register, x=a.x, y=a.y, bitwidth=a.bitwidth,
                track=a.track, side=a.side, delay=REGISTER_DELAY))
            rmux = out.add_node(IrNode(
                kind=NodeKind.RegMux, x=a.x, y=a.y, bitwidth=a.bitwidth,
                track=a.track, side=a.side, delay=REGMUX_DELAY))
            out.add_edge(remap[src], rmux)   # bypass is mux input 0
            out.add_edge(remap[src], reg)
            out.add_edge(reg, rmux)
            out.add_edge(rmux, remap[dst])
        else:
            out.add_edge(remap[src], remap[dst])
    return out


def _finalize(g: RoutingGraph) -> RoutingGraph:
    g.canonicalize()
    diags = g.validate()
    if diags:
        raise InvalidSpec("generated graph failed validation: "
                          + "; ".join(str(d) for d in diags[:5]))
    return g.freeze()


def insert_registers(g: RoutingGraph, spec: ArchSpec) -> RoutingGraph:
    """Split each selected outgoing inter-tile wire with a pipeline
    register and a two-input bypass mux. Returns a new finalized graph."""
    spec.check()
    if spec.reg_density <= 0:
        return _finalize(_rebuild(g, spec, lambda a, b: True, None))
    selected = {bw: set(registered_tracks(g.num_tracks(bw), spec.reg_density))
                for bw in g.bitwidths()}

    def is_split(a: IrNode, b: IrNode) -> bool:
        return (a.kind is NodeKind.SwitchBox and a.io is SBDir.Outgoing
                and b.kind is NodeKind.SwitchBox and b.io is SBDir.Incoming
                and (a.x, a.y) != (b.x, b.y)
                and a.track in selected[a.bitwidth])

    return _finalize(_rebuild(g, spec, lambda a, b: True, is_split))


def apply_port_policy(g: RoutingGraph, spec: ArchSpec) -> RoutingGraph:
    """Drop PE/MEM core<->switch-box hookups outside the spec's policy
    sides. IO core hookups are never trimmed."""
    policy = spec.port_policy

    def keep(a: IrNode, b: IrNode) -> bool:
        if a.kind is NodeKind.Port and b.kind is NodeKind.SwitchBox:
            if a.port_name.startswith("io_"):
                return True
            return b.side in policy.sb_out_sides
        if a.kind is NodeKind.SwitchBox and b.kind is NodeKind.Port:
            if b.port_name.startswith("io_"):
                return True
            return a.side in policy.cb_sides
        return True

    return _finalize(_rebuild(g, spec, keep, None))


def create_uniform_interconnect(spec: ArchSpec) -> RoutingGraph:
    """Build the full uniform fabric described by spec: switch boxes with
    the selected topology, connection boxes, core hookups per the port
    policy, inter-tile wires, and pipeline registers per reg_density.
    The result is canonicalized, validated, and frozen."""
    spec.check()
    g = _build_base(spec)
    if spec.reg_density > 0:
        return insert_registers(g, spec)
    return _finalize(g)


# --- architecture spec files ------------------------------------------------------
#
# INI-style text:
#   [array]        width=8 height=8
#   [layer.16]     tracks=5  topology=wilton  reg_density=1.0
#   [core.pe]      in=4x16   out=2x16         delay=2
#   [policy]       cb_sides=N,E,S,W  sb_out_sides=N,E,S,W
#   [mem]          column_stride=4
# Sides accept single letters or full names. Unknown sections/keys rejected.

_SIDE_ALIASES = {"n": Side.North, "north": Side.North,
                 "e": Side.East, "east": Side.East,
                 "s": Side.South, "south": Side.South,
                 "w": Side.West, "west": Side.West}


def parse_sides(text: str) -> Tuple[Side, ...]:
    sides = []
    for token in text.split(","):
        token = token.strip().lower()
        if token not in _SIDE_ALIASES:
            raise InvalidSpec(f"unknown side {token!r}")
        sides.append(_SIDE_ALIASES[token])
    return tuple(sides)


def _parse_ports(text: str, prefix: str) -> Tuple[Tuple[str, int], ...]:
    ports: List[Tuple[str, int]] = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        try:
            count, bw = chunk.split("x")
            count, bw = int(count), int(bw)
        except ValueError:
            raise InvalidSpec(f"bad port spec {chunk!r}; expected <count>x<bits>")
        start = len(ports)
        ports.extend((f"{prefix}{start + i}", bw) for i in range(count))
    return tuple(ports)


def parse_arch_spec(text: str) -> ArchSpec:
    cp = configparser.ConfigParser()
    try:
        cp.read_file(_io.StringIO(text))
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        raise ParseError(f"bad architecture spec: {exc.message.splitlines()[0]}",
                         line=lineno)

    known = {"array", "policy", "mem"}
    cores: Dict[str, CoreSpec] = {}
    layers: List[Tuple[int, int]] = []
    topology: Optional[str] = None
    reg_density: Optional[float] = None

    def get_int(section, key, default=None):
        if not cp.has_option(section, key):
            if default is None:
                raise InvalidSpec(f"[{section}] missing {key}")
            return default
        try:
            return cp.getint(section, key)
        except ValueError:
            raise InvalidSpec(f"[{section}] {key} must be an integer")

    for section in cp.sections():
        if section.startswith("layer."):
            try:
                bw = int(section.split(".", 1)[1])
            except ValueError:
                raise InvalidSpec(f"bad layer section [{section}]")
            layers.append((bw, get_int(section, "tracks")))
            if cp.has_option(section, "topology"):
                t = cp.get(section, "topology").strip().lower()
                if topology is not None and t != topology:
                    raise InvalidSpec("layers disagree on topology")
                topology = t
            if cp.has_option(section, "reg_density"):
                d = cp.getfloat(section, "reg_density")
                if reg_density is not None and d != reg_density:
                    raise InvalidSpec("layers disagree on reg_density")
                reg_density = d
        elif section.startswith("core."):
            name = section.split(".", 1)[1]
            cores[name] = CoreSpec(
                name=name,
                inputs=_parse_ports(cp.get(section, "in", fallback="0x16"), "in"),
                outputs=_parse_ports(cp.get(section, "out", fallback="0x16"), "out"),
                delay=get_int(section, "delay", 0))
        elif section not in known:
            raise InvalidSpec(f"unknown section [{section}]")

    if not layers:
        raise InvalidSpec("no [layer.<bits>] sections")
    if topology is None:
        topology = "wilton"
    try:
        sb_topology = SBTopology(topology)
    except ValueError:
        raise InvalidSpec(f"unknown topology {topology!r}")

    policy = PortConnPolicy()
    if cp.has_section("policy"):
        kwargs = {}
        if cp.has_option("policy", "cb_sides"):
            kwargs["cb_sides"] = parse_sides(cp.get("policy", "cb_sides"))
        if cp.has_option("policy", "sb_out_sides"):
            kwargs["sb_out_sides"] = parse_sides(cp.get("policy", "sb_out_sides"))
        policy = PortConnPolicy(**kwargs)

    spec = ArchSpec(
        width=get_int("array", "width") if cp.has_section("array") else 8,
        height=get_int("array", "height") if cp.has_section("array") else 8,
        layers=tuple(sorted(layers)),
        sb_topology=sb_topology,
        reg_density=reg_density if reg_density is not None else 0.0,
        mem_column_stride=get_int("mem", "column_stride", 0)
        if cp.has_section("mem") else 0,
        pe_core=cores.get("pe", default_pe_core()),
        mem_core=cores.get("mem", default_mem_core()),
        io_core=cores.get("io", default_io_core()),
        port_policy=policy)
    spec.check()
    return spec
