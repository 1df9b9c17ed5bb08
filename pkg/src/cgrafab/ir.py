"""Directed-graph intermediate representation of a CGRA interconnect.

Every wire junction of the fabric is a node; every physical wire is a
directed edge. Nodes live on independent per-bitwidth layers and a node
with two or more incoming edges marks a multiplexer site for lowering.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from .errors import (
    GraphFrozen,
    LayerMismatch,
    OutOfBounds,
    ParseError,
    SelfLoop,
    UnknownLayer,
    UnknownNode,
)

NodeId = int


@enum.unique
class Side(enum.Enum):
    North = 0
    East = 1
    South = 2
    West = 3

    def opposite(self) -> "Side":
        return Side((self.value + 2) % 4)


@enum.unique
class NodeKind(enum.Enum):
    SwitchBox = "SwitchBox"
    Port = "Port"
    Register = "Register"
    RegMux = "RegMux"


@enum.unique
class SBDir(enum.Enum):
    """Direction of a switch box node relative to the tile."""
    Incoming = "Incoming"
    Outgoing = "Outgoing"


# Kinds that carry (side, track); Port is the only kind that carries a name.
_TRACKED_KINDS = (NodeKind.SwitchBox, NodeKind.Register, NodeKind.RegMux)


@dataclass(frozen=True)
class IrNode:
    kind: NodeKind
    x: int
    y: int
    bitwidth: int
    track: Optional[int] = None
    side: Optional[Side] = None
    io: Optional[SBDir] = None
    port_name: Optional[str] = None
    delay: int = 0
    id: Optional[NodeId] = None

    def key(self) -> tuple:
        """Semantic identity tuple; excludes id and delay."""
        return (self.kind, self.x, self.y, self.bitwidth, self.track,
                self.side, self.io, self.port_name)

    def __repr__(self):
        if self.kind is NodeKind.Port:
            detail = self.port_name
        else:
            io = f" {self.io.name}" if self.io is not None else ""
            detail = f"{self.side.name} t{self.track}{io}"
        return (f"<{self.kind.value} #{self.id} ({self.x},{self.y}) "
                f"b{self.bitwidth} {detail}>")


@dataclass
class Diagnostic:
    rule: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.rule}: {self.subject}: {self.message}"


def _check_shape(node: IrNode) -> None:
    if node.kind is NodeKind.Port:
        if node.track is not None or node.side is not None or node.io is not None:
            raise ValueError(f"Port node carries track/side/io: {node}")
        if not node.port_name:
            raise ValueError("Port node requires a port_name")
    else:
        if node.port_name is not None:
            raise ValueError(f"{node.kind.value} node carries port_name: {node}")
        if node.track is None or node.side is None:
            raise ValueError(f"{node.kind.value} node requires side and track")
        if node.kind is NodeKind.SwitchBox:
            if node.io is None:
                raise ValueError("SwitchBox node requires io direction")
        elif node.io is not None:
            raise ValueError(f"{node.kind.value} node carries io: {node}")
    if node.delay < 0:
        raise ValueError(f"negative delay on {node}")


@dataclass
class _Layer:
    bitwidth: int
    num_tracks: int
    node_ids: List[NodeId] = field(default_factory=list)


class RoutingGraph:
    """Directed multigraph of interconnect nodes, one layer per bitwidth.

    Construction is add-only; ``freeze()`` makes the graph immutable so it
    can be shared read-only between placement and routing workers.
    """

    def __init__(self, width: int, height: int, layers: Dict[int, int]):
        if width < 1 or height < 1:
            raise ValueError("grid must be at least 1x1")
        if not layers:
            raise ValueError("at least one bitwidth layer required")
        self.width = width
        self.height = height
        self._layers: Dict[int, _Layer] = {
            bw: _Layer(bw, tracks) for bw, tracks in sorted(layers.items())
        }
        self._nodes: Dict[NodeId, IrNode] = {}
        self._index: Dict[tuple, NodeId] = {}
        self._fan_out: Dict[NodeId, List[NodeId]] = {}
        self._fan_in: Dict[NodeId, List[NodeId]] = {}
        self._edge_set: set = set()
        self._edge_list: List[Tuple[NodeId, NodeId]] = []
        self._next_id = 0
        self._frozen = False

    # -- basic introspection ------------------------------------------------

    @property
    def frozen(self) -> bool:
        return self._frozen

    def bitwidths(self) -> List[int]:
        return list(self._layers)

    def num_tracks(self, bitwidth: int) -> int:
        if bitwidth not in self._layers:
            raise UnknownLayer(f"no layer of bitwidth {bitwidth}")
        return self._layers[bitwidth].num_tracks

    def node(self, node_id: NodeId) -> IrNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(f"no node with id {node_id}") from None

    def nodes(self, bitwidth: Optional[int] = None) -> Iterator[IrNode]:
        if bitwidth is None:
            for nid in sorted(self._nodes):
                yield self._nodes[nid]
        else:
            if bitwidth not in self._layers:
                raise UnknownLayer(f"no layer of bitwidth {bitwidth}")
            for nid in self._layers[bitwidth].node_ids:
                yield self._nodes[nid]

    def edges(self) -> List[Tuple[NodeId, NodeId]]:
        return list(self._edge_list)

    def num_nodes(self) -> int:
        return len(self._nodes)

    def num_edges(self) -> int:
        return len(self._edge_list)

    def find(self, kind: NodeKind, x: int, y: int, bitwidth: int,
             track: Optional[int] = None, side: Optional[Side] = None,
             io: Optional[SBDir] = None,
             port_name: Optional[str] = None) -> Optional[NodeId]:
        return self._index.get((kind, x, y, bitwidth, track, side, io, port_name))

    # -- construction ---------------------------------------------------------

    def add_node(self, node: IrNode) -> NodeId:
        """Insert a node; identical semantic tuples return the existing id."""
        if self._frozen:
            raise GraphFrozen("graph is frozen")
        _check_shape(node)
        if node.bitwidth not in self._layers:
            raise UnknownLayer(f"bitwidth {node.bitwidth} not declared")
        layer = self._layers[node.bitwidth]
        if not (0 <= node.x < self.width and 0 <= node.y < self.height):
            raise OutOfBounds(f"({node.x},{node.y}) outside "
                              f"{self.width}x{self.height} grid")
        if node.track is not None and not (0 <= node.track < layer.num_tracks):
            raise OutOfBounds(f"track {node.track} outside 0..{layer.num_tracks - 1}")
        key = node.key()
        existing = self._index.get(key)
        if existing is not None:
            return existing
        nid = self._next_id
        self._next_id += 1
        stored = IrNode(id=nid, kind=node.kind, x=node.x, y=node.y,
                        bitwidth=node.bitwidth, track=node.track,
                        side=node.side, io=node.io,
                        port_name=node.port_name, delay=node.delay)
        self._nodes[nid] = stored
        self._index[key] = nid
        layer.node_ids.append(nid)
        self._fan_out[nid] = []
        self._fan_in[nid] = []
        return nid

    def add_edge(self, src: NodeId, dst: NodeId) -> None:
        """Insert the directed edge (src, dst); duplicates are a no-op."""
        if self._frozen:
            raise GraphFrozen("graph is frozen")
        if src not in self._nodes:
            raise UnknownNode(f"unknown source node {src}")
        if dst not in self._nodes:
            raise UnknownNode(f"unknown sink node {dst}")
        if src == dst:
            raise SelfLoop(f"self loop on node {src}")
        if self._nodes[src].bitwidth != self._nodes[dst].bitwidth:
            raise LayerMismatch(
                f"edge {src}->{dst} crosses bitwidth layers "
                f"{self._nodes[src].bitwidth} and {self._nodes[dst].bitwidth}")
        if (src, dst) in self._edge_set:
            return
        self._edge_set.add((src, dst))
        self._edge_list.append((src, dst))
        self._fan_out[src].append(dst)
        self._fan_in[dst].append(src)

    def freeze(self) -> "RoutingGraph":
        self._frozen = True
        return self

    def canonicalize(self) -> Dict[NodeId, NodeId]:
        """Renumber ids densely by semantic tuple order; returns old->new map.

        Makes ids a pure function of the node set, independent of the
        order a builder happened to create them in.
        """
        if self._frozen:
            raise GraphFrozen("graph is frozen")
        order = sorted(self._nodes, key=lambda nid: _sort_key(self._nodes[nid]))
        remap = {old: new for new, old in enumerate(order)}
        self._nodes = {
            remap[old]: IrNode(id=remap[old], kind=n.kind, x=n.x, y=n.y,
                               bitwidth=n.bitwidth, track=n.track, side=n.side,
                               io=n.io, port_name=n.port_name, delay=n.delay)
            for old, n in self._nodes.items()
        }
        self._index = {n.key(): nid for nid, n in self._nodes.items()}
        self._fan_out = {remap[k]: [remap[v] for v in vs]
                         for k, vs in self._fan_out.items()}
        self._fan_in = {remap[k]: [remap[v] for v in vs]
                        for k, vs in self._fan_in.items()}
        self._edge_list = [(remap[a], remap[b]) for a, b in self._edge_list]
        self._edge_set = set(self._edge_list)
        for layer in self._layers.values():
            layer.node_ids = sorted(remap[nid] for nid in layer.node_ids)
        self._next_id = len(self._nodes)
        return remap

    # -- queries ---------------------------------------------------------------

    def fan_in(self, node_id: NodeId) -> List[NodeId]:
        """Incoming neighbors in insertion order (defines mux input order)."""
        if node_id not in self._nodes:
            raise UnknownNode(f"no node with id {node_id}")
        return list(self._fan_in[node_id])

    def fan_out(self, node_id: NodeId) -> List[NodeId]:
        if node_id not in self._nodes:
            raise UnknownNode(f"no node with id {node_id}")
        return list(self._fan_out[node_id])

    def has_edge(self, src: NodeId, dst: NodeId) -> bool:
        return (src, dst) in self._edge_set

    # -- validation --------------------------------------------------------------

    def validate(self) -> List[Diagnostic]:
        """Check every graph invariant; returns diagnostics, never raises."""
        out: List[Diagnostic] = []
        seen_keys: Dict[tuple, NodeId] = {}
        for nid in sorted(self._nodes):
            n = self._nodes[nid]
            layer = self._layers.get(n.bitwidth)
            if layer is None:
                out.append(Diagnostic("UnknownLayer", repr(n),
                                      f"bitwidth {n.bitwidth} not declared"))
                continue
            if not (0 <= n.x < self.width and 0 <= n.y < self.height):
                out.append(Diagnostic("OutOfBounds", repr(n),
                                      "coordinates outside grid"))
            if n.track is not None and not (0 <= n.track < layer.num_tracks):
                out.append(Diagnostic("OutOfBounds", repr(n),
                                      f"track outside 0..{layer.num_tracks - 1}"))
            if n.delay < 0:
                out.append(Diagnostic("NegativeDelay", repr(n), "delay < 0"))
            try:
                _check_shape(n)
            except ValueError as exc:
                out.append(Diagnostic("BadShape", repr(n), str(exc)))
            prev = seen_keys.get(n.key())
            if prev is not None:
                out.append(Diagnostic("DuplicateNode", repr(n),
                                      f"same tuple as node {prev}"))
            else:
                seen_keys[n.key()] = nid
        seen_edges = set()
        for src, dst in self._edge_list:
            tag = f"edge {src}->{dst}"
            if src not in self._nodes or dst not in self._nodes:
                out.append(Diagnostic("UnknownNode", tag,
                                      "edge endpoint not in graph"))
                continue
            if src == dst:
                out.append(Diagnostic("SelfLoop", tag, "self loop"))
            if self._nodes[src].bitwidth != self._nodes[dst].bitwidth:
                out.append(Diagnostic("LayerMismatch", tag,
                                      "endpoints on different layers"))
            if (src, dst) in seen_edges:
                out.append(Diagnostic("DuplicateEdge", tag, "edge repeated"))
            seen_edges.add((src, dst))
        return out

    # -- raw insertion (deserializer only) -----------------------------------------

    def _raw_add_node(self, node: IrNode) -> None:
        """Insert without semantic checks so validate() can report problems."""
        nid = node.id
        assert nid is not None
        self._nodes[nid] = node
        self._index[node.key()] = nid
        if node.bitwidth in self._layers:
            self._layers[node.bitwidth].node_ids.append(nid)
        self._fan_out.setdefault(nid, [])
        self._fan_in.setdefault(nid, [])
        self._next_id = max(self._next_id, nid + 1)

    def _raw_add_edge(self, src: NodeId, dst: NodeId) -> None:
        self._edge_set.add((src, dst))
        self._edge_list.append((src, dst))
        self._fan_out.setdefault(src, []).append(dst)
        self._fan_in.setdefault(dst, []).append(src)

    # -- equality ------------------------------------------------------------------

    def same_structure(self, other: "RoutingGraph") -> bool:
        """Equality on node tuples (with delays) and the edge set."""
        if (self.width, self.height) != (other.width, other.height):
            return False
        if {bw: l.num_tracks for bw, l in self._layers.items()} != \
                {bw: l.num_tracks for bw, l in other._layers.items()}:
            return False
        mine = {(n.key(), n.delay) for n in self._nodes.values()}
        theirs = {(n.key(), n.delay) for n in other._nodes.values()}
        if mine != theirs:
            return False
        def edge_keys(g):
            return {(g._nodes[a].key(), g._nodes[b].key())
                    for a, b in g._edge_list}
        return edge_keys(self) == edge_keys(other)


def _sort_key(n: IrNode) -> tuple:
    return (n.bitwidth, n.kind.value, n.x, n.y,
            n.side.value if n.side is not None else -1,
            n.track if n.track is not None else -1,
            n.io.value if n.io is not None else "",
            n.port_name or "")


# --- text serialization ------------------------------------------------------------
#
# Line-oriented format:
#   grid <width> <height>
#   [layer <bitwidth> tracks=<n>]
#   node <id> SwitchBox <x> <y> <side> <track> <Incoming|Outgoing> delay=<d>
#   node <id> Register  <x> <y> <side> <track> delay=<d>
#   node <id> RegMux    <x> <y> <side> <track> delay=<d>
#   node <id> Port      <x> <y> port=<name> delay=<d>
#   edge <src> <dst>
# '#' starts a comment; blank lines ignored; unknown directives rejected.

def serialize_graph(g: RoutingGraph) -> str:
    lines = [f"grid {g.width} {g.height}"]
    for bw in g.bitwidths():
        layer = g._layers[bw]
        lines.append(f"[layer {bw} tracks={layer.num_tracks}]")
        for nid in sorted(layer.node_ids):
            n = g._nodes[nid]
            if n.kind is NodeKind.Port:
                mid = f"port={n.port_name}"
            elif n.kind is NodeKind.SwitchBox:
                mid = f"{n.side.name} {n.track} {n.io.name}"
            else:
                mid = f"{n.side.name} {n.track}"
            lines.append(f"node {nid} {n.kind.value} {n.x} {n.y} {mid} "
                         f"delay={n.delay}")
        layer_ids = set(layer.node_ids)
        for src, dst in g._edge_list:
            if src in layer_ids:
                lines.append(f"edge {src} {dst}")
    return "\n".join(lines) + "\n"


def deserialize_graph(text: str) -> RoutingGraph:
    g: Optional[RoutingGraph] = None
    width = height = None
    layers: Dict[int, int] = {}
    pending: List[Tuple[int, dict]] = []
    pending_edges: List[Tuple[int, int, int]] = []
    current_bw: Optional[int] = None

    def fail(lineno, msg, col=None):
        raise ParseError(msg, line=lineno, column=col)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "grid":
            if len(tokens) != 3:
                fail(lineno, "grid expects: grid <width> <height>")
            try:
                width, height = int(tokens[1]), int(tokens[2])
            except ValueError:
                fail(lineno, "grid dimensions must be integers")
        elif head.startswith("[layer"):
            m = line.strip("[]").split()
            if len(m) != 3 or not m[2].startswith("tracks="):
                fail(lineno, "layer header expects: [layer <bw> tracks=<n>]")
            try:
                bw = int(m[1])
                tracks = int(m[2].split("=", 1)[1])
            except ValueError:
                fail(lineno, "layer bitwidth/tracks must be integers")
            layers[bw] = tracks
            current_bw = bw
        elif head == "node":
            if current_bw is None:
                fail(lineno, "node before any [layer] section")
            pending.append((lineno, _parse_node_line(tokens, current_bw, lineno)))
        elif head == "edge":
            if len(tokens) != 3:
                fail(lineno, "edge expects: edge <src> <dst>")
            try:
                pending_edges.append((lineno, int(tokens[1]), int(tokens[2])))
            except ValueError:
                fail(lineno, "edge endpoints must be integer node ids")
        else:
            fail(lineno, f"unknown directive {head!r}", col=raw.find(head) + 1)

    if width is None:
        raise ParseError("missing grid header", line=1)
    if not layers:
        raise ParseError("no [layer] sections", line=1)
    g = RoutingGraph(width, height, layers)
    for lineno, fields in pending:
        node = IrNode(**fields)
        if node.id is None:
            raise ParseError("node missing id", line=lineno)
        g._raw_add_node(node)
    for lineno, src, dst in pending_edges:
        g._raw_add_edge(src, dst)
    return g


def _parse_node_line(tokens: List[str], bitwidth: int, lineno: int) -> dict:
    def fail(msg):
        raise ParseError(msg, line=lineno)

    if len(tokens) < 6:
        fail("truncated node line")
    try:
        nid = int(tokens[1])
        x, y = int(tokens[3]), int(tokens[4])
    except ValueError:
        fail("node id and coordinates must be integers")
    try:
        kind = NodeKind(tokens[2])
    except ValueError:
        fail(f"unknown node kind {tokens[2]!r}")
    rest = tokens[5:]
    if not rest or not rest[-1].startswith("delay="):
        fail("node line must end with delay=<d>")
    try:
        delay = int(rest[-1].split("=", 1)[1])
    except ValueError:
        fail("delay must be an integer")
    mid = rest[:-1]
    fields = dict(id=nid, kind=kind, x=x, y=y, bitwidth=bitwidth, delay=delay)
    if kind is NodeKind.Port:
        if len(mid) != 1 or not mid[0].startswith("port="):
            fail("Port node expects port=<name>")
        fields["port_name"] = mid[0].split("=", 1)[1]
    else:
        want = 3 if kind is NodeKind.SwitchBox else 2
        if len(mid) != want:
            fail(f"{kind.value} node expects {want} positional fields")
        try:
            fields["side"] = Side[mid[0]]
        except KeyError:
            fail(f"unknown side {mid[0]!r}")
        try:
            fields["track"] = int(mid[1])
        except ValueError:
            fail("track must be an integer")
        if kind is NodeKind.SwitchBox:
            try:
                fields["io"] = SBDir(mid[2])
            except ValueError:
                fail(f"unknown io direction {mid[2]!r}")
    return fields
